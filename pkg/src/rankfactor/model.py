"""Model state containers, initialization, and the monitoring objective."""

from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import ndtri

from .errors import DataError, UsageError
from .samplers import eps_loss

LIKELIHOODS = ("rank", "gaussian")
CLASSIFIERS = ("linear", "dpm")


@dataclass
class Hyperparams:
    """Fixed hyperparameters shared by both inference engines.

    r/s pairs at 1/2 give horseshoe-type shrinkage on loadings and classifier
    coefficients; eps is the rank-likelihood margin.
    """

    eps: float = 0.05
    r_a: float = 0.5
    s_a: float = 0.5
    r_beta: float = 0.5
    s_beta: float = 0.5
    psi_shape: float = 1.1
    psi_rate: float = 1e-3
    alpha_shape: float = 1.0
    alpha_rate: float = 1.0

    def validate(self):
        for name in ("eps",):
            if getattr(self, name) < 0:
                raise UsageError(f"{name} must be non-negative")
        for name in ("r_a", "s_a", "r_beta", "s_beta", "psi_shape", "psi_rate", "alpha_shape", "alpha_rate"):
            if getattr(self, name) <= 0:
                raise UsageError(f"{name} must be positive")
        return self


@dataclass
class Dataset:
    """Observations (features by samples) plus per-task labels.

    X may contain NaN for missing entries. Y is (n_tasks, n_samples) with
    values in {-1, +1} and NaN marking unlabeled samples; pass None for a
    label-free model.
    """

    X: np.ndarray
    Y: np.ndarray = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise DataError(f"X must be 2-d (features by samples), got shape {self.X.shape}")
        if np.any(np.isinf(self.X)):
            raise DataError("X contains infinite values")
        if self.Y is None:
            self.Y = np.empty((0, self.X.shape[1]))
        self.Y = np.atleast_2d(np.asarray(self.Y, dtype=np.float64))
        if self.Y.shape[1] != self.X.shape[1] and self.Y.size > 0:
            raise DataError(
                f"labels cover {self.Y.shape[1]} samples but X has {self.X.shape[1]}"
            )
        seen = self.Y[~np.isnan(self.Y)]
        if seen.size and not np.all(np.isin(seen, (-1.0, 1.0))):
            raise DataError("labels must be -1/+1 (NaN for unlabeled)")

    @property
    def n_features(self):
        return self.X.shape[0]

    @property
    def n_samples(self):
        return self.X.shape[1]

    @property
    def n_tasks(self):
        return self.Y.shape[0]

    @property
    def observed(self):
        return ~np.isnan(self.X)

    @property
    def label_mask(self):
        return ~np.isnan(self.Y)


def standardize_rows(X):
    """Per-feature centering and unit scaling, NaN-aware; returns (X_std, mean, scale)."""
    mean = np.nanmean(X, axis=1, keepdims=True)
    scale = np.nanstd(X, axis=1, keepdims=True)
    scale = np.where(scale < 1e-12, 1.0, scale)
    return (X - mean) / scale, mean.ravel(), scale.ravel()


@dataclass
class LoadingsState:
    """Factor loadings with their three-parameter-beta shrinkage chain."""

    A: np.ndarray          # (d, K)
    xi: np.ndarray         # (d, K) per-entry prior variances
    eta: np.ndarray        # (d, K)
    phi: np.ndarray        # (K,) per-factor scales
    phi_tilde: float = 1.0


@dataclass
class ScoresState:
    Z: np.ndarray          # (K, N)


@dataclass
class ClassifierState:
    """Max-margin classifier coefficients with their shrinkage chain.

    Leading axis indexes mixture components; a linear classifier is the
    single-component case. lam is the hinge augmentation scale per
    (task, sample).
    """

    beta: np.ndarray       # (T, C, K)
    b: np.ndarray          # (T, C, K) per-coefficient prior variances
    e: np.ndarray          # (T, C, K)
    phi: np.ndarray        # (T, C)
    phi_tilde: np.ndarray  # (T, C)
    lam: np.ndarray        # (C, N)


@dataclass
class RankAugmentation:
    """Latent scales of the two one-sided margin terms per observed entry."""

    lam_lower: np.ndarray  # (d, N)
    lam_upper: np.ndarray  # (d, N)


@dataclass
class DpmState:
    """Truncated stick-breaking mixture over samples."""

    assign: np.ndarray     # (N,) component ids
    mu: np.ndarray         # (T, K) component means for the scores
    psi: np.ndarray        # (T,) component precisions (isotropic)
    nu: np.ndarray         # (T,) stick fractions, last fixed at 1
    alpha: float = 1.0

    def weights(self):
        """Stick-breaking weights q_t = nu_t * prod_{l<t}(1 - nu_l)."""
        log_remain = np.concatenate([[0.0], np.cumsum(np.log1p(-np.minimum(self.nu[:-1], 1 - 1e-12)))])
        return self.nu * np.exp(log_remain)

    def counts(self):
        return np.bincount(self.assign, minlength=self.nu.size)


@dataclass
class ModelState:
    likelihood: str
    classifier: str
    loadings: LoadingsState
    scores: ScoresState
    cls: ClassifierState
    rank_aug: RankAugmentation = None
    dpm: DpmState = None

    @property
    def n_factors(self):
        return self.loadings.A.shape[1]

    @property
    def truncation(self):
        return self.cls.beta.shape[0]


def rank_normal_scores(X, observed):
    """Per-row normal scores of the observed entries (average ranks).

    Depends on the data only through each row's ordering, so any strictly
    increasing per-row transform leaves the result bitwise unchanged.
    """
    d, n = X.shape
    out = np.zeros((d, n))
    for i in range(d):
        obs = observed[i]
        vals = X[i, obs]
        if vals.size:
            ranks = stats.rankdata(vals, method="average")
            out[i, obs] = ndtri(ranks / (vals.size + 1.0))
    return out


def ladder_target(X, observed, gap):
    """Centered equispaced tie-group ladder per feature row.

    Each observed entry maps to (its tie-group rank minus the centered middle)
    times gap, so consecutive groups sit exactly one margin pair apart and the
    row already satisfies every ordering constraint. Depends on the data only
    through each row's tie-group structure, so any strictly increasing per-row
    transform leaves the result bitwise unchanged. Missing entries map to 0.
    """
    d, n = X.shape
    out = np.zeros((d, n))
    for i in range(d):
        obs = observed[i]
        vals = X[i, obs]
        if vals.size:
            u, inv = np.unique(vals, return_inverse=True)
            out[i, obs] = (inv - (u.size - 1) / 2.0) * gap
    return out


def factor_start(w_target, n_factors, gen, min_gap_ratio=None):
    """Loadings/scores start on the leading factors of a target matrix.

    A cold random start leaves every margin violated from both sides; the
    sign-based hinge pulls then cancel entrywise while the clamped residuals
    inflate the working precisions, and the shrinkage chain pins the loadings
    near zero. Both engines escape that metastable state only from a start
    whose fitted values already respect most of the ordering.

    With min_gap_ratio set, the start keeps only the leading block up to the
    largest relative drop in the singular spectrum (when that drop reaches the
    ratio), leaving the remaining columns on the small random start so the
    shrinkage chain decides their fate from scratch.
    """
    d, n = w_target.shape
    A = 0.01 * gen.standard_normal((d, n_factors))
    Z = gen.standard_normal((n_factors, n))
    u, sv, vt = np.linalg.svd(w_target, full_matrices=False)
    r = min(n_factors, sv.size)
    if min_gap_ratio is not None and r > 1:
        ratios = sv[: r - 1] / np.maximum(sv[1:r], 1e-300)
        if ratios.max() >= min_gap_ratio:
            r = int(np.argmax(ratios)) + 1
    scale = np.sqrt(max(n, 1))
    A[:, :r] = u[:, :r] * (sv[:r] / scale)
    Z[:r] = scale * vt[:r]
    return A, Z


def init_state(dataset, n_factors, rng, likelihood="rank", classifier="linear",
               truncation=5, hyper=None):
    """Starting point shared by both engines.

    Rank mode starts the loadings and scores on the gap-detected leading
    factors of the margin-spaced tie-group ladder, so the fit begins ordered
    at the likelihood's own scale; gaussian mode starts on the leading factors
    of the standardized data. Every augmentation and shrinkage scale starts at
    1, coefficients at 0. The mixture starts with uniformly random
    assignments, zero means, unit precisions, and half sticks.
    """
    if likelihood not in LIKELIHOODS:
        raise UsageError(f"likelihood must be one of {LIKELIHOODS}")
    if classifier not in CLASSIFIERS:
        raise UsageError(f"classifier must be one of {CLASSIFIERS}")
    if n_factors < 1:
        raise UsageError("n_factors must be at least 1")
    if truncation < 1:
        raise UsageError("truncation must be at least 1")
    hyper = (hyper or Hyperparams()).validate()

    d, n, c = dataset.n_features, dataset.n_samples, dataset.n_tasks
    k = int(n_factors)
    t = int(truncation) if classifier == "dpm" else 1
    gen = rng.generator

    if likelihood == "rank":
        w_target = ladder_target(dataset.X, dataset.observed, 2.0 * hyper.eps)
        A0, Z0 = factor_start(w_target, k, gen, min_gap_ratio=1.5)
    else:
        x_std, _, _ = standardize_rows(dataset.X)
        w_target = np.where(dataset.observed, x_std, 0.0)
        A0, Z0 = factor_start(w_target, k, gen)
    loadings = LoadingsState(
        A=A0,
        xi=np.ones((d, k)),
        eta=np.ones((d, k)),
        phi=np.ones(k),
        phi_tilde=1.0,
    )
    scores = ScoresState(Z=Z0)
    cls = ClassifierState(
        beta=np.zeros((t, c, k)),
        b=np.ones((t, c, k)),
        e=np.ones((t, c, k)),
        phi=np.ones((t, c)),
        phi_tilde=np.ones((t, c)),
        lam=np.ones((c, n)),
    )
    rank_aug = None
    if likelihood == "rank":
        rank_aug = RankAugmentation(lam_lower=np.ones((d, n)), lam_upper=np.ones((d, n)))
    dpm = DpmState(
        assign=gen.integers(0, t, size=n) if classifier == "dpm" else np.zeros(n, dtype=np.intp),
        mu=np.zeros((t, k)),
        psi=np.ones(t),
        nu=np.concatenate([np.full(t - 1, 0.5), [1.0]]),
        alpha=1.0,
    )
    return ModelState(
        likelihood=likelihood,
        classifier=classifier,
        loadings=loadings,
        scores=scores,
        cls=cls,
        rank_aug=rank_aug,
        dpm=dpm,
    )


def _gamma_terms(x, shape, rate):
    """Variable part of a gamma log density, summed."""
    return np.sum((shape - 1.0) * np.log(x) - rate * x + shape * np.log(rate))


def log_pseudo_joint(dataset, state, hyper, index=None, x_std=None):
    """Unnormalized log pseudo-posterior with the margin scales collapsed out.

    Monitoring quantity only: data terms use the hinge forms directly, priors
    enter through their variable parts. Pass the prebuilt rank index in rank
    mode and the standardized matrix in gaussian mode.
    """
    A, Z = state.loadings.A, state.scores.Z
    W = A @ Z
    hp = hyper

    if state.likelihood == "rank":
        w_lower, w_upper = index.group_extrema(W)
        with np.errstate(invalid="ignore"):
            over = np.where(np.isfinite(w_upper), eps_loss(W - w_upper, hp.eps), 0.0)
            under = np.where(np.isfinite(w_lower), eps_loss(w_lower - W, hp.eps), 0.0)
        total = -np.sum(over) - np.sum(under)
    else:
        resid = np.where(dataset.observed, x_std - W, 0.0)
        total = -0.5 * np.sum(resid * resid)

    dpm = state.dpm
    comp = dpm.assign
    if dataset.n_tasks:
        fit = np.einsum("tck,kn->tcn", state.cls.beta, Z)[comp, :, np.arange(dataset.n_samples)].T
        margin = dataset.Y * fit
        total -= np.sum(eps_loss(-margin[dataset.label_mask], 1.0))

    ld = state.loadings
    total -= 0.5 * np.sum(A * A / ld.xi + np.log(ld.xi))
    total += _gamma_terms(ld.xi, hp.r_a, ld.eta)
    total += _gamma_terms(ld.eta, hp.s_a, ld.phi[None, :])
    total += _gamma_terms(ld.phi, 0.5, ld.phi_tilde)
    total += _gamma_terms(ld.phi_tilde, 0.5, 1.0)

    cs = state.cls
    total -= 0.5 * np.sum(cs.beta * cs.beta / cs.b + np.log(cs.b))
    total += _gamma_terms(cs.b, hp.r_beta, cs.e)
    total += _gamma_terms(cs.e, hp.s_beta, cs.phi[:, :, None])
    total += _gamma_terms(cs.phi, 0.5, cs.phi_tilde)
    total += _gamma_terms(cs.phi_tilde, 0.5, 1.0)

    resid_z = Z - dpm.mu[comp].T
    total += 0.5 * np.sum(
        state.n_factors * np.log(dpm.psi[comp]) - dpm.psi[comp] * np.sum(resid_z * resid_z, axis=0)
    )
    if state.classifier == "dpm":
        logq = np.log(np.maximum(dpm.weights(), 1e-300))
        total += np.sum(logq[comp])
        total -= 0.5 * np.sum(dpm.mu * dpm.mu)
        total += _gamma_terms(dpm.psi, hp.psi_shape, hp.psi_rate)
        heads = np.minimum(dpm.nu[:-1], 1 - 1e-12)
        total += np.sum((dpm.alpha - 1.0) * np.log1p(-heads)) + (dpm.nu.size - 1) * np.log(dpm.alpha)
        total += _gamma_terms(dpm.alpha, hp.alpha_shape, hp.alpha_rate)
    return float(total)
