"""Gibbs sampler: margin-scale augmentations make every conditional conjugate."""

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, UsageError
from .model import Hyperparams, init_state, log_pseudo_joint, standardize_rows
from .ranks import build_rank_index
from .samplers import RESIDUAL_CLAMP, RandomStream, eps_loss, sample_gig, sample_inverse_gaussian

# Stream kind ids: each (sweep, kind) pair owns an independent substream, so a
# block that draws more or less (extra tasks, mixture components) never shifts
# the sequences seen by the other blocks.
KIND_RANK_AUG = 0
KIND_CLS_AUG = 1
KIND_LOADINGS = 2
KIND_SHRINK_A = 3
KIND_SCORES = 4
KIND_CLASSIFIER = 5
KIND_DPM = 6
KIND_INIT = 7

GAMMA_FLOOR = 1e-300


@dataclass
class GibbsConfig:
    likelihood: str = "rank"
    classifier: str = "linear"
    n_factors: int = 20
    truncation: int = 5
    n_iterations: int = 1000
    n_burnin: int = 500
    thinning: int = 2
    dpm_label_factor: bool = True
    # debug switches pinning the single-component mixture to the fixed prior,
    # under which a truncation-1 mixture run must match a linear run draw for draw
    fix_dpm_mu: bool = False
    fix_dpm_psi: bool = False
    keep_samples: bool = False

    def validate(self):
        if self.n_iterations < 1 or self.n_burnin < 0 or self.thinning < 1:
            raise UsageError("need n_iterations >= 1, n_burnin >= 0, thinning >= 1")
        if self.n_burnin >= self.n_iterations:
            raise UsageError("n_burnin must be smaller than n_iterations")
        return self


@dataclass
class PosteriorSummary:
    """Post-burnin thinned posterior means plus what prediction needs.

    mean_beta and var_beta average each component's coefficients over the kept
    sweeps where that component held at least one sample; a component never
    occupied after burnin reports the prior mean of zero.
    """

    mean_A: np.ndarray
    mean_Z: np.ndarray
    mean_W: np.ndarray
    mean_beta: np.ndarray
    var_beta: np.ndarray
    mean_mu: np.ndarray
    mean_psi: np.ndarray
    mean_weights: np.ndarray
    mean_alpha: float
    n_kept: int
    lpj_trace: np.ndarray
    final_state: object
    config: GibbsConfig
    hyper: Hyperparams
    beta_samples: np.ndarray = None


def current_w_bounds(index, W):
    """Extrema of the current fit over the groups ranked below and above."""
    return index.group_extrema(W)


def _masked_inverses(state, index):
    inv_l = np.where(index.has_lower, 1.0 / state.rank_aug.lam_lower, 0.0)
    inv_u = np.where(index.has_upper, 1.0 / state.rank_aug.lam_upper, 0.0)
    return inv_l, inv_u


def _working_residual(state, dataset, index, W, eps, x_std):
    """Pseudo-data precision S and residual D per observed entry.

    In rank mode S sums the active inverse margin scales and D collects the
    two one-sided pulls toward the current bounds, each margin entering with
    weight one over its scale; entries missing a side simply omit that term.
    In gaussian mode the standardized matrix itself is the target with unit
    precision.
    """
    if state.likelihood == "rank":
        inv_l, inv_u = _masked_inverses(state, index)
        w_lower, w_upper = index.group_extrema(W)
        wl = np.where(index.has_lower, w_lower, 0.0)
        wu = np.where(index.has_upper, w_upper, 0.0)
        S = inv_l + inv_u
        D = inv_l * (wl + eps - W) - inv_u * (W + eps - wu)
    else:
        obs = dataset.observed
        S = obs.astype(np.float64)
        D = np.where(obs, x_std - W, 0.0)
    return S, D


def update_rank_augmentation(state, index, W, eps, rng):
    """Margin scales: inverse of each scale is inverse Gaussian around the residual."""
    gen = rng.generator
    w_lower, w_upper = index.group_extrema(W)
    resid_l = np.where(index.has_lower, np.abs(w_lower + eps - W), 1.0)
    resid_u = np.where(index.has_upper, np.abs(W + eps - w_upper), 1.0)
    inv_l = sample_inverse_gaussian(1.0 / np.maximum(resid_l, RESIDUAL_CLAMP), 1.0, gen)
    inv_u = sample_inverse_gaussian(1.0 / np.maximum(resid_u, RESIDUAL_CLAMP), 1.0, gen)
    state.rank_aug.lam_lower = np.where(index.has_lower, 1.0 / inv_l, 1.0)
    state.rank_aug.lam_upper = np.where(index.has_upper, 1.0 / inv_u, 1.0)


def update_classifier_augmentation(dataset, state, F, rng):
    """Hinge scales per labeled (task, sample) around the margin residual."""
    gen = rng.generator
    mask = dataset.label_mask
    resid = np.where(mask, np.abs(1.0 - dataset.Y * F), 1.0)
    inv = sample_inverse_gaussian(1.0 / np.maximum(resid, RESIDUAL_CLAMP), 1.0, gen)
    state.cls.lam = np.where(mask, 1.0 / inv, 1.0)


def update_loadings(dataset, index, state, hyper, rng, W, x_std=None):
    """Loadings column by column against bound targets frozen at call entry.

    Freezing the margin targets for the whole block keeps the feature rows
    mutually independent given the scores, so any update order (or a parallel
    scan over rows) draws from the same joint conditional. V folds the frozen
    targets into absolute pseudo-data; the running fit W absorbs each accepted
    column before the next one's pull is formed.
    """
    gen = rng.generator
    A, Z = state.loadings.A, state.scores.Z
    d, k_total = A.shape
    S, D = _working_residual(state, dataset, index, W, hyper.eps, x_std)
    V = S * W + D
    for k in range(k_total):
        zk = Z[k]
        pull = V - S * W + S * (A[:, k][:, None] * zk[None, :])
        prec = 1.0 / state.loadings.xi[:, k] + S @ (zk * zk)
        var = 1.0 / prec
        mean = var * (pull @ zk)
        a_new = mean + np.sqrt(var) * gen.standard_normal(d)
        W += np.outer(a_new - A[:, k], zk)
        A[:, k] = a_new


def update_shrinkage_loadings(state, hyper, rng):
    """Shrinkage chain over the loadings: local scales, then the factor-level scales."""
    gen = rng.generator
    ld = state.loadings
    d = ld.A.shape[0]
    ld.xi = sample_gig(2.0 * ld.eta, ld.A * ld.A, hyper.r_a - 0.5, gen)
    ld.eta = np.maximum(
        gen.gamma(hyper.r_a + hyper.s_a, 1.0 / (ld.xi + ld.phi[None, :])), GAMMA_FLOOR
    )
    ld.phi = np.maximum(
        gen.gamma(0.5 + hyper.s_a * d, 1.0 / (ld.phi_tilde + 0.5 * ld.eta.sum(axis=0))),
        GAMMA_FLOOR,
    )
    ld.phi_tilde = max(gen.gamma(1.0, 1.0 / (ld.phi.sum() + 1.0)), GAMMA_FLOOR)


def update_scores(dataset, index, state, hyper, rng, W, F, x_std=None):
    """Scores one factor at a time against bound targets frozen at call entry.

    With the margin targets frozen for the whole block, sample columns are
    mutually independent given the loadings, so each factor row is one
    vectorized draw. The running fits W and F absorb each accepted row before
    the next factor's pull is formed. Labeled samples add the hinge terms of
    their component's coefficients on top of the mixture prior.
    """
    gen = rng.generator
    A, Z = state.loadings.A, state.scores.Z
    k_total, n = Z.shape
    dpm = state.dpm
    psi_n = dpm.psi[dpm.assign]
    mu_n = dpm.mu[dpm.assign].T
    if dataset.n_tasks:
        mask = dataset.label_mask
        y0 = np.where(mask, dataset.Y, 0.0)
        inv_lam = np.where(mask, 1.0 / state.cls.lam, 0.0)
    S, D = _working_residual(state, dataset, index, W, hyper.eps, x_std)
    V = S * W + D
    for k in range(k_total):
        ak = A[:, k]
        zk = Z[k]
        pull = V - S * W + np.outer(ak, zk) * S
        prec = psi_n + (ak * ak) @ S
        num = ak @ pull + psi_n * mu_n[k]
        if dataset.n_tasks:
            bk = state.cls.beta[dpm.assign, :, k].T
            rest = F - bk * zk[None, :]
            prec = prec + np.sum(bk * bk * inv_lam, axis=0)
            num = num + np.sum(y0 * bk * ((1.0 - y0 * rest) * inv_lam + mask), axis=0)
        var = 1.0 / prec
        z_new = var * num + np.sqrt(var) * gen.standard_normal(n)
        W += np.outer(ak, z_new - zk)
        if dataset.n_tasks:
            F += bk * (z_new - zk)[None, :]
        Z[k] = z_new


def update_classifier(dataset, state, hyper, rng, F):
    """Coefficients coordinate by coordinate within each (component, task),
    then their shrinkage chain."""
    gen = rng.generator
    cs = state.cls
    Z = state.scores.Z
    t_total, c_total, k_total = cs.beta.shape
    mask = dataset.label_mask
    for t in range(t_total):
        in_t = state.dpm.assign == t
        for c in range(c_total):
            m = in_t & mask[c]
            z_m = Z[:, m]
            y = dataset.Y[c, m]
            inv_lam = 1.0 / cs.lam[c, m]
            f = F[c, m].copy()
            for k in range(k_total):
                zk = z_m[k]
                prec = 1.0 / cs.b[t, c, k] + np.sum(zk * zk * inv_lam)
                var = 1.0 / prec
                rest = f - cs.beta[t, c, k] * zk
                num = np.sum(y * zk * ((1.0 - y * rest) * inv_lam + 1.0))
                b_new = var * num + np.sqrt(var) * gen.standard_normal()
                f += (b_new - cs.beta[t, c, k]) * zk
                cs.beta[t, c, k] = b_new
            F[c, m] = f
    if c_total:
        cs.b = sample_gig(2.0 * cs.e, cs.beta * cs.beta, hyper.r_beta - 0.5, gen)
        cs.e = np.maximum(
            gen.gamma(hyper.r_beta + hyper.s_beta, 1.0 / (cs.b + cs.phi[:, :, None])),
            GAMMA_FLOOR,
        )
        cs.phi = np.maximum(
            gen.gamma(
                0.5 + hyper.s_beta * k_total,
                1.0 / (cs.phi_tilde + 0.5 * cs.e.sum(axis=2)),
            ),
            GAMMA_FLOOR,
        )
        cs.phi_tilde = np.maximum(gen.gamma(1.0, 1.0 / (cs.phi + 1.0)), GAMMA_FLOOR)


def update_dpm(dataset, state, hyper, rng, F, label_factor=True, fix_mu=False, fix_psi=False):
    """Mixture block: assignments, component means and precisions, sticks,
    concentration. Returns the refreshed classifier fit."""
    gen = rng.generator
    dpm = state.dpm
    Z = state.scores.Z
    k_total, n = Z.shape
    t_total = dpm.nu.size

    logq = np.log(np.maximum(dpm.weights(), GAMMA_FLOOR))
    resid = Z[None, :, :] - dpm.mu[:, :, None]
    log_post = (
        logq[:, None]
        + 0.5 * k_total * np.log(dpm.psi)[:, None]
        - 0.5 * dpm.psi[:, None] * np.sum(resid * resid, axis=1)
    )
    if label_factor and dataset.n_tasks:
        mask = dataset.label_mask
        fit_all = np.einsum("tck,kn->tcn", state.cls.beta, Z)
        hinge = np.where(mask[None, :, :], eps_loss(-dataset.Y[None, :, :] * fit_all, 1.0), 0.0)
        log_post = log_post - hinge.sum(axis=1)

    log_post -= log_post.max(axis=0, keepdims=True)
    prob = np.exp(log_post)
    cum = np.cumsum(prob, axis=0)
    r = gen.uniform(size=n) * cum[-1]
    new_assign = np.sum(cum < r[None, :], axis=0)
    moved = new_assign != dpm.assign
    dpm.assign = new_assign

    counts = dpm.counts()
    z_sums = np.zeros((t_total, k_total))
    np.add.at(z_sums, dpm.assign, Z.T)
    if not fix_mu:
        var = 1.0 / (1.0 + counts * dpm.psi)
        mean = var[:, None] * dpm.psi[:, None] * z_sums
        dpm.mu = mean + np.sqrt(var)[:, None] * gen.standard_normal((t_total, k_total))
    if not fix_psi:
        # psi conditions on the component mean alone, never on the score
        # residuals: letting it see within-component spread creates a feedback
        # loop (tight scores -> huge psi -> scores pulled onto the mean) that
        # collapses components far below held-out score-inference noise
        dpm.psi = np.maximum(
            gen.gamma(
                hyper.psi_shape + 0.5 * k_total,
                1.0 / (hyper.psi_rate + 0.5 * np.sum(dpm.mu * dpm.mu, axis=1)),
            ),
            GAMMA_FLOOR,
        )
    if t_total > 1:
        tail = np.concatenate([np.cumsum(counts[::-1])[::-1][1:], [0.0]])
        dpm.nu[:-1] = gen.beta(1.0 + counts[:-1], dpm.alpha + tail[:-1])
        dpm.nu[-1] = 1.0
    heads = np.minimum(dpm.nu[:-1], 1.0 - 1e-12)
    alpha_rate = hyper.alpha_rate - np.sum(np.log1p(-heads))
    dpm.alpha = max(gen.gamma(hyper.alpha_shape + (t_total - 1), 1.0 / alpha_rate), GAMMA_FLOOR)

    # refresh the classifier fit only where a sample changed component, so an
    # unchanged assignment leaves the cached fit bit-identical
    if dataset.n_tasks and np.any(moved):
        F[:, moved] = np.einsum("nck,kn->cn", state.cls.beta[dpm.assign[moved]], Z[:, moved])
    return F


def _classifier_fit(state, Z):
    return np.einsum("nck,kn->cn", state.cls.beta[state.dpm.assign], Z)


def _check_finite(sweep, **arrays):
    for name, arr in arrays.items():
        if arr is not None and not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite values in {name} at sweep {sweep}")


def run_gibbs(dataset, config=None, hyper=None, rng=None, state=None, index=None):
    """Run the sampler and return post-burnin thinned posterior summaries.

    Stream layout: initialization draws from (KIND_INIT,) and sweep s block b
    from the substream (s, b), so runs are reproducible under any scheduling
    and optional blocks cannot shift each other's draws.
    """
    config = (config or GibbsConfig()).validate()
    hyper = (hyper or Hyperparams()).validate()
    if rng is None:
        rng = RandomStream(0)
    elif not isinstance(rng, RandomStream):
        rng = RandomStream(rng)

    if state is None:
        state = init_state(
            dataset,
            config.n_factors,
            rng.substream(KIND_INIT),
            likelihood=config.likelihood,
            classifier=config.classifier,
            truncation=config.truncation,
            hyper=hyper,
        )
    elif state.likelihood != config.likelihood or state.classifier != config.classifier:
        raise UsageError("resumed state does not match the configured model")
    x_std = None
    if state.likelihood == "rank":
        if index is None:
            index = build_rank_index(dataset.X)
    else:
        x_std, _, _ = standardize_rows(dataset.X)
        x_std = np.where(dataset.observed, x_std, 0.0)

    W = state.loadings.A @ state.scores.Z
    F = _classifier_fit(state, state.scores.Z)
    t_total, c_total, k_total = state.cls.beta.shape

    sum_A = np.zeros_like(state.loadings.A)
    sum_Z = np.zeros_like(state.scores.Z)
    sum_W = np.zeros_like(W)
    sum_beta = np.zeros_like(state.cls.beta)
    sum_beta_sq = np.zeros_like(state.cls.beta)
    occ_sweeps = np.zeros(t_total)
    sum_mu = np.zeros_like(state.dpm.mu)
    sum_psi = np.zeros_like(state.dpm.psi)
    sum_q = np.zeros_like(state.dpm.nu)
    sum_alpha = 0.0
    n_kept = 0
    lpj = np.empty(config.n_iterations)
    beta_samples = [] if config.keep_samples else None

    for sweep in range(1, config.n_iterations + 1):
        _check_finite(sweep, loadings=state.loadings.A, scores=state.scores.Z, coefficients=state.cls.beta)
        if state.likelihood == "rank":
            update_rank_augmentation(state, index, W, hyper.eps, rng.substream(sweep, KIND_RANK_AUG))
        if dataset.n_tasks:
            update_classifier_augmentation(dataset, state, F, rng.substream(sweep, KIND_CLS_AUG))
        update_loadings(dataset, index, state, hyper, rng.substream(sweep, KIND_LOADINGS), W, x_std)
        update_shrinkage_loadings(state, hyper, rng.substream(sweep, KIND_SHRINK_A))
        update_scores(dataset, index, state, hyper, rng.substream(sweep, KIND_SCORES), W, F, x_std)
        update_classifier(dataset, state, hyper, rng.substream(sweep, KIND_CLASSIFIER), F)
        if state.classifier == "dpm":
            F = update_dpm(
                dataset, state, hyper, rng.substream(sweep, KIND_DPM), F,
                label_factor=config.dpm_label_factor,
                fix_mu=config.fix_dpm_mu,
                fix_psi=config.fix_dpm_psi,
            )
        _check_finite(
            sweep,
            loadings=state.loadings.A,
            scores=state.scores.Z,
            coefficients=state.cls.beta,
            margin_scales=state.cls.lam,
            loading_scales=state.loadings.xi,
        )
        lpj[sweep - 1] = log_pseudo_joint(dataset, state, hyper, index=index, x_std=x_std)

        if sweep > config.n_burnin and (sweep - config.n_burnin) % config.thinning == 0:
            n_kept += 1
            sum_A += state.loadings.A
            sum_Z += state.scores.Z
            sum_W += W
            # coefficient summaries average only over sweeps where the
            # component holds samples: an empty component's coefficient block
            # is a data-free draw from its heavy-tailed shrinkage prior, and a
            # plain sweep mean of those excursions never settles near the
            # prior median of zero
            occ = np.bincount(state.dpm.assign, minlength=t_total) > 0
            sum_beta[occ] += state.cls.beta[occ]
            sum_beta_sq[occ] += state.cls.beta[occ] * state.cls.beta[occ]
            occ_sweeps += occ
            sum_mu += state.dpm.mu
            sum_psi += state.dpm.psi
            sum_q += state.dpm.weights()
            sum_alpha += state.dpm.alpha
            if config.keep_samples:
                beta_samples.append(state.cls.beta.copy())

    scale = 1.0 / max(n_kept, 1)
    beta_scale = (1.0 / np.maximum(occ_sweeps, 1.0))[:, None, None]
    mean_beta = sum_beta * beta_scale
    return PosteriorSummary(
        mean_A=sum_A * scale,
        mean_Z=sum_Z * scale,
        mean_W=sum_W * scale,
        mean_beta=mean_beta,
        var_beta=np.maximum(sum_beta_sq * beta_scale - mean_beta * mean_beta, 0.0),
        mean_mu=sum_mu * scale,
        mean_psi=sum_psi * scale,
        mean_weights=sum_q * scale,
        mean_alpha=sum_alpha * scale,
        n_kept=n_kept,
        lpj_trace=lpj,
        final_state=state,
        config=config,
        hyper=hyper,
        beta_samples=np.array(beta_samples) if config.keep_samples else None,
    )
