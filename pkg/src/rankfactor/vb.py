"""Deterministic variational inference: the Gibbs conditionals in moment form.

Each update replaces a conditional's draw with the matching coordinate ascent
step on a fully factorized posterior. Precisions use second moments; means use
the plug-in first moments, which is exact here because every working residual
is linear in the coordinate being updated. The mixture classifier has no
variational counterpart: this engine covers the single-component (linear)
classifier only.
"""

from dataclasses import dataclass

import numpy as np

from .bessel import log_bessel_k
from .errors import NumericError, UsageError
from .model import Hyperparams, factor_start, ladder_target, standardize_rows
from .ranks import build_rank_index
from .samplers import RESIDUAL_CLAMP, RandomStream


@dataclass
class VariationalMoments:
    """First and second moments of the factorized posterior."""

    mA: np.ndarray
    vA: np.ndarray
    mZ: np.ndarray
    vZ: np.ndarray
    mBeta: np.ndarray          # (C, K)
    vBeta: np.ndarray
    inv_lam_lower: np.ndarray  # masked mean inverse margin scales, 0 off-mask
    inv_lam_upper: np.ndarray
    inv_lam_cls: np.ndarray
    xi_mean: np.ndarray
    xi_inv: np.ndarray
    eta: np.ndarray
    phi: np.ndarray
    phi_tilde: float
    b_mean: np.ndarray
    b_inv: np.ndarray
    e: np.ndarray
    phi_beta: np.ndarray
    phi_tilde_beta: np.ndarray
    mW: np.ndarray
    mF: np.ndarray
    likelihood: str = "rank"


@dataclass
class VbReport:
    converged: bool
    n_iterations: int
    final_delta: float
    deltas: np.ndarray


def _gig_moments(a, b, p):
    """E[x] and E[1/x] under GIG(a, b, p), evaluated fully in log space.

    The two Bessel ratios can individually overflow near the gamma boundary
    (tiny sqrt(a*b)), so the ratios and the sqrt(b/a) scale are combined
    before exponentiating.
    """
    a = np.maximum(a, 1e-300)
    b = np.maximum(b, 1e-300)
    s = np.maximum(np.sqrt(a) * np.sqrt(b), 1e-300)
    lk = log_bessel_k(p, s)
    lk_up = log_bessel_k(p + 1.0, s)
    lk_dn = log_bessel_k(p - 1.0, s)
    half_log = 0.5 * (np.log(b) - np.log(a))
    mean = np.exp(np.clip(half_log + lk_up - lk, -700.0, 700.0))
    inv = np.exp(np.clip(-half_log + lk_dn - lk, -700.0, 700.0))
    return mean, inv


def vb_update_lambdas(m, dataset, index, hyper, x_std):
    """Mean inverse margin scales at the current posterior means."""
    if m.likelihood == "rank":
        w_lower, w_upper = index.group_extrema(m.mW)
        wl = np.where(index.has_lower, w_lower, 0.0)
        wu = np.where(index.has_upper, w_upper, 0.0)
        resid_l = np.abs(wl + hyper.eps - m.mW)
        resid_u = np.abs(m.mW + hyper.eps - wu)
        m.inv_lam_lower = np.where(index.has_lower, 1.0 / np.maximum(resid_l, RESIDUAL_CLAMP), 0.0)
        m.inv_lam_upper = np.where(index.has_upper, 1.0 / np.maximum(resid_u, RESIDUAL_CLAMP), 0.0)
    if dataset.n_tasks:
        mask = dataset.label_mask
        resid = np.abs(1.0 - dataset.Y * m.mF)
        m.inv_lam_cls = np.where(mask, 1.0 / np.maximum(resid, RESIDUAL_CLAMP), 0.0)


def _residual_terms(m, dataset, index, hyper, x_std):
    """Data pull per entry toward each margin present, weighted by its mean
    inverse scale; entries missing a side omit that term."""
    if m.likelihood == "rank":
        w_lower, w_upper = index.group_extrema(m.mW)
        wl = np.where(index.has_lower, w_lower, 0.0)
        wu = np.where(index.has_upper, w_upper, 0.0)
        D = m.inv_lam_lower * (wl + hyper.eps - m.mW) - m.inv_lam_upper * (m.mW + hyper.eps - wu)
    else:
        D = np.where(dataset.observed, x_std - m.mW, 0.0)
    return D


def _data_precision(m, dataset):
    if m.likelihood == "rank":
        return m.inv_lam_lower + m.inv_lam_upper
    return dataset.observed.astype(np.float64)


def vb_update_loadings(m, dataset, index, hyper, x_std):
    """Loadings column by column, then their shrinkage chain in moment form.

    The margin targets refresh with the mean reconstruction before each
    column, so every pull is toward the current bound values; precisions use
    the score second moments, means plug in the first moments.
    """
    d = m.mA.shape[0]
    S = _data_precision(m, dataset)
    z_sq = m.mZ * m.mZ + m.vZ
    for k in range(m.mA.shape[1]):
        D = _residual_terms(m, dataset, index, hyper, x_std)
        zk = m.mZ[k]
        prec = m.xi_inv[:, k] + S @ z_sq[k]
        var = 1.0 / prec
        delta = D + m.mA[:, k][:, None] * zk[None, :] * S
        mean = var * (delta @ zk)
        m.mW += np.outer(mean - m.mA[:, k], zk)
        m.mA[:, k] = mean
        m.vA[:, k] = var

    a_sq = m.mA * m.mA + m.vA
    m.xi_mean, m.xi_inv = _gig_moments(2.0 * m.eta, a_sq, hyper.r_a - 0.5)
    m.eta = (hyper.r_a + hyper.s_a) / (m.xi_mean + m.phi[None, :])
    m.phi = (0.5 + hyper.s_a * d) / (m.phi_tilde + 0.5 * m.eta.sum(axis=0))
    m.phi_tilde = 1.0 / (1.0 + m.phi.sum())


def vb_update_scores(m, dataset, index, hyper, x_std):
    """Score rows under the unit normal prior, the data pull, and the margin pull."""
    S = _data_precision(m, dataset)
    a_sq = m.mA * m.mA + m.vA
    mask = dataset.label_mask
    y0 = np.where(mask, dataset.Y, 0.0)
    b_sq = m.mBeta * m.mBeta + m.vBeta
    for k in range(m.mZ.shape[0]):
        D = _residual_terms(m, dataset, index, hyper, x_std)
        ak = m.mA[:, k]
        prec = 1.0 + a_sq[:, k] @ S
        num = ak @ D + m.mZ[k] * ((ak * ak) @ S)
        if dataset.n_tasks:
            bk = m.mBeta[:, k][:, None]
            prec = prec + np.sum(b_sq[:, k][:, None] * m.inv_lam_cls, axis=0)
            rest = m.mF - bk * m.mZ[k][None, :]
            num = num + np.sum(y0 * bk * ((1.0 - y0 * rest) * m.inv_lam_cls + mask), axis=0)
        var = 1.0 / prec
        mean = var * num
        m.mW += np.outer(ak, mean - m.mZ[k])
        if dataset.n_tasks:
            m.mF += m.mBeta[:, k][:, None] * (mean - m.mZ[k])[None, :]
        m.mZ[k] = mean
        m.vZ[k] = var


def vb_update_classifier(m, dataset, hyper):
    """Coefficients coordinate by coordinate, then their shrinkage chain."""
    if not dataset.n_tasks:
        return
    mask = dataset.label_mask
    y0 = np.where(mask, dataset.Y, 0.0)
    z_sq_inv = (m.mZ * m.mZ + m.vZ) @ m.inv_lam_cls.T  # (K, C)
    k_total = m.mBeta.shape[1]
    for k in range(k_total):
        zk = m.mZ[k]
        prec = m.b_inv[:, k] + z_sq_inv[k]
        var = 1.0 / prec
        rest = m.mF - m.mBeta[:, k][:, None] * zk[None, :]
        num = np.sum(y0 * zk[None, :] * ((1.0 - y0 * rest) * m.inv_lam_cls + mask), axis=1)
        mean = var * num
        m.mF += (mean - m.mBeta[:, k])[:, None] * zk[None, :]
        m.mBeta[:, k] = mean
        m.vBeta[:, k] = var

    beta_sq = m.mBeta * m.mBeta + m.vBeta
    m.b_mean, m.b_inv = _gig_moments(2.0 * m.e, beta_sq, hyper.r_beta - 0.5)
    m.e = (hyper.r_beta + hyper.s_beta) / (m.b_mean + m.phi_beta[:, None])
    m.phi_beta = (0.5 + hyper.s_beta * k_total) / (m.phi_tilde_beta + 0.5 * m.e.sum(axis=1))
    m.phi_tilde_beta = 1.0 / (m.phi_beta + 1.0)


def run_vb(dataset, n_factors, rng=None, likelihood="rank", hyper=None,
           tol=1e-5, max_iters=500, index=None):
    """Coordinate ascent to a fixed point; returns (moments, report).

    Convergence is declared when the largest relative change of the loading
    and coefficient means falls below tol. Initialization mirrors the sampler's
    starting point, so the only randomness is the seed of the starting means.
    """
    if likelihood not in ("rank", "gaussian"):
        raise UsageError("likelihood must be 'rank' or 'gaussian'")
    hyper = (hyper or Hyperparams()).validate()
    if max_iters < 1 or tol <= 0:
        raise UsageError("need max_iters >= 1 and tol > 0")
    if rng is None:
        rng = RandomStream(0)
    elif not isinstance(rng, RandomStream):
        rng = RandomStream(rng)

    d, n, c = dataset.n_features, dataset.n_samples, dataset.n_tasks
    k = int(n_factors)
    if k < 1:
        raise UsageError("n_factors must be at least 1")
    x_std = None
    if likelihood == "rank":
        if index is None:
            index = build_rank_index(dataset.X)
    else:
        x_std, _, _ = standardize_rows(dataset.X)
        x_std = np.where(dataset.observed, x_std, 0.0)

    # Same structure-aligned start as the sampler: from a cold random start
    # every margin is violated from both sides, the sign-based hinge pulls
    # cancel entrywise, and the shrinkage chain pins the loadings at zero
    # before the ordering can inflate. The ladder target depends on the data
    # only through its row orderings, so a monotone row transform leaves the
    # whole deterministic trajectory unchanged.
    gen = rng.generator
    if likelihood == "rank":
        w_target = ladder_target(dataset.X, dataset.observed, 2.0 * hyper.eps)
        mA, mZ = factor_start(w_target, k, gen, min_gap_ratio=1.5)
    else:
        w_target = x_std
        mA, mZ = factor_start(w_target, k, gen)
    m = VariationalMoments(
        mA=mA,
        vA=np.full((d, k), 0.01),
        mZ=mZ,
        vZ=np.ones((k, n)),
        mBeta=np.zeros((c, k)),
        vBeta=np.ones((c, k)),
        inv_lam_lower=np.ones((d, n)) if likelihood == "rank" else np.zeros((d, n)),
        inv_lam_upper=np.ones((d, n)) if likelihood == "rank" else np.zeros((d, n)),
        inv_lam_cls=np.ones((c, n)),
        xi_mean=np.ones((d, k)),
        xi_inv=np.ones((d, k)),
        eta=np.ones((d, k)),
        phi=np.ones(k),
        phi_tilde=1.0,
        b_mean=np.ones((c, k)),
        b_inv=np.ones((c, k)),
        e=np.ones((c, k)),
        phi_beta=np.ones(c),
        phi_tilde_beta=np.ones(c),
        mW=mA @ mZ,
        mF=np.zeros((c, n)),
        likelihood=likelihood,
    )

    deltas = []
    converged = False
    for it in range(1, max_iters + 1):
        m.mW = m.mA @ m.mZ
        m.mF = m.mBeta @ m.mZ
        prev_a = m.mA.copy()
        prev_b = m.mBeta.copy()
        vb_update_lambdas(m, dataset, index, hyper, x_std)
        vb_update_loadings(m, dataset, index, hyper, x_std)
        vb_update_scores(m, dataset, index, hyper, x_std)
        vb_update_classifier(m, dataset, hyper)

        delta = np.max(np.abs(m.mA - prev_a) / (np.abs(m.mA) + 1e-8))
        if c:
            delta = max(delta, np.max(np.abs(m.mBeta - prev_b) / (np.abs(m.mBeta) + 1e-8)))
        deltas.append(delta)
        if not np.isfinite(delta):
            raise NumericError(f"non-finite moment update at iteration {it}")
        if delta < tol:
            converged = True
            break

    return m, VbReport(
        converged=converged,
        n_iterations=len(deltas),
        final_delta=float(deltas[-1]) if deltas else 0.0,
        deltas=np.asarray(deltas),
    )
