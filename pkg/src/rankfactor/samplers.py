"""Random-variate generators: keyed streams, inverse Gaussian, generalized inverse Gaussian."""

import numpy as np

from .errors import ParameterDomainError

# Residual magnitudes below this are clamped before inversion; the inverse-Gaussian
# mean parameter diverges as the residual vanishes and the clamp preserves the limit
# behavior without producing non-finite draws.
RESIDUAL_CLAMP = 1e-10


class RandomStream:
    """Deterministic random source identified by (seed, stream_key).

    The same (seed, stream_key) pair always yields the same draw sequence, so
    independent model blocks can own disjoint streams and reproduce bitwise
    under any worker schedule.
    """

    def __init__(self, seed, stream_key=()):
        self.seed = int(seed)
        self.stream_key = tuple(int(k) for k in stream_key)
        self.generator = np.random.default_rng(
            np.random.SeedSequence(self.seed, spawn_key=self.stream_key)
        )

    def substream(self, *key):
        """Child stream keyed by this stream's key extended with `key`."""
        return RandomStream(self.seed, self.stream_key + tuple(int(k) for k in key))

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, stream_key={self.stream_key})"


def _generator(rng):
    """Accept a RandomStream or a bare numpy Generator."""
    return rng.generator if isinstance(rng, RandomStream) else rng


def eps_loss(u, eps):
    """One-sided epsilon-insensitive loss 2*max(0, u + eps)."""
    u = np.asarray(u, dtype=np.float64)
    return 2.0 * np.maximum(0.0, u + eps)


def sample_inverse_gaussian(mu, lam, rng, size=None):
    """Draw from the inverse Gaussian distribution with mean mu and shape lam.

    Uses the transformation with root selection: a chi-square variate is mapped
    to the smaller root of the defining quadratic, then the root is kept or
    swapped for mu^2/root with the exact selection probability.
    """
    gen = _generator(rng)
    mu = np.asarray(mu, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(~np.isfinite(mu)) or np.any(~np.isfinite(lam)):
        raise ParameterDomainError("inverse Gaussian parameters must be finite")
    if np.any(mu <= 0) or np.any(lam <= 0):
        raise ParameterDomainError("inverse Gaussian requires mu > 0 and lam > 0")

    shape = np.broadcast_shapes(mu.shape, lam.shape) if size is None else size
    y = gen.standard_normal(shape) ** 2
    w = mu * y
    # Smaller root, written as mu*z/(1+sqrt(1+z))^2 with z = 4*lam/w; this form has no
    # cancellation and degrades gracefully to the w -> 0 limit x = mu.
    with np.errstate(divide="ignore", over="ignore"):
        z = 4.0 * lam / w
        x = mu * z / (1.0 + np.sqrt(1.0 + z)) ** 2
    x = np.where(z > 1e290, mu * np.ones(shape), x)
    u = gen.uniform(size=shape)
    keep_small = u * (mu + x) <= mu
    out = np.where(keep_small, x, mu * mu / x)
    return out if out.ndim else float(out)


def _log_sinh_abs(v):
    """log(sinh(|v|)), overflow-free; -inf at v = 0."""
    av = np.abs(v)
    with np.errstate(divide="ignore"):
        return av - np.log(2.0) + np.log1p(-np.exp(-2.0 * av))


def _gig_log_density_drop(u, tstar, p, omega):
    """h(tstar + u) - h(tstar) for the log-GIG in t = log(x/sqrt(b/a)) space.

    h(t) = p*t - omega*cosh(t) is strictly concave, so the drop is <= 0; the
    cosh difference is evaluated through a product of sinh terms in log space
    to stay finite over the full parameter range, and the result is clipped at
    0 to absorb roundoff at the mode.
    """
    v1 = tstar + 0.5 * u
    v2 = 0.5 * u
    log_mag = np.log(2.0) + np.log(omega) + _log_sinh_abs(v1) + _log_sinh_abs(v2)
    sign = np.sign(v1) * np.sign(v2)
    with np.errstate(over="ignore", invalid="ignore"):
        s = sign * np.exp(log_mag)
    s = np.where(np.isnan(s), 0.0, s)
    return np.minimum(p * u - s, 0.0)


def _gig_unit_drop(tstar, p, omega, side):
    """Distance u > 0 from the mode at which the log density has dropped by >= 1.

    Returns (u, c) with c = actual drop at u, c >= 1 guaranteed, on the right
    (side=+1) or left (side=-1) of the mode. The initial scale combines the
    Gaussian approximation at the mode with the unit-drop point of the pure
    cosh part (which rules when omega << 1); expand/shrink rounds then pin the
    crossing inside a factor-2 bracket so the bisection resolves it to full
    relative precision.
    """
    curvature = np.hypot(omega, p)
    u_gauss = np.sqrt(2.0 / np.minimum(curvature, 1e308))
    # cosh(t*) + 1/omega in t-units: arccosh through logs when it would overflow
    with np.errstate(over="ignore", invalid="ignore"):
        z = (curvature + 1.0) / omega
        a_big = np.log(2.0) + np.log1p(curvature) - np.log(omega)
        a_cosh = np.where(z < 1e8, np.arccosh(np.clip(z, 1.0, 1e8)), a_big)
    v_cosh = a_cosh - side * tstar
    u = np.where(v_cosh > 0, np.minimum(u_gauss, v_cosh), u_gauss)

    drop = _gig_log_density_drop(side * u, tstar, p, omega)
    for _ in range(400):
        need = drop > -1.0
        if not np.any(need):
            break
        u = np.where(need, 2.0 * u, u)
        drop = np.where(need, _gig_log_density_drop(side * u, tstar, p, omega), drop)
    for _ in range(400):
        need = _gig_log_density_drop(side * (0.5 * u), tstar, p, omega) <= -1.0
        if not np.any(need):
            break
        u = np.where(need, 0.5 * u, u)
    lo = 0.5 * u
    hi = u
    for _ in range(62):
        mid = 0.5 * (lo + hi)
        drop_mid = _gig_log_density_drop(side * mid, tstar, p, omega)
        above = drop_mid > -1.0
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    c = -_gig_log_density_drop(side * hi, tstar, p, omega)
    return hi, c


def _sample_gig_interior(a, b, p, gen):
    """Rejection sampler for GIG(a, b, p) with a > 0, b > 0, p >= 0.

    Works on t = log(x/eta), eta = sqrt(b/a), where the density is proportional
    to exp(p*t - omega*cosh(t)) with omega = sqrt(a*b): strictly log-concave for
    every parameter combination. The envelope is the classic three-piece hat
    (uniform body between the unit-drop points, exponential tails along the
    chords through the mode), whose acceptance rate is bounded away from zero
    uniformly in (a, b, p).
    """
    sqrt_a = np.sqrt(a)
    sqrt_b = np.sqrt(b)
    omega = np.minimum(sqrt_a * sqrt_b, 1.7e308)
    log_eta = np.log(sqrt_b) - np.log(sqrt_a)

    ratio = p / omega
    with np.errstate(over="ignore"):
        tstar = np.where(
            ratio < 1e8,
            np.arcsinh(np.minimum(ratio, 1e8)),
            np.log(2.0) + np.log(np.maximum(p, 1.0)) - np.log(omega),
        )

    u_r, c_r = _gig_unit_drop(tstar, p, omega, side=+1.0)
    u_l, c_l = _gig_unit_drop(tstar, p, omega, side=-1.0)

    mass_mid = u_l + u_r
    with np.errstate(over="ignore", under="ignore"):
        mass_r = u_r / c_r * np.exp(-c_r)
        mass_l = u_l / c_l * np.exp(-c_l)
    mass_r = np.where(np.isfinite(mass_r), mass_r, 0.0)
    mass_l = np.where(np.isfinite(mass_l), mass_l, 0.0)
    total = mass_mid + mass_r + mass_l

    out = np.empty(a.shape, dtype=np.float64)
    pending = np.ones(a.shape, dtype=bool)
    for _ in range(500):
        if not np.any(pending):
            break
        idx = np.nonzero(pending)[0]
        n = idx.size
        v = gen.uniform(size=n) * total[idx]
        tail_e = -np.log1p(-gen.uniform(size=n))
        u_accept = gen.uniform(size=n)

        in_mid = v < mass_mid[idx]
        in_right = (~in_mid) & (v < mass_mid[idx] + mass_r[idx])
        with np.errstate(invalid="ignore", over="ignore"):
            u = np.where(
                in_mid,
                v - u_l[idx],
                np.where(
                    in_right,
                    u_r[idx] * (1.0 + tail_e / c_r[idx]),
                    -u_l[idx] * (1.0 + tail_e / c_l[idx]),
                ),
            )
            log_hat = np.where(
                in_mid,
                0.0,
                np.where(in_right, -c_r[idx] * u / u_r[idx], c_l[idx] * u / u_l[idx]),
            )
        drop = _gig_log_density_drop(u, tstar[idx], p[idx], omega[idx])
        ok = np.log(u_accept) <= drop - log_hat
        took = idx[ok]
        out[took] = log_eta[took] + tstar[took] + u[ok]
        pending[took] = False
    if np.any(pending):
        raise ParameterDomainError("GIG rejection sampler failed to accept; parameters out of usable range")

    # out currently holds log(x); clamp into the representable positive range.
    x = np.exp(np.clip(out, -709.0, 709.0))
    return np.clip(x, 1e-310, 1e308)


def sample_gig(a, b, p, rng, size=None):
    """Draw from the generalized inverse Gaussian with density ~ x^(p-1) exp(-(a*x + b/x)/2).

    Boundary cases: b = 0 reduces to Ga(p, a/2) for p > 0 and, by the adopted
    convention for the improper p = 0 limit, to an exponential with rate a/2;
    a = 0 reduces to the reciprocal gamma 1/Ga(-p, b/2) for p < 0 and to
    1/Exp(b/2) for p = 0. Other boundary combinations are rejected. Negative
    orders in the interior are handled through the reciprocity
    X ~ GIG(a, b, p) <=> 1/X ~ GIG(b, a, -p).
    """
    gen = _generator(rng)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if np.any(~np.isfinite(a)) or np.any(~np.isfinite(b)) or np.any(~np.isfinite(p)):
        raise ParameterDomainError("GIG parameters must be finite")
    if np.any(a < 0) or np.any(b < 0):
        raise ParameterDomainError("GIG requires a >= 0 and b >= 0")

    shape = np.broadcast_shapes(a.shape, b.shape, p.shape) if size is None else tuple(np.atleast_1d(size))
    a, b, p = (np.broadcast_to(x, shape).astype(np.float64, copy=True) for x in (a, b, p))

    zero_a = a == 0.0
    zero_b = b == 0.0
    bad = (zero_a & zero_b) | (zero_b & (p < 0)) | (zero_a & (p > 0))
    if np.any(bad):
        raise ParameterDomainError("GIG boundary requires b = 0 with p >= 0 or a = 0 with p <= 0")

    flat_a, flat_b, flat_p = a.ravel(), b.ravel(), p.ravel()
    out = np.empty(flat_a.shape, dtype=np.float64)

    gamma_side = zero_b.ravel()
    inv_side = zero_a.ravel() & ~gamma_side
    interior = ~gamma_side & ~inv_side

    if np.any(gamma_side):
        shp = np.where(flat_p[gamma_side] > 0, flat_p[gamma_side], 1.0)
        out[gamma_side] = gen.gamma(shp, 2.0 / flat_a[gamma_side])
    if np.any(inv_side):
        shp = np.where(flat_p[inv_side] < 0, -flat_p[inv_side], 1.0)
        out[inv_side] = 1.0 / np.maximum(gen.gamma(shp, 2.0 / flat_b[inv_side]), 1e-310)
    if np.any(interior):
        ia, ib, ip = flat_a[interior], flat_b[interior], flat_p[interior]
        neg = ip < 0
        ia2 = np.where(neg, ib, ia)
        ib2 = np.where(neg, ia, ib)
        draws = _sample_gig_interior(ia2, ib2, np.abs(ip), gen)
        out[interior] = np.where(neg, 1.0 / draws, draws)

    out = out.reshape(shape)
    return out if out.ndim else float(out)
