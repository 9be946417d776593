"""Modified Bessel functions of the second kind, in log space."""

import numpy as np
from scipy import special

from .errors import ParameterDomainError

# For |p| >= this and x <= _SMALL_X the scaled routine overflows, so a small-argument
# series takes over; the two regions agree to ~1e-12 relative where they meet.
_SERIES_ORDER = 30.0
_SMALL_X = 1e-3


def _log_k_series(p, x):
    """log K_p(x) for large order and tiny argument.

    Leading term of the ascending series: K_p(x) ~ (1/2)Gamma(p)(x/2)^(-p),
    with the first two correction terms folded in through log1p. Valid when
    (x/2)^2/(p-1) is tiny, which the caller guarantees.
    """
    half_x_sq = 0.25 * x * x
    c1 = half_x_sq / (1.0 - p)
    c2 = 0.5 * c1 * half_x_sq / (2.0 - p)
    return np.log(0.5) + special.gammaln(p) - p * np.log(0.5 * x) + np.log1p(c1 + c2)


def log_bessel_k(p, x):
    """log K_p(x), finite across the supported domain.

    The workhorse is the exponentially scaled kve, whose log recovers the tail
    without underflow; the large-order/small-argument corner where kve itself
    overflows is served by the ascending series. K is even in its order, so p
    enters through |p|.
    """
    p = np.asarray(p, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if np.any(~np.isfinite(p)) or np.any(~np.isfinite(x)):
        raise ParameterDomainError("log_bessel_k arguments must be finite")
    if np.any(x <= 0):
        raise ParameterDomainError("log_bessel_k requires x > 0")

    ap = np.abs(p)
    # kve returns nan for subnormal orders; K is continuous in p, so flush them to 0
    ap = np.where(ap < 2.3e-308, 0.0, ap)
    shape = np.broadcast_shapes(ap.shape, x.shape)
    ap = np.broadcast_to(ap, shape)
    x = np.broadcast_to(x, shape)

    corner = (ap >= _SERIES_ORDER) & (x <= _SMALL_X)
    out = np.empty(shape, dtype=np.float64)
    if np.any(~corner):
        with np.errstate(over="ignore"):
            out[~corner] = np.log(special.kve(ap[~corner], x[~corner])) - x[~corner]
    if np.any(corner):
        out[corner] = _log_k_series(ap[corner], x[corner])
    if np.any(~np.isfinite(out)):
        raise ParameterDomainError("log_bessel_k arguments outside the supported range")
    return out if out.ndim else float(out)


def bessel_k_ratio(p, q, x):
    """K_p(x) / K_q(x) through the difference of logs."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape == q.shape and np.all(p == q):
        shape = np.broadcast_shapes(p.shape, np.asarray(x).shape)
        ones = np.ones(shape, dtype=np.float64)
        return ones if ones.ndim else 1.0
    out = np.exp(log_bessel_k(p, x) - log_bessel_k(q, x))
    return out if np.ndim(out) else float(out)
