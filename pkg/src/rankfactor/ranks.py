"""Tie-group rank structure extracted from an observation matrix.

Only the ordering of values within each feature row matters downstream: the
rank likelihood constrains each latent fit through the extrema of the tie
groups ranked below and above it, so any strictly increasing transform of a
feature leaves every structure here bit-identical.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

_EMPTY = np.empty(0, dtype=np.intp)


@dataclass
class RankedFeature:
    """Tie-group layout of one feature row.

    values holds the sorted distinct observed values; groups[g] lists the
    sample indices tied at values[g]; group_of maps each sample to its group,
    -1 where the entry is missing.
    """

    values: np.ndarray
    group_of: np.ndarray
    groups: list = field(default_factory=list)

    @property
    def n_groups(self):
        return len(self.values)


@dataclass
class RankIndex:
    """Rank structure of a full matrix plus flat arrays for vectorized bound lookups.

    The flat layout concatenates every feature's tie groups: global_order lists
    raveled (feature, sample) positions grouped by (feature, group) so a single
    reduceat sweep yields each group's extremum, and flat_gid maps entries to
    their global group id (-1 where missing).
    """

    n_features: int
    n_samples: int
    features: list
    observed: np.ndarray
    flat_gid: np.ndarray
    global_order: np.ndarray
    boundaries: np.ndarray
    group_starts: np.ndarray
    has_lower: np.ndarray
    has_upper: np.ndarray

    def _cumulative_group_bounds(self, W):
        """Running extrema over each feature's group sequence.

        Returns (below, above) indexed by global group id: below[g] is the max
        of W's fit over every group of the same feature ranked before g (-inf
        for a feature's first group), above[g] the min over every group ranked
        after it (+inf for the last).
        """
        flat = W.ravel()[self.global_order]
        gmax = np.maximum.reduceat(flat, self.boundaries)
        gmin = np.minimum.reduceat(flat, self.boundaries)
        below = np.empty_like(gmax)
        above = np.empty_like(gmin)
        for s, e in zip(self.group_starts[:-1], self.group_starts[1:]):
            below[s] = -np.inf
            below[s + 1 : e] = np.maximum.accumulate(gmax[s : e - 1])
            above[e - 1] = np.inf
            above[s : e - 1] = np.minimum.accumulate(gmin[s + 1 : e][::-1])[::-1]
        return below, above

    def group_extrema(self, W):
        """Per-entry bounds from the tie groups ranked below and above each entry.

        Returns (w_lower, w_upper), each shaped like W: w_lower[i, n] is the
        max of W[i] over every tie group ranked below entry (i, n)'s group,
        -inf when there is none; w_upper is the min over every group ranked
        above, +inf when there is none. Missing entries get (-inf, +inf).
        """
        if self.boundaries.size == 0:
            return (
                np.full(W.shape, -np.inf),
                np.full(W.shape, np.inf),
            )
        below, above = self._cumulative_group_bounds(W)
        safe = np.clip(self.flat_gid, 0, None)
        w_lower = np.where(self.has_lower, below[safe], -np.inf)
        w_upper = np.where(self.has_upper, above[safe], np.inf)
        return w_lower, w_upper


def build_rank_index(X):
    """Extract the tie-group rank structure of X (features by samples).

    NaN marks a missing entry, which joins no group and is never constrained;
    infinities are rejected as malformed data.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"expected a 2-d observation matrix, got shape {X.shape}")
    if np.any(np.isinf(X)):
        raise DataError("observation matrix contains non-finite values other than NaN")
    d, n = X.shape
    observed = ~np.isnan(X)

    features = []
    flat_gid = np.full((d, n), -1, dtype=np.intp)
    has_lower = np.zeros((d, n), dtype=bool)
    has_upper = np.zeros((d, n), dtype=bool)
    order_parts = []
    boundary_parts = []
    start_parts = []
    group_offset = 0
    entry_offset = 0
    for i in range(d):
        obs_idx = np.nonzero(observed[i])[0]
        if obs_idx.size == 0:
            features.append(RankedFeature(values=np.empty(0), group_of=np.full(n, -1, dtype=np.intp)))
            continue
        values, inverse = np.unique(X[i, obs_idx], return_inverse=True)
        group_of = np.full(n, -1, dtype=np.intp)
        group_of[obs_idx] = inverse
        by_group = np.argsort(inverse, kind="stable")
        sorted_samples = obs_idx[by_group]
        counts = np.bincount(inverse, minlength=values.size)
        splits = np.cumsum(counts)[:-1]
        groups = [np.asarray(g, dtype=np.intp) for g in np.split(sorted_samples, splits)]
        features.append(RankedFeature(values=values, group_of=group_of, groups=groups))

        flat_gid[i, obs_idx] = group_offset + inverse
        has_lower[i, obs_idx] = inverse > 0
        has_upper[i, obs_idx] = inverse < values.size - 1
        order_parts.append(i * n + sorted_samples)
        boundary_parts.append(entry_offset + np.concatenate([[0], splits]))
        start_parts.append(group_offset)
        group_offset += values.size
        entry_offset += obs_idx.size

    global_order = np.concatenate(order_parts) if order_parts else _EMPTY
    boundaries = np.concatenate(boundary_parts).astype(np.intp) if boundary_parts else _EMPTY
    group_starts = np.asarray(start_parts + [group_offset], dtype=np.intp)
    return RankIndex(
        n_features=d,
        n_samples=n,
        features=features,
        observed=observed,
        flat_gid=flat_gid,
        global_order=global_order,
        boundaries=boundaries,
        group_starts=group_starts,
        has_lower=has_lower,
        has_upper=has_upper,
    )


def lower_upper_groups(index, i, sample):
    """Sample indices of the tie groups directly below and above entry (i, sample).

    Either side is empty at the extremes of the ordering and both are empty for
    a missing entry.
    """
    feat = index.features[i]
    g = feat.group_of[sample]
    if g < 0:
        return _EMPTY, _EMPTY
    lower = feat.groups[g - 1] if g > 0 else _EMPTY
    upper = feat.groups[g + 1] if g < feat.n_groups - 1 else _EMPTY
    return lower, upper


def test_bounds(index, W, X_star):
    """Latent-fit bounds bracketing held-out columns through the training ranks.

    For each entry of X_star (features by new samples), finds where the value
    slots into that feature's training tie groups and returns the extrema of
    the training fit W over the groups strictly below and strictly above it.
    A value matching a training group takes that group's own bounds, so a tied
    test entry is constrained exactly like its training twins; NaN and features
    with no observed training data are unconstrained.

    Returns (w_lower, w_upper) shaped like X_star.
    """
    X_star = np.atleast_2d(np.asarray(X_star, dtype=np.float64))
    if X_star.shape[0] != index.n_features:
        raise DataError(
            f"held-out columns have {X_star.shape[0]} features, expected {index.n_features}"
        )
    w_lower = np.full(X_star.shape, -np.inf)
    w_upper = np.full(X_star.shape, np.inf)
    if index.boundaries.size == 0:
        return w_lower, w_upper
    flat = W.ravel()[index.global_order]
    gmax = np.maximum.reduceat(flat, index.boundaries)
    gmin = np.minimum.reduceat(flat, index.boundaries)
    start = 0
    for i, feat in enumerate(index.features):
        n_groups = feat.n_groups
        if n_groups == 0:
            continue
        # running extrema with sentinels: below_excl[p] covers groups < p,
        # above_incl[p] covers groups >= p
        seg_max = gmax[start : start + n_groups]
        seg_min = gmin[start : start + n_groups]
        below_excl = np.concatenate(([-np.inf], np.maximum.accumulate(seg_max)))
        above_incl = np.concatenate((np.minimum.accumulate(seg_min[::-1])[::-1], [np.inf]))
        x = X_star[i]
        ok = ~np.isnan(x)
        if ok.any():
            xv = x[ok]
            pos = np.searchsorted(feat.values, xv)
            in_range = pos < n_groups
            exact = np.zeros(xv.size, dtype=bool)
            exact[in_range] = feat.values[pos[in_range]] == xv[in_range]
            w_lower[i, ok] = below_excl[pos]
            w_upper[i, ok] = above_incl[np.where(exact, pos + 1, pos)]
        start += n_groups
    return w_lower, w_upper
