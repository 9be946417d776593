"""Rank-structure checks against brute-force references."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from rankfactor import build_rank_index, lower_upper_groups
from rankfactor import test_bounds as held_out_bounds
from rankfactor.errors import DataError


def brute_bounds(X, W, i, n):
    """Reference bound computation straight from the definition: the fit's max
    over every entry ranked below and its min over every entry ranked above."""
    x = X[i, n]
    if np.isnan(x):
        return -np.inf, np.inf
    row = X[i]
    obs = ~np.isnan(row)
    below = obs & (row < x)
    above = obs & (row > x)
    w_lower = W[i, below].max() if np.any(below) else -np.inf
    w_upper = W[i, above].min() if np.any(above) else np.inf
    return w_lower, w_upper


class TestBuildRankIndex:
    def test_tie_groups_small_example(self):
        X = np.array([[3.0, 1.0, 3.0, 2.0, 1.0]])
        idx = build_rank_index(X)
        feat = idx.features[0]
        assert np.allclose(feat.values, [1.0, 2.0, 3.0])
        assert np.array_equal(feat.group_of, [2, 0, 2, 1, 0])
        assert sorted(feat.groups[0].tolist()) == [1, 4]
        assert feat.groups[1].tolist() == [3]
        assert sorted(feat.groups[2].tolist()) == [0, 2]

    def test_missing_entries_join_no_group(self):
        X = np.array([[1.0, np.nan, 2.0]])
        idx = build_rank_index(X)
        assert idx.features[0].group_of[1] == -1
        assert not idx.observed[0, 1]
        assert not idx.has_lower[0, 1] and not idx.has_upper[0, 1]
        lower, upper = lower_upper_groups(idx, 0, 1)
        assert lower.size == 0 and upper.size == 0

    def test_constant_feature_is_unconstrained(self):
        X = np.array([[5.0, 5.0, 5.0], [1.0, 2.0, 3.0]])
        idx = build_rank_index(X)
        assert not idx.has_lower[0].any()
        assert not idx.has_upper[0].any()
        W = np.zeros((2, 3))
        w_lower, w_upper = idx.group_extrema(W)
        assert np.all(np.isneginf(w_lower[0])) and np.all(np.isposinf(w_upper[0]))

    def test_rejects_bad_input(self):
        with pytest.raises(DataError):
            build_rank_index(np.array([1.0, 2.0]))
        with pytest.raises(DataError):
            build_rank_index(np.array([[1.0, np.inf]]))

    def test_all_missing_matrix(self):
        idx = build_rank_index(np.full((2, 3), np.nan))
        w_lower, w_upper = idx.group_extrema(np.zeros((2, 3)))
        assert np.all(np.isneginf(w_lower)) and np.all(np.isposinf(w_upper))


class TestLowerUpperGroups:
    def test_interior_and_extremes(self):
        X = np.array([[10.0, 30.0, 20.0, 30.0]])
        idx = build_rank_index(X)
        lower, upper = lower_upper_groups(idx, 0, 2)
        assert lower.tolist() == [0]
        assert sorted(upper.tolist()) == [1, 3]
        lower, upper = lower_upper_groups(idx, 0, 0)
        assert lower.size == 0 and upper.tolist() == [2]
        lower, upper = lower_upper_groups(idx, 0, 1)
        assert lower.tolist() == [2] and upper.size == 0


class TestGroupExtrema:
    @settings(max_examples=80, deadline=None)
    @given(
        data=hnp.arrays(
            np.float64,
            hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=8),
            elements=st.one_of(
                st.integers(min_value=-3, max_value=3).map(float),
                st.just(np.nan),
            ),
        ),
        seed=st.integers(min_value=0, max_value=2**31 - 1),
    )
    def test_matches_brute_force(self, data, seed):
        idx = build_rank_index(data)
        W = np.random.default_rng(seed).standard_normal(data.shape)
        w_lower, w_upper = idx.group_extrema(W)
        for i in range(data.shape[0]):
            for n in range(data.shape[1]):
                bl, bu = brute_bounds(data, W, i, n)
                assert w_lower[i, n] == bl
                assert w_upper[i, n] == bu

    @settings(max_examples=50, deadline=None)
    @given(
        data=hnp.arrays(
            np.float64,
            hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=8),
            elements=st.integers(min_value=-5, max_value=5).map(float),
        )
    )
    def test_monotone_transform_invariance(self, data):
        # Structure depends on within-row order only: a strictly increasing map
        # must reproduce every array bit for bit.
        a = build_rank_index(data)
        b = build_rank_index(data**3 + 2.0 * data)
        assert np.array_equal(a.flat_gid, b.flat_gid)
        assert np.array_equal(a.global_order, b.global_order)
        assert np.array_equal(a.boundaries, b.boundaries)
        assert np.array_equal(a.has_lower, b.has_lower)
        assert np.array_equal(a.has_upper, b.has_upper)


class TestTestBounds:
    def setup_method(self):
        # fit values deliberately out of rank order so the running extrema
        # differ from the nearest group's values
        self.X = np.array([[1.0, 3.0, 3.0, 7.0]])
        self.W = np.array([[0.1, 0.5, 0.4, 0.9]])
        self.idx = build_rank_index(self.X)

    def test_between_groups(self):
        wl, wu = held_out_bounds(self.idx, self.W, [[5.0]])
        assert wl[0, 0] == 0.5 and wu[0, 0] == 0.9

    def test_exact_match_excluded_from_both_sides(self):
        wl, wu = held_out_bounds(self.idx, self.W, [[3.0]])
        assert wl[0, 0] == 0.1 and wu[0, 0] == 0.9

    def test_below_all_and_above_all(self):
        wl, wu = held_out_bounds(self.idx, self.W, [[0.0, 100.0]])
        assert np.isneginf(wl[0, 0]) and wu[0, 0] == 0.1
        assert wl[0, 1] == 0.9 and np.isposinf(wu[0, 1])

    def test_match_at_extremes(self):
        wl, wu = held_out_bounds(self.idx, self.W, [[1.0, 7.0]])
        assert np.isneginf(wl[0, 0]) and wu[0, 0] == 0.4
        assert wl[0, 1] == 0.5 and np.isposinf(wu[0, 1])

    def test_missing_test_value(self):
        wl, wu = held_out_bounds(self.idx, self.W, [[np.nan]])
        assert np.isneginf(wl[0, 0]) and np.isposinf(wu[0, 0])

    def test_wrong_feature_count_rejected(self):
        with pytest.raises(DataError):
            held_out_bounds(self.idx, self.W, np.zeros((3, 2)))

    @settings(max_examples=60, deadline=None)
    @given(
        data=hnp.arrays(
            np.float64,
            hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=6),
            elements=st.one_of(
                st.integers(min_value=-3, max_value=3).map(float),
                st.just(np.nan),
            ),
        ),
        seed=st.integers(min_value=0, max_value=2**31 - 1),
    )
    def test_matches_training_rule(self, data, seed):
        # a held-out column equal to a training column must get exactly the
        # training entries' bounds, tie groups included
        gen = np.random.default_rng(seed)
        idx = build_rank_index(data)
        W = gen.standard_normal(data.shape)
        wl_train, wu_train = idx.group_extrema(W)
        wl, wu = held_out_bounds(idx, W, data)
        assert np.array_equal(wl, wl_train)
        assert np.array_equal(wu, wu_train)
