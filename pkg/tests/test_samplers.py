"""Distributional checks for the inverse Gaussian and GIG samplers against frozen references."""

import numpy as np
import pytest
import scipy.stats as stats
from hypothesis import given, settings
from hypothesis import strategies as st

from rankfactor import RandomStream, eps_loss, sample_gig, sample_inverse_gaussian
from rankfactor.errors import ParameterDomainError

N_DRAWS = 100_000

# (a, b, p, mean, variance) from 30-digit quadrature of the GIG density.
GIG_MOMENTS = [
    (2.0, 2.0, 1.0, 1.81430775876378949, 1.33690287401709402),
    (1.0, 1.0, 0.0, 1.42962539826040176, 1.81542201716959118),
    (0.5, 3.0, -0.5, 2.4494897427831781, 4.8989794855663562),
    (4.0, 0.25, 2.5, 1.32142857142857143, 0.628826530612244898),
    (1e-4, 10.0, 1.5, 30009.6934656996814, 600002971.379725843),
    (10.0, 1e-3, -2.0, 0.000493917241120857224, 9.72597534752118327e-7),
    (2.0, 2.0, -1.0, 0.81430775876378949, 0.336902874017094021),
    (3.0, 0.5, 0.5, 0.74158162379719635, 0.358304985710176561),
]

# (a, b, p, E[1/x], E[x]) for the reciprocal-moment settings used by the shrinkage updates.
GIG_RECIPROCAL = [
    (2.0, 2.0, 0.0, 1.22803692981890798, 1.22803692981890798),
    (1.0, 4.0, 0.0, 0.614018464909453988, 2.45607385963781595),
    (3.0, 0.7, 0.0, 2.70559889059321486, 0.631306407805083427),
    (2.0, 0.09, 0.0, 9.01579789292756934, 0.405710905181740605),
    (1.6, 1.2, 1.0, 0.874932763611917082, 1.90619957270893768),
    (2.0, 1.0, -0.5, 2.41421356237309505, 0.707106781186547524),
]


def _stream(*key):
    return RandomStream(20240517, key)


class TestRandomStream:
    def test_same_key_reproduces_bitwise(self):
        a = RandomStream(7, (1, 2)).generator.standard_normal(64)
        b = RandomStream(7, (1, 2)).generator.standard_normal(64)
        assert np.array_equal(a, b)

    def test_distinct_keys_decorrelate(self):
        a = RandomStream(7, (1, 2)).generator.standard_normal(64)
        b = RandomStream(7, (1, 3)).generator.standard_normal(64)
        c = RandomStream(8, (1, 2)).generator.standard_normal(64)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_substream_extends_key(self):
        parent = RandomStream(11, (4,))
        child = parent.substream(9, 2)
        assert child.stream_key == (4, 9, 2)
        direct = RandomStream(11, (4, 9, 2))
        assert np.array_equal(
            child.generator.standard_normal(16), direct.generator.standard_normal(16)
        )


class TestEpsLoss:
    def test_values(self):
        assert eps_loss(0.0, 0.05) == pytest.approx(0.1)
        assert eps_loss(-0.05, 0.05) == 0.0
        assert eps_loss(-1.0, 0.05) == 0.0
        assert eps_loss(2.0, 0.0) == pytest.approx(4.0)
        out = eps_loss(np.array([-1.0, 0.0, 1.0]), 0.5)
        assert np.allclose(out, [0.0, 1.0, 3.0])

    @settings(max_examples=200, deadline=None)
    @given(
        u=st.floats(min_value=-1e6, max_value=1e6),
        eps=st.floats(min_value=0.0, max_value=1e3),
    )
    def test_hinge_shape(self, u, eps):
        val = eps_loss(u, eps)
        assert val >= 0.0
        if u + eps <= 0:
            assert val == 0.0
        else:
            assert val == pytest.approx(2.0 * (u + eps))


class TestInverseGaussian:
    @pytest.mark.parametrize("mu,lam", [(1.0, 1.0), (0.3, 2.0), (5.0, 0.5), (20.0, 20.0), (1e-3, 1e2)])
    def test_moments(self, mu, lam):
        x = sample_inverse_gaussian(mu, lam, _stream(1), size=N_DRAWS)
        true_var = mu**3 / lam
        assert np.all(x > 0)
        assert abs(x.mean() - mu) <= 6.0 * np.sqrt(true_var / N_DRAWS)
        # variance of the sample variance needs the 4th moment; 8% is ~6 sigma here
        assert abs(x.var() - true_var) <= 0.08 * true_var

    @pytest.mark.parametrize("mu,lam", [(1.0, 1.0), (2.5, 0.7)])
    def test_distribution_ks(self, mu, lam):
        x = sample_inverse_gaussian(mu, lam, _stream(2), size=N_DRAWS)
        # scipy parametrization: invgauss(m, scale=s) has mean m*s and shape s
        res = stats.kstest(x, stats.invgauss(mu / lam, scale=lam).cdf)
        assert res.pvalue > 0.01

    def test_broadcasting(self):
        mu = np.array([0.5, 1.0, 2.0])
        lam = np.array([[1.0], [3.0]])
        out = sample_inverse_gaussian(mu, lam, _stream(3))
        assert out.shape == (2, 3)
        assert np.all(out > 0)

    def test_deterministic_given_stream(self):
        a = sample_inverse_gaussian(1.3, 0.8, _stream(4), size=100)
        b = sample_inverse_gaussian(1.3, 0.8, _stream(4), size=100)
        assert np.array_equal(a, b)

    def test_extreme_parameters_stay_positive_finite(self):
        x = sample_inverse_gaussian(1e8, 1e-6, _stream(5), size=2000)
        assert np.all(np.isfinite(x)) and np.all(x > 0)
        x = sample_inverse_gaussian(1e-9, 1e6, _stream(6), size=2000)
        assert np.all(np.isfinite(x)) and np.all(x > 0)

    def test_domain_errors(self):
        with pytest.raises(ParameterDomainError):
            sample_inverse_gaussian(0.0, 1.0, _stream(7))
        with pytest.raises(ParameterDomainError):
            sample_inverse_gaussian(1.0, -1.0, _stream(7))
        with pytest.raises(ParameterDomainError):
            sample_inverse_gaussian(np.inf, 1.0, _stream(7))


class TestGig:
    @pytest.mark.parametrize("a,b,p,mean,var", GIG_MOMENTS)
    def test_moments(self, a, b, p, mean, var):
        x = sample_gig(a, b, p, _stream(10, int(1e6 * p) & 0xFFFF), size=N_DRAWS)
        assert np.all(x > 0)
        assert abs(x.mean() - mean) <= 6.0 * np.sqrt(var / N_DRAWS)
        assert abs(x.var() - var) <= 0.08 * var

    @pytest.mark.parametrize("a,b,p,einv,e", GIG_RECIPROCAL)
    def test_reciprocal_moments(self, a, b, p, einv, e):
        x = sample_gig(a, b, p, _stream(11, int(10 * a), int(10 * b)), size=2 * N_DRAWS)
        assert abs(np.mean(1.0 / x) - einv) <= 0.015 * einv
        assert abs(x.mean() - e) <= 0.015 * e

    def test_matches_inverse_gaussian_at_half_order(self):
        # GIG(a, b, -1/2) is inverse Gaussian with mean sqrt(b/a) and shape b
        a, b = 2.0, 3.0
        x = sample_gig(a, b, -0.5, _stream(12), size=N_DRAWS)
        mu, lam = np.sqrt(b / a), b
        res = stats.kstest(x, stats.invgauss(mu / lam, scale=lam).cdf)
        assert res.pvalue > 0.01

    def test_reciprocity(self):
        # 1/X for X ~ GIG(a, b, p) has the law of GIG(b, a, -p)
        x = sample_gig(1.5, 0.6, 1.2, _stream(13), size=N_DRAWS)
        y = sample_gig(0.6, 1.5, -1.2, _stream(14), size=N_DRAWS)
        res = stats.ks_2samp(1.0 / x, y)
        assert res.pvalue > 0.01

    def test_gamma_boundary(self):
        # b = 0, p > 0 reduces to Ga(p, rate a/2)
        x = sample_gig(3.0, 0.0, 2.5, _stream(15), size=N_DRAWS)
        res = stats.kstest(x, stats.gamma(2.5, scale=2.0 / 3.0).cdf)
        assert res.pvalue > 0.01

    def test_exponential_boundary_at_zero_order(self):
        # b = 0, p = 0 follows the adopted convention Exp(rate a/2)
        x = sample_gig(4.0, 0.0, 0.0, _stream(16), size=N_DRAWS)
        res = stats.kstest(x, stats.expon(scale=0.5).cdf)
        assert res.pvalue > 0.01

    def test_reciprocal_gamma_boundary(self):
        # a = 0, p < 0 reduces to 1/Ga(-p, rate b/2)
        x = sample_gig(0.0, 5.0, -1.8, _stream(17), size=N_DRAWS)
        res = stats.kstest(1.0 / x, stats.gamma(1.8, scale=2.0 / 5.0).cdf)
        assert res.pvalue > 0.01

    def test_reciprocal_exponential_boundary(self):
        x = sample_gig(0.0, 3.0, 0.0, _stream(18), size=N_DRAWS)
        res = stats.kstest(1.0 / x, stats.expon(scale=2.0 / 3.0).cdf)
        assert res.pvalue > 0.01

    def test_extreme_parameters_stay_positive_finite(self):
        for a, b, p, key in [
            (1e-300, 1e-300, 0.0, 19),
            (1e8, 1e-8, 0.5, 20),
            (1e-8, 1e8, -0.5, 21),
            (2.0, 1e-280, 0.0, 22),
            (1.0, 1.0, 45.0, 23),
        ]:
            x = sample_gig(a, b, p, _stream(key), size=500)
            assert np.all(np.isfinite(x)) and np.all(x > 0), (a, b, p)

    def test_vectorized_parameters(self):
        a = np.array([1.0, 2.0, 0.5, 3.0])
        b = np.array([2.0, 0.0, 1.5, 0.5])
        p = np.array([0.5, 1.5, -0.5, 0.0])
        x = sample_gig(a, b, p, _stream(24))
        assert x.shape == (4,)
        assert np.all(x > 0)

    def test_deterministic_given_stream(self):
        a = sample_gig(1.0, 2.0, 0.5, _stream(25), size=64)
        b = sample_gig(1.0, 2.0, 0.5, _stream(25), size=64)
        assert np.array_equal(a, b)

    def test_domain_errors(self):
        with pytest.raises(ParameterDomainError):
            sample_gig(0.0, 0.0, 0.5, _stream(26))
        with pytest.raises(ParameterDomainError):
            sample_gig(1.0, 0.0, -0.5, _stream(26))
        with pytest.raises(ParameterDomainError):
            sample_gig(0.0, 1.0, 0.5, _stream(26))
        with pytest.raises(ParameterDomainError):
            sample_gig(-1.0, 1.0, 0.5, _stream(26))
        with pytest.raises(ParameterDomainError):
            sample_gig(1.0, np.nan, 0.5, _stream(26))

    @settings(max_examples=40, deadline=None)
    @given(
        a=st.floats(min_value=1e-4, max_value=1e4),
        b=st.floats(min_value=1e-4, max_value=1e4),
        p=st.floats(min_value=-30.0, max_value=30.0),
    )
    def test_draws_positive_finite(self, a, b, p):
        x = sample_gig(a, b, p, _stream(27), size=50)
        assert np.all(np.isfinite(x)) and np.all(x > 0)
