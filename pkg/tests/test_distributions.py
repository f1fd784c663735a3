import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from rppa.distributions import (
    Exponential,
    LogNormal,
    Point,
    Uniform,
    from_dict,
    grid,
    is_regular,
)
from rppa.errors import DomainError, UnsupportedOperation
from rppa.rng import make_rng

CONTINUOUS = [Uniform(0.0, 1.0), Uniform(1.0, 3.5), Exponential(0.5), Exponential(4.0), LogNormal(0.0, 1.0), LogNormal(0.5, 0.25), LogNormal(2.0, 2.0)]


def scipy_twin(dist):
    if isinstance(dist, Uniform):
        return stats.uniform(loc=dist.lo, scale=dist.hi - dist.lo)
    if isinstance(dist, Exponential):
        return stats.expon(scale=1.0 / dist.rate)
    return stats.lognorm(s=dist.sigma, scale=math.exp(dist.mu))


class TestAgainstScipy:
    @pytest.mark.parametrize("dist", CONTINUOUS, ids=repr)
    def test_cdf_pdf_sf_quantile(self, dist):
        ref = scipy_twin(dist)
        u = np.linspace(0.001, 0.999, 101)
        x = ref.ppf(u)
        np.testing.assert_allclose(dist.cdf(x), ref.cdf(x), rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(dist.sf(x), ref.sf(x), rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(dist.pdf(x), ref.pdf(x), rtol=1e-10)
        np.testing.assert_allclose(dist.quantile(u), x, rtol=1e-10)

    def test_lognormal_far_tail_keeps_precision(self):
        d = LogNormal(0.0, 1.0)
        v = math.exp(9.0)
        assert d.sf(v) == pytest.approx(stats.norm.sf(9.0), rel=1e-12)


class TestFiniteDifferences:
    @pytest.mark.parametrize("dist", CONTINUOUS, ids=repr)
    def test_pdf_is_cdf_slope(self, dist):
        x = grid(dist, 50)
        h = 1e-6 * np.maximum(1.0, x)
        slope = (dist.cdf(x + h) - dist.cdf(x - h)) / (2 * h)
        np.testing.assert_allclose(slope, dist.pdf(x), rtol=1e-5)


class TestScalarsAndShapes:
    def test_scalar_in_scalar_out(self):
        d = Exponential(1.0)
        assert isinstance(d.cdf(1.0), float)
        assert d.cdf([1.0, 2.0]).shape == (2,)

    def test_outside_support(self):
        d = Uniform(1.0, 2.0)
        assert d.cdf(0.0) == 0.0 and d.cdf(5.0) == 1.0
        assert d.pdf(5.0) == 0.0

    def test_quantile_rejects_bad_levels(self):
        with pytest.raises(DomainError):
            Uniform(0, 1).quantile(1.5)


class TestValidation:
    @pytest.mark.parametrize(
        "factory",
        [lambda: Uniform(1.0, 1.0), lambda: Uniform(0.0, math.inf), lambda: Exponential(0.0), lambda: LogNormal(0.0, 0.0), lambda: Point(-1.0)],
    )
    def test_bad_parameters(self, factory):
        with pytest.raises(DomainError):
            factory()


class TestPoint:
    def test_cdf_is_a_step(self):
        d = Point(2.5)
        np.testing.assert_array_equal(d.cdf([2.4, 2.5, 2.6]), [0.0, 1.0, 1.0])
        assert d.sf(1.0) == 1.0

    def test_no_density(self):
        with pytest.raises(UnsupportedOperation):
            Point(1.0).pdf(1.0)
        with pytest.raises(UnsupportedOperation):
            Point(1.0).virtual_value(1.0)
        with pytest.raises(UnsupportedOperation):
            is_regular(Point(1.0))

    def test_samples_constant(self):
        np.testing.assert_array_equal(Point(3.0).sample(make_rng(0), 5), 3.0)


class TestVirtualValue:
    def test_uniform_closed_form(self):
        # v - (1 - v) / 1 = 2v - 1
        v = np.linspace(0.1, 0.9, 9)
        np.testing.assert_allclose(Uniform(0, 1).virtual_value(v), 2 * v - 1)

    def test_exponential_closed_form(self):
        v = np.linspace(0.1, 3, 9)
        np.testing.assert_allclose(Exponential(2.0).virtual_value(v), v - 0.5)

    def test_zero_density_rejected(self):
        with pytest.raises(DomainError):
            Uniform(0, 1).virtual_value(2.0)


class TestRegularity:
    @pytest.mark.parametrize("dist", [Uniform(0, 1), Exponential(1.0), LogNormal(0.0, 1.0), LogNormal(0.0, 0.5)], ids=repr)
    def test_regular(self, dist):
        assert is_regular(dist)

    def test_wide_lognormal_is_not_regular(self):
        # sigma = 2 bends the virtual value down between v ~ 1.7 and 5
        assert not is_regular(LogNormal(0.0, 2.0))


class TestSerialization:
    @pytest.mark.parametrize("dist", CONTINUOUS + [Point(2.5)], ids=repr)
    def test_round_trip(self, dist):
        assert from_dict(dist.to_dict()) == dist

    @pytest.mark.parametrize(
        "data",
        [
            {"kind": "gamma", "params": {}},
            {"kind": "uniform", "params": {"lo": 0}},
            {"kind": "uniform", "params": {"lo": 0, "hi": 1, "mid": 0.5}},
            {"kind": "point", "params": {"v": 1}, "extra": 1},
        ],
    )
    def test_rejects_malformed(self, data):
        with pytest.raises(DomainError):
            from_dict(data)


class TestSampling:
    def test_inverse_cdf_on_shared_uniforms(self):
        d = LogNormal(0.3, 0.7)
        u = make_rng(5).random(1000)
        np.testing.assert_array_equal(d.sample(make_rng(5), 1000), d.quantile(u))

    def test_sample_moments(self):
        x = Exponential(2.0).sample(make_rng(1), 200_000)
        assert abs(x.mean() - 0.5) < 4 * 0.5 / math.sqrt(x.size)


@settings(max_examples=60, deadline=None)
@given(mu=st.floats(-2, 3), sigma=st.floats(0.1, 2.5), u=st.floats(1e-6, 1 - 1e-6))
def test_lognormal_quantile_inverts_cdf(mu, sigma, u):
    d = LogNormal(mu, sigma)
    assert d.cdf(d.quantile(u)) == pytest.approx(u, rel=1e-9, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(lo=st.floats(-5, 5), width=st.floats(0.01, 10), u=st.floats(0, 1))
def test_uniform_quantile_inverts_cdf(lo, width, u):
    d = Uniform(lo, lo + width)
    assert d.cdf(d.quantile(u)) == pytest.approx(u, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(rate=st.floats(0.05, 20), x=st.floats(0, 50))
def test_exponential_round_trip_and_complement(rate, x):
    d = Exponential(rate)
    assert from_dict(d.to_dict()) == d
    assert d.cdf(x) + d.sf(x) == pytest.approx(1.0, abs=1e-12)
