import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nldp_halfspace.core import PUBLIC_UNLABELED
from nldp_halfspace.distributions import (CHUNK, GAUSSIAN, LAPLACE, UNIFORM_BALL, MarginalSpec,
                                          MassartSpec, MixtureSpec, corrupt_massart, default_radius,
                                          random_unit_vector, sample_marginal, sample_mixture,
                                          sample_realizable, strip_labels)
from nldp_halfspace.errors import ConfigError, InvalidInputError


class TestMarginalSpec:
    def test_defaults(self):
        spec = MarginalSpec(GAUSSIAN, 4)
        assert spec.radius == default_radius(4) == 4.0
        assert (spec.U, spec.r, spec.K) == (1.0, 1.0, 1.0)
        assert spec.is_isotropic

    def test_rejects(self):
        with pytest.raises(ConfigError):
            MarginalSpec("cauchy", 2)
        with pytest.raises(ConfigError):
            MarginalSpec(GAUSSIAN, 0)
        with pytest.raises(ConfigError):
            MarginalSpec(GAUSSIAN, 2, U=0.5)
        with pytest.raises(ConfigError):
            MarginalSpec(UNIFORM_BALL, 2, radius=1.0)


class TestSampling:
    @pytest.mark.parametrize("family,variance", [(GAUSSIAN, 0.97), (UNIFORM_BALL, 1.0), (LAPLACE, 0.82)])
    def test_support_and_covariance(self, family, variance):
        spec = MarginalSpec(family, 3)
        X = sample_marginal(spec, 20_000, 1)
        assert X.shape == (20_000, 3)
        assert np.linalg.norm(X, axis=1).max() <= spec.radius
        # truncation at 2 sqrt(d) shrinks the variance; heavy tails lose the most
        np.testing.assert_allclose(np.cov(X.T), variance * np.eye(3), atol=0.05)
        np.testing.assert_allclose(X.mean(axis=0), 0.0, atol=0.05)

    def test_chunk_layout_is_prefix_stable(self):
        spec = MarginalSpec(GAUSSIAN, 2)
        a = sample_marginal(spec, CHUNK + 10, 3)
        b = sample_marginal(spec, 2 * CHUNK, 3)
        np.testing.assert_array_equal(a[:CHUNK], b[:CHUNK])

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 2 ** 32), st.integers(1, 300))
    def test_realizable_labels_match_target(self, d, seed, n):
        spec = MarginalSpec(GAUSSIAN, d)
        w = random_unit_vector(d, seed)
        data = sample_realizable(spec, w, n, seed)
        assert np.all(data.labels == np.where(data.X @ w >= 0, 1, -1))
        assert np.array_equal(data.X, sample_realizable(spec, w, n, seed).X)

    def test_realizable_checks(self):
        spec = MarginalSpec(GAUSSIAN, 2)
        with pytest.raises(InvalidInputError):
            sample_realizable(spec, [1.0, 1.0], 5, 0)
        with pytest.raises(InvalidInputError):
            sample_realizable(spec, [1.0, 0.0, 0.0], 5, 0)

    def test_margin(self):
        spec = MarginalSpec(GAUSSIAN, 2)
        w = np.array([1.0, 0.0])
        data = sample_realizable(spec, w, 500, 0, margin=0.3)
        cos = np.abs(data.X @ w) / np.linalg.norm(data.X, axis=1)
        assert cos.min() >= 0.3

    def test_mixture(self):
        base = MarginalSpec(GAUSSIAN, 3)
        spec = MixtureSpec(np.array([2.0, 0.0, 0.0]), base)
        assert spec.radius == pytest.approx(base.radius + 2.0)
        data = sample_mixture(spec, 40_000, 5)
        assert abs(data.labels.mean()) < 0.02
        pos = data.X[data.labels > 0].mean(axis=0)
        np.testing.assert_allclose(pos, [2.0, 0.0, 0.0], atol=0.05)

    def test_mixture_needs_isotropic_base(self):
        spec = MixtureSpec(np.zeros(2), MarginalSpec(GAUSSIAN, 2, scale=2.0, radius=10.0))
        with pytest.raises(ConfigError):
            sample_mixture(spec, 10, 0)

    def test_laplace_variance(self):
        X = sample_marginal(MarginalSpec(LAPLACE, 1, radius=50.0), 50_000, 2)
        assert X.var() == pytest.approx(1.0, rel=0.05)


class TestMassart:
    def test_constant_rate(self):
        spec = MarginalSpec(GAUSSIAN, 2)
        clean = sample_realizable(spec, [1.0, 0.0], 40_000, 1)
        noisy = corrupt_massart(clean, MassartSpec.constant(3 / 16), 2)
        rate = np.mean(noisy.labels != clean.labels)
        assert abs(rate - 3 / 16) < 4 * math.sqrt(3 / 16 * 13 / 16 / 40_000)

    def test_zero_rate_is_identity(self):
        clean = sample_realizable(MarginalSpec(GAUSSIAN, 2), [0.0, 1.0], 100, 1)
        assert corrupt_massart(clean, MassartSpec.constant(0.0), 2).equals(clean)

    def test_indicator(self):
        clean = sample_realizable(MarginalSpec(GAUSSIAN, 2), [0.0, 1.0], 20_000, 1)
        noisy = corrupt_massart(clean, MassartSpec.halfspace_indicator(0.4, 0), 3)
        flipped = noisy.labels != clean.labels
        assert not flipped[clean.X[:, 0] <= 0].any()
        assert flipped[clean.X[:, 0] > 0].mean() == pytest.approx(0.4, abs=0.03)

    def test_rejects_half(self):
        clean = sample_realizable(MarginalSpec(GAUSSIAN, 1), [1.0], 10, 1)
        with pytest.raises(ConfigError):
            corrupt_massart(clean, MassartSpec.constant(0.5), 0)
        bad = MassartSpec(lambda X: np.full(len(X), 0.3), 0.2)
        with pytest.raises(ConfigError):
            corrupt_massart(clean, bad, 0)


def test_strip_labels():
    data = sample_realizable(MarginalSpec(GAUSSIAN, 2), [1.0, 0.0], 10, 0)
    public = strip_labels(data)
    assert public.kind == PUBLIC_UNLABELED
    np.testing.assert_array_equal(public.X, data.X)


def test_random_unit_vector():
    v = random_unit_vector(7, 3)
    assert np.linalg.norm(v) == pytest.approx(1.0)
    np.testing.assert_array_equal(v, random_unit_vector(7, 3))
