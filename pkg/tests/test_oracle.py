import math

import numpy as np
import pytest

from snis_abc.distributions import SamplePool, build_pool, four_mode_spec
from snis_abc.errors import InvalidInputError
from snis_abc.estimators import standard_centroid
from snis_abc.kernel import KernelSpec, weight_profile
from snis_abc.oracle import effective_sample_size, leading_bias, n1_bias, target_centroid


def sphere(x, radius, count):
    ang = 2 * np.pi * np.arange(count) / count
    return SamplePool.from_points(np.asarray(x) + radius * np.column_stack([np.cos(ang), np.sin(ang)]))


def symmetric(x, seed, pairs):
    y = np.random.default_rng(seed).normal(size=(pairs, 2))
    return SamplePool.from_points(np.vstack([y, 2 * np.asarray(x) - y]))


@pytest.fixture(scope="module")
def toy():
    return build_pool(four_mode_spec(), 20_000, seed=1)


class TestTargetCentroid:
    def test_single_point(self):
        pool = SamplePool.from_points([[0.3, 0.7]])
        np.testing.assert_array_equal(target_centroid([0.0, 0.0], pool, KernelSpec(0.1)).value, [0.3, 0.7])

    def test_symmetric_pool(self):
        x = np.array([0.2, -0.4])
        t = target_centroid(x, symmetric(x, 0, 500), KernelSpec(0.3))
        np.testing.assert_allclose(t.value, x, atol=1e-12)

    def test_hand_value(self):
        t = target_centroid([0.0], SamplePool.from_points([[0.0], [1.0]]), KernelSpec(1.0))
        e = math.exp(-1.0)
        assert t.value[0] == pytest.approx(e / (1 + e), rel=1e-15)
        assert t.mean_weight == pytest.approx((1 + e) / 2, rel=1e-15)
        assert t.mean_weight_sq == pytest.approx((1 + e * e) / 2, rel=1e-15)

    def test_same_as_standard_on_full_pool(self, toy):
        kernel = KernelSpec(0.1)
        for x in ([0.5, 0.5], [0.0, 0.1], [-0.3, 0.6]):
            full = standard_centroid(weight_profile(x, toy.points, kernel), toy.points).value
            np.testing.assert_allclose(target_centroid(x, toy, kernel).value, full, rtol=1e-12, atol=1e-15)

    def test_mean_weight_range(self, toy):
        t = target_centroid([0.5, 0.5], toy, KernelSpec(0.1))
        assert 0 < t.mean_weight <= 1


class TestLeadingBias:
    def test_constant_weight_pool(self):
        x = np.array([1.0, -1.0])
        lb = leading_bias(x, sphere(x, 0.7, 64), KernelSpec(0.2))
        np.testing.assert_allclose(lb.vector, 0.0, atol=1e-12)

    def test_symmetric_pool(self):
        x = np.array([0.1, 0.2])
        lb = leading_bias(x, symmetric(x, 3, 400), KernelSpec(0.5))
        np.testing.assert_allclose(lb.vector, 0.0, atol=1e-12)

    def test_definition(self, toy):
        x = np.array([0.4, 0.3])
        kernel = KernelSpec(0.1)
        y = toy.points
        w = np.exp(-np.linalg.norm(y - x, axis=1) / kernel.tau)
        t = (w @ y) / w.sum()
        expected = -np.mean((w * w)[:, None] * (y - t), axis=0) / w.mean() ** 2
        lb = leading_bias(x, toy, kernel)
        np.testing.assert_allclose(lb.vector, expected, rtol=1e-9)
        assert lb.norm == pytest.approx(np.linalg.norm(lb.vector), abs=1e-12)


class TestN1Bias:
    def test_identity(self, toy):
        kernel = KernelSpec(0.1)
        for x in ([0.5, -0.5], [0.1, 0.0]):
            expected = toy.points.mean(axis=0) - target_centroid(x, toy, kernel).value
            np.testing.assert_allclose(n1_bias(x, toy, kernel), expected, atol=1e-12)

    def test_constant_weight_pool(self):
        x = np.zeros(2)
        np.testing.assert_allclose(n1_bias(x, sphere(x, 1.0, 10), KernelSpec(1.0)), 0.0, atol=1e-15)

    def test_single_point_pool(self):
        with pytest.raises(InvalidInputError):
            n1_bias([0.0], SamplePool.from_points([[1.0]]), KernelSpec(1.0))


class TestEffectiveSampleSize:
    def test_constant_weights(self):
        x = np.zeros(2)
        n_eff, lam = effective_sample_size(x, sphere(x, 0.5, 32), KernelSpec(0.1), 16)
        assert lam == pytest.approx(1.0, abs=1e-12) and n_eff == pytest.approx(16.0, rel=1e-12)

    def test_two_point_hand_value(self):
        pool = SamplePool.from_points([[0.0], [1.0]])
        _, lam = effective_sample_size([0.0], pool, KernelSpec(1.0), 4)
        e = math.exp(-1.0)
        assert lam == pytest.approx(((1 + e * e) / 2) / ((1 + e) / 2) ** 2, rel=1e-14)

    def test_monotone_in_inverse_tau(self, toy):
        x = [0.3, 0.5]
        lams = [effective_sample_size(x, toy, KernelSpec(t), 8)[1] for t in (1.0, 0.5, 0.2, 0.1, 0.05, 0.02)]
        assert all(a <= b + 1e-12 for a, b in zip(lams, lams[1:]))
        _, lam = effective_sample_size(x, toy, KernelSpec(0.05), 8)
        assert lam >= 1.0

    def test_n_eff_bounded(self, toy):
        n_eff, lam = effective_sample_size([0.5, 0.5], toy, KernelSpec(0.1), 64)
        assert n_eff <= 64 and n_eff == pytest.approx(64 / lam)
