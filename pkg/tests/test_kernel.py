import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from snis_abc.errors import EmptyBatchError, InvalidInputError
from snis_abc.kernel import KernelSpec, eval_log_weights, normalize, weight_profile

finite = st.floats(-50.0, 50.0, allow_nan=False, allow_infinity=False)


class TestKernelSpec:
    def test_rejects_nonpositive_tau(self):
        for tau in (0.0, -1.0, math.nan, math.inf):
            with pytest.raises(InvalidInputError):
                KernelSpec(tau)

    def test_default_family(self):
        assert KernelSpec(0.1).family.value == "exponential-L2"


class TestEvalLogWeights:
    def test_zero_distance(self):
        lw = eval_log_weights([1.0, 2.0], [[1.0, 2.0]], KernelSpec(0.3))
        assert lw[0] == 0.0

    def test_hand_value(self):
        np.testing.assert_array_equal(eval_log_weights([0.0], [[0.0], [1.0]], KernelSpec(1.0)), [0.0, -1.0])

    def test_euclidean_distance(self):
        lw = eval_log_weights([0.0, 0.0], [[3.0, 4.0]], KernelSpec(2.0))
        assert lw[0] == pytest.approx(-2.5, abs=1e-15)

    def test_scale_invariance(self):
        rng = np.random.default_rng(3)
        x, y = rng.normal(size=3), rng.normal(size=(7, 3))
        a = eval_log_weights(x, y, KernelSpec(0.4))
        b = eval_log_weights(5.0 * x, 5.0 * y, KernelSpec(2.0))
        np.testing.assert_allclose(a, b, rtol=1e-13)

    def test_errors(self):
        spec = KernelSpec(1.0)
        with pytest.raises(EmptyBatchError):
            eval_log_weights([0.0], np.empty((0, 1)), spec)
        with pytest.raises(InvalidInputError):
            eval_log_weights([np.nan], [[0.0]], spec)
        with pytest.raises(InvalidInputError):
            eval_log_weights([0.0], [[np.inf]], spec)
        with pytest.raises(InvalidInputError):
            eval_log_weights([0.0, 0.0], [[0.0]], spec)

    @given(arrays(np.float64, (5, 2), elements=finite), arrays(np.float64, 2, elements=finite))
    def test_nonpositive(self, y, x):
        assert np.all(eval_log_weights(x, y, KernelSpec(0.7)) <= 0.0)


class TestNormalize:
    def test_hand_value(self):
        p = normalize([0.0, -1.0])
        e = math.exp(-1.0)
        np.testing.assert_allclose(p.alpha, [1 / (1 + e), e / (1 + e)], rtol=1e-15)
        assert p.alpha[0] == pytest.approx(0.7311, abs=5e-5)

    def test_equal_weights(self):
        p = normalize(np.full(8, -3.25))
        np.testing.assert_array_equal(p.alpha, np.full(8, 1 / 8))
        assert p.sum_alpha_sq == pytest.approx(1 / 8, abs=1e-15)
        assert p.log_mean_weight == pytest.approx(-3.25, abs=1e-14)

    def test_single(self):
        p = normalize([-7.0])
        assert p.alpha[0] == 1.0 and p.sum_alpha_sq == 1.0

    def test_extreme_spread(self):
        p = normalize([0.0, -1e6])
        np.testing.assert_array_equal(p.alpha, [1.0, 0.0])
        assert p.sum_alpha_sq == 1.0

    def test_log_mean_weight_without_underflow(self):
        p = normalize([-2000.0, -2001.0])
        expected = -2000.0 + math.log((1 + math.exp(-1.0)) / 2)
        assert p.log_mean_weight == pytest.approx(expected, rel=1e-14)

    def test_errors(self):
        with pytest.raises(EmptyBatchError):
            normalize([])
        with pytest.raises(InvalidInputError):
            normalize([0.0, np.nan])
        with pytest.raises(InvalidInputError):
            normalize([0.0, -np.inf])

    @given(arrays(np.float64, st.integers(1, 40), elements=st.floats(-300, 0)), st.floats(-1e3, 1e3))
    def test_shift_invariance(self, lw, c):
        np.testing.assert_allclose(normalize(lw + c).alpha, normalize(lw).alpha, atol=1e-12)

    @given(arrays(np.float64, st.integers(1, 40), elements=st.floats(-300, 0)))
    def test_profile_invariants(self, lw):
        p = normalize(lw)
        n = lw.shape[0]
        assert np.all(p.alpha >= 0)
        assert abs(p.alpha.sum() - 1.0) <= 1e-12
        assert 1 / n - 1e-12 <= p.sum_alpha_sq <= 1 + 1e-12
        order = np.argsort(lw, kind="stable")
        assert np.all(np.diff(p.alpha[order]) >= 0)

    def test_weight_profile_shortcut(self):
        p = weight_profile([0.0], [[0.0], [1.0]], KernelSpec(1.0))
        np.testing.assert_allclose(p.alpha, normalize([0.0, -1.0]).alpha)
