import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from speckle_minimax.errors import BudgetExceeded, DimensionMismatch, InvalidDims, OutOfBox
from speckle_minimax.model import (
    RandomStream,
    generate_instance,
    make_signal,
    mse,
    sample_signal_class,
    zero_signal,
)


class TestMakeSignal:
    def test_two_pieces(self):
        s = make_signal([1, 1, 2, 2], 0.5, 3, k_budget=2)
        assert s.pieces == 2
        assert s.change_points == (2,)

    def test_budget_exceeded(self):
        with pytest.raises(BudgetExceeded):
            make_signal([1, 2, 3], 0.5, 3, k_budget=2)

    def test_out_of_box(self):
        with pytest.raises(OutOfBox):
            make_signal([0.1], 0.5, 3)

    def test_zero_lower_bound_rejected(self):
        with pytest.raises(OutOfBox):
            make_signal([0.0, 0.0], 0.0, 1.0)

    def test_values_are_immutable(self):
        s = make_signal([1.0, 1.0], 0.5, 2)
        with pytest.raises(ValueError):
            s.values[0] = 2.0


class TestSampleSignalClass:
    def test_k1_is_constant(self):
        s = sample_signal_class(RandomStream(3, role="signal"), 4, 1, 0.5, 2.0)
        assert s.pieces == 1
        assert np.all(s.values == s.values[0])

    def test_deterministic(self):
        a = sample_signal_class(RandomStream(11, 2, 0, "signal"), 8, 3, 0.5, 2.0)
        b = sample_signal_class(RandomStream(11, 2, 0, "signal"), 8, 3, 0.5, 2.0)
        assert a == b

    def test_k_larger_than_n(self):
        with pytest.raises(InvalidDims):
            sample_signal_class(RandomStream(0), 3, 4, 0.5, 2.0)

    def test_level_mean(self):
        x_min, x_max = 0.5, 2.0
        levels = []
        for t in range(10_000):
            s = sample_signal_class(RandomStream(5, t, 0, "signal"), 8, 3, x_min, x_max)
            levels.append(s.values[0])
        levels = np.array(levels)
        se = (x_max - x_min) / np.sqrt(12) / np.sqrt(levels.size)
        assert abs(levels.mean() - (x_min + x_max) / 2) < 3 * se

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 40), st.integers(0, 2**32), st.data())
    def test_output_passes_validation(self, n, seed, data):
        k = data.draw(st.integers(1, n))
        s = sample_signal_class(RandomStream(seed, role="signal"), n, k, 0.3, 1.7)
        again = make_signal(s.values, 0.3, 1.7, k_budget=k)
        assert again == s
        assert s.pieces == k


class TestGenerateInstance:
    def test_zero_signal_noiseless(self):
        inst, obs = generate_instance(1, 3, 5, 2, 0.0, zero_signal(5))
        assert np.all(obs.looks == 0)

    def test_shapes(self):
        x = make_signal(np.ones(5), 0.5, 2)
        inst, obs = generate_instance(1, 3, 5, 2, 0.1, x)
        assert obs.looks.shape == (2, 3)
        assert inst.operators.shape == (2, 3, 5)

    def test_shared_operators(self):
        x = make_signal(np.ones(5), 0.5, 2)
        inst, _ = generate_instance(9, 3, 5, 3, 0.1, x, shared_operators=True)
        assert np.array_equal(inst.operators[0], inst.operators[1])
        assert np.array_equal(inst.operators[0], inst.operators[2])

    def test_varying_operators_differ(self):
        x = make_signal(np.ones(5), 0.5, 2)
        inst, _ = generate_instance(9, 3, 5, 2, 0.1, x)
        assert not np.array_equal(inst.operators[0], inst.operators[1])

    def test_regeneration_bit_exact(self):
        x = make_signal([1, 1, 2, 2, 2], 0.5, 2)
        a = generate_instance(42, 4, 5, 3, 0.3, x, trial=7)
        b = generate_instance(42, 4, 5, 3, 0.3, x, trial=7)
        assert np.array_equal(a[0].operators, b[0].operators)
        assert np.array_equal(a[1].looks, b[1].looks)

    def test_forward_model_identity(self):
        x = make_signal([1, 1, 2, 2, 2], 0.5, 2)
        inst, obs = generate_instance(4, 4, 5, 3, 0.3, x)
        for l in range(3):
            expect = inst.operators[l] @ (x.values * obs.speckle[l]) + obs.additive[l]
            np.testing.assert_allclose(obs.looks[l], expect, rtol=1e-12, atol=1e-12)

    def test_speckle_covariance(self):
        # sigma_z = 0: Cov(y_l | A) = A X^2 A^T; compare entrywise within 5 SE
        x = make_signal([0.7, 0.7, 1.5, 1.5], 0.5, 2)
        inst, _ = generate_instance(3, 3, 4, 1, 0.0, x)
        A = inst.operators[0]
        reps = 10_000
        W = np.stack([RandomStream(3, t, 0, "speckle").normal(4) for t in range(reps)])
        Y = (A @ (x.values[:, None] * W.T)).T
        cov = A @ np.diag(x.values**2) @ A.T
        prods = Y[:, :, None] * Y[:, None, :]
        emp = prods.mean(axis=0)
        se = prods.std(axis=0, ddof=1) / np.sqrt(reps)
        assert np.all(np.abs(emp - cov) < 5 * se)


class TestMse:
    def test_identity(self):
        assert mse([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_value(self):
        assert mse([1, 3], [1, 1]) == 2.0

    def test_brute_force(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=37), rng.normal(size=37)
        total = 0.0
        for u, v in zip(a, b):
            total += (u - v) * (u - v)
        assert abs(mse(a, b) - total / 37) < 1e-12

    def test_mismatch(self):
        with pytest.raises(DimensionMismatch):
            mse([1.0], [1.0, 2.0])
