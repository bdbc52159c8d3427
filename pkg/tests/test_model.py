import numpy as np
import pytest

from budgetsvm.errors import InvalidInputError, InvalidStateError
from budgetsvm.model import (
    NEG, POS, DualState, LinearModel, Sample, SweepRng, decision_value, decision_values,
    default_tolerance, dual_objective, fit_dcd, kkt_violation, pa_update, predict_label,
)
from conftest import samples
from oracles import gram, grid_scan_1d, grid_scan_2d, pg_solve


def model(w, b, C=1.0, cw=None):
    return LinearModel(np.array(w, dtype=float), float(b), C, cw)


class TestDecisionValue:
    def test_zero_model(self):
        assert decision_value(model([0, 0], 0), [5, -3]) == 0.0

    def test_unit_case_on_margin(self):
        assert decision_value(model([1, 0], 0), [1, 0]) == 1.0

    def test_hand_computed(self):
        # 0.5*2 - 2*1 + 0.25
        assert decision_value(model([0.5, -2], 0.25), [2, 1]) == -0.75

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            decision_value(model([1, 0], 0), [1, 2, 3])

    def test_vectorized_matches_scalar(self, rng):
        m = model(rng.normal(size=3), 0.3)
        X = rng.normal(size=(20, 3))
        assert np.allclose(decision_values(m, X), [decision_value(m, x) for x in X], atol=1e-14)

    def test_threshold_tie_predicts_positive(self):
        assert predict_label(0.0) == POS
        assert predict_label(-1e-300) == NEG
        assert predict_label(0.4, threshold=0.5) == NEG


class TestSample:
    def test_rejects_bad_label(self):
        with pytest.raises(InvalidInputError):
            Sample(np.zeros(2), 0, 0)

    def test_rejects_negative_arrival(self):
        with pytest.raises(InvalidInputError):
            Sample(np.zeros(2), 1, -1)


class TestFitDCD:
    def test_two_point_fixture(self, backend):
        basket = samples([[1, 0], [-1, 0]], [POS, NEG])
        m, dual = fit_dcd(basket, C=10.0, tolerance=1e-12, backend=backend)
        Q = gram([[1, 0], [-1, 0]], [1, -1])
        assert Q[0, 1] == 0.0  # the two coordinates decouple
        assert np.allclose(grid_scan_2d(Q, 10.0), [0.5, 0.5], atol=1e-3)
        assert np.allclose(dual.alphas, [0.5, 0.5], atol=1e-12)
        assert np.allclose(m.w, [1, 0], atol=1e-12)
        assert abs(m.b) < 1e-12
        assert decision_value(m, [1, 0]) == pytest.approx(1.0, abs=1e-12)
        assert decision_value(m, [-1, 0]) == pytest.approx(-1.0, abs=1e-12)

    def test_single_sample_closed_form(self, backend):
        m, dual = fit_dcd(samples([[1, 0]], [POS]), C=1.0, backend=backend)
        assert grid_scan_1d(2.0, 1.0) == pytest.approx(0.5, abs=1e-4)
        assert dual.alphas[0] == 0.5
        assert np.array_equal(m.w, [0.5, 0.0])
        assert m.b == 0.5

    def test_single_sample_box_clipped(self, backend):
        _, dual = fit_dcd(samples([[1, 0]], [POS]), C=0.1, backend=backend)
        assert dual.alphas[0] == 0.1

    def test_warm_start_fixed_point(self, backend, rng):
        X = rng.normal(size=(12, 2))
        basket = samples(X, np.where(X[:, 0] > 0, POS, NEG))
        m, dual = fit_dcd(basket, C=1.0, tolerance=1e-10, backend=backend)
        m2, dual2 = fit_dcd(basket, C=1.0, warm=dual, model=m, tolerance=1e-10, backend=backend)
        assert np.array_equal(dual2.alphas, dual.alphas)
        assert m2.same_as(m)

    def test_matches_reference_solver(self, backend, rng):
        for k in range(30):
            n, d, C = int(rng.integers(1, 9)), int(rng.integers(1, 4)), (0.1, 1.0, 10.0)[k % 3]
            X = rng.normal(size=(n, d))
            y = rng.choice([NEG, POS], n)
            _, w, b, obj = pg_solve(X, y, C)
            m, dual = fit_dcd(samples(X, y), C, tolerance=1e-9, max_iterations=100_000, backend=backend)
            assert dual.objective == pytest.approx(obj, abs=1e-6)
            assert np.max(np.abs(np.r_[m.w - w, m.b - b])) < 1e-4

    def test_representation_identity(self, backend, rng):
        X = rng.normal(size=(30, 3))
        y = rng.choice([NEG, POS], 30)
        m, dual = fit_dcd(samples(X, y), C=0.5, backend=backend)
        ay = dual.alphas * y
        assert np.max(np.abs(m.w - ay @ X)) <= 1e-10
        assert abs(m.b - ay.sum()) <= 1e-10

    def test_class_weight_scales_box(self, backend):
        X = [[0.0, 0.0], [0.1, 0.0], [-0.1, 0.0], [0.0, 0.1]]
        y = [POS, NEG, POS, NEG]
        _, dual = fit_dcd(samples(X, y), C=0.01, class_weight={NEG: 1.0, POS: 5.0}, backend=backend)
        for a, lab in zip(dual.alphas, y):
            assert 0.0 <= a <= 0.01 * (5.0 if lab == POS else 1.0) + 1e-15
        assert dual.alphas[0] > 0.01  # a positive entry uses the wider box

    def test_errors(self):
        with pytest.raises(InvalidStateError):
            fit_dcd([], C=1.0)
        basket = samples([[1, 0]], [POS])
        with pytest.raises(InvalidInputError):
            fit_dcd(basket, C=0.0)
        with pytest.raises(InvalidInputError):
            fit_dcd(basket, C=1.0, tolerance=0.0)

    def test_same_seed_same_result(self, backend, rng):
        X = rng.normal(size=(40, 2))
        y = rng.choice([NEG, POS], 40)
        a = fit_dcd(samples(X, y), 1.0, max_iterations=3, rng=SweepRng(7), backend=backend)[1].alphas
        b = fit_dcd(samples(X, y), 1.0, max_iterations=3, rng=SweepRng(7), backend=backend)[1].alphas
        assert np.array_equal(a, b)

    def test_default_tolerance(self):
        assert default_tolerance(10.0) == 0.01
        assert default_tolerance(0.1) == pytest.approx(0.001)


class TestPAUpdate:
    def test_closed_form(self):
        new = pa_update(model([0, 0], 0), np.array([1.0, 0.0]), POS, C=1.0)
        assert np.array_equal(new.w, [0.5, 0.0])
        assert new.b == 0.5
        assert decision_value(new, [1, 0]) == 1.0

    def test_outside_margin_unchanged(self):
        m = model([3, 0], 0)
        new = pa_update(m, np.array([1.0, 0.0]), POS)
        assert new.same_as(m)

    def test_clipping(self):
        new = pa_update(model([0, 0], 0), np.array([10.0, 0.0]), POS, C=0.001)
        assert 1 / 101 > 0.001
        assert new.b == 0.001
        assert np.array_equal(new.w, [0.01, 0.0])

    def test_matches_singleton_fit(self, backend):
        fitted, _ = fit_dcd(samples([[1, 0]], [POS]), C=1.0, backend=backend)
        assert pa_update(model([0, 0], 0), np.array([1.0, 0.0]), POS, C=1.0).same_as(fitted)

    def test_input_not_modified(self):
        m = model([0.2, 0.1], 0.0)
        x = np.array([0.5, -0.5])
        pa_update(m, x, NEG)
        assert np.array_equal(m.w, [0.2, 0.1]) and np.array_equal(x, [0.5, -0.5])

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            pa_update(model([0, 0], 0), np.zeros(3), POS)


class TestKKT:
    def test_converged_fixture(self):
        basket = samples([[1, 0], [-1, 0]], [POS, NEG])
        m, dual = fit_dcd(basket, C=10.0)
        assert kkt_violation(basket, dual, m) <= default_tolerance(10.0)

    def test_zero_duals(self):
        X = [[2.0, 0.0], [-0.5, 0.0]]
        y = [POS, NEG]
        basket = samples(X, y)
        m = model([0.0, 0.0], 0.0, C=1.0)
        assert kkt_violation(basket, DualState(np.zeros(2), 0.0), m) == 1.0

    def test_at_upper_bound(self):
        basket = samples([[1.0]], [POS])
        m = model([2.0], 1.0, C=1.0)
        # G = y f - 1 = 3 - 1 = 2 with alpha at C
        assert kkt_violation(basket, DualState(np.array([1.0]), 0.0), m) == 2.0

    def test_misaligned(self):
        with pytest.raises(InvalidStateError):
            kkt_violation(samples([[1.0]], [POS]), DualState(np.zeros(2), 0.0), model([0.0], 0.0))


def test_dual_objective_matches_gram_form(rng):
    X = rng.normal(size=(6, 2))
    y = rng.choice([NEG, POS], 6)
    a = rng.uniform(0, 1, 6)
    Q = gram(X, y)
    assert dual_objective(a, X, y) == pytest.approx(0.5 * a @ Q @ a - a.sum(), abs=1e-12)
