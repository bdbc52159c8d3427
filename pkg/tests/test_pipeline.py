import logging

import numpy as np
import pytest

from budgetsvm.errors import InvalidInputError, UndefinedMetricError
from budgetsvm.model import NEG, POS, fit_dcd
from budgetsvm.pipeline import (
    DEFAULT_C_GRID, GridSearchSpec, apply_normalizer, ba_from_predictions, cross_validate,
    fit_normalizer, grid_search_c, optimize_threshold, stratified_folds,
)
from conftest import samples


class TestNormalizer:
    def test_two_points(self):
        n = fit_normalizer(samples([[0.0], [2.0]], [POS, NEG]))
        assert n.mean[0] == 1.0 and n.std[0] == 1.0
        assert apply_normalizer(n, [4.0])[0] == 3.0

    def test_constant_feature_floored(self, caplog):
        with caplog.at_level(logging.WARNING):
            n = fit_normalizer(samples([[5.0, 1.0], [5.0, 3.0]], [POS, NEG]))
        assert n.std[0] == 1.0 and n.floored == (0,)
        assert apply_normalizer(n, [5.0, 2.0])[0] == 0.0
        assert "zero variance" in caplog.text

    def test_idempotent(self, rng):
        X = rng.normal(3.0, 4.0, size=(200, 3))
        n = fit_normalizer(X)
        Z = n.apply(X)
        assert np.all(np.abs(Z.mean(axis=0)) <= 1e-9)
        assert np.all(np.abs(Z.std(axis=0) - 1.0) <= 1e-9)
        again = fit_normalizer(Z)
        assert np.allclose(again.mean, 0.0, atol=1e-9) and np.allclose(again.std, 1.0, atol=1e-9)

    def test_accepts_samples_and_arrays_alike(self, rng):
        X = rng.normal(size=(10, 2))
        a = fit_normalizer(samples(X, [POS] * 10))
        b = fit_normalizer(X)
        assert np.array_equal(a.mean, b.mean) and np.array_equal(a.std, b.std)

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            fit_normalizer([])

    def test_normalize_then_fit_is_deterministic_in_labels(self, rng):
        X = rng.normal(2.0, 3.0, size=(60, 2))
        y = np.where(X[:, 0] > 2.0, POS, NEG)
        n = fit_normalizer(X)
        via_samples = n.apply_samples(samples(X, y))
        copies = samples((X - n.mean) / n.std, y)
        m1, _ = fit_dcd(via_samples, C=1.0)
        m2, _ = fit_dcd(copies, C=1.0)
        Z = n.apply(X)
        assert np.array_equal(Z @ m1.w + m1.b >= 0, Z @ m2.w + m2.b >= 0)


def _separable(n=60, seed=0):
    rng = np.random.default_rng(seed)
    y = np.array([POS, NEG] * (n // 2))
    X = np.column_stack([y * 5.0 + rng.uniform(-0.5, 0.5, n), rng.normal(size=n)])
    return samples(X, y)


class TestGridSearch:
    def test_singleton_grid_still_scores(self):
        scores = []
        assert grid_search_c(_separable(), GridSearchSpec((0.3,)), scores=scores) == 0.3
        assert len(scores) == 1 and scores[0][1] == 1.0

    def test_separable_fixture(self):
        scores = []
        grid = (1.0, 10 ** -0.5, 0.1)
        assert grid_search_c(_separable(), GridSearchSpec(grid), scores=scores) == 1.0
        assert [s for _, s in scores] == [1.0, 1.0, 1.0]

    def test_tie_goes_to_first(self):
        assert grid_search_c(_separable(), GridSearchSpec((0.1, 1.0))) == 0.1

    def test_order_invariant(self, rng):
        X = rng.normal(size=(80, 2))
        y = np.where(X[:, 0] + 0.8 * rng.normal(size=80) > 0, POS, NEG)
        train = samples(X, y)
        shuffled = [train[i] for i in rng.permutation(80)]
        spec = GridSearchSpec((1.0, 0.1, 0.01))
        s1, s2 = [], []
        grid_search_c(train, spec, seed=3, scores=s1)
        grid_search_c(shuffled, spec, seed=3, scores=s2)
        assert s1 == s2

    def test_too_few_of_a_class(self):
        train = samples([[1.0], [2.0], [3.0], [-1.0], [-2.0], [4.0]], [POS, POS, POS, NEG, NEG, POS])
        with pytest.raises(InvalidInputError):
            cross_validate(train, 1.0, GridSearchSpec(folds=5))

    @pytest.mark.parametrize("kwargs", [dict(c_grid=()), dict(folds=1), dict(c_grid=(1.0, -1.0)),
                                        dict(repetitions=0)])
    def test_spec_validation(self, kwargs):
        with pytest.raises(InvalidInputError):
            GridSearchSpec(**kwargs)

    def test_default_grid(self):
        assert len(DEFAULT_C_GRID) == 9
        assert DEFAULT_C_GRID[0] == 1.0 and DEFAULT_C_GRID[-1] == pytest.approx(1e-4)
        assert np.allclose(np.diff(np.log10(DEFAULT_C_GRID)), -0.5)


class TestStratifiedFolds:
    def test_largest_remainder_sizes(self):
        labels = np.array([POS] * 7 + [NEG] * 13)
        folds = stratified_folds(labels, 5, seed=0)
        pos_sizes = sorted(np.bincount(folds[labels == POS], minlength=5).tolist())
        neg_sizes = sorted(np.bincount(folds[labels == NEG], minlength=5).tolist())
        assert pos_sizes == [1, 1, 1, 2, 2] and neg_sizes == [2, 2, 3, 3, 3]

    def test_seeded(self):
        labels = np.array([POS, NEG] * 20)
        assert np.array_equal(stratified_folds(labels, 4, [1, 0]), stratified_folds(labels, 4, [1, 0]))
        assert not np.array_equal(stratified_folds(labels, 4, [1, 0]), stratified_folds(labels, 4, [1, 1]))


class TestThreshold:
    def test_midpoint_of_perfect_gap(self):
        # candidates -inf, 0.5*(-1+0.5), 1.25, +inf; only -0.25 separates
        assert optimize_threshold([(-1.0, NEG), (0.5, POS), (2.0, POS)]) == -0.25

    def test_uninformative_scores_pick_zero(self):
        scores = [(-1.0, NEG), (-1.0, POS), (1.0, NEG), (1.0, POS)]
        assert optimize_threshold(scores) == 0.0

    def test_symmetric_gap_gives_zero(self):
        assert optimize_threshold([(-1.0, NEG), (1.0, POS)]) == 0.0

    def test_equal_distance_tie_prefers_smaller(self):
        # both sentinels are maximizers and equally far from 0
        assert optimize_threshold([(-1.0, POS), (1.0, NEG)]) == -np.inf

    def test_errors(self):
        with pytest.raises(InvalidInputError):
            optimize_threshold([])
        with pytest.raises(InvalidInputError):
            optimize_threshold([(1.0, POS), (2.0, POS)])


def test_ba_from_predictions():
    assert ba_from_predictions([POS, NEG, NEG, NEG], [NEG, NEG, NEG, NEG]) == 0.5
    with pytest.raises(UndefinedMetricError):
        ba_from_predictions([POS, POS], [POS, POS])
