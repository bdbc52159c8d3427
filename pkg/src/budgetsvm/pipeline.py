"""Training-time plumbing: feature scaling, C selection, decision threshold."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, UndefinedMetricError
from .model import NEG, POS, Sample, SweepRng, decision_values, solve, LinearModel

log = logging.getLogger(__name__)

STD_FLOOR = 1e-12
#: 10^0, 10^-0.5, ..., 10^-4
DEFAULT_C_GRID = tuple(10.0 ** (-k / 2) for k in range(9))


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray
    floored: tuple = ()

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def apply_samples(self, samples):
        return [Sample(self.apply(s.features), s.label, s.arrival_index) for s in samples]


def fit_normalizer(train):
    """Per-feature mean and population std of the training samples."""
    if len(train) == 0:
        raise InvalidInputError("cannot fit a normalizer on no samples")
    if isinstance(train, np.ndarray):
        X = np.atleast_2d(np.asarray(train, dtype=float))
    elif hasattr(train, "X"):
        X = train.X
    else:
        X = np.vstack([s.features if isinstance(s, Sample) else np.asarray(s, dtype=float) for s in train])
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    floored = tuple(int(i) for i in np.flatnonzero(std < STD_FLOOR))
    if floored:
        log.warning("features %s have (near) zero variance; their std is set to 1", list(floored))
        std = std.copy()
        std[list(floored)] = 1.0
    return Normalizer(mean, std, floored)


def apply_normalizer(normalizer, x):
    return normalizer.apply(x)


@dataclass(frozen=True)
class GridSearchSpec:
    c_grid: tuple = DEFAULT_C_GRID
    folds: int = 5
    repetitions: int = 2
    metric: str = "balanced_accuracy"

    def __post_init__(self):
        grid = tuple(float(c) for c in self.c_grid)
        if not grid:
            raise InvalidInputError("the C grid is empty")
        if any(not c > 0 for c in grid):
            raise InvalidInputError("every C in the grid must be positive")
        if self.folds < 2:
            raise InvalidInputError("need at least 2 folds")
        if self.repetitions < 1:
            raise InvalidInputError("need at least one repetition")
        if self.metric != "balanced_accuracy":
            raise InvalidInputError("only balanced accuracy is supported as the selection metric")
        object.__setattr__(self, "c_grid", grid)


def ba_from_predictions(y_true, y_pred):
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    pos = y_true == POS
    neg = ~pos
    if not pos.any() or not neg.any():
        raise UndefinedMetricError("balanced accuracy needs both classes")
    return 0.5 * (np.mean(y_pred[pos] == POS) + np.mean(y_pred[neg] == NEG))


def stratified_folds(labels, folds, seed):
    """Fold id per sample; each class is shuffled and dealt out so fold
    sizes follow largest-remainder rounding of ``n_class / folds``."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(labels), dtype=int)
    for cls in (NEG, POS):
        members = np.flatnonzero(labels == cls)
        members = members[rng.permutation(len(members))]
        base, extra = divmod(len(members), folds)
        sizes = [base + (1 if f < extra else 0) for f in range(folds)]
        fold_of[members] = np.repeat(np.arange(folds), sizes)
    return fold_of


def cross_validate(train, C, spec, class_weight=None, seed=0, backend=None):
    """Mean held-out balanced accuracy of a static SVM over folds x repetitions."""
    ordered = sorted(train, key=lambda s: s.arrival_index)
    X = np.vstack([s.features for s in ordered])
    y = np.array([s.label for s in ordered])
    for cls in (NEG, POS):
        if np.count_nonzero(y == cls) < spec.folds:
            raise InvalidInputError(
                f"class {cls:+d} has fewer samples than folds; every fold needs both classes")
    scores = []
    for rep in range(spec.repetitions):
        fold_of = stratified_folds(y, spec.folds, [seed, rep])
        for k in range(spec.folds):
            test = fold_of == k
            tr = ~test
            w, b, _, _, _ = solve(X[tr], y[tr].astype(float), C, class_weight,
                                  rng=SweepRng(seed), backend=backend)
            model = LinearModel(w, b, C, class_weight)
            pred = np.where(decision_values(model, X[test]) >= 0.0, POS, NEG)
            scores.append(ba_from_predictions(y[test], pred))
    return float(np.mean(scores))


def grid_search_c(train, spec=None, class_weight=None, seed=0, backend=None, scores=None):
    """Best C by cross-validated balanced accuracy; earliest grid entry wins ties.

    Pass a list as ``scores`` to collect ``(C, score)`` for every grid point.
    """
    spec = spec or GridSearchSpec()
    best_c, best_score = None, -math.inf
    for C in spec.c_grid:
        score = cross_validate(train, C, spec, class_weight, seed, backend)
        log.debug("C=%g: balanced accuracy %.4f", C, score)
        if scores is not None:
            scores.append((C, score))
        if score > best_score:
            best_c, best_score = C, score
    return best_c


def optimize_threshold(scores):
    """Decision threshold maximizing balanced accuracy of ``score >= threshold``.

    Candidates are the midpoints between consecutive distinct scores plus
    -inf and +inf; among equally good candidates the one nearest 0 wins
    (the smaller one if two are equally near).
    """
    scores = list(scores)
    if not scores:
        raise InvalidInputError("no scores to optimize a threshold on")
    vals = np.array([float(v) for v, _ in scores])
    labs = np.array([int(lab) for _, lab in scores])
    pos_vals = np.sort(vals[labs == POS])
    neg_vals = np.sort(vals[labs != POS])
    n_pos, n_neg = len(pos_vals), len(neg_vals)
    if n_pos == 0 or n_neg == 0:
        raise InvalidInputError("threshold optimization needs both classes")
    distinct = np.unique(vals)
    candidates = np.concatenate(([-np.inf], (distinct[:-1] + distinct[1:]) / 2.0, [np.inf]))
    tp = n_pos - np.searchsorted(pos_vals, candidates, side="left")
    tn = np.searchsorted(neg_vals, candidates, side="left")
    ba = 0.5 * (tp / n_pos + tn / n_neg)
    best = np.flatnonzero(ba == ba.max())
    # nearest to 0 first, then the smaller value
    pick = best[np.lexsort((candidates[best], np.abs(candidates[best])))[0]]
    return float(candidates[pick])
