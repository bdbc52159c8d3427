"""Linear soft-margin SVM whose offset is regularized like a weight.

The primal is ``1/2 |w|^2 + 1/2 b^2 + sum_i C_i t_i`` under the usual hinge
constraints. Folding ``b`` into the regularizer is the same as appending a
constant 1 to every feature vector, so the dual has no equality constraint
and each coordinate can be optimized in closed form:

    Q_ii = <x_i, x_i> + 1
    G_i  = y_i (<w, x_i> + b) - 1
    a_i <- clip(a_i - G_i / Q_ii, 0, C_i)

with ``w = sum a_i y_i x_i`` and ``b = sum a_i y_i`` kept up to date
incrementally. The passive-aggressive update is exactly one such step for
a fresh sample starting at ``a = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._pykernels import dot
from .errors import InvalidInputError, InvalidStateError

NEG = -1
POS = 1

#: epochs used for cold fits, per stored sample
COLD_EPOCHS_PER_SAMPLE = 100
#: epoch cap for warm refits during online adaptation
ONLINE_EPOCHS = 10


def default_tolerance(C):
    return min(0.01 * C, 0.01)


def _class_weight(class_weight):
    if class_weight is None:
        return {NEG: 1.0, POS: 1.0}
    cw = {int(k): float(v) for k, v in dict(class_weight).items()}
    if set(cw) != {NEG, POS}:
        raise InvalidInputError(f"class_weight needs keys -1 and +1, got {sorted(cw)}")
    if any(v <= 0 for v in cw.values()):
        raise InvalidInputError("class weights must be positive")
    return cw


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: int
    arrival_index: int

    def __post_init__(self):
        x = np.ascontiguousarray(self.features, dtype=float)
        if x.ndim != 1:
            raise InvalidInputError("features must be a 1-D vector")
        if self.label not in (NEG, POS):
            raise InvalidInputError(f"label must be -1 or +1, got {self.label!r}")
        if self.arrival_index < 0:
            raise InvalidInputError("arrival_index must be non-negative")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "label", int(self.label))
        object.__setattr__(self, "arrival_index", int(self.arrival_index))


@dataclass
class LinearModel:
    w: np.ndarray
    b: float = 0.0
    C: float = 1.0
    class_weight: dict = field(default_factory=lambda: {NEG: 1.0, POS: 1.0})

    def __post_init__(self):
        self.w = np.array(self.w, dtype=float)
        self.b = float(self.b)
        if not self.C > 0:
            raise InvalidInputError(f"C must be positive, got {self.C}")
        self.class_weight = _class_weight(self.class_weight)

    @classmethod
    def zeros(cls, dim, C=1.0, class_weight=None):
        return cls(np.zeros(dim), 0.0, C, class_weight)

    @property
    def dim(self):
        return self.w.shape[0]

    def box(self, label):
        """Upper bound on the dual weight of a sample with this label."""
        return self.C * self.class_weight[label]

    def copy(self):
        return LinearModel(self.w.copy(), self.b, self.C, dict(self.class_weight))

    def same_as(self, other):
        """Bitwise equality of the decision function."""
        return self.b == other.b and np.array_equal(self.w, other.w)


@dataclass
class DualState:
    alphas: np.ndarray
    objective: float = math.nan

    def __len__(self):
        return len(self.alphas)


def decision_value(model, x):
    x = np.asarray(x, dtype=float)
    if x.shape != model.w.shape:
        raise InvalidInputError(f"dimension mismatch: x has shape {x.shape}, w has {model.w.shape}")
    return dot(model.w.tolist(), x.tolist()) + model.b


def decision_values(model, X):
    """Row-wise decision values; same summation order as :func:`decision_value`."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise InvalidInputError(f"expected an (n, {model.dim}) matrix, got shape {X.shape}")
    wl = model.w.tolist()
    return np.array([dot(wl, row) + model.b for row in X.tolist()])


def predict_label(value, threshold=0.0):
    return POS if value >= threshold else NEG


def augmented_diag(X):
    """``<x_i, x_i> + 1`` for each row, summed in feature order."""
    return np.array([dot(r, r) + 1.0 for r in np.asarray(X, dtype=float).tolist()])


def dual_objective(alphas, X, y):
    """Dual objective value (to be minimized)."""
    alphas = np.asarray(alphas, dtype=float)
    ay = alphas * np.asarray(y, dtype=float)
    w = ay @ np.asarray(X, dtype=float)
    b = ay.sum()
    return 0.5 * (w @ w + b * b) - alphas.sum()


class SweepRng:
    """SplitMix64 stream that orders the coordinate sweeps.

    Both kernel backends consume it identically, so a seed fixes the whole
    optimization trajectory.
    """

    def __init__(self, seed=0):
        self.state = int(seed) & ((1 << 64) - 1)

    def __repr__(self):
        return f"SweepRng(state={self.state:#x})"


def _as_arrays(basket):
    """Features and labels from a Basket, a list of Samples, or (x, y) pairs."""
    if hasattr(basket, "features") and hasattr(basket, "labels") and callable(basket.labels):
        return basket.features(), basket.labels()
    rows, labels = [], []
    for item in basket:
        if isinstance(item, Sample):
            rows.append(item.features)
            labels.append(item.label)
        else:
            x, lab = item
            rows.append(np.asarray(x, dtype=float))
            labels.append(int(lab))
    if not rows:
        return np.zeros((0, 0)), np.zeros(0)
    return np.vstack(rows), np.array(labels, dtype=float)


def solve(X, y, C, class_weight=None, alphas=None, w=None, b=None,
          max_iterations=None, tolerance=None, rng=None, backend=None):
    """Array-level solver shared by every caller that fits a model.

    ``w``/``b`` default to ``sum a y x`` / ``sum a y`` for the starting
    ``alphas``. Returns ``(w, b, alphas, epochs, violation)``; ``rng`` (a
    :class:`SweepRng`) is advanced in place.
    """
    if not C > 0:
        raise InvalidInputError(f"C must be positive, got {C}")
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    n = len(y)
    if n == 0:
        raise InvalidStateError("cannot fit on an empty basket")
    cw = _class_weight(class_weight)
    if tolerance is None:
        tolerance = default_tolerance(C)
    if not tolerance > 0:
        raise InvalidInputError(f"tolerance must be positive, got {tolerance}")
    if max_iterations is None:
        max_iterations = COLD_EPOCHS_PER_SAMPLE * n
    alphas = np.zeros(n) if alphas is None else np.array(alphas, dtype=float)
    if len(alphas) != n:
        raise InvalidStateError(f"{len(alphas)} dual weights for {n} samples")
    if w is None or b is None:
        ay = alphas * y
        w = np.array([dot(ay.tolist(), col) for col in X.T.tolist()]) if X.shape[1] else np.zeros(0)
        b = float(ay.sum())
    w = np.array(w, dtype=float)
    cbox = np.where(y > 0, C * cw[POS], C * cw[NEG])
    if rng is None:
        rng = SweepRng(0)
    impl = kernels.get(backend)
    b, epochs, viol, rng.state = impl.dcd_solve(
        X, y, augmented_diag(X), cbox, alphas, w, float(b), int(max_iterations), float(tolerance), rng.state
    )
    return w, b, alphas, epochs, viol


def fit_dcd(basket, C, class_weight=None, warm=None, max_iterations=None, tolerance=None,
            *, model=None, rng=None, backend=None):
    """Fit the SVM on ``basket`` by dual coordinate descent.

    ``warm`` seeds the dual weights; ``model`` optionally supplies the
    matching ``w``/``b`` (otherwise they are rebuilt from the weights).
    Defaults: ``100 * n`` epochs and tolerance ``min(0.01 C, 0.01)``.
    """
    X, y = _as_arrays(basket)
    if len(y) == 0:
        raise InvalidStateError("cannot fit on an empty basket")
    alphas = None if warm is None else warm.alphas
    w = b = None
    if model is not None:
        w, b = model.w, model.b
    w, b, alphas, _, _ = solve(X, y, C, class_weight, alphas, w, b,
                               max_iterations, tolerance, rng, backend)
    fitted = LinearModel(w, b, C, class_weight)
    return fitted, DualState(alphas, dual_objective(alphas, X, y))


def pa_update(model, x, y, C=None, class_weight=None):
    """One passive-aggressive step; returns a new model.

    ``tau = min(C_y, hinge / (<x, x> + 1))`` and ``(w, b) += tau * y * (x, 1)``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != model.w.shape:
        raise InvalidInputError(f"dimension mismatch: x has shape {x.shape}, w has {model.w.shape}")
    if y not in (NEG, POS):
        raise InvalidInputError(f"label must be -1 or +1, got {y!r}")
    C = model.C if C is None else C
    cw = model.class_weight if class_weight is None else _class_weight(class_weight)
    xl = x.tolist()
    loss = 1.0 - y * (dot(model.w.tolist(), xl) + model.b)
    new = LinearModel(model.w.copy(), model.b, C, cw)
    if loss <= 0.0:
        return new
    tau = loss / (dot(xl, xl) + 1.0)
    cap = C * cw[y]
    if tau > cap:
        tau = cap
    d = tau * y
    wl = new.w.tolist()
    for k in range(len(wl)):
        wl[k] += d * xl[k]
    new.w = np.array(wl)
    new.b = model.b + d
    return new


def kkt_violation(basket, dual, model, C=None, class_weight=None):
    """Largest projected-gradient magnitude over the basket."""
    X, y = _as_arrays(basket)
    alphas = np.asarray(dual.alphas if isinstance(dual, DualState) else dual, dtype=float)
    if len(alphas) != len(y):
        raise InvalidStateError(f"{len(alphas)} dual weights for {len(y)} samples")
    C = model.C if C is None else C
    cw = model.class_weight if class_weight is None else _class_weight(class_weight)
    worst = 0.0
    wl = model.w.tolist()
    for row, lab, a in zip(X.tolist(), y.tolist(), alphas.tolist()):
        g = lab * (dot(wl, row) + model.b) - 1.0
        cap = C * cw[int(lab)]
        if a <= 0.0:
            v = max(0.0, -g)
        elif a >= cap:
            v = max(0.0, g)
        else:
            v = abs(g)
        worst = max(worst, v)
    return worst
