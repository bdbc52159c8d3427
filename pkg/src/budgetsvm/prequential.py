"""Test-then-train evaluation of adaptive and baseline classifiers."""
from __future__ import annotations

import math
import time
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import kernels
from ._pykernels import dot
from .basket import StrategyConfig, init_basket
from .datagen import SampleList, samples_from_arrays, sample_arrays
from .errors import InvalidInputError, UndefinedMetricError
from .model import POS, NEG, LinearModel, SweepRng, decision_values, pa_update, solve
from .pipeline import Normalizer, fit_normalizer, optimize_threshold

DEFAULT_STRIDE = 50


class Baseline(str, Enum):
    STATIC = "STATIC"
    PA = "PA"


@dataclass
class ConfusionCounts:
    tp: int = 0
    fn: int = 0
    tn: int = 0
    fp: int = 0

    @property
    def P(self):
        return self.tp + self.fn

    @property
    def N(self):
        return self.tn + self.fp

    def add(self, truth, predicted):
        if truth == POS:
            if predicted == POS:
                self.tp += 1
            else:
                self.fn += 1
        elif predicted == NEG:
            self.tn += 1
        else:
            self.fp += 1


def balanced_accuracy(c):
    if c.P == 0 or c.N == 0:
        raise UndefinedMetricError(f"balanced accuracy undefined with P={c.P}, N={c.N}")
    return 0.5 * (c.tp / c.P + c.tn / c.N)


def running_ba(tp, fn, tn, fp):
    """Balanced accuracy or NaN while a class is still unseen."""
    if tp + fn == 0 or tn + fp == 0:
        return math.nan
    return 0.5 * (tp / (tp + fn) + tn / (tn + fp))


@dataclass
class EvalRecord:
    config: dict
    final_ba: float | None
    ba_trajectory: list
    update_count: int
    retrain_count: int
    wall_time: float
    counts: ConfusionCounts = field(default_factory=ConfusionCounts)
    flags: dict = field(default_factory=dict)
    error: str | None = None
    model: LinearModel | None = None
    threshold: float = 0.0

    def same_result(self, other):
        """Equality on everything except wall time."""
        def traj(t):
            return [(i, None if math.isnan(v) else v) for i, v in t]
        return (
            self.config == other.config
            and self.final_ba == other.final_ba
            and traj(self.ba_trajectory) == traj(other.ba_trajectory)
            and (self.update_count, self.retrain_count) == (other.update_count, other.retrain_count)
            and self.counts == other.counts
            and self.flags == other.flags
            and self.error == other.error
        )


def _describe(config, C, class_weight, seed, dataset):
    desc = {"dataset": dataset, "seed": seed, "C": C, "class_weight": dict(class_weight or {NEG: 1.0, POS: 1.0})}
    if isinstance(config, Baseline):
        desc.update(include=config.value, exclude="", balance="", ksv="", relabel="", capacity="")
    else:
        desc.update(include=config.include.value, exclude=config.exclude.value,
                    balance=config.balance.value, ksv=config.keep_only_sv,
                    relabel=config.relabel, capacity=config.capacity)
    return desc


@dataclass
class Prepared:
    """Normalized training samples and test arrays, shareable across runs."""
    normalizer: Normalizer
    train: SampleList
    X_test: np.ndarray
    y_test: np.ndarray
    arrival_test: np.ndarray


def prepare(train, test):
    Xtr, ytr, atr = sample_arrays(train)
    order = np.argsort(atr, kind="stable")
    Xtr, ytr, atr = Xtr[order], ytr[order], atr[order]
    normalizer = fit_normalizer(Xtr)
    Xte, yte, ate = sample_arrays(test)
    if len(yte) == 0:
        raise InvalidInputError("empty test stream")
    order = np.argsort(ate, kind="stable")
    return Prepared(normalizer, samples_from_arrays(normalizer.apply(Xtr), ytr, atr),
                    normalizer.apply(Xte[order]), yte[order], ate[order])


def _static_fit(train, C, class_weight, seed, backend):
    w, b, _, _, _ = solve(train.X, train.y.astype(float), C, class_weight,
                          rng=SweepRng(seed), backend=backend)
    return LinearModel(w, b, C, class_weight)


def _threshold(model, train, mode):
    if mode == "off":
        return 0.0
    if mode != "in_sample":
        raise InvalidInputError(f"unknown threshold mode {mode!r}")
    scores = decision_values(model, train.X)
    return optimize_threshold(zip(scores.tolist(), train.y.tolist()))


def run_prequential(train, test, config, C, class_weight=None, seed=0, *, dataset="",
                    stride=DEFAULT_STRIDE, threshold_mode="in_sample", online_epochs=None,
                    backend=None, keep_model=False, prepared=None):
    """Normalize on ``train``, fit, then predict-reveal-adapt over ``test``.

    ``config`` is a :class:`StrategyConfig` or a :class:`Baseline`. Fit
    failures are captured in ``EvalRecord.error`` rather than raised.
    ``prepared`` (from :func:`prepare`) skips the normalization step when
    many configurations share one split; ``train``/``test`` are then ignored.
    """
    if isinstance(config, str) and not isinstance(config, Baseline):
        config = Baseline(config)
    desc = _describe(config, C, class_weight, seed, dataset)
    start = time.perf_counter()
    flags = Counter()
    try:
        if prepared is None:
            prepared = prepare(train, test)
        if prepared.normalizer.floored:
            flags["std_floored"] += len(prepared.normalizer.floored)
        train_n = prepared.train
        X, y, arrival = prepared.X_test, prepared.y_test, prepared.arrival_test
        if isinstance(config, StrategyConfig):
            extra = {} if online_epochs is None else {"online_epochs": online_epochs}
            state = init_basket(train_n, config, C, class_weight, seed, backend=backend, **extra)
            threshold = _threshold(state.model, train_n, threshold_mode)
            counts, trajectory = kernels.get(backend).run_stream(state, X, y, arrival, threshold, stride)
            flags.update(state.flags)
            model, updates, retrains = state.model, state.update_count, state.retrain_count
        else:
            model = _static_fit(train_n, C, class_weight, seed, backend)
            threshold = _threshold(model, train_n, threshold_mode)
            counts, trajectory, model, updates = _run_baseline(config, model, X, y, arrival, threshold, stride)
            retrains = 0
    except (InvalidInputError, ArithmeticError, RuntimeError) as exc:
        return EvalRecord(desc, None, [], 0, 0, time.perf_counter() - start,
                          flags=dict(flags), error=f"{type(exc).__name__}: {exc}")
    cc = ConfusionCounts(*counts)
    try:
        final = balanced_accuracy(cc)
    except UndefinedMetricError:
        final = None
        flags["ba_undefined"] += 1
    return EvalRecord(desc, final, trajectory, updates, retrains, time.perf_counter() - start,
                      counts=cc, flags=dict(flags), model=model if keep_model else None,
                      threshold=threshold)


def _run_baseline(kind, model, X, y, arrival, threshold, stride):
    tp = fn = tn = fp = 0
    trajectory = []
    updates = 0
    for t in range(len(y)):
        xl = X[t].tolist()
        f = dot(model.w.tolist(), xl) + model.b
        pred = POS if f >= threshold else NEG
        truth = int(y[t])
        if truth == POS:
            if pred == POS:
                tp += 1
            else:
                fn += 1
        elif pred == NEG:
            tn += 1
        else:
            fp += 1
        if (t + 1) % stride == 0:
            trajectory.append((int(arrival[t]), running_ba(tp, fn, tn, fp)))
        if kind is Baseline.PA and truth * f < 1.0:
            model = pa_update(model, X[t], truth)
            updates += 1
    return [tp, fn, tn, fp], trajectory, model, updates
