"""Bounded training basket and the online data selection strategies.

One online step (:func:`process_sample`) runs the inclusion gate, evicts a
stored sample when the basket is full, inserts the newcomer with zero dual
weight and refits only when the solution can actually change.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ._pykernels import dot
from .errors import InvalidInputError, InvalidStateError
from .model import (
    COLD_EPOCHS_PER_SAMPLE,
    NEG,
    ONLINE_EPOCHS,
    POS,
    DualState,
    LinearModel,
    Sample,
    SweepRng,
    decision_value,
    default_tolerance,
    dual_objective,
    solve,
)

log = logging.getLogger(__name__)


class Include(str, Enum):
    ADD_ALL = "ADD_ALL"
    ONLY_MISCLASSIFIED = "ONLY_MISCLASSIFIED"
    ONLY_WITHIN_MARGIN = "ONLY_WITHIN_MARGIN"

    @property
    def code(self):
        return {"ADD_ALL": "a", "ONLY_MISCLASSIFIED": "m", "ONLY_WITHIN_MARGIN": "w"}[self.value]


class Exclude(str, Enum):
    REMOVE_OLDEST = "REMOVE_OLDEST"
    REMOVE_FARTHEST = "REMOVE_FARTHEST"
    REMOVE_NON_BORDER = "REMOVE_NON_BORDER"

    @property
    def code(self):
        return {"REMOVE_OLDEST": "o", "REMOVE_FARTHEST": "f", "REMOVE_NON_BORDER": "n"}[self.value]


class Balance(str, Enum):
    DONT_HANDLE = "DONT_HANDLE_RATIO"
    KEEP_RATIO = "KEEP_RATIO_AS_IT_IS"
    BALANCED_RATIO = "BALANCED_RATIO"

    @property
    def code(self):
        return {"DONT_HANDLE_RATIO": "n", "KEEP_RATIO_AS_IT_IS": "k", "BALANCED_RATIO": "b"}[self.value]


# integer codes shared with the compiled kernel
INCLUDE_CODES = {Include.ADD_ALL: 0, Include.ONLY_MISCLASSIFIED: 1, Include.ONLY_WITHIN_MARGIN: 2}
EXCLUDE_CODES = {Exclude.REMOVE_OLDEST: 0, Exclude.REMOVE_FARTHEST: 1, Exclude.REMOVE_NON_BORDER: 2}
BALANCE_CODES = {Balance.DONT_HANDLE: 0, Balance.KEEP_RATIO: 1, Balance.BALANCED_RATIO: 2}

FLAG_KEEP_RATIO_FALLBACK = "keep_ratio_fallback"
FLAG_KSV_KEPT_ONE = "ksv_kept_largest"


@dataclass(frozen=True)
class StrategyConfig:
    include: Include = Include.ADD_ALL
    exclude: Exclude = Exclude.REMOVE_OLDEST
    balance: Balance = Balance.DONT_HANDLE
    keep_only_sv: bool = False
    relabel: bool = False
    capacity: int = 1000

    def __post_init__(self):
        try:
            object.__setattr__(self, "include", Include(self.include))
            object.__setattr__(self, "exclude", Exclude(self.exclude))
            object.__setattr__(self, "balance", Balance(self.balance))
        except ValueError as exc:
            raise InvalidInputError(str(exc)) from None
        if int(self.capacity) != self.capacity or self.capacity < 2:
            raise InvalidInputError(f"capacity must be an integer >= 2, got {self.capacity}")
        object.__setattr__(self, "capacity", int(self.capacity))
        object.__setattr__(self, "keep_only_sv", bool(self.keep_only_sv))
        object.__setattr__(self, "relabel", bool(self.relabel))

    def kernel_codes(self):
        return INCLUDE_CODES[self.include], EXCLUDE_CODES[self.exclude], BALANCE_CODES[self.balance]


@dataclass
class BasketEntry:
    sample: Sample
    alpha: float = 0.0
    current_label: int = None
    q: float = None

    def __post_init__(self):
        if self.current_label is None:
            self.current_label = self.sample.label
        if self.q is None:
            x = self.sample.features.tolist()
            self.q = dot(x, x) + 1.0

    @property
    def x(self):
        return self.sample.features

    @property
    def arrival_index(self):
        return self.sample.arrival_index


@dataclass
class Basket:
    """Age-ordered list of stored samples with at most ``capacity`` entries."""

    capacity: int
    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def full(self):
        return len(self.entries) >= self.capacity

    def features(self):
        return np.vstack([e.sample.features for e in self.entries])

    def labels(self):
        return np.array([e.current_label for e in self.entries], dtype=float)

    def alphas(self):
        return np.array([e.alpha for e in self.entries], dtype=float)

    def arrival_indices(self):
        return [e.sample.arrival_index for e in self.entries]

    def class_counts(self):
        counts = Counter({NEG: 0, POS: 0})
        counts.update(e.current_label for e in self.entries)
        return counts

    def append(self, entry):
        if self.entries and entry.sample.arrival_index <= self.entries[-1].sample.arrival_index:
            raise InvalidStateError("basket entries must arrive in increasing order")
        self.entries.append(entry)

    def pop(self, index):
        return self.entries.pop(index)


@dataclass
class OnlineState:
    basket: Basket
    model: LinearModel
    config: StrategyConfig
    update_count: int = 0
    retrain_count: int = 0
    rng: SweepRng = field(default_factory=SweepRng)
    tolerance: float = None
    online_epochs: int = ONLINE_EPOCHS
    reference_counts: dict = None
    flags: Counter = field(default_factory=Counter)
    backend: object = None

    def __post_init__(self):
        if self.tolerance is None:
            self.tolerance = default_tolerance(self.model.C)

    @property
    def dual(self):
        alphas = self.basket.alphas()
        obj = dual_objective(alphas, self.basket.features(), self.basket.labels()) if len(alphas) else 0.0
        return DualState(alphas, obj)

    def refit(self, max_epochs=None):
        """Warm-started fit of the current basket from the current model."""
        entries = self.basket.entries
        w, b, alphas, _, _ = solve(
            self.basket.features(), self.basket.labels(), self.model.C, self.model.class_weight,
            alphas=self.basket.alphas(), w=self.model.w.copy(), b=self.model.b,
            max_iterations=self.online_epochs if max_epochs is None else max_epochs,
            tolerance=self.tolerance, rng=self.rng, backend=self.backend,
        )
        for e, a in zip(entries, alphas.tolist()):
            e.alpha = a
        self.model.w = w
        self.model.b = b
        self.retrain_count += 1

    def drop_contribution(self, entry, label=None):
        """Subtract ``alpha * y * (x, 1)`` of ``entry`` from the model."""
        a = entry.alpha
        if a == 0.0:
            return
        d = a * (entry.current_label if label is None else label)
        xl = entry.sample.features.tolist()
        wl = self.model.w.tolist()
        for k in range(len(wl)):
            wl[k] -= d * xl[k]
        self.model.w = np.array(wl)
        self.model.b -= d


def should_include(config, model, x, y):
    if config.include is Include.ADD_ALL:
        return True
    margin = y * decision_value(model, x)
    if config.include is Include.ONLY_MISCLASSIFIED:
        return margin < 0.0
    return margin < 1.0


def removal_candidates(config, basket, incoming_class):
    """Entry indices the exclusion rule may pick from, and whether the
    keep-ratio rule had to fall back to the whole basket."""
    n = len(basket)
    if config.balance is Balance.DONT_HANDLE:
        return list(range(n)), False
    labels = [e.current_label for e in basket.entries]
    if config.balance is Balance.KEEP_RATIO:
        cand = [i for i in range(n) if labels[i] == incoming_class]
        if not cand:
            return list(range(n)), True
        return cand, False
    n_pos = labels.count(POS)
    n_neg = n - n_pos
    if n_pos == n_neg:
        return list(range(n)), False
    major = POS if n_pos > n_neg else NEG
    return [i for i in range(n) if labels[i] == major], False


def non_border_scores(basket):
    """Distance of each entry from its class's median-radius ring.

    Per class: centroid of the stored samples, then
    ``|dist(x, centroid) - median dist|``. Large scores lie far inside or
    far outside the ring.
    """
    X = basket.features()
    labels = np.array([e.current_label for e in basket.entries])
    scores = np.zeros(len(labels))
    for cls in (NEG, POS):
        mask = labels == cls
        if not mask.any():
            continue
        # axis-0 sums accumulate row by row, matching the compiled kernel
        centroid = X[mask].sum(axis=0) / mask.sum()
        diff = X[mask] - centroid
        dist = np.sqrt((diff * diff).sum(axis=1))
        scores[mask] = np.abs(dist - np.median(dist))
    return scores


def choose_removal(config, basket, model, incoming_class, flags=None):
    if len(basket) == 0:
        raise InvalidStateError("nothing to remove from an empty basket")
    cand, fell_back = removal_candidates(config, basket, incoming_class)
    if fell_back:
        log.info("keep-ratio: no stored sample of class %+d, removing from the whole basket", incoming_class)
        if flags is not None:
            flags[FLAG_KEEP_RATIO_FALLBACK] += 1
    arrival = [basket.entries[i].sample.arrival_index for i in cand]
    if config.exclude is Exclude.REMOVE_OLDEST:
        return cand[arrival.index(min(arrival))]
    if config.exclude is Exclude.REMOVE_FARTHEST:
        wl = model.w.tolist()
        scores = [abs(dot(wl, basket.entries[i].sample.features.tolist()) + model.b) for i in cand]
    else:
        all_scores = non_border_scores(basket)
        scores = [float(all_scores[i]) for i in cand]
    # highest score, older entry on ties
    k = min(range(len(cand)), key=lambda j: (-scores[j], arrival[j]))
    return cand[k]


def needs_retrain(model, added=None, removed_alpha=None):
    if removed_alpha is not None and removed_alpha > 0.0:
        return True
    if added is not None:
        return added.label * decision_value(model, added.features) < 1.0
    return False


def apply_ksv(basket, dual=None, flags=None):
    """Drop every entry whose dual weight is exactly zero.

    Returns ``(basket, dual)``. If nothing would survive, the entry with
    the largest weight (oldest on ties) is kept and the event is flagged.
    """
    alphas = basket.alphas() if dual is None else np.asarray(dual.alphas, dtype=float)
    if len(alphas) != len(basket):
        raise InvalidStateError("dual weights are not aligned with the basket")
    keep = [i for i, a in enumerate(alphas.tolist()) if a != 0.0]
    if not keep and len(alphas):
        keep = [int(np.argmax(alphas))]
        log.info("keep-only-SV would empty the basket; keeping one entry")
        if flags is not None:
            flags[FLAG_KSV_KEPT_ONE] += 1
    if len(keep) != len(basket):
        basket.entries = [basket.entries[i] for i in keep]
    objective = dual.objective if dual is not None else float("nan")
    return basket, DualState(alphas[keep], objective)


def relabel_all(basket, model):
    """Overwrite stored labels with the model's predictions (f = 0 -> +1).

    Dual weights and the model are left alone; :func:`process_sample`
    zeroes the weights of flipped entries and refits. Returns the indices
    whose label changed.
    """
    wl = model.w.tolist()
    changed = []
    for i, e in enumerate(basket.entries):
        lab = POS if dot(wl, e.sample.features.tolist()) + model.b >= 0.0 else NEG
        if lab != e.current_label:
            e.current_label = lab
            changed.append(i)
    return changed


def process_sample(state, sample):
    """Post-reveal update of ``state`` with ``sample``; mutates and returns it."""
    model = state.model
    config = state.config
    basket = state.basket
    x, y = sample.features, sample.label
    if x.shape != model.w.shape:
        raise InvalidInputError(f"sample has dimension {x.shape[0]}, model expects {model.dim}")
    if not should_include(config, model, x, y):
        return state
    in_margin = needs_retrain(model, added=sample)

    removed_alpha = None
    if basket.full:
        victim = choose_removal(config, basket, model, y, state.flags)
        entry = basket.pop(victim)
        removed_alpha = entry.alpha
        state.drop_contribution(entry)
    basket.append(BasketEntry(sample))

    retrained = False
    if in_margin or (removed_alpha is not None and removed_alpha > 0.0):
        state.refit()
        retrained = True

    if config.keep_only_sv:
        apply_ksv(basket, flags=state.flags)

    if config.relabel:
        changed = relabel_all(basket, model)
        if changed:
            for i in changed:
                e = basket.entries[i]
                state.drop_contribution(e, label=-e.current_label)
                e.alpha = 0.0
            state.refit()
            retrained = True

    if retrained:
        state.update_count += 1
    return state


def init_basket(training, config, C, class_weight=None, seed=0, *, tolerance=None,
                online_epochs=ONLINE_EPOCHS, backend=None):
    """Fill the basket with the most recent training samples and cold-fit."""
    training = sorted(training, key=lambda s: s.arrival_index)
    if not training:
        raise InvalidInputError("no training samples")
    if len({s.label for s in training}) < 2:
        raise InvalidInputError("training data contains a single class")
    kept = training[-config.capacity:]
    basket = Basket(config.capacity, [BasketEntry(s) for s in kept])
    dim = kept[0].features.shape[0]
    state = OnlineState(
        basket=basket,
        model=LinearModel.zeros(dim, C, class_weight),
        config=config,
        rng=SweepRng(seed),
        tolerance=tolerance,
        online_epochs=online_epochs,
        backend=backend,
    )
    state.refit(max_epochs=COLD_EPOCHS_PER_SAMPLE * len(basket))
    state.retrain_count = 0
    counts = basket.class_counts()
    state.reference_counts = {NEG: counts[NEG], POS: counts[POS]}
    return state
