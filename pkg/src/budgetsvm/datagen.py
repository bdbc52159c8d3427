"""Seeded synthetic streams with continuous or abrupt concept drift.

Five 2-D datasets move two isotropic Gaussian classes along fixed mean
trajectories. ``C1`` is the majority class (label -1) and ``C2`` the
minority target class (label +1). Time runs as ``t = i / n_total``.

    Parallel     both means move along the initial boundary (no boundary change)
    LinearShift  both means move diagonally, crossing the initial boundary
    Opposite     the means pass each other in opposite directions
    Cross        C1 moves along x, C2 along y; the paths cross at C2's start
    Parabola     C1 stays put, C2 swings over it on a parabolic arc

SEA3D draws points uniformly from the cube [0, 10]^3, labels them
``C1 iff p1 + p2 <= theta`` with theta redrawn from (6, 14) every 100
samples, and flips 10% of the labels.

All randomness comes from numpy's PCG64 (``numpy.random.default_rng``),
so a given :class:`DriftSpec` yields the same stream on every platform.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .model import NEG, POS, Sample

DATASETS_2D = ("Parallel", "LinearShift", "Opposite", "Cross", "Parabola")
DATASETS = DATASETS_2D + ("SEA3D",)

C1_START = np.array([-2.0, 0.0])
C2_START = np.array([2.0, 0.0])
ARC_HEIGHT = 4.0
SEA_BLOCK = 100
SEA_THETA = (6.0, 14.0)
SEA_SIDE = 10.0
SEA_NOISE = 0.10

_DIAG = np.array([1.0, 1.0]) / np.sqrt(2.0)


@dataclass(frozen=True)
class DriftSpec:
    dataset: str
    n_total: int = 10000
    n_train: int = 1000
    seed: int = 0
    noise_sigma: float = 0.5
    class_ratio: float = 3.0
    drift: float = 6.0

    def __post_init__(self):
        if self.dataset not in DATASETS:
            raise InvalidInputError(f"unknown dataset {self.dataset!r}; expected one of {DATASETS}")
        if self.n_total <= 0 or self.n_train <= 0:
            raise InvalidInputError("n_total and n_train must be positive")
        if self.n_train >= self.n_total:
            raise InvalidInputError("n_train must be smaller than n_total")
        if not self.noise_sigma > 0:
            raise InvalidInputError("noise_sigma must be positive")
        if not self.class_ratio > 0:
            raise InvalidInputError("class_ratio must be positive")
        if self.drift < 0:
            raise InvalidInputError("drift must be non-negative")

    @property
    def minority_fraction(self):
        return 1.0 / (1.0 + self.class_ratio)


class SampleList(list):
    """List of samples that also carries the stacked feature/label arrays."""

    def __init__(self, samples, X=None, y=None, arrival=None):
        super().__init__(samples)
        if X is None:
            X, y, arrival = _stack(self)
        self.X = X
        self.y = y
        self.arrival = arrival


def _stack(samples):
    if not samples:
        return np.zeros((0, 0)), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    X = np.array([s.features for s in samples], dtype=float)
    y = np.array([s.label for s in samples], dtype=np.int64)
    arrival = np.array([s.arrival_index for s in samples], dtype=np.int64)
    return X, y, arrival


def sample_arrays(samples):
    """``(X, y, arrival)`` for a list of samples, reusing cached arrays."""
    if isinstance(samples, (SampleList, LabeledStream)):
        return samples.X, samples.y, samples.arrival
    return _stack(list(samples))


def samples_from_arrays(X, y, arrival=None):
    if arrival is None:
        arrival = np.arange(len(y), dtype=np.int64)
    samples = [Sample(X[i], int(y[i]), int(arrival[i])) for i in range(len(y))]
    return SampleList(samples, X, np.asarray(y, dtype=np.int64), arrival)


@dataclass
class LabeledStream:
    samples: list
    dimension: int
    name: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.samples, SampleList):
            self.samples = SampleList(self.samples)

    def __len__(self):
        return len(self.samples)

    @property
    def X(self):
        return self.samples.X

    @property
    def y(self):
        return self.samples.y

    @property
    def arrival(self):
        return self.samples.arrival


def class_means(dataset, t, drift=6.0):
    """Mean of C1 and C2 at time(s) ``t`` in [0, 1]; arrays of shape (..., 2)."""
    t = np.asarray(t, dtype=float)[..., None]
    c1 = np.broadcast_to(C1_START, t.shape[:-1] + (2,)).copy()
    c2 = np.broadcast_to(C2_START, t.shape[:-1] + (2,)).copy()
    s = drift * t
    if dataset == "Parallel":
        up = np.array([0.0, 1.0])
        c1 += s * up
        c2 += s * up
    elif dataset == "LinearShift":
        c1 += s * _DIAG
        c2 += s * _DIAG
    elif dataset == "Opposite":
        c1 += s * _DIAG
        c2 -= s * _DIAG
    elif dataset == "Cross":
        c1 += s * np.array([1.0, 0.0])
        c2 += s * np.array([0.0, 1.0])
    elif dataset == "Parabola":
        # C2 runs from x=+2 over C1 (apex ARC_HEIGHT above it) to x=-6;
        # ``drift`` scales the sweep, 6 gives the full arc
        u = 1.0 - 2.0 * t[..., 0] * (drift / 6.0)
        c2[..., 0] = C1_START[0] + 4.0 * u
        c2[..., 1] = C1_START[1] + ARC_HEIGHT * (1.0 - u * u)
    else:
        raise InvalidInputError(f"{dataset!r} is not a 2-D drift dataset")
    return c1, c2


def gen_2d_drift(spec):
    if spec.dataset not in DATASETS_2D:
        raise InvalidInputError(f"{spec.dataset!r} is not a 2-D drift dataset")
    rng = np.random.default_rng(spec.seed)
    n = spec.n_total
    idx = np.arange(n)
    positive = rng.random(n) < spec.minority_fraction
    noise = rng.standard_normal((n, 2)) * spec.noise_sigma
    c1, c2 = class_means(spec.dataset, idx / n, spec.drift)
    X = np.where(positive[:, None], c2, c1) + noise
    y = np.where(positive, POS, NEG)
    return LabeledStream(samples_from_arrays(X, y), 2, spec.dataset, {"spec": spec})


def sea_concept(points, theta):
    """Noise-free SEA label: C1 (-1) iff ``p1 + p2 <= theta``."""
    points = np.asarray(points, dtype=float)
    return np.where(points[..., 0] + points[..., 1] <= theta, NEG, POS)


def gen_sea3d(spec):
    if spec.dataset != "SEA3D":
        raise InvalidInputError(f"gen_sea3d cannot build {spec.dataset!r}")
    rng = np.random.default_rng(spec.seed)
    n = spec.n_total
    n_blocks = -(-n // SEA_BLOCK)
    theta = rng.uniform(*SEA_THETA, size=n_blocks)
    P = rng.uniform(0.0, SEA_SIDE, size=(n, 3))
    flip = rng.random(n) < SEA_NOISE
    clean = sea_concept(P, theta[np.arange(n) // SEA_BLOCK])
    y = np.where(flip, -clean, clean)
    meta = {"spec": spec, "theta": theta, "clean_labels": clean, "flipped": flip}
    return LabeledStream(samples_from_arrays(P, y), 3, "SEA3D", meta)


def generate(spec):
    if spec.dataset == "SEA3D":
        return gen_sea3d(spec)
    return gen_2d_drift(spec)


def split_train_test(stream, n_train):
    samples = stream.samples if isinstance(stream, LabeledStream) else stream
    if not 0 < n_train < len(samples):
        raise InvalidInputError(f"n_train={n_train} must lie in (0, {len(samples)})")
    X, y, arrival = sample_arrays(samples)
    return (SampleList(samples[:n_train], X[:n_train], y[:n_train], arrival[:n_train]),
            SampleList(samples[n_train:], X[n_train:], y[n_train:], arrival[n_train:]))


def format_stream(stream):
    """Canonical text form: ``arrival_index, f1, ..., fd, label`` per line."""
    lines = []
    for s in stream.samples:
        feats = ", ".join(f"{v:.17g}" for v in s.features.tolist())
        lines.append(f"{s.arrival_index}, {feats}, {s.label}")
    return "\n".join(lines) + "\n"


def write_stream(stream, path):
    Path(path).write_text(format_stream(stream))


def read_stream(path, name=None):
    """Load a stream written by :func:`write_stream` (or any file in that format)."""
    path = Path(path)
    samples = []
    dim = None
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) < 3:
            raise InvalidInputError(f"{path}:{lineno}: expected 'index, features..., label'")
        try:
            idx = int(parts[0])
            feats = [float(p) for p in parts[1:-1]]
            label = int(float(parts[-1]))
        except ValueError as exc:
            raise InvalidInputError(f"{path}:{lineno}: {exc}") from None
        if dim is None:
            dim = len(feats)
        elif len(feats) != dim:
            raise InvalidInputError(f"{path}:{lineno}: expected {dim} features, got {len(feats)}")
        if samples and idx <= samples[-1].arrival_index:
            raise InvalidInputError(f"{path}:{lineno}: arrival indices must increase")
        samples.append(Sample(np.array(feats), label, idx))
    if not samples:
        raise InvalidInputError(f"{path}: no samples")
    return LabeledStream(SampleList(samples), dim, name or path.stem)
