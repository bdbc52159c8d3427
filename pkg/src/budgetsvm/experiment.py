"""Plan-driven experiment runner.

A plan is a flat text file of ``key = value`` lines. Values are single
items, comma separated lists, or inclusive ranges ``a..b step s`` (the step
defaults to 1). ``#`` starts a comment. Example::

    datasets   = LinearShift, Opposite
    seeds      = 0..4
    include    = ADD_ALL, ONLY_MISCLASSIFIED
    exclude    = REMOVE_OLDEST
    balance    = BALANCED_RATIO
    capacity   = 100..800 step 100
    baselines  = STATIC, PA

Every combination of the strategy axes is one cell; each cell and each
enabled baseline runs once per (dataset, seed). See :data:`KEYS` for the
full key list and defaults.
"""
from __future__ import annotations

import csv
import io
import itertools
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .basket import Balance, Exclude, Include, StrategyConfig
from .datagen import DATASETS, DriftSpec, generate, read_stream, split_train_test
from .errors import InvalidInputError, PlanError
from .model import NEG, POS
from .pipeline import GridSearchSpec, grid_search_c
from .prequential import Baseline, prepare, run_prequential

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("run_id", "dataset", "seed", "include", "exclude", "balance", "ksv", "relabel",
                  "capacity", "C", "final_ba", "update_count", "retrain_count", "wall_time_s",
                  "flags", "error")
TIMING_COLUMNS = ("wall_time_s",)
CELL_COLUMNS = ("include", "exclude", "balance", "ksv", "relabel", "capacity")
SUMMARY_COLUMNS = ("dataset",) + CELL_COLUMNS + ("n", "mean_ba", "se_ba", "n_failed")
TABLE_COLUMNS = ("DATASET", "ADD", "REM", "BAL", "KSV", "REL", "SIZE", "PERF", "SVM/PA")
ALL_DATASETS = "ALL"

#: plan key -> value kind; defaults are the ExperimentPlan field defaults
KEYS = {
    "datasets": "dataset_list",
    "streams": "str_list",
    "seeds": "int_list",
    "n_total": "int",
    "n_train": "int",
    "noise_sigma": "float",
    "drift": "float",
    "class_ratio": "float",
    "include": "include_list",
    "exclude": "exclude_list",
    "balance": "balance_list",
    "ksv": "bool_list",
    "relabel": "bool_list",
    "capacity": "int_list",
    "log_c": "float_list",
    "c": "float_list",
    "folds": "int",
    "repetitions": "int",
    "class_weight": "float",
    "baselines": "baseline_list",
    "threshold": "threshold",
    "stride": "int",
    "online_epochs": "int",
    "out": "str",
    "workers": "int",
}
DEFAULT_LOG_C = tuple(-k / 2 for k in range(9))


@dataclass(frozen=True)
class ExperimentPlan:
    datasets: tuple = ()
    streams: tuple = ()
    seeds: tuple = (0,)
    n_total: int = 10000
    n_train: int = 1000
    noise_sigma: float = 0.5
    drift: float = 6.0
    class_ratio: float = 3.0
    include: tuple = tuple(Include)
    exclude: tuple = tuple(Exclude)
    balance: tuple = tuple(Balance)
    ksv: tuple = (False,)
    relabel: tuple = (False,)
    capacity: tuple = tuple(range(50, 1001, 50))
    c_grid: tuple = tuple(10.0 ** v for v in DEFAULT_LOG_C)
    folds: int = 5
    repetitions: int = 2
    class_weight: float = 1.0
    baselines: tuple = (Baseline.STATIC, Baseline.PA)
    threshold: str = "in_sample"
    stride: int = 50
    online_epochs: int = 10
    out: str = "results"
    workers: int = 1

    def __post_init__(self):
        if not self.datasets and not self.streams:
            raise PlanError("plan names no dataset", key="datasets")
        if not self.seeds:
            raise PlanError("plan has no seeds", key="seeds")
        if len(set(self.sources())) != len(self.sources()):
            raise PlanError("a dataset is listed twice", key="datasets")
        for name in ("n_total", "n_train", "folds", "repetitions", "stride", "online_epochs", "workers"):
            if getattr(self, name) < 1:
                raise PlanError(f"{name} must be positive", key=name)
        if not self.class_weight > 0:
            raise PlanError("class_weight must be positive", key="class_weight")

    def sources(self):
        return list(self.datasets) + [str(p) for p in self.streams]

    def cells(self):
        return [StrategyConfig(*combo) for combo in itertools.product(
            self.include, self.exclude, self.balance, self.ksv, self.relabel, self.capacity)]

    def run_count(self):
        return len(self.sources()) * len(self.seeds) * (len(self.cells()) + len(self.baselines))

    def grid_spec(self):
        return GridSearchSpec(self.c_grid, self.folds, self.repetitions)

    def class_weights(self):
        return {NEG: 1.0, POS: float(self.class_weight)}


# -- parsing ---------------------------------------------------------------

def _range(text, cast):
    head, _, step = text.partition("step")
    lo, _, hi = head.partition("..")
    lo, hi = cast(lo.strip()), cast(hi.strip())
    step = cast(step.strip()) if step.strip() else cast(1)
    if step == 0:
        raise ValueError("range step must be non-zero")
    count = math.floor((hi - lo) / step + 1e-9) + 1
    if count <= 0:
        return []
    if cast is int:
        return [lo + k * step for k in range(count)]
    return [round(lo + k * step, 12) for k in range(count)]


def _items(text, cast):
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            raise ValueError("empty list item")
        if ".." in part and cast in (int, float):
            out.extend(_range(part, cast))
        else:
            out.append(cast(part))
    return out


def _enum(enum):
    lookup = {}
    for member in enum:
        for alias in (member.value, member.name, member.code):
            lookup[alias.upper()] = member

    def cast(text):
        try:
            return lookup[text.upper()]
        except KeyError:
            raise ValueError(f"unknown value {text!r}; expected one of "
                             f"{[m.value for m in enum]}") from None
    return cast


def _bool(text):
    low = text.lower()
    if low in ("true", "t", "yes", "1"):
        return True
    if low in ("false", "f", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _dataset(text):
    for name in DATASETS:
        if name.lower() == text.lower():
            return name
    raise ValueError(f"unknown dataset {text!r}; expected one of {list(DATASETS)}")


def _baseline(text):
    try:
        return Baseline(text.upper())
    except ValueError:
        raise ValueError(f"unknown baseline {text!r}; expected STATIC or PA") from None


def _threshold(text):
    if text not in ("in_sample", "off"):
        raise ValueError(f"threshold must be in_sample or off, got {text!r}")
    return text


_LIST_CASTS = {
    "dataset_list": _dataset, "str_list": str, "int_list": int, "float_list": float,
    "include_list": _enum(Include), "exclude_list": _enum(Exclude), "balance_list": _enum(Balance),
    "bool_list": _bool, "baseline_list": _baseline,
}
_SCALAR_CASTS = {"int": int, "float": float, "str": str, "threshold": _threshold}


def _convert(key, text):
    kind = KEYS[key]
    if kind in _LIST_CASTS:
        if key == "baselines" and text.lower() == "none":
            return ()
        values = _items(text, _LIST_CASTS[kind])
        if not values:
            raise ValueError("empty range")
        if len(set(values)) != len(values):
            raise ValueError("duplicate values")
        return tuple(values)
    return _SCALAR_CASTS[kind](text)


def parse_plan_text(text, base_dir=None):
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip().lower(), value.strip()
        if not sep:
            raise PlanError("expected 'key = value'", line=lineno)
        if key not in KEYS:
            raise PlanError("unknown key", key=key, line=lineno)
        if key in values:
            raise PlanError(f"key already set on line {lines[key]}", key=key, line=lineno)
        if not value:
            raise PlanError("missing value", key=key, line=lineno)
        try:
            values[key] = _convert(key, value)
        except ValueError as exc:
            raise PlanError(str(exc), key=key, line=lineno) from None
        lines[key] = lineno

    if "c" in values and "log_c" in values:
        raise PlanError("set either c or log_c, not both", key="c", line=lines["c"])
    kwargs = {}
    for key, val in values.items():
        if key == "c":
            kwargs["c_grid"] = val
        elif key == "log_c":
            kwargs["c_grid"] = tuple(10.0 ** v for v in val)
        elif key == "streams" and base_dir is not None:
            kwargs["streams"] = tuple(str(Path(base_dir, p)) for p in val)
        else:
            kwargs[key] = val
    if "capacity" in values and min(values["capacity"]) < 2:
        raise PlanError("capacity must be at least 2", key="capacity", line=lines["capacity"])
    if "c" in values and min(values["c"]) <= 0:
        raise PlanError("C values must be positive", key="c", line=lines["c"])
    if not values.get("datasets") and not values.get("streams"):
        raise PlanError("plan names no dataset; set datasets or streams", key="datasets")
    try:
        return ExperimentPlan(**kwargs)
    except PlanError as exc:
        if exc.key in lines and exc.line is None:
            raise PlanError(exc.message, key=exc.key, line=lines[exc.key]) from None
        raise


def parse_plan(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise PlanError(f"cannot read plan {path}: {exc}") from None
    return parse_plan_text(text, base_dir=path.parent)


# -- execution -------------------------------------------------------------

def _data_key(plan):
    return (plan.n_total, plan.n_train, plan.noise_sigma, plan.drift, plan.class_ratio)


@lru_cache(maxsize=4)
def _load(source, seed, data_key):
    n_total, n_train, noise_sigma, drift, class_ratio = data_key
    if source in DATASETS:
        stream = generate(DriftSpec(source, n_total, n_train, seed, noise_sigma, class_ratio, drift))
    else:
        stream = read_stream(source)
    train, test = split_train_test(stream, n_train)
    return prepare(train, test)


def _source_name(source):
    return source if source in DATASETS else Path(source).stem


def _tune(plan, source, seed):
    """Grid-searched C for one (dataset, seed), or the error text."""
    try:
        prepared = _load(source, seed, _data_key(plan))
        return grid_search_c(prepared.train, plan.grid_spec(), plan.class_weights(), seed), None
    except (InvalidInputError, ArithmeticError, RuntimeError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _execute(plan, source, seed, C, tune_error, configs):
    records = []
    try:
        prepared = _load(source, seed, _data_key(plan))
    except (InvalidInputError, ArithmeticError, RuntimeError) as exc:
        prepared, tune_error = None, tune_error or f"{type(exc).__name__}: {exc}"
    for cfg in configs:
        if tune_error is not None:
            records.append((cfg, None, tune_error))
            continue
        rec = run_prequential(None, None, cfg, C, plan.class_weights(), seed,
                              dataset=_source_name(source), stride=plan.stride,
                              threshold_mode=plan.threshold, online_epochs=plan.online_epochs,
                              prepared=prepared)
        records.append((cfg, rec, rec.error))
    return records


def _chunks(items, size):
    for i in range(0, len(items), size):
        yield items[i:i + size]


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "t" if value else "f"
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def _row(run_id, dataset, seed, cfg, C, rec, error):
    if isinstance(cfg, Baseline):
        cell = (cfg.value, "", "", "", "", "")
    else:
        cell = (cfg.include.value, cfg.exclude.value, cfg.balance.value,
                _fmt(cfg.keep_only_sv), _fmt(cfg.relabel), str(cfg.capacity))
    flags = ";".join(f"{k}={v}" for k, v in sorted(rec.flags.items())) if rec else ""
    return {
        "run_id": str(run_id), "dataset": dataset, "seed": str(seed),
        **dict(zip(CELL_COLUMNS, cell)),
        "C": _fmt(C),
        "final_ba": _fmt(rec.final_ba) if rec else "",
        "update_count": str(rec.update_count) if rec else "",
        "retrain_count": str(rec.retrain_count) if rec else "",
        "wall_time_s": f"{rec.wall_time:.6f}" if rec else "",
        "flags": flags,
        "error": error or "",
    }


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def run_plan(plan, out=None, workers=None, seed_override=None, chunk_size=20):
    """Execute every run of ``plan``; returns the path of ``results.csv``.

    ``results.csv`` lists runs in grid order (dataset, seed, cells, then
    baselines) whatever order the workers finish in. ``trajectories.csv``
    and ``summary.csv`` are written next to it.
    """
    if seed_override is not None:
        plan = replace(plan, seeds=(int(seed_override),))
    out = Path(out if out is not None else plan.out)
    workers = int(workers if workers is not None else plan.workers)
    if workers < 1:
        raise PlanError("workers must be positive", key="workers")
    out.mkdir(parents=True, exist_ok=True)
    cells = plan.cells()
    configs = cells + list(plan.baselines)
    groups = [(src, seed) for src in plan.sources() for seed in plan.seeds]
    log.info("plan: %d source(s) x %d seed(s) x (%d cells + %d baselines) = %d runs",
             len(plan.sources()), len(plan.seeds), len(cells), len(plan.baselines), plan.run_count())

    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        mapper = pool.map if pool else map
        tuned = list(mapper(_tune, *zip(*[(plan, src, seed) for src, seed in groups])))
        tasks = [(src, seed, C, err, chunk)
                 for (src, seed), (C, err) in zip(groups, tuned)
                 for chunk in _chunks(configs, chunk_size)]
        outputs = list(mapper(_execute, *zip(*[(plan,) + t for t in tasks])))
    finally:
        if pool:
            pool.shutdown()

    rows, traj_rows = [], []
    run_id = 0
    for (src, seed, C, _, _), records in zip(tasks, outputs):
        for cfg, rec, error in records:
            run_id += 1
            rows.append(_row(run_id, _source_name(src), seed, cfg, C, rec, error))
            for idx, ba in (rec.ba_trajectory if rec else []):
                traj_rows.append({"run_id": str(run_id), "arrival_index": str(idx), "ba": _fmt(ba)})
    results = out / "results.csv"
    _write_csv(results, RESULT_COLUMNS, rows)
    _write_csv(out / "trajectories.csv", ("run_id", "arrival_index", "ba"), traj_rows)
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, summarize(rows))
    return results


# -- reporting -------------------------------------------------------------

def read_results(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    missing = set(RESULT_COLUMNS) - set(rows[0] if rows else RESULT_COLUMNS)
    if missing:
        raise InvalidInputError(f"{path}: missing columns {sorted(missing)}")
    return rows


def _rows(results):
    if isinstance(results, (str, os.PathLike)):
        return read_results(results)
    return list(results)


def mean_se(values):
    """Mean and standard error (sample std / sqrt(n)); SE is NaN for n < 2."""
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        return math.nan, math.nan
    mean = float(values.mean())
    if len(values) < 2:
        return mean, math.nan
    return mean, float(values.std(ddof=1) / math.sqrt(len(values)))


def summarize(results):
    """Mean and standard error of final BA per (dataset, cell).

    Rows with dataset ``ALL`` pool every dataset when there is more than one.
    Failed runs are counted in ``n_failed`` and left out of the mean.
    """
    rows = _rows(results)
    groups = {}
    datasets = []
    for r in rows:
        if r["dataset"] not in datasets:
            datasets.append(r["dataset"])
        cell = tuple(r[c] for c in CELL_COLUMNS)
        keys = [(r["dataset"],) + cell]
        if len(set(x["dataset"] for x in rows)) > 1:
            keys.append((ALL_DATASETS,) + cell)
        for key in keys:
            groups.setdefault(key, []).append(r["final_ba"])
    out = []
    for key, bas in groups.items():
        ok = [float(b) for b in bas if b != ""]
        mean, se = mean_se(ok)
        out.append(dict(zip(SUMMARY_COLUMNS, key + (
            str(len(ok)), _fmt(mean) if ok else "", _fmt(se), str(len(bas) - len(ok))))))
    order = {d: i for i, d in enumerate(datasets + [ALL_DATASETS])}
    out.sort(key=lambda r: order[r["dataset"]])  # stable: cells keep grid order
    return out


def _code(enum, value):
    return enum(value).code if value else "-"


def best_cells(results):
    """Per dataset: (best strategy summary row or None, static mean, PA mean)."""
    best = {}
    for row in summarize(results):
        ds = row["dataset"]
        if ds == ALL_DATASETS:
            continue
        entry = best.setdefault(ds, [None, math.nan, math.nan])
        mean = float(row["mean_ba"]) if row["mean_ba"] else math.nan
        if row["include"] == Baseline.STATIC.value:
            entry[1] = mean
        elif row["include"] == Baseline.PA.value:
            entry[2] = mean
        elif not math.isnan(mean):
            cur = entry[0]
            if (cur is None or mean > float(cur["mean_ba"])
                    or (mean == float(cur["mean_ba"]) and int(row["capacity"]) < int(cur["capacity"]))):
                entry[0] = row
    return {ds: tuple(v) for ds, v in best.items()}


def emit_table1_style(results):
    """Best strategy cell per dataset next to the static SVM and PA baselines."""
    def pct(v):
        return "-" if math.isnan(v) else f"{100 * v:.1f}"

    lines = [TABLE_COLUMNS]
    for ds, (row, static, pa) in best_cells(results).items():
        if row is None:
            cells = ("-",) * 7
        else:
            cells = (_code(Include, row["include"]), _code(Exclude, row["exclude"]),
                     _code(Balance, row["balance"]), row["ksv"], row["relabel"],
                     row["capacity"], pct(float(row["mean_ba"])))
        lines.append((ds,) + cells + (f"{pct(static)}/{pct(pa)}",))
    widths = [max(len(line[i]) for line in lines) for i in range(len(TABLE_COLUMNS))]
    buf = io.StringIO()
    for line in lines:
        buf.write("  ".join(v.ljust(w) for v, w in zip(line, widths)).rstrip() + "\n")
    return buf.getvalue()
