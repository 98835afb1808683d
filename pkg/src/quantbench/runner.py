"""Experiment orchestration: datasets x scenarios x seeds x methods -> result CSV -> rank reports."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifier import ClassifierConfig, ClassifierError
from .core import QuantificationError
from .dataset import DataError, Dataset, apply_preprocess, fit_preprocess, load_csv, synth_gaussian
from .metrics import RankReport, ae, nkld, rank_report
from .quantify import METHODS, OVR, Context, QuantifierSpec, run_method
from .sampling import DEFAULT_SEEDS, InfeasibleScenario, ScenarioSpec, binary_grid, draw_split, \
    multiclass_grid, shift_category

log = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "QUANTBENCH_OUTPUT_DIR"
RESULT_COLUMNS = ("dataset", "train_dist", "test_dist", "train_fraction", "seed", "shift_category", "method",
                  "status", "estimate", "true_dist", "ae", "nkld", "wall_time_ms", "flags", "scores_hash", "reason")
UNIT_KEY = ("dataset", "train_dist", "test_dist", "train_fraction", "seed")


class ConfigError(ValueError):
    pass


def fmt_dist(v) -> str:
    return ";".join(f"{x:.6f}" for x in v)


def parse_dist(s: str) -> np.ndarray:
    return np.array([float(x) for x in s.split(";")]) if s else np.array([])


@dataclass(frozen=True)
class DatasetSource:
    name: str
    csv: str | None = None
    target: str | None = None
    categorical: tuple = ()
    synthetic: dict | None = None

    def load(self, base: Path = Path(".")) -> Dataset:
        if self.synthetic is not None:
            s = self.synthetic
            return synth_gaussian(s["n_per_class"], s["means"], s.get("stddev", 1.0), s.get("seed", 0), self.name)
        path = Path(self.csv)
        if not path.is_absolute():
            path = base / path
        return load_csv(path, self.target, self.categorical, self.name)


@dataclass(frozen=True)
class RunConfig:
    datasets: tuple
    methods: tuple  # QuantifierSpec per configured method
    grid: dict = field(default_factory=lambda: {"kind": "binary"})
    seeds: tuple = DEFAULT_SEEDS
    output_dir: str = "results"
    folds: int = 10
    bins_per_feature: int = 10
    workers: int = 1
    record_timing: bool = False
    base_dir: str = "."

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seed list must not be empty")
        if not self.methods:
            raise ConfigError("method list must not be empty")
        if not self.datasets:
            raise ConfigError("no datasets configured")
        for d in self.datasets:
            if d.synthetic is None and (d.csv is None or d.target is None):
                raise ConfigError(f"dataset {d.name!r} needs a csv path and a target column")
        if self.grid.get("kind") not in ("binary", "multiclass", "custom"):
            raise ConfigError(f"unknown grid kind {self.grid.get('kind')!r}")

    @property
    def method_ids(self) -> list[str]:
        return [m.method for m in self.methods]

    @property
    def results_path(self) -> Path:
        out = Path(os.environ.get(OUTPUT_DIR_ENV, self.output_dir))
        if not out.is_absolute():
            out = Path(self.base_dir) / out
        return out / "results.csv"


def config_from_dict(raw: dict, base_dir: str = ".") -> RunConfig:
    """Build a :class:`RunConfig` from the JSON key schema documented in the README."""
    try:
        datasets = []
        for d in raw["datasets"]:
            datasets.append(DatasetSource(d["name"], d.get("csv"), d.get("target"), tuple(d.get("categorical", ())),
                                          d.get("synthetic")))
        clf = ClassifierConfig(**raw.get("classifier", {}))
        methods = []
        for m in raw["methods"]:
            if isinstance(m, str):
                m = {"id": m}
            methods.append(QuantifierSpec(m["id"], dict(m.get("params", {})), clf, m.get("strategy", "auto")))
        kwargs = {k: raw[k] for k in ("output_dir", "folds", "bins_per_feature", "workers", "record_timing")
                  if k in raw}
        if "seeds" in raw:
            kwargs["seeds"] = tuple(int(s) for s in raw["seeds"])
        return RunConfig(tuple(datasets), tuple(methods), dict(raw.get("grid", {"kind": "binary"})),
                         base_dir=base_dir, **kwargs)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid run config: {exc}") from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(raw, str(path.parent))


def scenarios_for(grid: dict, n_classes: int) -> list[ScenarioSpec]:
    kind = grid["kind"]
    if kind == "binary":
        if n_classes != 2:
            raise ConfigError("binary grid needs a two-class dataset")
        specs = binary_grid()
    elif kind == "multiclass":
        specs = multiclass_grid(n_classes)
    else:
        specs = [ScenarioSpec(tuple(s["train_dist"]), tuple(s["test_dist"]), float(s["train_fraction"]))
                 for s in grid["scenarios"]]
    if grid.get("shift"):
        mode = "binary" if n_classes == 2 else "multiclass"
        wanted = set(grid["shift"])
        specs = [s for s in specs if shift_category(s.train_dist, s.test_dist, mode) in wanted]
    return specs


# --- per-unit work -------------------------------------------------------------

_WORKER_DATA: list = []


def _init_worker(datasets):
    global _WORKER_DATA
    _WORKER_DATA = datasets


def _artifact_hash(spec: QuantifierSpec, ctx: Context) -> str:
    info = METHODS[spec.method]
    if info.needs != "scores":
        return ""
    if spec.resolve_strategy(ctx.n_classes) == OVR:
        return "+".join(ctx.binary_scores(j).content_hash()[:8] for j in range(ctx.n_classes))
    return ctx.scores.content_hash()


def _row(data_name, spec: ScenarioSpec, mode, method, status, reason="", **extra):
    row = {
        "dataset": data_name,
        "train_dist": fmt_dist(spec.train_dist),
        "test_dist": fmt_dist(spec.test_dist),
        "train_fraction": repr(spec.train_fraction),
        "seed": str(spec.seed),
        "shift_category": shift_category(spec.train_dist, spec.test_dist, mode),
        "method": method,
        "status": status,
        "estimate": "", "true_dist": "", "ae": "", "nkld": "", "wall_time_ms": "", "flags": "",
        "scores_hash": "", "reason": reason,
    }
    row.update(extra)
    return row


def run_unit(data: Dataset, spec: ScenarioSpec, methods, folds: int = 10, bins_per_feature: int = 10,
             record_timing: bool = False) -> list[dict]:
    """Draw one split and run every method on it; returns one row per method."""
    mode = "binary" if data.n_classes == 2 else "multiclass"

    def skipped(reason):
        return [_row(data.name, spec, mode, m.method, "skipped", reason) for m in methods]

    try:
        split = draw_split(data, spec)
    except InfeasibleScenario as exc:
        return skipped(str(exc))
    train, test = data.subset(split.train_indices), data.subset(split.test_indices)
    if np.any(train.class_counts() == 0):
        return skipped("a class has no training instances after rounding")
    if test.n_samples == 0:
        return skipped("empty test set")
    plan = fit_preprocess(train)
    train_p, test_p = apply_preprocess(plan, train), apply_preprocess(plan, test)
    train_b = test_b = None
    if any(METHODS[m.method].needs == "binned" for m in methods):
        bplan = fit_preprocess(train, bin_continuous=True, bins_per_feature=bins_per_feature)
        train_b, test_b = apply_preprocess(bplan, train), apply_preprocess(bplan, test).features
    truth = np.round(split.realized_test_dist, 6)
    # contexts are shared across methods with the same classifier configuration
    shared: dict = {}
    rows = []
    for m in methods:
        ctx = shared.get(m.classifier)
        if ctx is None:
            ctx = shared[m.classifier] = Context(train_p, test_p.features, m.classifier, folds, spec.seed,
                                                 train_b, test_b)
        t0 = time.perf_counter()
        try:
            est = run_method(m, ctx)
        except (QuantificationError, ClassifierError) as exc:
            rows.append(_row(data.name, spec, mode, m.method, "error", str(exc)))
            continue
        ms = (time.perf_counter() - t0) * 1000.0
        values = np.round(est.values, 6)
        rows.append(_row(
            data.name, spec, mode, m.method, "ok",
            estimate=fmt_dist(values), true_dist=fmt_dist(truth),
            ae=repr(ae(truth, values)), nkld=repr(nkld(truth, values)),
            wall_time_ms=f"{ms:.3f}" if record_timing else "",
            flags=";".join(sorted(est.flags)), scores_hash=_artifact_hash(m, ctx)))
    return rows


def _run_unit_indexed(args):
    d_idx, spec, methods, folds, bins, timing = args
    return run_unit(_WORKER_DATA[d_idx], spec, methods, folds, bins, timing)


# --- orchestration -------------------------------------------------------------

@dataclass
class RunSummary:
    path: Path
    rows: int = 0
    skipped: int = 0
    errors: int = 0
    resumed_units: int = 0


def plan_units(config: RunConfig, datasets: list[Dataset]) -> list[tuple[int, ScenarioSpec]]:
    units = []
    for i, data in enumerate(datasets):
        for spec in scenarios_for(config.grid, data.n_classes):
            for seed in config.seeds:
                units.append((i, spec.with_seed(seed)))
    return units


def _unit_key(name, spec: ScenarioSpec):
    return (name, fmt_dist(spec.train_dist), fmt_dist(spec.test_dist), repr(spec.train_fraction), str(spec.seed))


def _completed_prefix(path: Path, expected_keys, methods) -> tuple[int, list[dict]]:
    """Number of leading units already fully present in ``path`` and their rows."""
    if not path.exists():
        return 0, []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise ConfigError(f"{path} has unexpected columns; use a fresh output directory")
        rows = list(reader)
    m = len(methods)
    done = 0
    while done < len(expected_keys) and (done + 1) * m <= len(rows):
        chunk = rows[done * m:(done + 1) * m]
        if any(tuple(r[k] for k in UNIT_KEY) != expected_keys[done] for r in chunk) or \
                [r["method"] for r in chunk] != list(methods):
            break
        done += 1
    if done * m < len(rows):
        log.info("discarding %d trailing rows of an incomplete unit", len(rows) - done * m)
    return done, rows[:done * m]


def _write_rows(fh, rows):
    w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
    for r in rows:
        w.writerow(r)


def run(config: RunConfig) -> RunSummary:
    """Execute every (dataset, scenario, seed) unit and append rows to ``results.csv``.

    Rows are written in the planned unit order regardless of the worker count,
    and completed units already in the file are kept, so an interrupted run can
    be restarted and produces the same file as an uninterrupted one.
    """
    try:
        datasets = [d.load(Path(config.base_dir)) for d in config.datasets]
    except (OSError, DataError) as exc:
        raise DataError(str(exc)) from exc
    units = plan_units(config, datasets)
    keys = [_unit_key(datasets[i].name, s) for i, s in units]
    path = config.results_path
    path.parent.mkdir(parents=True, exist_ok=True)
    done, kept = _completed_prefix(path, keys, config.method_ids)
    summary = RunSummary(path, resumed_units=done)
    with path.open("w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerow(RESULT_COLUMNS)
        _write_rows(fh, kept)
        fh.flush()
        for r in kept:
            _tally(summary, r)
        jobs = [(i, s, config.methods, config.folds, config.bins_per_feature, config.record_timing)
                for i, s in units[done:]]
        if config.workers > 1 and jobs:
            with ProcessPoolExecutor(config.workers, initializer=_init_worker, initargs=(datasets,)) as pool:
                for rows in pool.map(_run_unit_indexed, jobs, chunksize=4):
                    _emit(fh, rows, summary)
        else:
            _init_worker(datasets)
            for job in jobs:
                _emit(fh, _run_unit_indexed(job), summary)
    return summary


def _tally(summary, row):
    summary.rows += 1
    summary.skipped += row["status"] == "skipped"
    summary.errors += row["status"] == "error"


def _emit(fh, rows, summary):
    _write_rows(fh, rows)
    fh.flush()
    for r in rows:
        _tally(summary, r)


# --- aggregation -----------------------------------------------------------------

def read_results(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def aggregate(path, metric: str = "ae", shift: str | None = None, split: float | None = None,
              alpha: float = 0.05) -> RankReport:
    """Mean error per (dataset, method) under the filters, then ranks and tests.

    Datasets on which some method has no successful row under the filter are
    dropped with a warning.
    """
    if metric not in ("ae", "nkld"):
        raise ValueError("metric must be 'ae' or 'nkld'")
    sums: dict = {}
    methods: list[str] = []
    datasets: list[str] = []
    for r in read_results(path):
        if r["method"] not in methods:
            methods.append(r["method"])
        if r["dataset"] not in datasets:
            datasets.append(r["dataset"])
        if r["status"] != "ok":
            continue
        if shift is not None and r["shift_category"] != shift:
            continue
        if split is not None and not math.isclose(float(r["train_fraction"]), split):
            continue
        acc = sums.setdefault((r["dataset"], r["method"]), [0.0, 0])
        acc[0] += float(r[metric])
        acc[1] += 1
    kept = []
    for d in datasets:
        missing = [m for m in methods if (d, m) not in sums]
        if missing:
            warnings.warn(f"dropping dataset {d!r}: no results for {missing} under the filter")
        else:
            kept.append(d)
    if not kept:
        raise ValueError("no dataset has results for every method under this filter")
    E = np.array([[sums[(d, m)][0] / sums[(d, m)][1] for m in methods] for d in kept])
    return rank_report(E, kept, methods, metric, alpha)


def write_report(report: RankReport, out_dir, tag: str | None = None) -> list[Path]:
    """Write the rank table (CSV and markdown) and CD-diagram data."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tag = tag or report.metric
    paths = [out / f"ranks_{tag}.csv", out / f"report_{tag}.md", out / f"cd_diagram_{tag}.csv"]
    with paths[0].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset"] + [f"{m}_error" for m in report.methods] + [f"{m}_rank" for m in report.methods])
        for d, e, r in zip(report.datasets, report.mean_errors, report.ranks):
            w.writerow([d] + [f"{x:.6f}" for x in e] + [f"{x:g}" for x in r])
        w.writerow(["average_rank"] + [""] * len(report.methods) + [f"{x:.4f}" for x in report.average_ranks])
    groups = report.groups()
    lines = [f"# Rank report ({report.metric.upper()})", "",
             "| dataset | " + " | ".join(report.methods) + " |",
             "|---|" + "---|" * len(report.methods)]
    for d, e in zip(report.datasets, report.mean_errors):
        best = e.min()
        cells = [f"**{x:.3f}**" if x == best else f"{x:.3f}" for x in e]
        lines.append(f"| {d} | " + " | ".join(cells) + " |")
    lines.append("| average rank | " + " | ".join(f"{x:.2f}" for x in report.average_ranks) + " |")
    lines += ["", f"Friedman statistic: {report.friedman_statistic:.4f} "
                  f"(null rejected at 5%: {'yes' if report.friedman_p_threshold_passed else 'no'})",
              f"Nemenyi critical difference: {report.critical_difference:.4f}", "",
              "Groups of statistically indistinguishable methods:", ""]
    lines += [f"- {', '.join(g)}" for g in groups]
    paths[1].write_text("\n".join(lines) + "\n", encoding="utf-8")
    with paths[2].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "avg_rank", "groups"])
        for i, m in enumerate(report.methods):
            member = [str(g) for g, members in enumerate(groups) if m in members]
            w.writerow([m, f"{report.average_ranks[i]:.4f}", ";".join(member)])
    return paths
