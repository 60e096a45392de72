"""End-to-end shift experiment: train, quantify uncertainty, sweep rejection.

Every run derives all of its randomness from ``(seed, run index)``, so a
given configuration always produces byte-identical output files.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._seeding import derive_seed
from .data import (
    SHIFT_LEVELS,
    ShiftSpec,
    TwoRegionSpec,
    gen_shifted,
    gen_two_region,
    load_csv,
    split,
    standardize_apply,
    standardize_fit,
)
from .errors import ConfigError, UqRejectError
from .nn_core import MlpConfig, train, train_ensemble
from .plots import rejection_svg
from .rejection import (
    DEFAULT_GRID,
    RANK_COMPONENTS,
    CurvePoint,
    EvaluatedSet,
    RejectionCurve,
    _check_grid,
    sweep_curve,
    write_curve_csv,
)
from .uncertainty import METHODS, batch_uncertainty, write_uncertainty_csv

logger = logging.getLogger(__name__)

HIST_BINS = 20
COMPONENTS = ("total", "data", "model")
OUTPUT_ENV = "UQREJECT_OUT"


class StageError(UqRejectError):
    """A pipeline stage failed; the message names the stage."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class SyntheticSource:
    n_train: int = 2000
    n_test: int = 1000
    levels: tuple = SHIFT_LEVELS
    generator: TwoRegionSpec = field(default_factory=TwoRegionSpec)
    direction: tuple = (0.0, 1.0)
    small_shift: float = 1.0
    large_shift: float = 4.0
    large_rotation: float = 45.0

    def shift(self, level):
        return ShiftSpec.preset(level, self.generator, self.direction, self.small_shift,
                                self.large_shift, self.large_rotation)


@dataclass(frozen=True)
class CsvSource:
    train: str
    tests: tuple = ()  # (name, path) pairs
    holdout_name: str | None = None
    holdout_fraction: float = 0.2


@dataclass(frozen=True)
class ExperimentConfig:
    source: object = field(default_factory=SyntheticSource)
    mlp: dict = field(default_factory=dict)
    methods: tuple = METHODS
    T: int = 128
    M: int = 10
    runs: int = 10
    seed: int = 0
    grid: tuple = DEFAULT_GRID
    rank_by: str = "total"
    save_predictions: bool = False

    def __post_init__(self):
        if not isinstance(self.runs, int) or self.runs < 1:
            raise ConfigError("runs must be a positive integer")
        if not self.methods:
            raise ConfigError("at least one method is required")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; expected a subset of {METHODS}")
        if self.T < 1 or self.M < 1:
            raise ConfigError("T and M must be positive")
        if self.rank_by not in RANK_COMPONENTS:
            raise ConfigError(f"rank_by must be one of {RANK_COMPONENTS}")
        try:
            _check_grid(self.grid)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.mlp_config(1, 0)

    def mlp_config(self, input_dim, seed):
        fields = {k: v for k, v in self.mlp.items() if k not in ("input_dim", "seed", "split_seed")}
        return MlpConfig.from_dict({**fields, "input_dim": input_dim, "seed": seed})

    @classmethod
    def from_dict(cls, d, base_dir="."):
        d = dict(d)
        known = {"data", "mlp", "methods", "T", "M", "runs", "seed", "grid", "rank_by",
                 "save_predictions", "out"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown experiment config keys: {sorted(unknown)}")
        d.pop("out", None)
        data = d.pop("data", {"source": "synthetic"})
        kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(source=_source_from_dict(data, base_dir), **kwargs)

    @classmethod
    def from_json(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        return cls.from_dict(raw, base_dir=os.path.dirname(os.path.abspath(path)))

    def to_dict(self):
        src = self.source
        if isinstance(src, SyntheticSource):
            data = {"source": "synthetic", **dataclasses.asdict(src)}
            data["levels"] = list(src.levels)
            data["direction"] = list(src.direction)
        else:
            data = {"source": "csv", "train": src.train, "tests": dict(src.tests),
                    "holdout_name": src.holdout_name, "holdout_fraction": src.holdout_fraction}
        return {
            "data": data, "mlp": self.mlp_config(1, 0).to_dict() | {"input_dim": None, "seed": None},
            "methods": list(self.methods), "T": self.T, "M": self.M, "runs": self.runs,
            "seed": self.seed, "grid": list(self.grid), "rank_by": self.rank_by,
            "save_predictions": self.save_predictions,
        }


def _source_from_dict(d, base_dir):
    d = dict(d)
    kind = d.pop("source", "synthetic")
    try:
        if kind == "synthetic":
            gen = TwoRegionSpec(**d.pop("generator", {}))
            for key in ("levels", "direction"):
                if key in d:
                    d[key] = tuple(d[key])
            src = SyntheticSource(generator=gen, **d)
            for level in src.levels:
                src.shift(level)
            return src
        if kind == "csv":
            def resolve(p):
                return p if os.path.isabs(p) else os.path.normpath(os.path.join(base_dir, p))

            tests = tuple((name, resolve(p)) for name, p in sorted(d.pop("tests", {}).items()))
            return CsvSource(train=resolve(d.pop("train")), tests=tests, **d)
    except (TypeError, KeyError, ValueError) as exc:
        raise ConfigError(f"invalid data section: {exc}") from None
    raise ConfigError(f"unknown data source {kind!r}; expected 'synthetic' or 'csv'")


# -- one run ---------------------------------------------------------------

@contextmanager
def _stage(name):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _load_run_data(config, run_seed):
    src = config.source
    data_seed = derive_seed(run_seed, 1)
    test_seed = derive_seed(run_seed, 2)
    if isinstance(src, SyntheticSource):
        train_ds = gen_two_region(src.n_train, data_seed, src.generator)
        # one test seed for every level: shifts transform the same draws
        tests = {lvl: gen_shifted(src.generator, src.shift(lvl), src.n_test, test_seed) for lvl in src.levels}
        return train_ds, tests
    train_ds = load_csv(src.train)
    tests = {}
    if src.holdout_name:
        train_ds, holdout = split(train_ds, 1.0 - src.holdout_fraction, data_seed)
        tests[src.holdout_name] = holdout
    for name, path in src.tests:
        tests[name] = load_csv(path)
    return train_ds, tests


def run_once(config, run):
    """Execute one run; returns per (method, shift) results for that run."""
    run_seed = derive_seed(config.seed, run)
    model_seed = derive_seed(run_seed, 3)
    mc_seed = derive_seed(run_seed, 4)
    reject_seed = derive_seed(run_seed, 5)

    with _stage("data"):
        train_raw, tests_raw = _load_run_data(config, run_seed)
        std = standardize_fit(train_raw)
        train_ds = standardize_apply(std, train_raw)
        tests = {name: standardize_apply(std, ds) for name, ds in tests_raw.items()}

    with _stage("train"):
        mlp_cfg = config.mlp_config(train_ds.n_features, model_seed)
        base = train(mlp_cfg, train_ds)
        models = {"standard": base[0], "mc_dropout": base[0]}
        if "deep_ensemble" in config.methods:
            models["deep_ensemble"] = [m for m, _ in train_ensemble(mlp_cfg, train_ds, config.M, first=base)]

    results = {}
    for method in config.methods:
        for si, (shift, ds) in enumerate(tests.items()):
            with _stage(f"uncertainty[{method}/{shift}]"):
                unc = batch_uncertainty(method, models[method], ds.features, derive_seed(mc_seed, si), config.T)
            with _stage(f"reject[{method}/{shift}]"):
                es = EvaluatedSet.from_predictions(unc.pred_label, ds.labels, unc.component(config.rank_by))
                curve = sweep_curve(es, config.grid, reject_seed, config.rank_by)
            results[(method, shift)] = {"unc": unc, "labels": ds.labels, "curve": curve, "accuracy": es.accuracy}
    return results, base[1]


# -- aggregation -----------------------------------------------------------

def _histogram(values):
    counts, _ = np.histogram(np.clip(values, 0.0, 1.0), bins=HIST_BINS, range=(0.0, 1.0))
    return counts


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    return mean, se


def _mean_curve(curves, seed, rank_by):
    points = []
    for i, q in enumerate(p.q for p in curves[0].points):
        pts = [c.points[i] for c in curves]
        finite = [p.rq for p in pts if p.rq_defined and not p.rq_infinite]
        defined = [p for p in pts if p.rq_defined]
        infinite = bool(defined) and all(p.rq_infinite for p in defined)
        if finite:
            rq_v, rq_def, rq_inf = float(np.mean(finite)), True, False
        elif infinite:
            rq_v, rq_def, rq_inf = math.inf, True, True
        else:
            rq_v, rq_def, rq_inf = math.nan, False, False
        points.append(CurvePoint(q, float(np.mean([p.nra for p in pts])), float(np.mean([p.cq for p in pts])),
                                 rq_v, rq_def, rq_inf))
    return RejectionCurve(tuple(points), seed, rank_by)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else "inf"
    return v


def _curve_dict(curve):
    return [
        {"q": p.q, "nra": p.nra, "cq": p.cq, "rq": _jsonable(p.rq),
         "rq_defined": p.rq_defined, "rq_infinite": p.rq_infinite}
        for p in curve.points
    ]


def run_experiment(config, out_dir):
    """Run every configured run and write the report directory.

    Returns the report dictionary that is also saved as ``report.json``.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "curves").mkdir(exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from None
    if config.save_predictions:
        (out / "predictions").mkdir(exist_ok=True)

    per_run, run_rows_all, train_reports = [], [], []
    shifts = None
    for run in range(config.runs):
        logger.info("run %d/%d", run + 1, config.runs)
        results, report = run_once(config, run)
        if shifts is None:
            shifts = list(dict.fromkeys(s for _, s in results))
        per_run.append(results)
        train_reports.append(report)
        run_rows = {}
        for (method, shift), r in results.items():
            unc = r["unc"]
            write_curve_csv(r["curve"], out / "curves" / f"{method}_{shift}_run{run:02d}.csv")
            if config.save_predictions:
                write_uncertainty_csv(out / "predictions" / f"{method}_{shift}_run{run:02d}.csv", unc, r["labels"])
            run_rows.setdefault(method, {})[shift] = {
                "accuracy": r["accuracy"],
                "mean_uncertainty": {c: float(unc.component(c).mean()) for c in COMPONENTS},
                "curve": _curve_dict(r["curve"]),
            }
        run_rows_all.append(run_rows)

    summary = {}
    mean_curves = {}
    for method in config.methods:
        summary[method] = {}
        for shift in shifts:
            rs = [results[(method, shift)] for results in per_run]
            acc_mean, acc_se = _mean_se([r["accuracy"] for r in rs])
            hist = {
                c: (np.sum([_histogram(r["unc"].component(c)) for r in rs], axis=0) / len(rs)).tolist()
                for c in COMPONENTS
            }
            mean_unc = {c: _mean_se([float(r["unc"].component(c).mean()) for r in rs]) for c in COMPONENTS}
            curve = _mean_curve([r["curve"] for r in rs], config.seed, config.rank_by)
            mean_curves[(method, shift)] = curve
            write_curve_csv(curve, out / f"curve_{method}_{shift}.csv")
            summary[method][shift] = {
                "accuracy": {"mean": acc_mean, "se": acc_se},
                "mean_uncertainty": {c: {"mean": m, "se": s} for c, (m, s) in mean_unc.items()},
                "histogram": {"bins": HIST_BINS, "range": [0.0, 1.0], "counts": hist},
                "curve": _curve_dict(curve),
            }

    _write_histograms(out, config.methods, shifts, summary)
    _write_summary_table(out, config.methods, shifts, summary)
    for shift in shifts:
        svg = rejection_svg({m: mean_curves[(m, shift)] for m in config.methods}, title=f"shift: {shift}")
        (out / f"rejection_{shift}.svg").write_text(svg, encoding="utf-8")

    report = {
        "config": config.to_dict(),
        "shifts": shifts,
        "summary": summary,
        "runs": [
            {"run": i, "train": {"stopped_epoch": rep.stopped_epoch, "best_epoch": rep.best_epoch}, "results": rows}
            for i, (rows, rep) in enumerate(zip(run_rows_all, train_reports))
        ],
    }
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return report


def _write_histograms(out, methods, shifts, summary):
    edges = np.linspace(0.0, 1.0, HIST_BINS + 1)
    for method in methods:
        with open(out / f"hist_{method}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["shift", "component", "bin_lo", "bin_hi", "count"])
            for shift in shifts:
                for c in COMPONENTS:
                    for k, count in enumerate(summary[method][shift]["histogram"]["counts"][c]):
                        w.writerow([shift, c, f"{edges[k]:.2f}", f"{edges[k + 1]:.2f}", format(count, ".9g")])


def _write_summary_table(out, methods, shifts, summary):
    lines = ["Accuracy (%), mean ± standard error over runs", "",
             "| Shift | " + " | ".join(methods) + " |",
             "|---" * (len(methods) + 1) + "|"]
    for shift in shifts:
        cells = []
        for m in methods:
            a = summary[m][shift]["accuracy"]
            cells.append(f"{100 * a['mean']:.2f} ± {100 * a['se']:.2f}")
        lines.append(f"| {shift} | " + " | ".join(cells) + " |")
    (out / "summary.md").write_text("\n".join(lines) + "\n", encoding="utf-8")
