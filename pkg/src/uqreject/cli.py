"""Command-line entry point: ``uqreject {synth,train,uncertainty,reject,experiment}``.

Exit codes: 0 success, 2 user or configuration error, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from .data import (
    SHIFT_LEVELS,
    StandardizerParams,
    gen_shifted,
    gen_two_region,
    load_csv,
    save_csv,
    standardize_apply,
    standardize_fit,
)
from .errors import ConfigError, InvariantError, UqRejectError
from .experiment import OUTPUT_ENV, ExperimentConfig, StageError, SyntheticSource, run_experiment
from .nn_core import MlpConfig, dumps_model, load_model, train, train_ensemble
from .plots import rejection_svg
from .rejection import DEFAULT_GRID, RANK_COMPONENTS, EvaluatedSet, sweep_curve, write_curve_csv
from .uncertainty import METHODS, batch_uncertainty, read_uncertainty_csv, write_uncertainty_csv

EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 2, 3

log = logging.getLogger("uqreject")


def _default_out(sub):
    return os.path.join(os.environ.get(OUTPUT_ENV, "uqreject_out"), sub)


def _out_dir(path):
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {p}: {exc}") from None
    return p


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None


# -- subcommands -----------------------------------------------------------

def cmd_synth(args):
    out = _out_dir(args.out or _default_out("data"))
    src = SyntheticSource()
    levels = args.level or list(SHIFT_LEVELS)
    train_ds = gen_two_region(args.n_train, args.seed, src.generator)
    save_csv(train_ds, out / "train.csv")
    written = [out / "train.csv"]
    test_seed = args.seed + 1
    for level in levels:
        ds = gen_shifted(src.generator, src.shift(level), args.n_test, test_seed)
        save_csv(ds, out / f"test_{level}.csv")
        written.append(out / f"test_{level}.csv")
    for p in written:
        print(p)
    return EXIT_OK


def cmd_train(args):
    cfg = _read_json(args.config)
    base_dir = os.path.dirname(os.path.abspath(args.config))
    unknown = set(cfg) - {"train", "mlp", "methods", "M", "seed"}
    if unknown:
        raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
    if "train" not in cfg:
        raise ConfigError("train config needs a 'train' CSV path")
    methods = cfg.get("methods", list(METHODS))
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown methods {bad}")
    n_members = int(cfg.get("M", 10))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    path = cfg["train"] if os.path.isabs(cfg["train"]) else os.path.join(base_dir, cfg["train"])
    try:
        raw = load_csv(path)
    except FileNotFoundError:
        raise ConfigError(f"training data not found: {path}") from None
    std = standardize_fit(raw)
    ds = standardize_apply(std, raw)
    mlp = {k: v for k, v in cfg.get("mlp", {}).items() if k not in ("input_dim", "seed", "split_seed")}
    config = MlpConfig.from_dict({**mlp, "input_dim": ds.n_features, "seed": seed})

    out = _out_dir(args.out or _default_out("models"))
    (out / "standardizer.json").write_text(json.dumps(std.to_dict(), indent=1) + "\n", encoding="utf-8")
    reports = {}
    if {"standard", "mc_dropout"} & set(methods):
        model, report = train(config, ds)
        (out / "model.json").write_text(dumps_model(model), encoding="utf-8")
        reports["model"] = report.to_dict()
        print(out / "model.json")
    if "deep_ensemble" in methods:
        (out / "ensemble").mkdir(exist_ok=True)
        for m, (member, report) in enumerate(train_ensemble(config, ds, n_members)):
            path = out / "ensemble" / f"member_{m:02d}.json"
            path.write_text(dumps_model(member), encoding="utf-8")
            reports[f"member_{m:02d}"] = report.to_dict() | {"seed": member.config.seed}
            print(path)
    (out / "train_report.json").write_text(json.dumps(reports, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def _model_paths(paths):
    out = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            out.extend(sorted(p.glob("*.json")))
        elif p.exists():
            out.append(p)
        else:
            raise ConfigError(f"model file not found: {p}")
    if not out:
        raise ConfigError("no model files given")
    return out


def cmd_uncertainty(args):
    paths = _model_paths(args.model)
    models = [load_model(p) for p in paths]
    if args.method != "deep_ensemble" and len(models) != 1:
        raise ConfigError(f"method {args.method} takes exactly one model, got {len(models)}")
    try:
        ds = load_csv(args.data)
    except FileNotFoundError:
        raise ConfigError(f"test data not found: {args.data}") from None
    if args.standardizer:
        ds = standardize_apply(StandardizerParams.from_dict(_read_json(args.standardizer)), ds)
    if ds.n_features != models[0].input_dim:
        raise ConfigError(f"test data has {ds.n_features} features but the model expects {models[0].input_dim}")
    target = models if args.method == "deep_ensemble" else models[0]
    result = batch_uncertainty(args.method, target, ds.features, args.seed, args.T)
    out = Path(args.out or _default_out("uncertainty.csv"))
    out.parent.mkdir(parents=True, exist_ok=True)
    write_uncertainty_csv(out, result, ds.labels)
    print(out)
    return EXIT_OK


def _parse_grid(text):
    if text is None:
        return DEFAULT_GRID
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"bad grid {text!r}; expected comma-separated fractions") from None


def cmd_reject(args):
    try:
        table = read_uncertainty_csv(args.data)
    except FileNotFoundError:
        raise ConfigError(f"uncertainty file not found: {args.data}") from None
    if len(table) == 0:
        raise ConfigError(f"{args.data}: no rows")
    es = EvaluatedSet(table.obs_id, table.correct, table.component(args.rank_by))
    try:
        curve = sweep_curve(es, _parse_grid(args.grid), args.seed, args.rank_by)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.out or _default_out("curve.csv"))
    out.parent.mkdir(parents=True, exist_ok=True)
    write_curve_csv(curve, out)
    print(out)
    if args.plot:
        Path(args.plot).write_text(rejection_svg({args.rank_by: curve}), encoding="utf-8")
        print(args.plot)
    return EXIT_OK


def cmd_experiment(args):
    config = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    raw = _read_json(args.config)
    out = args.out or raw.get("out") or _default_out("experiment")
    report = run_experiment(config, out)
    print(Path(out) / "report.json")
    for method, shifts in report["summary"].items():
        accs = ", ".join(f"{s}={100 * v['accuracy']['mean']:.2f}%" for s, v in shifts.items())
        log.info("%s: %s", method, accs)
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="uqreject", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write synthetic train and shifted test CSVs")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-test", type=int, default=1000)
    p.add_argument("--level", action="append", choices=SHIFT_LEVELS,
                   help="shift level to write (repeatable; default all)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the base network and/or the ensemble")
    p.add_argument("--config", required=True, help="JSON with 'train' CSV path and optional 'mlp', 'methods', 'M', 'seed'")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("uncertainty", help="per-observation uncertainty CSV for a test set")
    p.add_argument("--model", nargs="+", required=True, help="model JSON file(s) or a directory of members")
    p.add_argument("--data", required=True, help="test CSV")
    p.add_argument("--method", choices=METHODS, default="mc_dropout")
    p.add_argument("--T", type=int, default=128, help="MC Dropout forward passes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--standardizer", help="standardizer.json written by 'train'")
    p.add_argument("--out", help="output CSV")
    p.set_defaults(func=cmd_uncertainty)

    p = sub.add_parser("reject", help="NRA/CQ/RQ curve from an uncertainty CSV")
    p.add_argument("--data", required=True, help="uncertainty CSV")
    p.add_argument("--grid", help="comma-separated rejection fractions (default 0,0.05,...,0.95)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rank-by", choices=RANK_COMPONENTS, default="total")
    p.add_argument("--out", help="output curve CSV")
    p.add_argument("--plot", help="optional SVG output")
    p.set_defaults(func=cmd_reject)

    p = sub.add_parser("experiment", help="full multi-run shift experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="report directory")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_experiment)
    return parser


def _is_internal(exc):
    while exc is not None:
        if isinstance(exc, InvariantError):
            return True
        if isinstance(exc, StageError) and not isinstance(exc.cause, (UqRejectError, ValueError, OSError)):
            return True
        exc = exc.__cause__
    return False


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UqRejectError, ValueError, OSError) as exc:
        print(f"uqreject {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL if _is_internal(exc) else EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
