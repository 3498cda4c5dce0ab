"""Command-line entry points: gen-data, train, eval, id, report.

Every command writes its resolved configuration (defaults <- ``--config`` file
<- explicit flags) as JSON next to its outputs before doing any long work.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .baselines import load_baseline, save_baseline, train_hdp, train_time_input
from .datasets import (FAMILIES, DatasetFormatError, dataset_read, dataset_write, default_grids, gen_dataset,
                       train_test_split)
from .evalkit import emit_report_csv, operator_error_vs_time, projection_error_vs_time
from .idest import DEFAULT_K, dataset_id_report, write_id_csv
from .weldnet import ABLATION_VARIANTS, TrainConfig, load_weldnet, save_weldnet, train_weldnet

log = logging.getLogger("weldnet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _width_list(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    return tuple(_int_list(text))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="weldnet", description="Windowed latent-dynamics model reduction toolkit")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a trajectory dataset")
    g.add_argument("--config", help="JSON file with option defaults")
    g.add_argument("--family", required=False, help=f"one of {', '.join(FAMILIES)}")
    g.add_argument("--n", type=int, default=500, help="number of trajectories")
    g.add_argument("--steps", type=int, default=301, help="time-grid points T")
    g.add_argument("--points", type=int, default=512, help="spatial points D")
    g.add_argument("--t-end", type=float, default=None, help="final time (family default if omitted)")
    g.add_argument("--substeps", type=int, default=8, help="solver steps per output step")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=False, help="output .wtrj path")

    t = sub.add_parser("train", help="train a WeldNet or baseline model")
    t.add_argument("--config", help="JSON file with option defaults")
    t.add_argument("--data", required=False)
    t.add_argument("--out", required=False, help="model directory")
    t.add_argument("--windows", type=int, default=4)
    t.add_argument("--latent", type=int, default=4, help="latent dimension d")
    t.add_argument("--coder", choices=("ff", "pca"), default="ff")
    t.add_argument("--baseline", choices=("hdp", "time-input"), default=None)
    t.add_argument("--ablation", choices=ABLATION_VARIANTS, default="i")
    t.add_argument("--parallel-windows", action="store_true", default=False)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--split-seed", type=int, default=0)
    t.add_argument("--test-fraction", type=float, default=0.2)
    t.add_argument("--lam", type=float, default=0.1)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--epochs-joint", type=int, default=300)
    t.add_argument("--epochs-finetune", type=int, default=150)
    t.add_argument("--epochs-transcoder", type=int, default=300)
    t.add_argument("--epochs-propagator", type=int, default=None)
    t.add_argument("--ae-widths", type=_width_list, default=(500, 500, 500))
    t.add_argument("--prop-widths", type=_width_list, default=(200, 200, 200))
    t.add_argument("--baseline-widths", type=_width_list, default=(1000, 1000, 1000))

    e = sub.add_parser("eval", help="evaluate a model on its held-out split")
    e.add_argument("--config", help="JSON file with option defaults")
    e.add_argument("--model", required=False)
    e.add_argument("--data", required=False)
    e.add_argument("--out", required=False, help="directory for CSV reports")
    e.add_argument("--times", type=_int_list, default=None, help="e.g. 30,60,90 (default: every index)")
    e.add_argument("--tag", default=None, help="model tag used in file names")

    i = sub.add_parser("id", help="intrinsic-dimension estimates")
    i.add_argument("--config", help="JSON file with option defaults")
    i.add_argument("--data", required=False)
    i.add_argument("--out", required=False, help="CSV path")
    i.add_argument("--method", choices=("mle", "twonn"), default="mle")
    i.add_argument("--times", type=_int_list, default=None)
    i.add_argument("--all-times", action="store_true", default=False)
    i.add_argument("--subsample", type=int, default=50_000)
    i.add_argument("--k", type=int, default=DEFAULT_K)
    i.add_argument("--seed", type=int, default=0)

    r = sub.add_parser("report", help="final-error table over several models at chosen times")
    r.add_argument("--config", help="JSON file with option defaults")
    r.add_argument("--models", nargs="+", required=False)
    r.add_argument("--data", required=False)
    r.add_argument("--out", required=False, help="CSV path")
    r.add_argument("--times", type=_int_list, default=None)
    return p


REQUIRED = {"gen-data": ("family", "out"), "train": ("data", "out"), "eval": ("model", "data", "out"),
            "id": ("data", "out"), "report": ("models", "data", "out")}


def parse_args(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    """Parse twice: once to find ``--config``, then with the file's values as defaults (flags win)."""
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}")
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        dests = {a.dest for a in sub._actions}
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        unknown = sorted(set(cfg) - dests)
        if unknown:
            raise UsageError(f"unknown keys in {args.config}: {', '.join(unknown)}")
        for key in ("times", "ae_widths", "prop_widths", "baseline_widths"):
            if key in cfg and isinstance(cfg[key], str):
                cfg[key] = _int_list(cfg[key])
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    missing = [f"--{m.replace('_', '-')}" for m in REQUIRED[args.command] if getattr(args, m) in (None, [])]
    if missing:
        raise UsageError(f"{args.command}: missing required option(s) {', '.join(missing)}")
    return args


def _resolved(args) -> dict:
    out = {}
    for k, v in vars(args).items():
        if k in ("config", "verbose"):
            continue
        out[k] = list(v) if isinstance(v, tuple) else v
    return out


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _read_data(path):
    try:
        return dataset_read(path)
    except FileNotFoundError:
        raise DataError(f"dataset not found: {path}")
    except DatasetFormatError as exc:
        raise DataError(str(exc))


def cmd_gen_data(args) -> int:
    if args.family not in FAMILIES:
        raise UsageError(f"unknown family {args.family!r}; valid families: {', '.join(FAMILIES)}")
    out = Path(args.out)
    _write_json(out.with_name(out.name + ".config.json"), _resolved(args))
    time, grid = default_grids(args.family, args.steps, args.points)
    if args.t_end is not None:
        time = type(time)(args.t_end, args.steps)
    ds = gen_dataset(args.family, args.n, time, grid, args.seed, args.substeps)
    dataset_write(ds, out)
    print(f"wrote {out}: family={args.family} N={args.n} T={args.steps} D={args.points}")
    return EXIT_OK


def train_config_from_args(args) -> TrainConfig:
    return TrainConfig(lam=args.lam, batch_size=args.batch_size, lr=args.lr, epochs_joint=args.epochs_joint,
                       epochs_finetune=args.epochs_finetune, epochs_transcoder=args.epochs_transcoder,
                       epochs_propagator=args.epochs_propagator, ablation_variant=args.ablation, seed=args.seed,
                       ae_widths=args.ae_widths, prop_widths=args.prop_widths)


def load_model(directory):
    path = Path(directory) / "manifest.json"
    if not path.exists():
        raise DataError(f"no model manifest in {directory}")
    kind = json.loads(path.read_text()).get("kind")
    return load_weldnet(directory) if kind == "weldnet" else load_baseline(directory)


def cmd_train(args) -> int:
    out = Path(args.out)
    _write_json(out / "config.json", _resolved(args))
    ds = _read_data(args.data)
    if not 0.0 < args.test_fraction < 1.0:
        raise UsageError("--test-fraction must lie in (0, 1)")
    train_idx, test_idx = train_test_split(ds.n_samples, args.test_fraction, args.split_seed)
    try:
        cfg = train_config_from_args(args)
    except ValueError as exc:
        raise UsageError(str(exc))
    train = ds.values[train_idx]
    split = {"train": [int(i) for i in train_idx], "test": [int(i) for i in test_idx],
             "seed": args.split_seed, "dataset": str(args.data), "family": ds.family_tag}
    if args.baseline == "hdp":
        model = train_hdp(train, ds.time, cfg, args.baseline_widths)
    elif args.baseline == "time-input":
        model = train_time_input(train, ds.time, cfg, args.baseline_widths)
    else:
        if args.windows < 1 or args.windows > ds.time.n_steps - 1:
            raise UsageError(f"--windows must lie in [1, {ds.time.n_steps - 1}]")
        model = train_weldnet(train, ds.time, args.coder, args.windows, args.latent, cfg, args.parallel_windows)
    test = ds.values[test_idx]
    final = operator_error_vs_time(model, test, ds.params[test_idx]).final
    extra = {"split": split, "test_final_operator_error": final}
    if args.baseline:
        save_baseline(model, out, extra)
    else:
        save_weldnet(model, out, extra)
    print(f"trained {model.kind} -> {out}; held-out final-time operator error {final!r}")
    return EXIT_OK


def _check_compatible(model, ds):
    if model.ambient_dim != ds.space.n_points:
        raise DataError(f"dimension mismatch: model D={model.ambient_dim}, dataset D={ds.space.n_points}")
    if model.n_times != ds.time.n_steps:
        raise DataError(f"time-grid mismatch: model T={model.n_times}, dataset T={ds.time.n_steps}")


def _test_split(model_dir, ds):
    m = json.loads((Path(model_dir) / "manifest.json").read_text())
    if "split" in m:
        idx = np.asarray(m["split"]["test"], dtype=int)
        if idx.size and idx.max() >= ds.n_samples:
            raise DataError("model split refers to trajectories beyond the dataset")
        return idx
    return np.arange(ds.n_samples)


def cmd_eval(args) -> int:
    out = Path(args.out)
    _write_json(out / "eval_config.json", _resolved(args))
    model = load_model(args.model)
    ds = _read_data(args.data)
    _check_compatible(model, ds)
    if args.times and any(not 0 <= k < ds.time.n_steps for k in args.times):
        raise UsageError(f"--times entries must lie in [0, {ds.time.n_steps - 1}]")
    idx = _test_split(args.model, ds)
    tag = args.tag or Path(args.model).name
    test, params = ds.values[idx], ds.params[idx]
    reports = [operator_error_vs_time(model, test, params, tag)]
    if model.kind == "weldnet":
        reports.append(projection_error_vs_time(model, test, params, tag))
    emit_report_csv(reports, out, args.times)
    print(f"{tag}: final-time mean relative operator error {reports[0].final!r}")
    return EXIT_OK


def cmd_id(args) -> int:
    out = Path(args.out)
    _write_json(out.with_name(out.name + ".config.json"), _resolved(args))
    ds = _read_data(args.data)
    times = args.times or []
    if not times and not args.all_times:
        raise UsageError("give --times and/or --all-times")
    if any(not 0 <= k < ds.time.n_steps for k in times):
        raise UsageError(f"--times entries must lie in [0, {ds.time.n_steps - 1}]")
    rows = dataset_id_report(ds.values, times, args.subsample, args.seed, args.method, args.k, args.all_times)
    write_id_csv(rows, out)
    for r in rows:
        print(f"{r.method},{r.slice},{r.value!r}")
    return EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.out)
    _write_json(out.with_name(out.name + ".config.json"), _resolved(args))
    ds = _read_data(args.data)
    times = args.times or list(range(30, ds.time.n_steps, 30))
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", *times])
        for mdir in args.models:
            model = load_model(mdir)
            _check_compatible(model, ds)
            idx = _test_split(mdir, ds)
            rep = operator_error_vs_time(model, ds.values[idx], ds.params[idx], Path(mdir).name)
            w.writerow([Path(mdir).name, *(repr(float(rep.per_time[k])) for k in times)])
    print(out.read_text(), end="")
    return EXIT_OK


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "id": cmd_id, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parse_args(parser, argv)
    except UsageError as exc:
        print(f"weldnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:   # argparse already printed its message
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"weldnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DatasetFormatError, FileNotFoundError, IndexError) as exc:
        print(f"weldnet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as exc:
        print(f"weldnet: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
