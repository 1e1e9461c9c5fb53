"""Command-line entry point: ``rgcnet <command> ...``.

Exit status is 0 on success, 1 on an internal or numeric failure and 2 on
a usage or input error. ``RGC_LOG`` (error, info or debug) sets the log
level.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from .checkpoint import save_checkpoint
from .classify import LAYER_KINDS
from .data import (
    SimulatorParams,
    describe_dataset,
    format_description,
    load_connectome_dataset,
    load_tu_dataset,
    simulate_longitudinal,
    timepoint_classification,
    write_connectome_dataset,
    write_histograms,
)
from .errors import (
    ConfigurationError,
    ContractError,
    DimensionError,
    DomainError,
    IngestionError,
    NumericError,
    ParameterError,
    StratificationError,
)
from .generate import VARIANTS
from .harness import ExperimentConfig, nested_cv_run, write_aggregate_csv, write_trials_csv
from .metrics import EvalReport, evaluate

log = logging.getLogger("rgcnet")

USAGE_ERRORS = (
    ConfigurationError,
    ContractError,
    DimensionError,
    DomainError,
    IngestionError,
    ParameterError,
    StratificationError,
    FileNotFoundError,
    PermissionError,
    NotADirectoryError,
    json.JSONDecodeError,
)


class UsageError(Exception):
    pass


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _setup_logging():
    level = os.environ.get("RGC_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        raise UsageError(f"RGC_LOG must be one of {sorted(levels)}, got {level!r}")
    logging.basicConfig(level=levels[level], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _fan_out(seed: int, n: int) -> list:
    """Per-repetition seeds derived from the single ``--seed``."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n, np.uint32)]


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def _write_manifest(out: Path, command: str, args, **payload) -> Path:
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "arguments": {k: v for k, v in vars(args).items() if k != "func"},
        "software": {
            "rgcnet": _version(),
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "platform": platform.platform(),
        },
        **payload,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _load_dataset(path):
    root = Path(path)
    if not root.is_dir():
        raise UsageError(f"dataset directory {root} does not exist")
    if any(root.glob("subject_*_t*.csv")):
        return load_connectome_dataset(root)
    return load_tu_dataset(root)


def _experiment_config(args, task: str, layer_kind: str) -> ExperimentConfig:
    base = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise UsageError(f"config file {args.config} not found") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"cannot parse config {args.config}: {exc}") from None
        if not isinstance(base, dict):
            raise UsageError("config must be a JSON object")
    base["task"] = task
    base["layer_kind"] = layer_kind
    if getattr(args, "layers", None) is not None:
        base["n_layers"] = args.layers
    n_seeds = len(base.get("seeds", [0, 1, 2]))
    if args.seed is not None or "seeds" not in base:
        seed = args.seed if args.seed is not None else 0
        base["seeds"] = _fan_out(seed, n_seeds)
        base.setdefault("fold_seed", seed)
    base["workers"] = args.workers if args.workers is not None else base.get("workers", os.cpu_count() or 1)
    base["dataset"] = str(args.dataset)
    return ExperimentConfig.from_dict(base)


def _fmt(ms) -> str:
    return f"{ms[0]:.4f} +- {ms[1]:.4f}"


# ---------------------------------------------------------------------------
# commands


def cmd_classify(args) -> int:
    d = _load_dataset(args.dataset)
    if d.kind == "longitudinal":
        d = timepoint_classification(d)
    cfg = _experiment_config(args, "classify", args.layer)
    out = _out_dir(args.out)
    result = nested_cv_run(cfg, d)
    s = result["summary"]
    write_trials_csv(out / "trials.csv", result["trials"])
    write_aggregate_csv(out / "summary.csv", [s])
    _write_manifest(out, "classify", args, config=cfg.to_dict(), folds=result["fold_assignment"])
    print(f"dataset={d.name} layer={cfg.layer_kind} layers={cfg.n_layers} "
          f"accuracy={_fmt(s['accuracy'])} epochs={_fmt(s['epochs'])} "
          f"time={_fmt(s['training_time'])}s params={s['n_trainable']}")
    return 0


def _table(rows) -> str:
    header = ["model"] + list(EvalReport.METRICS)
    widths = [max(len(header[0]), *(len(r[0]) for r in rows))] + [max(len(h), 10) for h in header[1:]]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for label, values in rows:
        lines.append("  ".join([label.ljust(widths[0])] + [f"{v:.6f}".ljust(w) for v, w in zip(values, widths[1:])]))
    return "\n".join(lines)


def cmd_generate(args) -> int:
    d = _load_dataset(args.dataset)
    if d.kind != "longitudinal":
        raise UsageError("generate needs a longitudinal connectome dataset (subject_*_t*.csv)")
    cfg = _experiment_config(args, "generate", args.variant)
    out = _out_dir(args.out)
    result = nested_cv_run(cfg, d, keep_models=True)
    s = result["summary"]
    model_vals = [s[f"pooled_model_{k}"] for k in EvalReport.METRICS]
    ident_vals = [s[f"pooled_identity_{k}"] for k in EvalReport.METRICS]
    label = f"{cfg.layer_kind.upper()}-Net-Transformer" if cfg.layer_kind != "gcn" else "GCN-Transformer"
    rows = [(label, model_vals), ("Identity Function", ident_vals)]
    with open(out / "eval.csv", "w") as fh:
        fh.write(",".join(["model"] + EvalReport.header()) + "\n")
        for name, vals in rows:
            fh.write(",".join([name] + [repr(float(v)) for v in vals] + ["True"]) + "\n")
    write_trials_csv(out / "trials.csv", result["trials"])
    write_aggregate_csv(out / "summary.csv", [s])
    pred_dir = out / "predictions"
    pred_dir.mkdir(exist_ok=True)
    first = cfg.seeds[0]
    for (seed, fold), (model, items) in result["models"].items():
        if seed != first:
            continue
        save_checkpoint(out / f"model_fold{fold}.ckpt", model, cfg.layer_kind, seed, model.cfg.to_dict())
        pred = model.predict_batch([g for g, _ in items]).value
        n = model.cfg.n_nodes
        for i, (g, _) in enumerate(items):
            np.savetxt(pred_dir / f"subject_{g.subject}_t{g.timepoint + 1}.csv", pred[i * n:(i + 1) * n],
                       delimiter=",", fmt="%.17g")
    _write_manifest(out, "generate", args, config=cfg.to_dict(), folds=result["fold_assignment"])
    print(_table(rows))
    return 0


def cmd_simulate(args) -> int:
    if args.profile:
        try:
            params = SimulatorParams.from_json(args.profile)
        except FileNotFoundError:
            raise UsageError(f"profile {args.profile} not found") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"cannot parse profile {args.profile}: {exc}") from None
    else:
        params = SimulatorParams()
    if args.seed is not None:
        params.seed = args.seed
    out = _out_dir(args.out)
    d = simulate_longitudinal(params, features=False)
    files = write_connectome_dataset(d, out)
    _write_manifest(out, "simulate", args, profile=params.to_profile(), seed=params.seed, n_files=len(files))
    print(f"wrote {len(files)} matrices to {out}")
    return 0


def _read_matrix(path) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"file {p} not found")
    try:
        return np.loadtxt(p, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise UsageError(f"cannot parse {p}: {exc}") from None


def cmd_metrics(args) -> int:
    a = _read_matrix(args.true)
    b = _read_matrix(args.pred)
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise UsageError(f"matrices must be square and equal in size, got {a.shape} and {b.shape}")
    report = evaluate(a, b, threshold=args.threshold)
    print(",".join(EvalReport.header()))
    print(report.to_csv_row())
    return 0


def cmd_describe(args) -> int:
    d = _load_dataset(args.dataset)
    print(format_description(describe_dataset(d)))
    if args.histograms:
        out = _out_dir(args.histograms)
        files = write_histograms(d, out, bins=args.bins)
        print(f"wrote {len(files)} histogram files to {out}")
    return 0


def cmd_gridsearch(args) -> int:
    d = _load_dataset(args.dataset)
    task = args.task or ("generate" if d.kind == "longitudinal" else "classify")
    if task == "classify" and d.kind == "longitudinal":
        d = timepoint_classification(d)
    cfg = _experiment_config(args, task, args.layer)
    out = _out_dir(args.out)
    result = nested_cv_run(cfg, d)
    write_trials_csv(out / "trials.csv", result["trials"])
    write_aggregate_csv(out / "summary.csv", [result["summary"]])
    _write_manifest(out, "gridsearch", args, config=cfg.to_dict(), folds=result["fold_assignment"])
    by_cell = {}
    for t in result["trials"]:
        by_cell.setdefault(json.dumps(t.cell, sort_keys=True), []).append(t)
    print("cell,mean_val_metric,mean_val_loss,times_selected")
    for cell, ts in by_cell.items():
        vm = np.mean([t.val_metric for t in ts if t.val_metric is not None] or [np.nan])
        vl = np.mean([t.val_loss for t in ts if t.val_loss is not None] or [np.nan])
        print(f"\"{cell}\",{vm:.6f},{vl:.6f},{sum(t.selected for t in ts)}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rgcnet", description="Reservoir graph convolution experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def common(sp, out_default):
        sp.add_argument("--seed", type=int, default=None, help="master seed fanned out to every trial")
        sp.add_argument("--workers", type=int, default=None, help="concurrent trials (default: CPU count)")
        sp.add_argument("--config", default=None, help="experiment config JSON")
        sp.add_argument("--out", default=out_default, help="output directory")

    c = sub.add_parser("classify", help="nested-CV graph classification")
    c.add_argument("--dataset", required=True, help="TU dataset directory or connectome CSV directory")
    c.add_argument("--layer", required=True, choices=LAYER_KINDS)
    c.add_argument("--layers", type=int, default=1, help="number of conv layers (1-5)")
    common(c, "rgcnet-classify")
    c.set_defaults(func=cmd_classify)

    g = sub.add_parser("generate", help="next-timepoint graph prediction with an identity baseline")
    g.add_argument("--dataset", required=True, help="connectome CSV directory")
    g.add_argument("--variant", required=True, choices=VARIANTS)
    common(g, "rgcnet-generate")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("simulate", help="write a simulated longitudinal connectome dataset")
    s.add_argument("--profile", default=None, help="simulator profile JSON (default profile if omitted)")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, default=None, help="overrides the profile seed")
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("metrics", help="compare two adjacency CSV files")
    m.add_argument("--true", required=True)
    m.add_argument("--pred", required=True)
    m.add_argument("--threshold", type=float, default=0.0, help="edge threshold for path metrics")
    m.set_defaults(func=cmd_metrics)

    d = sub.add_parser("describe", help="dataset statistics")
    d.add_argument("--dataset", required=True)
    d.add_argument("--histograms", default=None, help="directory for per-timepoint weight histograms")
    d.add_argument("--bins", type=int, default=20)
    d.set_defaults(func=cmd_describe)

    gs = sub.add_parser("gridsearch", help="report every grid cell's validation score")
    gs.add_argument("--dataset", required=True)
    gs.add_argument("--task", choices=("classify", "generate"), default=None)
    gs.add_argument("--layer", required=True, choices=sorted(set(LAYER_KINDS) | set(VARIANTS)))
    gs.add_argument("--layers", type=int, default=1)
    common(gs, "rgcnet-gridsearch")
    gs.set_defaults(func=cmd_gridsearch)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _setup_logging()
        return args.func(args)
    except UsageError as exc:
        print(f"rgcnet: error: {exc}", file=sys.stderr)
        return 2
    except USAGE_ERRORS as exc:
        print(f"rgcnet: error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"rgcnet: numeric failure: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - last-resort exit status
        log.exception("internal error")
        print(f"rgcnet: internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
