"""Command-line entry point: ``focalfuse <command> [options]``.

Commands: generate, train, ablate, fuse, evaluate, bench, config. Options may be
given before or after the command. Every option except ``--config``, ``--set``
and ``--serial`` mirrors a config key and overrides the file value.
On failure a one-line JSON error record goes to stderr and the exit code is
nonzero (2 for bad input, 1 for anything else).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config, parse_override
from .data import read_manifest
from .errors import FocalFuseError
from . import experiments as ex

# option dest -> dotted config key
_MIRRORS = {
    "loss": "train.loss",
    "literal_eq2": "train.literal_eq2",
    "lr": "train.lr",
    "weight_decay": "train.weight_decay",
    "batch_size": "train.batch_size",
    "hidden": "train.hidden",
    "freeze_encoder": "train.freeze_encoder",
    "merge_train_val": "train.merge_train_val",
    "schedule_mode": "schedule.mode",
    "gamma_init": "schedule.gamma_init",
    "gamma_fin": "schedule.gamma_fin",
    "n_classes": "generator.n_classes",
    "n_samples": "generator.n_samples",
    "zipf_s": "generator.zipf_s",
    "data_seed": "generator.seed",
    "feature_table": "feature_table",
    "modalities": "modalities",
    "ablation_modality": "ablation_modality",
    "out": "out",
}


def _common(p: argparse.ArgumentParser, top: bool) -> None:
    # Sub-parsers use SUPPRESS so a value given before the command is not
    # clobbered by the sub-parser default.
    d = {} if top else {"default": argparse.SUPPRESS}
    g = p.add_argument_group("configuration")
    g.add_argument("--config", help="JSON config file", **d)
    g.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key, e.g. --set train.lr=1e-3 (repeatable)", **d)
    g.add_argument("--seed", type=int, help="single training seed (seeds=[SEED])", **d)
    g.add_argument("--seeds", type=int, nargs="+", help="training seeds", **d)
    g.add_argument("--out", help="output directory", **d)
    g.add_argument("--serial", action="store_true", help="run ablation cells one after another", **d)
    g.add_argument("--workers", type=int, help="process count for ablation cells", **d)
    g.add_argument("--loss", choices=["focal", "ce"], **d)
    g.add_argument("--literal-eq2", action="store_true", help="sum the focal term over every class", **d)
    g.add_argument("--schedule-mode", choices=["constant", "linear_decay", "linear_growth",
                                               "exp_decay", "exp_growth"], **d)
    g.add_argument("--gamma-init", type=float, **d)
    g.add_argument("--gamma-fin", type=float, **d)
    g.add_argument("--epochs", type=int, help="sets both train.epochs and schedule.total_epochs", **d)
    g.add_argument("--lr", type=float, **d)
    g.add_argument("--weight-decay", type=float, **d)
    g.add_argument("--batch-size", type=int, **d)
    g.add_argument("--hidden", type=int, nargs="+", help="hidden layer widths", **d)
    g.add_argument("--freeze-encoder", action="store_true", **d)
    g.add_argument("--merge-train-val", action="store_true", **d)
    g.add_argument("--modalities", choices=["rgb", "depth", "both"], **d)
    g.add_argument("--no-fusion", action="store_true", help="sets fusion=false", **d)
    g.add_argument("--ablation-modality", choices=["rgb", "depth"], **d)
    g.add_argument("--feature-table", help="feature table to use instead of the generator", **d)
    g.add_argument("--n-classes", type=int, **d)
    g.add_argument("--n-samples", type=int, **d)
    g.add_argument("--zipf-s", type=float, **d)
    g.add_argument("--data-seed", type=int, help="generator seed", **d)
    g.add_argument("-v", "--verbose", action="store_true", **d)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="focalfuse",
        description="Focal-loss schedules and RGB+depth late fusion on synthetic long-tailed data.",
    )
    _common(parser, top=True)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, help):
        sp = sub.add_parser(name, help=help, description=help)
        _common(sp, top=False)
        return sp

    sp = add("generate", "write a synthetic feature table and its manifest")
    sp.add_argument("--manifest", help="regenerate from a manifest written by an earlier run")
    add("train", "train each modality pathway, evaluate on test, fuse")
    add("ablate", "five-cell focal-loss schedule ablation over all seeds")
    sp = add("fuse", "fuse two prediction tables from disk and evaluate")
    sp.add_argument("table_a")
    sp.add_argument("table_b")
    sp = add("evaluate", "evaluate one prediction table")
    sp.add_argument("table")
    sp = add("bench", "time fused inference from raw frames at several batch sizes")
    sp.add_argument("--checkpoints", help="directory holding rgb/ and depth/ checkpoints (default: --out)")
    add("config", "print the effective config as JSON")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    overrides = [parse_override(s) for s in (args.set or [])]
    for dest, key in _MIRRORS.items():
        value = getattr(args, dest, None)
        if value is None or value is False:
            continue
        overrides.append((key, list(value) if isinstance(value, list) else value))
    if args.epochs is not None:
        overrides += [("train.epochs", args.epochs), ("schedule.total_epochs", args.epochs)]
    if args.seeds is not None:
        overrides.append(("seeds", args.seeds))
    if args.seed is not None:
        overrides.append(("seeds", [args.seed]))
    if args.no_fusion:
        overrides.append(("fusion", False))
    elif args.modalities in ("rgb", "depth"):
        overrides.append(("fusion", False))
    if args.command == "generate" and getattr(args, "manifest", None):
        overrides.insert(0, ("generator", read_manifest(args.manifest).to_dict()))
    return load_config(args.config, overrides)


def _print_report(report) -> None:
    print(f"{report.name}: Top-1 {report.top1:.2f}  Top-{report.top5_k} {report.top5:.2f}  "
          f"weighted F1 {100 * report.weighted_f1:.2f}  (n={report.n_samples})")


def dispatch(args: argparse.Namespace) -> int:
    cfg = config_from_args(args)
    out = Path(cfg.out)
    cmd = args.command
    if cmd == "config":
        print(json.dumps({"config_fingerprint": cfg.fingerprint(), "config": cfg.to_dict()},
                         indent=2, sort_keys=True))
    elif cmd == "generate":
        res = ex.run_generate(cfg, out)
        print(res["histogram"])
        print(f"wrote {out / 'features.csv'} and {out / 'manifest.json'} (fingerprint {res['fingerprint']})")
    elif cmd == "train":
        for report in ex.run_train(cfg, out).values():
            _print_report(report)
    elif cmd == "ablate":
        payload = ex.run_ablate(cfg, out, serial=args.serial, workers=args.workers)
        print(ex.ablation_text(payload), end="")
    elif cmd == "fuse":
        _print_report(ex.run_fuse(args.table_a, args.table_b, out))
    elif cmd == "evaluate":
        _print_report(ex.run_evaluate(args.table, out))
    elif cmd == "bench":
        payload = ex.run_bench(cfg, Path(args.checkpoints or cfg.out), out / "bench")
        print((out / "bench" / "bench.txt").read_text(encoding="utf-8"), end="")
        del payload
    return 0


def _error_record(exc: BaseException) -> dict:
    kind = getattr(exc, "kind", None) or ("os_error" if isinstance(exc, OSError)
                                              else "value_error" if isinstance(exc, ValueError) else "internal_error")
    rec = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    for attr in ("path", "line"):
        if getattr(exc, attr, None) is not None:
            rec[attr] = getattr(exc, attr)
    return rec


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("set", "seed", "seeds", "config", "out", "workers", "epochs", "hidden"):
        if not hasattr(args, name):
            setattr(args, name, None)
    for dest in _MIRRORS:
        if not hasattr(args, dest):
            setattr(args, dest, None)
    for name in ("serial", "no_fusion", "verbose"):
        if not hasattr(args, name):
            setattr(args, name, False)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(args)
    except (FocalFuseError, OSError, ValueError) as exc:
        print(json.dumps(_error_record(exc), sort_keys=True), file=sys.stderr)
        return 2 if isinstance(exc, (FocalFuseError, ValueError)) else 1
    except Exception as exc:  # pragma: no cover - last-resort record
        print(json.dumps(_error_record(exc), sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
