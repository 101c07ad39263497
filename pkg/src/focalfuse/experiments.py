"""Experiment commands. Each returns its results and writes files under ``out``.

Every emitted number is a function of the config and seeds alone, except for
the wall-clock figures of :func:`run_bench`.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, fingerprint_dict
from .data import Dataset, SyntheticWorld, generate_synthetic, load_feature_table, \
    sample_labels_and_splits, sample_id, write_feature_table, write_manifest, zipf_class_sizes
from .errors import ConfigError
from .fusion import PredictionTable, fuse_tables, late_fuse, read_prediction_table, write_prediction_table
from .metrics import EvalReport, classwise_f1_delta, evaluate
from .model import forward, init_model, load_checkpoint, save_checkpoint
from .preprocess import clip_features
from .rng import substream
from .schedule import GammaSchedule
from .train import TrainTrace, predict, train

log = logging.getLogger(__name__)

ABLATION_CELLS = ("ce", "linear_growth", "linear_decay", "exp_growth", "exp_decay")


def write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_report(report: EvalReport, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "report.json").write_text(report.to_json(), encoding="utf-8")
    (directory / "report.txt").write_text(report.to_text(), encoding="utf-8")


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.feature_table:
        if not Path(cfg.feature_table).exists():
            raise ConfigError(f"feature table {cfg.feature_table} does not exist")
        return load_feature_table(cfg.feature_table)
    return generate_synthetic(cfg.generator)


# -- generate --------------------------------------------------------------------


def class_histogram(sizes) -> str:
    sizes = list(sizes)
    top = max(sizes)
    lines = []
    for c, n in enumerate(sizes):
        bar = "#" * max(1, round(40 * n / top))
        lines.append(f"class {c:>3} {n:>6} {bar}")
    return "\n".join(lines)


def run_generate(cfg: ExperimentConfig, out: Path) -> dict:
    gcfg = cfg.generator
    # fail on infeasible configs before touching the filesystem
    sizes = zipf_class_sizes(gcfg.n_classes, gcfg.n_samples, gcfg.zipf_s)
    ds = generate_synthetic(gcfg)
    out.mkdir(parents=True, exist_ok=True)
    fp = fingerprint_dict({"generator": gcfg.to_dict()})
    write_feature_table(ds, out / "features.csv", fingerprint=fp)
    write_manifest(gcfg, out / "manifest.json", fingerprint=fp)
    return {"fingerprint": fp, "class_sizes": sizes.tolist(), "histogram": class_histogram(sizes)}


# -- train -------------------------------------------------------------------------


@dataclass
class PathwayResult:
    modality: str
    report: EvalReport
    trace: TrainTrace
    predictions: PredictionTable


def train_pathway(ds: Dataset, cfg: ExperimentConfig, modality: str, seed: int, fingerprint: str,
                  schedule: GammaSchedule | None = None, loss: str | None = None):
    tcfg = cfg.train if loss is None else replace(cfg.train, loss=loss)
    schedule = schedule or cfg.schedule
    model = init_model([ds.feature_dim, *tcfg.hidden], ds.n_classes, seed, tcfg.freeze_encoder)
    model, trace = train(model, ds, schedule, tcfg, modality=modality, seed=seed)
    ids, X, y = ds.view(modality, "test")
    if len(ids) == 0:
        raise ConfigError("the test split is empty")
    preds = predict(model, ids, X, y)
    notes = {"modality": modality, "seed": seed, "loss": tcfg.loss,
             "schedule": schedule.to_dict() if tcfg.loss == "focal" else None}
    if tcfg.merge_train_val:
        notes["merge_train_val"] = "retrained from scratch on train+val"
    report = evaluate(preds, name=modality, fingerprint=fingerprint, notes=notes)
    return model, PathwayResult(modality, report, trace, preds)


def run_train(cfg: ExperimentConfig, out: Path, ds: Dataset | None = None) -> dict[str, EvalReport]:
    ds = ds if ds is not None else load_dataset(cfg)
    fp = cfg.fingerprint()
    seed = cfg.seeds[0]
    reports: dict[str, EvalReport] = {}
    tables = {}
    for mod in cfg.modality_list:
        model, res = train_pathway(ds, cfg, mod, seed, fp)
        d = out / mod
        d.mkdir(parents=True, exist_ok=True)
        save_checkpoint(model, d / "checkpoint.json", fingerprint=fp,
                        extra={"modality": mod, "seed": seed})
        write_json(d / "trace.json", {"config_fingerprint": fp, **res.trace.to_dict()})
        write_prediction_table(res.predictions, d / "predictions.csv", fingerprint=fp)
        write_report(res.report, d)
        reports[mod] = res.report
        tables[mod] = res.predictions
    if cfg.fusion:
        fused = fuse_tables(tables["rgb"], tables["depth"])
        write_prediction_table(fused, _mk(out / "fused") / "predictions.csv", fingerprint=fp)
        reports["fused"] = evaluate(fused, name="fused", fingerprint=fp,
                                    notes={"fusion": "mean of rgb and depth probabilities", "seed": seed})
        write_report(reports["fused"], out / "fused")
    cfg_dict = {k: v for k, v in cfg.to_dict().items() if k != "out"}
    write_json(out / "config.json", {"config_fingerprint": fp, "config": cfg_dict})
    write_json(out / "summary.json", {
        "config_fingerprint": fp,
        "reports": {k: {"top1": r.top1, "top5": r.top5, "weighted_f1": r.weighted_f1}
                    for k, r in reports.items()},
    })
    return reports


# -- ablate --------------------------------------------------------------------------


def cell_setup(cfg: ExperimentConfig, cell: str) -> tuple[str, GammaSchedule]:
    """Loss and schedule for one ablation cell; growth cells swap the endpoints."""
    s = cfg.schedule
    hi, lo = max(s.gamma_init, s.gamma_fin), min(s.gamma_init, s.gamma_fin)
    Z = s.total_epochs
    if cell == "ce":
        return "ce", GammaSchedule("constant", 0.0, 0.0, Z)
    if cell.endswith("growth"):
        return "focal", GammaSchedule(cell, lo, hi, Z)
    return "focal", GammaSchedule(cell, hi, lo, Z)


_WORKER_DS: Dataset | None = None


def _init_worker(ds: Dataset) -> None:
    global _WORKER_DS
    _WORKER_DS = ds


def _run_cell(args):
    cfg_dict, cell, seed = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    loss, sched = cell_setup(cfg, cell)
    fp = fingerprint_dict({**cfg_dict, "cell": cell, "seeds": [seed]})
    _, res = train_pathway(_WORKER_DS, cfg, cfg.ablation_modality, seed, fp, schedule=sched, loss=loss)
    return cell, seed, res


def run_ablate(cfg: ExperimentConfig, out: Path, serial: bool = False,
               ds: Dataset | None = None, workers: int | None = None) -> dict:
    ds = ds if ds is not None else load_dataset(cfg)
    fp = cfg.fingerprint()
    jobs = [(cfg.to_dict(), cell, seed) for cell in ABLATION_CELLS for seed in cfg.seeds]
    results: dict[tuple[str, int], PathwayResult] = {}
    root = out / "ablate"
    try:
        if serial:
            _init_worker(ds)
            for job in jobs:
                cell, seed, res = _run_cell(job)
                results[(cell, seed)] = res
        else:
            with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(ds,)) as ex:
                for cell, seed, res in ex.map(_run_cell, jobs):
                    results[(cell, seed)] = res
    except Exception as exc:
        done = sorted(f"{c}/seed{s}" for c, s in results)
        write_json(root / "ablation_partial.json", {
            "config_fingerprint": fp,
            "error": f"{type(exc).__name__}: {exc}",
            "completed": done,
            "top1": {f"{c}/seed{s}": r.report.top1 for (c, s), r in sorted(results.items())},
        })
        raise

    for (cell, seed), res in results.items():
        d = root / cell / f"seed{seed}"
        write_report(res.report, d)
        write_prediction_table(res.predictions, d / "predictions.csv", fingerprint=res.report.fingerprint)
        write_json(d / "trace.json", res.trace.to_dict())

    ce_mean = float(np.mean([results[("ce", s)].report.top1 for s in cfg.seeds]))
    cells = []
    for cell in ABLATION_CELLS:
        tops = [results[(cell, s)].report.top1 for s in cfg.seeds]
        wf1 = [results[(cell, s)].report.weighted_f1 for s in cfg.seeds]
        mean = float(np.mean(tops))
        cells.append({
            "profile": cell,
            "schedule": cell_setup(cfg, cell)[1].to_dict() if cell != "ce" else None,
            "top1_mean": mean,
            "top1_per_seed": tops,
            "weighted_f1_mean": float(np.mean(wf1)),
            "delta_vs_ce": mean - ce_mean,
            "reports": [f"{cell}/seed{s}/report.json" for s in cfg.seeds],
        })

    deltas = {}
    for s in cfg.seeds:
        rows = classwise_f1_delta(results[("ce", s)].report, results[("exp_decay", s)].report)
        deltas[f"seed{s}"] = [asdict(r) for r in rows]
    payload = {
        "config_fingerprint": fp,
        "modality": cfg.ablation_modality,
        "seeds": list(cfg.seeds),
        "cells": cells,
        "classwise_f1_ce_vs_exp_decay": deltas,
        "recovered_classes": {k: [r["cls"] for r in v if r["recovered"]] for k, v in deltas.items()},
    }
    write_json(root / "ablation.json", payload)
    (root / "ablation.txt").write_text(ablation_text(payload), encoding="utf-8")
    return payload


def ablation_text(payload: dict) -> str:
    lines = [
        f"focal-loss modulating factor ablation ({payload['modality']}, seeds {payload['seeds']})",
        f"fingerprint: {payload['config_fingerprint']}",
        "",
        f"{'profile':<15} {'Top-1':>7} {'vs CE':>8} {'wF1':>7}",
    ]
    for c in payload["cells"]:
        delta = "" if c["profile"] == "ce" else f"{c['delta_vs_ce']:+.2f}"
        lines.append(f"{c['profile']:<15} {c['top1_mean']:>7.2f} {delta:>8} {100 * c['weighted_f1_mean']:>7.2f}")
    lines.append("")
    for seed, classes in payload["recovered_classes"].items():
        lines.append(f"{seed}: classes recovered by exp_decay (F1 0 -> >0): {classes}")
    return "\n".join(lines) + "\n"


# -- fuse / evaluate -------------------------------------------------------------------


def run_fuse(path_a, path_b, out: Path) -> EvalReport:
    a, meta_a = read_prediction_table(path_a)
    b, meta_b = read_prediction_table(path_b)
    fps = sorted({meta_a.get("config_fingerprint", ""), meta_b.get("config_fingerprint", "")})
    notes = {"input_fingerprints": fps}
    if len(fps) > 1:
        log.warning("fusing tables produced under different configs: %s", fps)
        notes["warning"] = "input fingerprints differ"
    fused = fuse_tables(a, b)
    fp = fingerprint_dict({"fuse": fps})
    report = evaluate(fused, name="fused", fingerprint=fp, notes=notes)
    write_prediction_table(fused, _mk(out) / "fused_predictions.csv", fingerprint=fp)
    write_report(report, out)
    return report


def run_evaluate(path, out: Path) -> EvalReport:
    table, meta = read_prediction_table(path)
    report = evaluate(table.sorted_by_id(), name="evaluate", fingerprint=meta.get("config_fingerprint", ""))
    write_report(report, _mk(out))
    return report


def _mk(d: Path) -> Path:
    d.mkdir(parents=True, exist_ok=True)
    return d


# -- bench -------------------------------------------------------------------------------


def run_bench(cfg: ExperimentConfig, checkpoint_dir: Path, out: Path) -> dict:
    """Time fused two-pathway inference from raw frames at several batch sizes."""
    models = {}
    for mod in ("rgb", "depth"):
        path = checkpoint_dir / mod / "checkpoint.json"
        if not path.exists():
            raise ConfigError(f"missing checkpoint {path}; run `focalfuse train` first")
        models[mod], _ = load_checkpoint(path)
    g = cfg.generator
    if models["rgb"].input_dim != g.feature_dim:
        raise ConfigError("checkpoint input width does not match the generator's feature size")
    world = SyntheticWorld(g)
    labels, _ = sample_labels_and_splits(g)
    pool = min(cfg.bench.pool, g.n_samples)
    seqs = [world.sequences(i, int(labels[i]), sample_id(i)) for i in range(pool)]

    def infer(batch, step):
        feats = {m: [] for m in models}
        for j, pair in enumerate(batch):
            for mod, seq in pair.items():
                feats[mod].append(clip_features(
                    seq, clip_len=g.clip_len, resize_width=g.resize_width, crop_size=g.crop_size,
                    clip_rng=substream(cfg.seeds[0], "bench_clip", step, j),
                    crop_rng=substream(cfg.seeds[0], "bench_crop", step, j)))
        probs = {m: forward(models[m], np.stack(feats[m]))[1] for m in models}
        return late_fuse(probs["rgb"], probs["depth"])

    rows = []
    for bs in cfg.bench.batch_sizes:
        batches = [[seqs[(k * bs + j) % pool] for j in range(bs)] for k in range(cfg.bench.batches)]
        infer(batches[0], 0)  # warm-up, not timed
        t0 = time.perf_counter()
        for k, batch in enumerate(batches):
            infer(batch, k)
        wall = time.perf_counter() - t0
        n = bs * cfg.bench.batches
        rows.append({
            "batch_size": bs,
            "samples": n,
            "wall_time_s": wall,
            "samples_per_second": n / wall,
            "frames_per_second": n * g.clip_len / wall,
        })
    payload = {"config_fingerprint": cfg.fingerprint(), "clip_len": g.clip_len, "rows": rows}
    write_json(_mk(out) / "bench.json", payload)
    lines = [f"{'batch':>5} {'samples/s':>10} {'frames/s':>10} {'wall s':>8}"]
    for r in rows:
        lines.append(f"{r['batch_size']:>5} {r['samples_per_second']:>10.1f} "
                     f"{r['frames_per_second']:>10.1f} {r['wall_time_s']:>8.3f}")
    (out / "bench.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return payload


__all__ = [
    "ABLATION_CELLS", "cell_setup", "run_ablate", "run_bench", "run_evaluate", "run_fuse",
    "run_generate", "run_train",
]
