import json
import logging

import numpy as np
import pytest

from focalfuse import experiments as ex
from focalfuse.cli import main
from focalfuse.config import ExperimentConfig, load_config
from focalfuse.data import generate_synthetic, smoke_config
from focalfuse.errors import ConfigError
from focalfuse.fusion import fuse_tables, read_prediction_table
from focalfuse.metrics import evaluate


def small_config(**dotted) -> ExperimentConfig:
    base = ExperimentConfig(generator=smoke_config()).to_dict()
    base["schedule"]["total_epochs"] = 4
    base["train"]["hidden"] = [16]
    base["train"]["batch_size"] = 16
    base["seeds"] = [0, 1]
    base["bench"] = {"batch_sizes": [1, 2, 4, 8, 16], "batches": 2, "pool": 8}
    cfg = ExperimentConfig.from_dict(base)
    return cfg.replace(**dotted) if dotted else cfg


@pytest.fixture(scope="module")
def small_ds():
    return generate_synthetic(small_config().generator)


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(small_config().to_dict()))
    return str(path)


def read_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def metrics_of(report):
    """Report content without its labels (name, fingerprint, notes)."""
    d = report.to_dict() if hasattr(report, "to_dict") else dict(report)
    for key in ("name", "config_fingerprint", "notes"):
        d.pop(key)
    return d


# -- generate ------------------------------------------------------------------


def test_generate_rerun_and_manifest_are_byte_identical(tmp_path, cfg_file, capsys):
    assert main(["generate", "--config", cfg_file, "--out", str(tmp_path / "a")]) == 0
    assert "class   0" in capsys.readouterr().out
    assert main(["generate", "--config", cfg_file, "--out", str(tmp_path / "b")]) == 0
    assert main(["generate", "--manifest", str(tmp_path / "a" / "manifest.json"),
                 "--out", str(tmp_path / "c")]) == 0
    a = read_bytes(tmp_path / "a")
    assert set(a) == {"features.csv", "manifest.json"}
    assert a == read_bytes(tmp_path / "b") == read_bytes(tmp_path / "c")


def test_generate_fewer_samples_than_classes_writes_nothing(tmp_path, capsys):
    out = tmp_path / "never"
    rc = main(["generate", "--n-samples", "5", "--out", str(out)])
    assert rc == 2
    record = json.loads(capsys.readouterr().err.strip())
    assert record["error"] == "config_error" and "n_samples" in record["message"]
    assert not out.exists()


def test_generated_table_feeds_training(tmp_path, cfg_file):
    assert main(["generate", "--config", cfg_file, "--out", str(tmp_path / "g")]) == 0
    rc = main(["train", "--config", cfg_file, "--feature-table", str(tmp_path / "g" / "features.csv"),
               "--out", str(tmp_path / "t"), "--modalities", "rgb"])
    assert rc == 0
    assert (tmp_path / "t" / "rgb" / "report.json").exists()


# -- train -----------------------------------------------------------------------


def test_single_pathway_run(tmp_path, small_ds):
    cfg = small_config(modalities="rgb", fusion=False, **{"train.loss": "ce"})
    reports = ex.run_train(cfg, tmp_path, ds=small_ds)
    assert list(reports) == ["rgb"]
    assert sorted(p.name for p in (tmp_path / "rgb").iterdir()) == [
        "checkpoint.json", "predictions.csv", "report.json", "report.txt", "trace.json"]
    assert not (tmp_path / "depth").exists() and not (tmp_path / "fused").exists()


def test_both_pathways_and_fusion(tmp_path, small_ds):
    reports = ex.run_train(small_config(), tmp_path, ds=small_ds)
    assert list(reports) == ["rgb", "depth", "fused"]
    rgb, _ = read_prediction_table(tmp_path / "rgb" / "predictions.csv")
    depth, _ = read_prediction_table(tmp_path / "depth" / "predictions.csv")
    assert metrics_of(evaluate(fuse_tables(rgb, depth))) == metrics_of(reports["fused"])
    fp = small_config().fingerprint()
    for sub in ("rgb", "depth", "fused"):
        assert json.loads((tmp_path / sub / "report.json").read_text())["config_fingerprint"] == fp
        assert f"config_fingerprint={fp}" in (tmp_path / sub / "predictions.csv").read_text()
    assert reports["fused"].top1 >= min(reports["rgb"].top1, reports["depth"].top1)


def test_train_rerun_is_byte_identical(tmp_path, cfg_file):
    for name in ("a", "b"):
        assert main(["train", "--config", cfg_file, "--out", str(tmp_path / name)]) == 0
    assert read_bytes(tmp_path / "a") == read_bytes(tmp_path / "b")


def test_focal_gamma_zero_equals_ce(tmp_path, small_ds):
    focal = small_config(**{"schedule.mode": "constant", "schedule.gamma_init": 0.0,
                            "schedule.gamma_fin": 0.0, "modalities": "rgb", "fusion": False})
    ce = focal.replace(**{"train.loss": "ce"})
    rf = ex.run_train(focal, tmp_path / "f", ds=small_ds)["rgb"]
    rc = ex.run_train(ce, tmp_path / "c", ds=small_ds)["rgb"]
    assert metrics_of(rf) == metrics_of(rc)
    tf = json.loads((tmp_path / "f" / "rgb" / "trace.json").read_text())
    tc = json.loads((tmp_path / "c" / "rgb" / "trace.json").read_text())
    lf = [e["train_loss"] for e in tf["epochs"]]
    lc = [e["train_loss"] for e in tc["epochs"]]
    assert np.max(np.abs(np.subtract(lf, lc))) <= 1e-9


def test_merge_train_val_is_noted(tmp_path, small_ds):
    cfg = small_config(modalities="rgb", fusion=False, **{"train.merge_train_val": True})
    r = ex.run_train(cfg, tmp_path, ds=small_ds)["rgb"]
    assert "merge_train_val" in r.notes


def test_epoch_mismatch_is_a_config_error():
    with pytest.raises(ConfigError):
        small_config(**{"train.epochs": 7})


def test_fusion_needs_both_modalities():
    with pytest.raises(ConfigError):
        small_config(modalities="rgb", fusion=True)


def test_missing_feature_table(tmp_path):
    cfg = small_config(feature_table=str(tmp_path / "nope.csv"))
    with pytest.raises(ConfigError):
        ex.run_train(cfg, tmp_path)


# -- ablate ----------------------------------------------------------------------


def test_ablation_cells_and_ce_cell_matches_standalone(tmp_path, small_ds):
    cfg = small_config()
    payload = ex.run_ablate(cfg, tmp_path, serial=True, ds=small_ds)
    assert [c["profile"] for c in payload["cells"]] == list(ex.ABLATION_CELLS)
    assert payload["cells"][0]["delta_vs_ce"] == 0.0
    for c in payload["cells"]:
        assert len(c["top1_per_seed"]) == 2
    # growth cells climb from the low to the high endpoint
    growth = payload["cells"][1]["schedule"]
    assert (growth["gamma_init"], growth["gamma_fin"]) == (0.1, 2.0)
    standalone = ex.run_train(cfg.replace(**{"train.loss": "ce"}, modalities="rgb", fusion=False, seeds=[1]),
                              tmp_path / "alone", ds=small_ds)["rgb"]
    cell = json.loads((tmp_path / "ablate" / "ce" / "seed1" / "report.json").read_text())
    alone = standalone.to_dict()
    assert metrics_of(cell) == metrics_of(alone)
    assert "seed0" in payload["classwise_f1_ce_vs_exp_decay"]
    assert (tmp_path / "ablate" / "ablation.txt").read_text().startswith("focal-loss")


def test_ablation_parallel_matches_serial(tmp_path, small_ds):
    cfg = small_config()
    ex.run_ablate(cfg, tmp_path / "s", serial=True, ds=small_ds)
    ex.run_ablate(cfg, tmp_path / "p", serial=False, ds=small_ds, workers=2)
    assert read_bytes(tmp_path / "s") == read_bytes(tmp_path / "p")


def test_ablation_failure_leaves_partial_results(tmp_path, small_ds, monkeypatch):
    real = ex.train_pathway

    def flaky(ds, cfg, modality, seed, fp, schedule=None, loss=None):
        if schedule is not None and schedule.mode == "exp_growth":
            raise RuntimeError("boom")
        return real(ds, cfg, modality, seed, fp, schedule=schedule, loss=loss)

    monkeypatch.setattr(ex, "train_pathway", flaky)
    with pytest.raises(RuntimeError):
        ex.run_ablate(small_config(), tmp_path, serial=True, ds=small_ds)
    partial = json.loads((tmp_path / "ablate" / "ablation_partial.json").read_text())
    assert "boom" in partial["error"]
    assert "ce/seed0" in partial["completed"] and not any("exp_growth" in c for c in partial["completed"])
    assert not (tmp_path / "ablate" / "ablation.json").exists()


# -- fuse / evaluate -------------------------------------------------------------------


@pytest.fixture
def trained(tmp_path_factory, small_ds):
    out = tmp_path_factory.mktemp("trained")
    ex.run_train(small_config(), out, ds=small_ds)
    return out


def test_fuse_same_file_equals_evaluate(tmp_path, trained):
    p = trained / "rgb" / "predictions.csv"
    fused = ex.run_fuse(p, p, tmp_path / "f")
    alone = ex.run_evaluate(p, tmp_path / "e")
    assert metrics_of(fused) == metrics_of(alone)


def test_fuse_is_symmetric(tmp_path, trained):
    a, b = trained / "rgb" / "predictions.csv", trained / "depth" / "predictions.csv"
    ex.run_fuse(a, b, tmp_path / "ab")
    ex.run_fuse(b, a, tmp_path / "ba")
    assert read_bytes(tmp_path / "ab") == read_bytes(tmp_path / "ba")
    from_disk = evaluate(read_prediction_table(tmp_path / "ab" / "fused_predictions.csv")[0])
    in_run = json.loads((trained / "fused" / "report.json").read_text())
    assert metrics_of(from_disk) == metrics_of(in_run)


def test_fuse_warns_on_fingerprint_mismatch(tmp_path, trained, caplog):
    a = trained / "rgb" / "predictions.csv"
    text = a.read_text().replace("config_fingerprint=", "config_fingerprint=other", 1)
    b = tmp_path / "other.csv"
    b.write_text(text)
    with caplog.at_level(logging.WARNING):
        r = ex.run_fuse(a, b, tmp_path / "f")
    assert "different configs" in caplog.text
    assert r.notes["warning"] == "input fingerprints differ"


def test_fuse_cli_reports_alignment_errors(tmp_path, trained, capsys):
    a = trained / "rgb" / "predictions.csv"
    lines = a.read_text().splitlines()
    b = tmp_path / "short.csv"
    b.write_text("\n".join(lines[:-1]) + "\n")
    assert main(["fuse", str(a), str(b), "--out", str(tmp_path / "f")]) == 2
    record = json.loads(capsys.readouterr().err)
    assert record["error"] == "alignment_error"


# -- bench -----------------------------------------------------------------------------


def test_bench_rows(tmp_path, trained):
    cfg = small_config()
    payload = ex.run_bench(cfg, trained, tmp_path)
    rows = payload["rows"]
    assert [r["batch_size"] for r in rows] == [1, 2, 4, 8, 16]
    for r in rows:
        assert r["samples_per_second"] > 0 and r["frames_per_second"] > 0
        assert abs(r["wall_time_s"] - r["samples"] / r["samples_per_second"]) <= 0.2 * r["wall_time_s"]


def test_bench_missing_checkpoint(tmp_path, capsys):
    assert main(["bench", "--out", str(tmp_path)]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "config_error"


# -- CLI plumbing ------------------------------------------------------------------------


def test_flags_override_file_values(tmp_path, cfg_file, capsys):
    rc = main(["config", "--config", cfg_file, "--lr", "0.01", "--epochs", "3", "--seed", "7",
               "--set", "generator.drift=0.1", "--schedule-mode", "linear_decay"])
    assert rc == 0
    cfg = json.loads(capsys.readouterr().out)["config"]
    assert cfg["train"]["lr"] == 0.01 and cfg["train"]["epochs"] == 3
    assert cfg["schedule"]["total_epochs"] == 3 and cfg["schedule"]["mode"] == "linear_decay"
    assert cfg["seeds"] == [7] and cfg["generator"]["drift"] == 0.1
    assert cfg["generator"]["n_classes"] == 3


def test_flags_before_the_command(capsys):
    assert main(["--seed", "4", "config"]) == 0
    assert json.loads(capsys.readouterr().out)["config"]["seeds"] == [4]


def test_unknown_override_key(capsys):
    assert main(["config", "--set", "train.nonsense=1"]) == 2
    assert "nonsense" in json.loads(capsys.readouterr().err)["message"]


def test_single_modality_flag_turns_fusion_off(capsys):
    assert main(["config", "--modalities", "depth"]) == 0
    assert json.loads(capsys.readouterr().out)["config"]["fusion"] is False


def test_fingerprint_ignores_output_directory():
    assert load_config(None, [("out", "x")]).fingerprint() == load_config(None, [("out", "y")]).fingerprint()
    assert load_config(None, [("train.lr", 1e-3)]).fingerprint() != load_config(None).fingerprint()
