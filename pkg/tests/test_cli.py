import json
import subprocess
import sys

import numpy as np
import pytest

from mmdm.cli import main
from mmdm.motion import read_motion
from mmdm.report import read_metrics_tsv

TINY_CONFIG = {
    "seed": 0,
    "dataset": {"samples_per_archetype": 6, "length": 16, "seed": 0},
    "model": {
        "hidden_dim": 32, "heads": 4, "encoder_layers": 1,
        "decoder_layers": 1, "bpst_layers": 1, "max_length": 16,
    },
    "diffusion": {"steps": 10, "guidance_scale": 1.0},
    "train": {"learning_rate": 1e-3, "batch_size": 8, "total_steps": 8},
    "eval": {
        "repeats": 1, "pool_size": 8, "samples_per_repeat": 12,
        "diversity_subset": 4, "multimodality_prompts": 2,
        "multimodality_samples": 2, "evaluator_steps": 50, "evaluator_dim": 6,
    },
}


def _write_config(tmp_path, name="config.json", **updates):
    data = json.loads(json.dumps(TINY_CONFIG))
    for key, value in updates.items():
        if isinstance(value, dict):
            data.setdefault(key, {}).update(value)
        else:
            data[key] = value
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def test_missing_config_exits_2(tmp_path, capsys):
    code = main(["train", "--config", str(tmp_path / "nope.json")])
    assert code == 2
    assert "nope.json" in capsys.readouterr().err


def test_unknown_keys_listed(tmp_path, capsys):
    path = _write_config(tmp_path)
    data = json.loads(path.read_text())
    data["typo_section"] = {}
    data["train"]["bogus_key"] = 1
    data["model"]["another_bogus"] = 2
    path.write_text(json.dumps(data))
    code = main(["train", "--config", str(path)])
    err = capsys.readouterr().err
    assert code == 2
    for key in ("typo_section", "train.bogus_key", "model.another_bogus"):
        assert key in err


def test_train_writes_artifacts(tmp_path, capsys):
    config = _write_config(tmp_path)
    out = tmp_path / "run"
    code = main(["train", "--config", str(config), "--out", str(out)])
    assert code == 0
    assert (out / "checkpoint.mmck").exists()
    assert (out / "training_log.jsonl").exists()
    assert (out / "loss_curve.png").exists()
    assert "final loss" in capsys.readouterr().out


def test_train_same_seed_identical_checkpoints(tmp_path):
    config = _write_config(tmp_path)
    for name in ("a", "b"):
        assert main(["train", "--config", str(config), "--seed", "0",
                     "--out", str(tmp_path / name)]) == 0
    a = (tmp_path / "a" / "checkpoint.mmck").read_bytes()
    b = (tmp_path / "b" / "checkpoint.mmck").read_bytes()
    assert a == b


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("cli_trained")
    config = _write_config(tmp_path)
    out = tmp_path / "run"
    assert main(["train", "--config", str(config), "--out", str(out)]) == 0
    return config, out / "checkpoint.mmck", tmp_path


def test_sample_deterministic_bytes(trained, tmp_path):
    _, checkpoint, _ = trained
    args = ["sample", "--checkpoint", str(checkpoint), "--caption",
            "a person walks forward", "--length", "12", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a.mmot")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.mmot")]) == 0
    assert (tmp_path / "a.mmot").read_bytes() == (tmp_path / "b.mmot").read_bytes()
    motion = read_motion(tmp_path / "a.mmot")
    assert motion.frames.shape == (12, 9, 3)
    assert motion.caption == "a person walks forward"
    assert (tmp_path / "a.skel").exists()


def test_sample_guidance_scales_differ(trained, tmp_path):
    _, checkpoint, _ = trained
    base = ["sample", "--checkpoint", str(checkpoint), "--caption",
            "a person crouches down low", "--length", "12", "--seed", "5"]
    assert main(base + ["--guidance-scale", "0", "--out", str(tmp_path / "g0.mmot")]) == 0
    assert main(base + ["--guidance-scale", "1", "--out", str(tmp_path / "g1.mmot")]) == 0
    a = read_motion(tmp_path / "g0.mmot")
    b = read_motion(tmp_path / "g1.mmot")
    assert not np.array_equal(a.frames, b.frames)


def test_sample_infer_mask_ratio_changes_output(trained, tmp_path):
    _, checkpoint, _ = trained
    base = ["sample", "--checkpoint", str(checkpoint), "--caption",
            "a person walks forward", "--length", "12", "--seed", "5"]
    assert main(base + ["--out", str(tmp_path / "m0.mmot")]) == 0
    assert main(base + ["--infer-mask-ratio", "0.3", "--out", str(tmp_path / "m3.mmot")]) == 0
    a = read_motion(tmp_path / "m0.mmot")
    b = read_motion(tmp_path / "m3.mmot")
    assert not np.array_equal(a.frames, b.frames)


def test_sample_length_exceeding_max_exits_2(trained, tmp_path, capsys):
    _, checkpoint, _ = trained
    code = main(["sample", "--checkpoint", str(checkpoint), "--caption", "x",
                 "--length", "999", "--out", str(tmp_path / "x.mmot")])
    assert code == 2
    assert "max_length" in capsys.readouterr().err


def test_render_counts_and_decode_error(trained, tmp_path, capsys):
    _, checkpoint, _ = trained
    sample_path = tmp_path / "clip.mmot"
    assert main(["sample", "--checkpoint", str(checkpoint), "--caption",
                 "a man kicks the right leg", "--length", "10", "--seed", "1",
                 "--out", str(sample_path)]) == 0
    out_dir = tmp_path / "frames"
    assert main(["render", "--motion", str(sample_path), "--out", str(out_dir),
                 "--size", "60x80"]) == 0
    frames = sorted(out_dir.glob("frame_*.ppm"))
    assert len(frames) == 10

    corrupt = tmp_path / "corrupt.mmot"
    corrupt.write_bytes(b"GARBAGE!" * 4)
    code = main(["render", "--motion", str(corrupt), "--out", str(tmp_path / "f2")])
    assert code == 1
    assert "magic" in capsys.readouterr().err


def test_evaluate_real_row(tmp_path, capsys):
    config = _write_config(tmp_path)
    out = tmp_path / "eval"
    code = main(["evaluate", "--config", str(config), "--real-row", "--out", str(out)])
    assert code == 0
    report = read_metrics_tsv(out / "metrics.tsv")
    assert report.multimodality is None
    assert report.fid.mean < 1.0  # ground truth against itself stays tight
    assert (out / "metrics.png").exists()
    assert "fid" in capsys.readouterr().out


def test_evaluate_checkpoint(trained, tmp_path):
    config, checkpoint, _ = trained
    out = tmp_path / "eval"
    code = main(["evaluate", "--config", str(config), "--checkpoint", str(checkpoint),
                 "--out", str(out), "--repeats", "1"])
    assert code == 0
    report = read_metrics_tsv(out / "metrics.tsv")
    assert report.multimodality is not None
    assert np.isfinite(report.fid.mean)


def test_evaluate_requires_checkpoint_or_real_row(tmp_path, capsys):
    config = _write_config(tmp_path)
    assert main(["evaluate", "--config", str(config)]) == 2
    assert "checkpoint" in capsys.readouterr().err


def test_set_overrides_win(tmp_path):
    config = _write_config(tmp_path)
    out = tmp_path / "run"
    code = main(["train", "--config", str(config), "--out", str(out),
                 "--set", "train.total_steps=2"])
    assert code == 0
    lines = (out / "training_log.jsonl").read_text().strip().splitlines()
    assert len(lines) == 2


def test_bad_override_exits_2(tmp_path, capsys):
    config = _write_config(tmp_path)
    assert main(["train", "--config", str(config), "--set", "nonsense"]) == 2
    assert "key=value" in capsys.readouterr().err


def test_console_help_runs():
    result = subprocess.run(
        [sys.executable, "-m", "mmdm.cli", "--help"], capture_output=True, text=True
    )
    assert result.returncode == 0
    for command in ("train", "sample", "evaluate", "ablate", "render"):
        assert command in result.stdout


def test_ablate_variant_failure_recorded_per_row(tmp_path, monkeypatch):
    """One variant blowing up must not abort the sweep; its row records the error."""
    import mmdm.cli as cli_mod
    from mmdm.config import load_run_config

    config_path = _write_config(tmp_path, train={"total_steps": 2})
    run = load_run_config(config_path, [f"out_dir={tmp_path / 'sweep'}"])

    original = cli_mod.run_train
    calls = {"n": 0}

    def flaky(run_config):
        calls["n"] += 1
        if calls["n"] == 2:
            raise RuntimeError("synthetic variant failure")
        return original(run_config)

    monkeypatch.setattr(cli_mod, "run_train", flaky)
    rows = cli_mod.run_ablate(run, "mask_ratio")
    assert len(rows) == 4
    assert not rows[0].get("error")
    assert "synthetic variant failure" in rows[1]["error"]
    assert not rows[2].get("error") and not rows[3].get("error")
    table = (tmp_path / "sweep" / "ablation.tsv").read_text()
    assert "synthetic variant failure" in table


def test_evaluate_deterministic_output(tmp_path):
    config = _write_config(tmp_path)
    outs = []
    for name in ("e1", "e2"):
        out = tmp_path / name
        assert main(["evaluate", "--config", str(config), "--real-row",
                     "--out", str(out)]) == 0
        outs.append((out / "metrics.tsv").read_bytes())
    assert outs[0] == outs[1]


def test_ablate_single_variant_composes_train_plus_evaluate(tmp_path, monkeypatch):
    """An ablation row must equal the standalone train + evaluate pipeline."""
    import mmdm.cli as cli_mod
    from mmdm.config import load_run_config

    config_path = _write_config(tmp_path, train={"total_steps": 6})
    monkeypatch.setattr(cli_mod, "MASK_RATIO_GRID", (0.1,))
    run = load_run_config(config_path, [f"out_dir={tmp_path / 'sweep'}"])
    rows = cli_mod.run_ablate(run, "mask_ratio")
    assert len(rows) == 1 and not rows[0]["error"]

    manual_out = tmp_path / "manual"
    assert main(["train", "--config", str(config_path), "--out", str(manual_out),
                 "--set", "train.mask_ratio=0.1"]) == 0
    manual_run = load_run_config(config_path, ["train.mask_ratio=0.1"])
    report = cli_mod.run_evaluate(manual_run, checkpoint=manual_out / "checkpoint.mmck")
    assert rows[0]["fid"] == report.fid.mean
    assert rows[0]["r_precision_top3"] == report.r_precision_top3.mean
    assert rows[0]["mm_dist"] == report.mm_dist.mean
    assert rows[0]["diversity"] == report.diversity.mean
    assert rows[0]["multimodality"] == report.multimodality.mean


def test_train_echoes_resolved_config(tmp_path):
    config = _write_config(tmp_path)
    out = tmp_path / "run"
    assert main(["train", "--config", str(config), "--out", str(out),
                 "--set", "train.total_steps=1"]) == 0
    echoed = json.loads((out / "config.json").read_text())
    assert echoed["train"]["total_steps"] == 1
    assert echoed["out_dir"] == str(out)
