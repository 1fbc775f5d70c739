"""CLI wiring tests with an isolated run directory per test."""

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from dualsr.checkpoint import save_checkpoint
from dualsr.cli import main
from dualsr.toydata import load_image, save_image

from conftest import make_tiny_bundle


@pytest.fixture()
def runner():
    return CliRunner()


def _run(runner, *args):
    return runner.invoke(main, list(args), catch_exceptions=False)


def test_unknown_subcommand_exit_2(runner):
    result = runner.invoke(main, ["frobnicate"])
    assert result.exit_code == 2


def test_gen_data_writes_dataset_and_config(runner, tmp_path):
    rd = str(tmp_path / "run")
    result = _run(runner, "gen-data", "--run-dir", rd, "--count", "6", "--size", "16")
    assert result.exit_code == 0
    pngs = sorted((tmp_path / "run/data/hq").glob("*.png"))
    assert len(pngs) == 6
    assert (tmp_path / "run/data/hq/labels.csv").exists()
    resolved = yaml.safe_load((tmp_path / "run/config.resolved").read_text())
    assert resolved["gen-data"]["count"] == 6


def test_config_file_overrides_flags(runner, tmp_path):
    cfg = tmp_path / "ov.yaml"
    cfg.write_text("count: 3\n")
    rd = str(tmp_path / "run")
    result = _run(runner, "gen-data", "--run-dir", rd, "--count", "10",
                  "--size", "16", "--config", str(cfg))
    assert result.exit_code == 0
    assert len(sorted((tmp_path / "run/data/hq").glob("*.png"))) == 3


def test_degrade_without_hq_exit_3(runner, tmp_path):
    result = runner.invoke(main, ["degrade", "--run-dir", str(tmp_path / "run")])
    assert result.exit_code == 3
    assert "gen-data" in result.output


def test_train_pix_without_pretrain_exit_3(runner, tmp_path):
    result = runner.invoke(main, ["train-pix", "--run-dir", str(tmp_path / "run")])
    assert result.exit_code == 3
    assert "pretrain-codec" in result.output


def test_train_sem_without_pix_exit_3(runner, tmp_path):
    # a bundle holding everything except the pixel adapter must name train-pix
    rd = tmp_path / "run"
    (rd / "checkpoints").mkdir(parents=True)
    bundle = make_tiny_bundle()
    pix = bundle.pix
    bundle.pix = None
    save_checkpoint(bundle, rd / "checkpoints/bundle.ckpt")
    bundle.pix = pix
    result = runner.invoke(main, ["train-sem", "--run-dir", str(rd)])
    assert result.exit_code == 3
    assert "train-pix" in result.output


def test_loss_verify_exit_0(runner):
    result = _run(runner, "loss-verify")
    assert result.exit_code == 0
    assert "within" in result.output


def _seeded_full_run(tmp_path):
    rd = tmp_path / "run"
    (rd / "checkpoints").mkdir(parents=True)
    bundle = make_tiny_bundle()
    save_checkpoint(bundle, rd / "checkpoints/bundle.ckpt")
    x = np.random.default_rng(0).random((3, 16, 16))
    img = rd / "input.png"
    save_image(x, img)
    return rd, img


def test_restore_default_and_adjustable(runner, tmp_path):
    rd, img = _seeded_full_run(tmp_path)
    out_a = rd / "default.png"
    out_b = rd / "unit.png"
    r1 = _run(runner, "restore", "--run-dir", str(rd), "--input", str(img),
              "--output", str(out_a))
    r2 = _run(runner, "restore", "--run-dir", str(rd), "--input", str(img),
              "--output", str(out_b), "--scales", "1,1")
    assert r1.exit_code == 0 and r2.exit_code == 0
    a, b = load_image(out_a), load_image(out_b)
    assert a.shape == (3, 16, 16)
    # merged default and unit-scale blend agree to well under one 8-bit level
    assert np.abs(a - b).max() <= 1.5 / 255.0


def test_sweep_grid_and_csv(runner, tmp_path):
    rd, img = _seeded_full_run(tmp_path)
    result = _run(runner, "sweep", "--run-dir", str(rd), "--image", str(img),
                  "--pix", "0.5,1.0", "--sem", "0.0,1.0")
    assert result.exit_code == 0
    grid = load_image(rd / "reports/sweep_grid.png")
    assert grid.shape == (3, 2 * 16 + 2, 2 * 16 + 2)
    csv_text = (rd / "reports/sweep.csv").read_text()
    assert csv_text.count("\n") == 5  # header + four cells


def test_smoke_pipeline_end_to_end(runner, tmp_path):
    rd = str(tmp_path / "run")
    steps = [
        ["gen-data", "--count", "8", "--size", "16"],
        ["degrade"],
        ["pretrain-codec", "--epochs", "1", "--width", "8"],
        ["pretrain-classifier", "--epochs", "1", "--width", "8"],
        ["pretrain-teacher", "--iters", "2", "--width", "8", "--schedule-t", "10"],
        ["train-pix", "--iters", "2", "--rank", "2"],
        ["train-sem", "--iters", "2", "--rank", "2"],
        ["eval", "--limit", "2"],
    ]
    for step in steps:
        result = _run(runner, step[0], "--run-dir", rd, *step[1:])
        assert result.exit_code == 0, f"{step[0]} failed:\n{result.output}"
    report = (tmp_path / "run/reports/eval.csv").read_text()
    assert report.count("\n") == 4  # header + three scale settings
    for stage in ("codec", "classifier", "teacher", "pix", "sem"):
        assert (tmp_path / f"run/logs/{stage}.jsonl").stat().st_size > 0
