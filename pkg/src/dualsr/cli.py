"""Single entry point for the full pipeline: data generation, pretraining,
the two adapter stages, evaluation sweeps, restoration, and serving."""

from __future__ import annotations

import copy
import json
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from . import checkpoint as ckpt
from . import degrade as degrade_mod
from . import metrics as metrics_mod
from . import toydata

EXIT_PREREQ = 3


class PrereqError(click.ClickException):
    exit_code = EXIT_PREREQ


def _fail(msg: str, code: int = 1):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _run_dirs(run_dir: str) -> dict[str, Path]:
    root = Path(run_dir)
    dirs = {
        "root": root,
        "checkpoints": root / "checkpoints",
        "logs": root / "logs",
        "reports": root / "reports",
        "data": root / "data",
    }
    for d in dirs.values():
        d.mkdir(parents=True, exist_ok=True)
    return dirs


def _resolve_config(run_dir: str, command: str, params: dict, config_file: str | None) -> dict:
    cfg = dict(params)
    if config_file:
        with open(config_file) as f:
            overrides = yaml.safe_load(f) or {}
        cfg.update({k: v for k, v in overrides.items() if k in cfg})
    dirs = _run_dirs(run_dir)
    resolved = dirs["root"] / "config.resolved"
    existing = {}
    if resolved.exists():
        existing = yaml.safe_load(resolved.read_text()) or {}
    existing[command] = cfg
    resolved.write_text(yaml.safe_dump(existing, sort_keys=True))
    click.echo(f"[{command}] resolved config: {json.dumps(cfg, sort_keys=True)}")
    return cfg


def _logger(run_dir: str, stage: str):
    path = _run_dirs(run_dir)["logs"] / f"{stage}.jsonl"
    f = open(path, "a")

    def log(record: dict):
        f.write(json.dumps(record) + "\n")
        f.flush()

    return log


def _bundle_path(run_dir: str) -> Path:
    return _run_dirs(run_dir)["checkpoints"] / "bundle.ckpt"


def _load_bundle(run_dir: str) -> ckpt.Bundle:
    path = _bundle_path(run_dir)
    if not path.exists():
        return ckpt.Bundle()
    return ckpt.load_checkpoint(path)


def _require_components(bundle: ckpt.Bundle, needed: dict[str, str]) -> None:
    for comp, stage in needed.items():
        if getattr(bundle, comp) is None:
            raise PrereqError(f"missing {comp} checkpoint; run `{stage}` first")


def _parse_scales(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise click.BadParameter(f"expected 'pix,sem', got {text!r}")
    return float(parts[0]), float(parts[1])


@click.group()
def main():
    """Adjustable one-step diffusion super-resolution toolkit."""


_run_opt = click.option("--run-dir", default="run", show_default=True,
                        help="Directory for checkpoints, logs, and reports.")
_cfg_opt = click.option("--config", "config_file", default=None, type=click.Path(exists=True),
                        help="YAML file overriding command flags.")


@main.command("gen-data")
@_run_opt
@_cfg_opt
@click.option("--count", default=128, show_default=True)
@click.option("--size", default=64, show_default=True)
@click.option("--seed", default=0, show_default=True)
def gen_data(run_dir, config_file, count, size, seed):
    """Emit the labeled procedural-texture HQ dataset."""
    cfg = _resolve_config(run_dir, "gen-data", dict(count=count, size=size, seed=seed), config_file)
    out = _run_dirs(run_dir)["data"] / "hq"
    toydata.write_dataset(out, cfg["count"], size=cfg["size"], seed=cfg["seed"])
    click.echo(f"wrote {cfg['count']} images to {out}")


@main.command("degrade")
@_run_opt
@_cfg_opt
@click.option("--blur", nargs=2, type=float, default=(0.4, 2.0), show_default=True)
@click.option("--noise", nargs=2, type=float, default=(0.0, 0.06), show_default=True)
@click.option("--factor", default=4, show_default=True)
@click.option("--quality", nargs=2, type=int, default=(40, 95), show_default=True)
@click.option("--seed", default=0, show_default=True)
def degrade_cmd(run_dir, config_file, blur, noise, factor, quality, seed):
    """Build the paired LQ/HQ dataset with replayable records."""
    cfg = _resolve_config(run_dir, "degrade", dict(
        blur=list(blur), noise=list(noise), factor=factor, quality=list(quality), seed=seed
    ), config_file)
    dirs = _run_dirs(run_dir)
    hq_dir = dirs["data"] / "hq"
    if not hq_dir.exists():
        raise PrereqError("missing HQ dataset; run `gen-data` first")
    recipe = degrade_mod.DegradationRecipe(
        blur_sigma_range=tuple(cfg["blur"]), noise_sigma_range=tuple(cfg["noise"]),
        downscale_factor=cfg["factor"], compress_quality_range=tuple(cfg["quality"]),
        seed=cfg["seed"],
    )
    out = degrade_mod.write_pairs(hq_dir, dirs["data"] / "pairs", recipe)
    click.echo(f"paired dataset at {out}")


@main.command("pretrain-codec")
@_run_opt
@_cfg_opt
@click.option("--epochs", default=60, show_default=True)
@click.option("--lr", default=1e-3, show_default=True)
@click.option("--batch-size", default=8, show_default=True)
@click.option("--width", default=64, show_default=True)
@click.option("--seed", default=0, show_default=True)
def pretrain_codec(run_dir, config_file, epochs, lr, batch_size, width, seed):
    """Train the image<->latent autoencoder on the HQ set."""
    from .codec import PretrainConfig, train_codec

    cfg = _resolve_config(run_dir, "pretrain-codec", dict(
        epochs=epochs, lr=lr, batch_size=batch_size, width=width, seed=seed
    ), config_file)
    dirs = _run_dirs(run_dir)
    hq_dir = dirs["data"] / "hq"
    if not hq_dir.exists():
        raise PrereqError("missing HQ dataset; run `gen-data` first")
    images, _ = toydata.read_dataset(hq_dir)
    codec, history = train_codec(images, PretrainConfig(
        lr=cfg["lr"], epochs=cfg["epochs"], batch_size=cfg["batch_size"],
        seed=cfg["seed"], width=cfg["width"],
    ), log=_logger(run_dir, "codec"))
    bundle = _load_bundle(run_dir)
    bundle.codec = codec
    ckpt.save_checkpoint(bundle, _bundle_path(run_dir))
    click.echo(f"codec held-out PSNR: {history[-1]:.2f} dB")


@main.command("pretrain-classifier")
@_run_opt
@_cfg_opt
@click.option("--epochs", default=30, show_default=True)
@click.option("--lr", default=2e-3, show_default=True)
@click.option("--batch-size", default=16, show_default=True)
@click.option("--width", default=16, show_default=True)
@click.option("--seed", default=0, show_default=True)
def pretrain_classifier(run_dir, config_file, epochs, lr, batch_size, width, seed):
    """Train the feature/classifier network on the labeled HQ set."""
    from .perception import ClassifierConfig, train_classifier

    cfg = _resolve_config(run_dir, "pretrain-classifier", dict(
        epochs=epochs, lr=lr, batch_size=batch_size, width=width, seed=seed
    ), config_file)
    dirs = _run_dirs(run_dir)
    hq_dir = dirs["data"] / "hq"
    if not hq_dir.exists():
        raise PrereqError("missing HQ dataset; run `gen-data` first")
    images, labels = toydata.read_dataset(hq_dir)
    net, history = train_classifier(images, labels, ClassifierConfig(
        lr=cfg["lr"], epochs=cfg["epochs"], batch_size=cfg["batch_size"],
        seed=cfg["seed"], width=cfg["width"],
    ), log=_logger(run_dir, "classifier"))
    bundle = _load_bundle(run_dir)
    bundle.featnet = net
    ckpt.save_checkpoint(bundle, _bundle_path(run_dir))
    click.echo(f"classifier held-out accuracy: {history[-1]:.3f}")


@main.command("pretrain-teacher")
@_run_opt
@_cfg_opt
@click.option("--iters", default=2000, show_default=True)
@click.option("--lr", default=1e-3, show_default=True)
@click.option("--batch-size", default=16, show_default=True)
@click.option("--width", default=32, show_default=True)
@click.option("--schedule-t", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
def pretrain_teacher(run_dir, config_file, iters, lr, batch_size, width, schedule_t, seed):
    """Denoising-pretrain the conditional teacher on encoded HQ latents."""
    from .backbone import TeacherConfig, pretrain_teacher as run_pretrain
    from .codec import encode

    cfg = _resolve_config(run_dir, "pretrain-teacher", dict(
        iters=iters, lr=lr, batch_size=batch_size, width=width,
        schedule_t=schedule_t, seed=seed,
    ), config_file)
    dirs = _run_dirs(run_dir)
    hq_dir = dirs["data"] / "hq"
    if not hq_dir.exists():
        raise PrereqError("missing HQ dataset; run `gen-data` first")
    bundle = _load_bundle(run_dir)
    _require_components(bundle, {"codec": "pretrain-codec"})
    images, labels = toydata.read_dataset(hq_dir)
    latents = np.stack([encode(x, bundle.codec) for x in images])
    bundle.schedule_params = {"T": cfg["schedule_t"], "beta_start": 1e-4, "beta_end": 0.02}
    net, history = run_pretrain(latents, labels, bundle.schedule, TeacherConfig(
        lr=cfg["lr"], iters=cfg["iters"], batch_size=cfg["batch_size"],
        seed=cfg["seed"], width=cfg["width"],
    ), log=_logger(run_dir, "teacher"))
    bundle.teacher = net
    student = copy.deepcopy(net)
    student.role = "student-base"
    bundle.student_base = student
    ckpt.save_checkpoint(bundle, _bundle_path(run_dir))
    click.echo(f"teacher final validation denoising loss: {history[-1]:.5f}")


def _train_config(cfg: dict):
    from .trainer import TrainConfig

    return TrainConfig(
        lr=cfg["lr"], batch_size=cfg["batch_size"], pix_iters=cfg.get("iters", 1000),
        sem_iters=cfg.get("iters", 2000), student_timestep=cfg.get("student_timestep", 1),
        lambda_cfg=cfg.get("lambda_cfg", 7.5), w_lpips=cfg.get("w_lpips", 1.0),
        w_csd=cfg.get("w_csd", 1.0), lora_rank=cfg.get("rank", 4), seed=cfg.get("seed", 0),
    )


def _load_pairs(run_dir: str):
    pair_dir = _run_dirs(run_dir)["data"] / "pairs"
    if not pair_dir.exists():
        raise PrereqError("missing paired dataset; run `degrade` first")
    return degrade_mod.read_pairs(pair_dir)


@main.command("train-pix")
@_run_opt
@_cfg_opt
@click.option("--iters", default=1000, show_default=True)
@click.option("--lr", default=5e-5, show_default=True)
@click.option("--batch-size", default=4, show_default=True)
@click.option("--rank", default=4, show_default=True)
@click.option("--student-timestep", default=1, show_default=True)
@click.option("--seed", default=0, show_default=True)
def train_pix(run_dir, config_file, iters, lr, batch_size, rank, student_timestep, seed):
    """Stage 1: optimize the pixel-level adapter with the l2 loss."""
    from .trainer import train_pixel_stage

    cfg = _resolve_config(run_dir, "train-pix", dict(
        iters=iters, lr=lr, batch_size=batch_size, rank=rank,
        student_timestep=student_timestep, seed=seed,
    ), config_file)
    bundle = _load_bundle(run_dir)
    _require_components(bundle, {"codec": "pretrain-codec", "student_base": "pretrain-teacher"})
    lq, hq, _, _ = _load_pairs(run_dir)
    tc = _train_config(cfg)
    pix, history = train_pixel_stage(lq, hq, bundle.student_base, bundle.codec, tc,
                                     log=_logger(run_dir, "pix"))
    bundle.pix = pix
    bundle.config.update({"student_timestep": tc.student_timestep, "lora_rank": tc.lora_rank})
    ckpt.save_checkpoint(bundle, _bundle_path(run_dir))
    click.echo(f"stage-1 validation PSNR: {history[-1]:.2f} dB")


@main.command("train-sem")
@_run_opt
@_cfg_opt
@click.option("--iters", default=2000, show_default=True)
@click.option("--lr", default=5e-5, show_default=True)
@click.option("--batch-size", default=4, show_default=True)
@click.option("--rank", default=4, show_default=True)
@click.option("--student-timestep", default=1, show_default=True)
@click.option("--lambda-cfg", default=7.5, show_default=True)
@click.option("--w-lpips", default=1.0, show_default=True)
@click.option("--w-csd", default=1.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
def train_sem(run_dir, config_file, iters, lr, batch_size, rank, student_timestep,
              lambda_cfg, w_lpips, w_csd, seed):
    """Stage 2: optimize the semantic adapter inside the frozen-pixel group."""
    from .trainer import train_semantic_stage

    cfg = _resolve_config(run_dir, "train-sem", dict(
        iters=iters, lr=lr, batch_size=batch_size, rank=rank,
        student_timestep=student_timestep, lambda_cfg=lambda_cfg,
        w_lpips=w_lpips, w_csd=w_csd, seed=seed,
    ), config_file)
    bundle = _load_bundle(run_dir)
    _require_components(bundle, {
        "pix": "train-pix", "teacher": "pretrain-teacher",
        "featnet": "pretrain-classifier", "codec": "pretrain-codec",
    })
    lq, hq, labels, _ = _load_pairs(run_dir)
    tc = _train_config(cfg)
    sem, history = train_semantic_stage(
        lq, hq, labels, bundle.student_base, bundle.pix, bundle.teacher,
        bundle.featnet, bundle.codec, bundle.schedule, tc, log=_logger(run_dir, "sem"))
    bundle.sem = sem
    ckpt.save_checkpoint(bundle, _bundle_path(run_dir))
    click.echo(f"stage-2 validation perceptual distance: {history[-1]:.5f}")


def _full_bundle(run_dir: str) -> ckpt.Bundle:
    bundle = _load_bundle(run_dir)
    _require_components(bundle, {
        "codec": "pretrain-codec", "featnet": "pretrain-classifier",
        "student_base": "pretrain-teacher", "pix": "train-pix", "sem": "train-sem",
    })
    return bundle


@main.command("eval")
@_run_opt
@_cfg_opt
@click.option("--scales", default="1,1;1,0;0,0", show_default=True,
              help="Semicolon-separated pix,sem pairs.")
@click.option("--limit", default=0, show_default=True, help="0 means every pair.")
def eval_cmd(run_dir, config_file, scales, limit):
    """Metric table over the paired set for a list of guidance settings."""
    cfg = _resolve_config(run_dir, "eval", dict(scales=scales, limit=limit), config_file)
    bundle = _full_bundle(run_dir)
    lq, hq, _, _ = _load_pairs(run_dir)
    if cfg["limit"]:
        lq, hq = lq[: cfg["limit"]], hq[: cfg["limit"]]
    pairs = [_parse_scales(s) for s in cfg["scales"].split(";")]
    rows = metrics_mod.evaluate(lq, hq, bundle, pairs)
    out = _run_dirs(run_dir)["reports"] / "eval.csv"
    metrics_mod.write_report(rows, out)
    for r in rows:
        click.echo(f"({r.lambda_pix:.2f},{r.lambda_sem:.2f})  psnr_y={r.psnr_y:.2f}  "
                   f"ssim_y={r.ssim_y:.4f}  perceptual={r.perceptual:.5f}")
    click.echo(f"report: {out}")


@main.command("sweep")
@_run_opt
@_cfg_opt
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--pix", default="0.5,1.0", show_default=True)
@click.option("--sem", default="0.0,0.5,1.0,1.5", show_default=True)
def sweep(run_dir, config_file, image_path, pix, sem):
    """Scale-grid restoration figure plus per-cell metric CSV for one image."""
    from .infer import GuidanceScales, build_cache, blend_from_cache

    cfg = _resolve_config(run_dir, "sweep", dict(image=str(image_path), pix=pix, sem=sem),
                          config_file)
    bundle = _full_bundle(run_dir)
    pix_list = [float(v) for v in cfg["pix"].split(",")]
    sem_list = [float(v) for v in cfg["sem"].split(",")]
    x = toydata.load_image(Path(cfg["image"]))
    cache = build_cache(x, bundle)
    _, h, w = x.shape
    margin = 2
    grid = np.ones((3, len(pix_list) * (h + margin) - margin,
                    len(sem_list) * (w + margin) - margin))
    rows = []
    for i, lp in enumerate(pix_list):
        for j, ls in enumerate(sem_list):
            out = blend_from_cache(cache, GuidanceScales(lp, ls), bundle)
            grid[:, i * (h + margin): i * (h + margin) + h,
                 j * (w + margin): j * (w + margin) + w] = out
            rows.append(metrics_mod.MetricRow(lp, ls, metrics_mod.psnr_y(out, x),
                                              metrics_mod.ssim_y(out, x), 0.0, 1))
    reports = _run_dirs(run_dir)["reports"]
    toydata.save_image(grid, reports / "sweep_grid.png")
    metrics_mod.write_report(rows, reports / "sweep.csv")
    click.echo(f"grid: {reports / 'sweep_grid.png'}  table: {reports / 'sweep.csv'}")


@main.command("restore")
@_run_opt
@_cfg_opt
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--output", "output_path", required=True, type=click.Path())
@click.option("--scales", default=None, help="pix,sem; omitted means the default path.")
def restore(run_dir, config_file, input_path, output_path, scales):
    """One-shot restoration of a single PNG."""
    from .infer import GuidanceScales, restore_adjustable, restore_default

    cfg = _resolve_config(run_dir, "restore", dict(
        input=str(input_path), output=str(output_path), scales=scales), config_file)
    bundle = _full_bundle(run_dir)
    x = toydata.load_image(Path(cfg["input"]))
    if cfg["scales"] is None:
        out = restore_default(x, bundle)
    else:
        out = restore_adjustable(x, GuidanceScales(*_parse_scales(cfg["scales"])), bundle)
    toydata.save_image(out, Path(cfg["output"]))
    click.echo(f"wrote {cfg['output']}")


@main.command("loss-verify")
@click.option("--seed", default=0, show_default=True)
@click.option("--tolerance", default=1e-10, show_default=True)
def loss_verify(seed, tolerance):
    """Null-case and decomposition residuals of the distillation gradients."""
    from .losses import verify_loss_algebra

    rows = verify_loss_algebra(seed=seed)
    worst = 0.0
    for row in rows:
        click.echo(f"{row['check']:<32} max|residual| = {row['max_abs_residual']:.3e}")
        worst = max(worst, row["max_abs_residual"])
    if worst > tolerance:
        _fail(f"loss-verify residual {worst:.3e} exceeds tolerance {tolerance:.1e}")
    click.echo(f"all residuals within {tolerance:.1e}")


@main.command("serve")
@_run_opt
@_cfg_opt
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--max-dim", default=512, show_default=True)
@click.option("--capacity", default=64, show_default=True)
def serve(run_dir, config_file, host, port, max_dim, capacity):
    """Run the HTTP inference service backing the interactive UI."""
    import uvicorn

    from .service import create_app

    _resolve_config(run_dir, "serve", dict(host=host, port=port, max_dim=max_dim,
                                           capacity=capacity), config_file)
    bundle = _full_bundle(run_dir)
    app = create_app(bundle, max_dim=max_dim, capacity=capacity)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
