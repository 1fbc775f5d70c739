"""Shared fixtures: a small fully-populated bundle for inference/service
tests, plus the cached desk-scale training run backing the acceptance suite."""

import copy
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest
import torch

from dualsr._torch_utils import init_weights
from dualsr.backbone import Denoiser
from dualsr.checkpoint import Bundle
from dualsr.codec import Codec
from dualsr.lora import init_lora, target_layer_shapes
from dualsr.perception import FeatureNet


def make_tiny_bundle(seed: int = 0, rank: int = 2) -> Bundle:
    """Untrained but seeded bundle with nonzero adapter deltas.

    Small widths keep float64 CPU evaluation cheap; the adapters get random
    B factors so the pixel and semantic paths genuinely differ.
    """
    codec = Codec(width=8)
    init_weights(codec, seed)
    featnet = FeatureNet(n_classes=8, width=8)
    init_weights(featnet, seed + 1)
    base = Denoiser(latent_channels=4, width=8, n_classes=8, role="student-base")
    init_weights(base, seed + 2)
    teacher = Denoiser(latent_channels=4, width=8, n_classes=8, role="teacher")
    init_weights(teacher, seed + 3)
    shapes = target_layer_shapes(base)
    pix = init_lora(shapes, rank=rank, seed=seed + 4, role="pixel")
    sem = init_lora(shapes, rank=rank, seed=seed + 5, role="semantic")
    g = torch.Generator().manual_seed(seed + 6)
    for ad in (pix, sem):
        for lid, (A, B) in ad.layers.items():
            with torch.no_grad():
                B.normal_(0.0, 0.02, generator=g)
    return Bundle(
        schedule_params={"T": 20, "beta_start": 1e-4, "beta_end": 0.02},
        config={"student_timestep": 1},
        tag="tiny-test",
        codec=codec,
        featnet=featnet,
        teacher=teacher,
        student_base=base,
        pix=pix,
        sem=sem,
    )


@pytest.fixture(scope="session")
def tiny_bundle() -> Bundle:
    return make_tiny_bundle()


@pytest.fixture()
def tiny_images():
    rng = np.random.default_rng(0)
    return rng.random((4, 3, 16, 16))


# ---- desk-scale acceptance run (trained once, cached on disk) ----

ACCEPT_CFG = {
    "data": {"n_train": 192, "n_heldout": 64, "size": 64, "train_seed": 0,
             "heldout_seed": 1000},
    "degrade": {"blur": [0.4, 2.0], "noise": [0.0, 0.06], "factor": 4,
                "quality": [40, 95], "seed": 0},
    "codec": {"lr": 2e-3, "epochs": 160, "width": 64, "seed": 0},
    "classifier": {"lr": 2e-3, "epochs": 60, "width": 24, "seed": 0},
    "teacher": {"lr": 1e-3, "iters": 3000, "batch_size": 16, "width": 32,
                "T": 100, "seed": 0},
    "pix": {"lr": 1e-3, "iters": 800, "batch_size": 4, "rank": 4, "seed": 0},
    "sem": {"lr": 1e-4, "iters": 800, "batch_size": 4, "rank": 4,
            "lambda_cfg": 7.5, "w_lpips": 1.0, "w_csd": 1e-5, "seed": 0},
}

CACHE_DIR = Path(__file__).resolve().parent.parent / ".cache" / "acceptance"

# one "[PASS]/[FAIL] name: detail" line per acceptance criterion, echoed in the
# terminal summary so they survive pytest's output capture
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def _degraded_set(n, size, gen_seed, deg_seed):
    from dualsr.degrade import DegradationRecipe, make_pairs
    from dualsr.toydata import generate_dataset

    d = ACCEPT_CFG["degrade"]
    hq, labels = generate_dataset(n, size, seed=gen_seed)
    recipe = DegradationRecipe(
        blur_sigma_range=tuple(d["blur"]), noise_sigma_range=tuple(d["noise"]),
        downscale_factor=d["factor"], compress_quality_range=tuple(d["quality"]),
        seed=deg_seed,
    )
    lq, records = make_pairs(hq, recipe)
    return lq, hq, labels


def _build_acceptance_run(out_dir: Path) -> None:
    from dualsr.backbone import TeacherConfig, pretrain_teacher
    from dualsr.checkpoint import save_checkpoint
    from dualsr.codec import PretrainConfig, encode, train_codec
    from dualsr.perception import ClassifierConfig, train_classifier
    from dualsr.toydata import generate_dataset
    from dualsr.trainer import TrainConfig, train_pixel_stage, train_semantic_stage

    cfg = ACCEPT_CFG
    dc = cfg["data"]
    hq_train, labels_train = generate_dataset(dc["n_train"], dc["size"],
                                              seed=dc["train_seed"])
    lq_train, _, _ = _degraded_set(dc["n_train"], dc["size"], dc["train_seed"],
                                   cfg["degrade"]["seed"])
    histories = {}

    c = cfg["codec"]
    codec, histories["codec"] = train_codec(hq_train, PretrainConfig(
        lr=c["lr"], epochs=c["epochs"], width=c["width"], seed=c["seed"]))

    c = cfg["classifier"]
    featnet, histories["classifier"] = train_classifier(hq_train, labels_train,
        ClassifierConfig(lr=c["lr"], epochs=c["epochs"], width=c["width"],
                         seed=c["seed"]))

    c = cfg["teacher"]
    from dualsr.schedule import make_schedule
    sched = make_schedule(c["T"])
    latents = np.stack([encode(x, codec) for x in hq_train])
    teacher, histories["teacher"] = pretrain_teacher(latents, labels_train, sched,
        TeacherConfig(lr=c["lr"], iters=c["iters"], batch_size=c["batch_size"],
                      width=c["width"], seed=c["seed"]))
    student_base = copy.deepcopy(teacher)
    student_base.role = "student-base"

    c = cfg["pix"]
    pix_cfg = TrainConfig(lr=c["lr"], batch_size=c["batch_size"],
                          pix_iters=c["iters"], lora_rank=c["rank"], seed=c["seed"])
    pix, histories["pix"] = train_pixel_stage(lq_train, hq_train, student_base,
                                              codec, pix_cfg)

    c = cfg["sem"]
    sem_cfg = TrainConfig(lr=c["lr"], batch_size=c["batch_size"],
                          sem_iters=c["iters"], lora_rank=c["rank"],
                          lambda_cfg=c["lambda_cfg"], w_lpips=c["w_lpips"],
                          w_csd=c["w_csd"], seed=c["seed"])
    sem, histories["sem"] = train_semantic_stage(
        lq_train, hq_train, labels_train, student_base, pix, teacher, featnet,
        codec, sched, sem_cfg)

    bundle = Bundle(
        schedule_params={"T": cfg["teacher"]["T"], "beta_start": 1e-4,
                         "beta_end": 0.02},
        config={"student_timestep": 1, "lora_rank": cfg["pix"]["rank"]},
        tag="acceptance",
        codec=codec, featnet=featnet, teacher=teacher,
        student_base=student_base, pix=pix, sem=sem,
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(bundle, out_dir / "bundle.ckpt")
    (out_dir / "histories.json").write_text(json.dumps(histories))


@pytest.fixture(scope="session")
def trained_run():
    """Desk-scale two-stage run; trained once and cached under .cache/."""
    from dualsr.checkpoint import load_checkpoint

    key = hashlib.sha256(json.dumps(ACCEPT_CFG, sort_keys=True).encode()).hexdigest()[:12]
    out_dir = CACHE_DIR / key
    if not (out_dir / "bundle.ckpt").exists():
        _build_acceptance_run(out_dir)
    bundle = load_checkpoint(out_dir / "bundle.ckpt")
    histories = json.loads((out_dir / "histories.json").read_text())
    dc = ACCEPT_CFG["data"]
    lq, hq, labels = _degraded_set(dc["n_heldout"], dc["size"],
                                   dc["heldout_seed"], 17)
    return {"bundle": bundle, "histories": histories,
            "heldout": {"lq": lq, "hq": hq, "labels": labels}}
