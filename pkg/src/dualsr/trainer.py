"""Two-stage decoupled adapter training: pixel-level l2 first, then
semantic-level perceptual + score-distillation inside the frozen-pixel group."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ._torch_utils import seeded_generator, to_numpy, to_tensor
from .backbone import Denoiser, eps_predict
from .codec import Codec
from .losses import GuidanceConfig, cotangent_loss, csd_gradient, l2_loss, perceptual_loss
from .lora import LoraAdapter, PisaGroup, init_lora, target_layer_shapes
from .perception import FeatureNet, predict_condition
from .schedule import DiffusionSchedule


@dataclass
class TrainConfig:
    lr: float = 5e-5
    batch_size: int = 4
    pix_iters: int = 1000
    sem_iters: int = 2000
    student_timestep: int = 1
    lambda_cfg: float = 7.5
    w_lpips: float = 1.0
    w_csd: float = 1.0
    lora_rank: int = 4
    seed: int = 0
    pixel_loss_space: str = "pixel"  # or "latent"
    val_fraction: float = 0.125
    val_every: int = 0  # 0 -> epoch granularity

    def __post_init__(self):
        if self.batch_size < 1 or self.pix_iters < 0 or self.sem_iters < 0:
            raise ValueError("batch_size and iteration counts must be positive")
        if self.lr < 0:
            raise ValueError("lr must be nonnegative")
        if self.pixel_loss_space not in ("pixel", "latent"):
            raise ValueError(f"unknown pixel_loss_space {self.pixel_loss_space!r}")


def student_forward(z_L: torch.Tensor, net: Denoiser, adapters: list[LoraAdapter],
                    cfg: TrainConfig) -> torch.Tensor:
    """One-step residual restoration: z_H = z_L - eps(z_L) at the fixed timestep.

    The student itself is unconditional; conditions enter only through the
    teacher-side losses.
    """
    return z_L - eps_predict(z_L, cfg.student_timestep, None, net, adapters)


def _freeze(*modules):
    for m in modules:
        if m is not None:
            for p in m.parameters():
                p.requires_grad_(False)


def _split(n: int, val_fraction: float) -> tuple[np.ndarray, np.ndarray]:
    n_val = max(1, int(n * val_fraction)) if n > 1 else 0
    idx = np.arange(n)
    return idx[n_val:], idx[:n_val] if n_val else idx


def _batch_psnr(a: torch.Tensor, b: torch.Tensor) -> float:
    mse = float(((a - b) ** 2).mean())
    return 99.0 if mse < 1e-10 else 10.0 * float(np.log10(1.0 / mse))


def train_pixel_stage(lq: np.ndarray, hq: np.ndarray, base: Denoiser, codec: Codec,
                      cfg: TrainConfig, log=None):
    """Optimize the pixel adapter with the l2 loss; returns (adapter, psnr history)."""
    _freeze(base, codec)
    pix = init_lora(target_layer_shapes(base), rank=cfg.lora_rank,
                    seed=cfg.seed, role="pixel")
    pix.set_trainable(True)
    opt = torch.optim.Adam(pix.parameters(), lr=cfg.lr)
    tr_idx, va_idx = _split(len(lq), cfg.val_fraction)
    lq_t, hq_t = to_tensor(lq), to_tensor(hq)
    with torch.no_grad():
        z_L_all = codec.encode_t(lq_t)
    g = seeded_generator(cfg.seed + 10)
    steps_per_epoch = max(1, len(tr_idx) // cfg.batch_size)
    val_every = cfg.val_every or steps_per_epoch
    history = []
    for step in range(cfg.pix_iters):
        sel = tr_idx[torch.randint(0, len(tr_idx), (cfg.batch_size,), generator=g).numpy()]
        z_L = z_L_all[sel]
        z_hat = student_forward(z_L, base, [pix], cfg)
        if cfg.pixel_loss_space == "pixel":
            loss = l2_loss(codec.decode_t(z_hat, clamp=False), hq_t[sel])
        else:
            with torch.no_grad():
                z_H = codec.encode_t(hq_t[sel])
            loss = l2_loss(z_hat, z_H)
        if not torch.isfinite(loss):
            raise RuntimeError(f"non-finite pixel-stage loss at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        if (step + 1) % val_every == 0 or step == cfg.pix_iters - 1:
            with torch.no_grad():
                out = codec.decode_t(student_forward(z_L_all[va_idx], base, [pix], cfg))
                val_psnr = _batch_psnr(out, hq_t[va_idx])
            history.append(val_psnr)
            if log is not None:
                log({"stage": "pix", "step": step + 1, "loss": float(loss.detach()), "val_psnr": val_psnr})
    return pix, history


def train_semantic_stage(lq: np.ndarray, hq: np.ndarray, labels, base: Denoiser,
                         pix: LoraAdapter, teacher: Denoiser, featnet: FeatureNet,
                         codec: Codec, sched: DiffusionSchedule, cfg: TrainConfig, log=None):
    """Optimize the semantic adapter inside the group; pixel adapter stays frozen.

    The condition for the distillation teacher is re-extracted from the
    decoded student output at every step.
    """
    _freeze(base, codec, teacher, featnet)
    sem = init_lora(target_layer_shapes(base), rank=cfg.lora_rank,
                    seed=cfg.seed + 1, role="semantic")
    sem.set_trainable(True)
    group = PisaGroup(pixel=pix, semantic=sem)
    opt = torch.optim.Adam(sem.parameters(), lr=cfg.lr)
    gcfg = GuidanceConfig(cfg.lambda_cfg)
    tr_idx, va_idx = _split(len(lq), cfg.val_fraction)
    lq_t, hq_t = to_tensor(lq), to_tensor(hq)
    with torch.no_grad():
        z_L_all = codec.encode_t(lq_t)
    g = seeded_generator(cfg.seed + 20)
    rng = np.random.default_rng(cfg.seed + 21)
    steps_per_epoch = max(1, len(tr_idx) // cfg.batch_size)
    val_every = cfg.val_every or steps_per_epoch
    history = []
    for step in range(cfg.sem_iters):
        sel = tr_idx[torch.randint(0, len(tr_idx), (cfg.batch_size,), generator=g).numpy()]
        z_L = z_L_all[sel]
        z_sem = student_forward(z_L, base, group.adapters, cfg)
        x_sem = codec.decode_t(z_sem, clamp=False)
        loss = cfg.w_lpips * perceptual_loss(x_sem, hq_t[sel], featnet)
        if cfg.w_csd != 0.0:
            csd_term = 0.0
            for i in range(z_sem.shape[0]):
                c = predict_condition(to_numpy(x_sem[i]).clip(0.0, 1.0), featnet)
                grad = csd_gradient(z_sem[i], teacher, c, sched, gcfg, rng)
                csd_term = csd_term + cotangent_loss(grad, z_sem[i])
            loss = loss + cfg.w_csd * csd_term / z_sem.shape[0]
        if not torch.isfinite(loss):
            raise RuntimeError(f"non-finite semantic-stage loss at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        if (step + 1) % val_every == 0 or step == cfg.sem_iters - 1:
            with torch.no_grad():
                out = codec.decode_t(student_forward(z_L_all[va_idx], base, group.adapters, cfg))
                val_perc = float(perceptual_loss(out, hq_t[va_idx], featnet))
            history.append(val_perc)
            if log is not None:
                log({"stage": "sem", "step": step + 1, "loss": float(loss.detach()), "val_perceptual": val_perc})
    return sem, history
