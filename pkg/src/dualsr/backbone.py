"""Conditional UNet denoiser with timestep and class-condition embeddings.

The same architecture serves as the pretrained teacher, the one-step
student base, and the fake-score network for the VSD ablation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from . import lora
from ._torch_utils import DTYPE, init_weights, seeded_generator, to_numpy, to_tensor
from .schedule import DiffusionSchedule


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=DTYPE) / half)
    args = t[:, None].to(DTYPE) * freqs[None, :]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


class ResBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, emb_dim: int):
        super().__init__()
        self.conv1 = lora.LoraConv2d(c_in, c_out, 3, padding=1)
        self.conv2 = lora.LoraConv2d(c_out, c_out, 3, padding=1)
        self.emb_proj = lora.LoraLinear(emb_dim, c_out)
        self.skip = lora.LoraConv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()
        self.act = nn.SiLU()

    def forward(self, x, emb):
        h = self.act(self.conv1(x))
        h = h + self.emb_proj(emb)[:, :, None, None]
        h = self.act(self.conv2(h))
        return h + self.skip(x)


class Denoiser(nn.Module):
    """Two-stage UNet; `role` tags teacher / student-base / fake usage."""

    ROLES = ("teacher", "student-base", "fake")

    def __init__(self, latent_channels: int = 4, width: int = 32,
                 n_classes: int = 8, emb_dim: int = 64, role: str = "teacher"):
        super().__init__()
        if role not in self.ROLES:
            raise ValueError(f"unknown role {role!r}")
        self.latent_channels = latent_channels
        self.width = width
        self.n_classes = n_classes
        self.emb_dim = emb_dim
        self.role = role
        self.eval_count = 0  # denoiser-evaluation instrumentation

        w = width
        self.t_mlp = nn.Sequential(
            lora.LoraLinear(emb_dim, emb_dim), nn.SiLU(), lora.LoraLinear(emb_dim, emb_dim)
        )
        # row n_classes is the distinguished null condition
        self.cond_embed = nn.Embedding(n_classes + 1, emb_dim)

        self.in_conv = lora.LoraConv2d(latent_channels, w, 3, padding=1)
        self.res_down1 = ResBlock(w, w, emb_dim)
        self.down1 = lora.LoraConv2d(w, 2 * w, 3, stride=2, padding=1)
        self.res_down2 = ResBlock(2 * w, 2 * w, emb_dim)
        self.down2 = lora.LoraConv2d(2 * w, 4 * w, 3, stride=2, padding=1)
        self.mid = ResBlock(4 * w, 4 * w, emb_dim)
        self.up2 = lora.LoraConv2d(4 * w, 2 * w, 3, padding=1)
        self.res_up2 = ResBlock(4 * w, 2 * w, emb_dim)
        self.up1 = lora.LoraConv2d(2 * w, w, 3, padding=1)
        self.res_up1 = ResBlock(2 * w, w, emb_dim)
        self.out_conv = lora.LoraConv2d(w, latent_channels, 3, padding=1)
        self.upsample = nn.Upsample(scale_factor=2, mode="nearest")
        self.to(DTYPE)

    def forward(self, z: torch.Tensor, t: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        """z: [B,C,H,W]; t: [B] step indices; c: [B] class indices (n_classes = null)."""
        self.eval_count += 1
        dt = self.cond_embed.weight.dtype
        emb = self.t_mlp(sinusoidal_embedding(t, self.emb_dim).to(dt)) + self.cond_embed(c)
        x0 = self.in_conv(z)
        d1 = self.res_down1(x0, emb)
        d2 = self.res_down2(self.down1(d1), emb)
        m = self.mid(self.down2(d2), emb)
        # crop upsampled maps to the skip size so odd latent dims round-trip
        m_up = self.upsample(m)[..., : d2.shape[-2], : d2.shape[-1]]
        u2 = self.res_up2(torch.cat([self.up2(m_up), d2], dim=1), emb)
        u2_up = self.upsample(u2)[..., : d1.shape[-2], : d1.shape[-1]]
        u1 = self.res_up1(torch.cat([self.up1(u2_up), d1], dim=1), emb)
        return self.out_conv(u1)

    @property
    def null_index(self) -> int:
        return self.n_classes

    def arch_params(self) -> dict:
        return {
            "latent_channels": self.latent_channels,
            "width": self.width,
            "n_classes": self.n_classes,
            "emb_dim": self.emb_dim,
            "role": self.role,
        }


def _cond_tensor(c, net: Denoiser, batch: int) -> torch.Tensor:
    if c is None:
        idx = net.null_index
    else:
        idx = int(c)
        if not (0 <= idx < net.n_classes):
            raise ValueError(f"condition {idx} outside [0, {net.n_classes})")
    return torch.full((batch,), idx, dtype=torch.long)


def eps_predict(z, t: int, c, net: Denoiser, adapters: list | None = None):
    """Noise prediction with optional adapter deltas.

    Accepts a numpy array (runs detached, returns numpy) or a torch tensor
    (stays on the autograd tape). Single samples [C,H,W] or batches.
    """
    adapters = adapters or []
    is_np = not torch.is_tensor(z)
    zt = to_tensor(z) if is_np else z
    single = zt.ndim == 3
    if single:
        zt = zt.unsqueeze(0)
    tb = torch.full((zt.shape[0],), int(t), dtype=torch.long)
    cb = _cond_tensor(c, net, zt.shape[0])
    with lora.applied(net, adapters):
        if is_np:
            with torch.no_grad():
                out = net(zt, tb, cb)
        else:
            out = net(zt, tb, cb)
    if single:
        out = out[0]
    return to_numpy(out) if is_np else out


@dataclass
class TeacherConfig:
    lr: float = 1e-3
    iters: int = 2000
    batch_size: int = 16
    seed: int = 0
    cond_dropout: float = 0.1
    width: int = 32
    val_fraction: float = 0.125
    log_every: int = 200
    # fp32 compute for CPU speed; weights promoted to float64 afterwards
    compute_dtype: str = "float32"


def denoising_loss(net: Denoiser, z0: torch.Tensor, c: torch.Tensor,
                   sched: DiffusionSchedule, g: torch.Generator) -> torch.Tensor:
    """Standard eps-prediction MSE on uniformly sampled timesteps."""
    b = z0.shape[0]
    t = torch.randint(1, sched.T + 1, (b,), generator=g)
    eps = torch.randn(z0.shape, dtype=z0.dtype, generator=g)
    ab = torch.as_tensor(sched.alpha_bar, dtype=z0.dtype)[t][:, None, None, None]
    z_t = ab.sqrt() * z0 + (1 - ab).sqrt() * eps
    return ((net(z_t, t, c) - eps) ** 2).mean()


def pretrain_teacher(latents: np.ndarray, labels: np.ndarray,
                     sched: DiffusionSchedule, cfg: TeacherConfig, log=None):
    """Denoising pretraining with condition dropout; returns (net, loss history)."""
    if len(latents) == 0:
        raise ValueError("empty dataset")
    n_classes = int(labels.max()) + 1
    net = Denoiser(latent_channels=latents.shape[1], width=cfg.width,
                   n_classes=n_classes, role="teacher")
    init_weights(net, cfg.seed)
    cdt = getattr(torch, cfg.compute_dtype)
    net.to(cdt)
    data = to_tensor(latents).to(cdt)
    targets = torch.as_tensor(labels, dtype=torch.long)
    n_val = max(1, int(len(data) * cfg.val_fraction)) if len(data) > 1 else 0
    tr_x, va_x = (data[n_val:], data[:n_val]) if n_val else (data, data)
    tr_y, va_y = (targets[n_val:], targets[:n_val]) if n_val else (targets, targets)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    g = seeded_generator(cfg.seed + 1)
    history = []
    for step in range(cfg.iters):
        idx = torch.randint(0, len(tr_x), (min(cfg.batch_size, len(tr_x)),), generator=g)
        c = tr_y[idx].clone()
        drop = torch.rand(len(c), generator=g) < cfg.cond_dropout
        c[drop] = net.null_index
        loss = denoising_loss(net, tr_x[idx], c, sched, g)
        if not torch.isfinite(loss):
            raise RuntimeError(f"non-finite teacher loss at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % cfg.log_every == 0 or step == cfg.iters - 1:
            with torch.no_grad():
                gv = seeded_generator(cfg.seed + 2)
                val = float(denoising_loss(net, va_x, va_y, sched, gv))
            history.append(val)
            if log is not None:
                log({"stage": "teacher", "step": step, "val_denoise_loss": val})
    net.to(DTYPE)
    return net, history
