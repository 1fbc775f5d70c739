"""Tiny convolutional autoencoder: images <-> 4x spatially compressed latents."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from ._torch_utils import DTYPE, init_weights, seeded_generator, to_numpy, to_tensor

LATENT_CHANNELS = 4
DOWNSCALE = 4


class Codec(nn.Module):
    """Plain (non-variational) autoencoder with two stride-2 stages."""

    def __init__(self, width: int = 64, latent_channels: int = LATENT_CHANNELS):
        super().__init__()
        self.width = width
        self.latent_channels = latent_channels
        w = width
        self.enc = nn.Sequential(
            nn.Conv2d(3, w, 3, padding=1), nn.SiLU(),
            nn.Conv2d(w, w, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(w, w, 3, padding=1), nn.SiLU(),
            nn.Conv2d(w, w, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(w, latent_channels, 3, padding=1),
        )
        self.dec = nn.Sequential(
            nn.Conv2d(latent_channels, w, 3, padding=1), nn.SiLU(),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(w, w, 3, padding=1), nn.SiLU(),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(w, w, 3, padding=1), nn.SiLU(),
            nn.Conv2d(w, 3, 3, padding=1),
        )
        self.to(DTYPE)

    def encode_t(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] % DOWNSCALE or x.shape[-2] % DOWNSCALE:
            raise ValueError(f"image dims {tuple(x.shape[-2:])} not divisible by {DOWNSCALE}")
        return self.enc(x)

    def decode_t(self, z: torch.Tensor, clamp: bool = True) -> torch.Tensor:
        x = self.dec(z)
        return x.clamp(0.0, 1.0) if clamp else x

    def arch_params(self) -> dict:
        return {"width": self.width, "latent_channels": self.latent_channels}


def encode(x: np.ndarray, codec: Codec) -> np.ndarray:
    """[3,H,W] image in [0,1] -> [C_lat,H/4,W/4] latent."""
    with torch.no_grad():
        return to_numpy(codec.encode_t(to_tensor(x, batch=True))[0])


def decode(z: np.ndarray, codec: Codec) -> np.ndarray:
    """Latent -> [3,H,W] image clamped to [0,1]."""
    with torch.no_grad():
        return to_numpy(codec.decode_t(to_tensor(z, batch=True))[0])


@dataclass
class PretrainConfig:
    lr: float = 1e-3
    epochs: int = 40
    batch_size: int = 8
    seed: int = 0
    val_fraction: float = 0.125
    width: int = 64
    cosine_decay: bool = True
    # training runs in this dtype for CPU speed; weights are promoted to the
    # package-wide float64 before the codec is returned
    compute_dtype: str = "float32"


def _psnr(a: torch.Tensor, b: torch.Tensor) -> float:
    mse = float(((a - b) ** 2).mean())
    return 99.0 if mse < 1e-10 else 10.0 * np.log10(1.0 / mse)


def train_codec(images: np.ndarray, cfg: PretrainConfig, log=None):
    """L2-reconstruction training; returns (codec, per-epoch validation PSNR)."""
    if len(images) == 0:
        raise ValueError("empty dataset")
    codec = Codec(width=cfg.width)
    init_weights(codec, cfg.seed)
    cdt = getattr(torch, cfg.compute_dtype)
    codec.to(cdt)
    data = to_tensor(images).to(cdt)
    n_val = max(1, int(len(data) * cfg.val_fraction)) if len(data) > 1 else 0
    train, val = (data[n_val:], data[:n_val]) if n_val else (data, data)
    opt = torch.optim.Adam(codec.parameters(), lr=cfg.lr)
    sched = (torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=cfg.epochs)
             if cfg.cosine_decay else None)
    g = seeded_generator(cfg.seed + 1)
    history = []
    for epoch in range(cfg.epochs):
        perm = torch.randperm(len(train), generator=g)
        for i in range(0, len(train), cfg.batch_size):
            batch = train[perm[i : i + cfg.batch_size]]
            recon = codec.decode_t(codec.encode_t(batch), clamp=False)
            loss = ((recon - batch) ** 2).mean()
            if not torch.isfinite(loss):
                raise RuntimeError(f"non-finite codec loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
        if sched is not None:
            sched.step()
        with torch.no_grad():
            val_psnr = _psnr(codec.decode_t(codec.encode_t(val)), val)
        history.append(val_psnr)
        if log is not None:
            log({"stage": "codec", "epoch": epoch, "val_psnr": val_psnr})
    codec.to(DTYPE)
    return codec, history
