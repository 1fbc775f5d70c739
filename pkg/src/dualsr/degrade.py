"""Seeded synthetic degradation pipeline and paired-dataset assembly.

Fixed single-pass order: Gaussian blur -> downscale -> additive Gaussian
noise -> block-DCT quantization -> nearest-neighbor upscale back to the
original grid, so LQ and HQ share one latent shape.
"""

from __future__ import annotations

import csv
import json
import shutil
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from scipy.fft import dctn, idctn
from scipy.ndimage import gaussian_filter

from .toydata import save_image, load_image


@dataclass(frozen=True)
class DegradationRecipe:
    blur_sigma_range: tuple[float, float] = (0.4, 2.0)
    noise_sigma_range: tuple[float, float] = (0.0, 0.06)
    downscale_factor: int = 4
    compress_quality_range: tuple[int, int] = (40, 95)
    seed: int = 0

    def __post_init__(self):
        for lo, hi in (self.blur_sigma_range, self.noise_sigma_range, self.compress_quality_range):
            if lo > hi:
                raise ValueError(f"range not ordered: ({lo}, {hi})")
        if self.downscale_factor < 1:
            raise ValueError("downscale_factor must be >= 1")


@dataclass(frozen=True)
class DegradationRecord:
    """Sampled parameters for one LQ image; replaying reproduces it exactly."""

    blur_sigma: float
    noise_sigma: float
    quality: int
    noise_seed: int
    downscale_factor: int


def _block_dct_compress(x: np.ndarray, quality: int, block: int = 8) -> np.ndarray:
    """Quality-scaled uniform quantization of 8x8 DCT blocks, per channel."""
    if quality >= 100:
        return x
    c, h, w = x.shape
    ph = (-h) % block
    pw = (-w) % block
    xp = np.pad(x, ((0, 0), (0, ph), (0, pw)), mode="edge")
    u = np.arange(block)
    # coarser steps for higher frequencies: classic blocking artifacts
    step = (100 - quality) / 100.0 * 0.1 * (1.0 + u[:, None] + u[None, :])
    out = np.empty_like(xp)
    hh, ww = xp.shape[1], xp.shape[2]
    for ch in range(c):
        for by in range(0, hh, block):
            for bx in range(0, ww, block):
                blk = xp[ch, by : by + block, bx : bx + block]
                coef = dctn(blk, norm="ortho")
                coef = np.round(coef / step) * step
                out[ch, by : by + block, bx : bx + block] = idctn(coef, norm="ortho")
    return out[:, :h, :w]


def _downscale(x: np.ndarray, factor: int) -> np.ndarray:
    c, h, w = x.shape
    return x.reshape(c, h // factor, factor, w // factor, factor).mean(axis=(2, 4))


def _upscale_nearest(x: np.ndarray, factor: int) -> np.ndarray:
    return np.repeat(np.repeat(x, factor, axis=1), factor, axis=2)


def degrade_with_record(x_hq: np.ndarray, rec: DegradationRecord) -> np.ndarray:
    """Apply the pipeline with fixed parameters (replay path)."""
    c, h, w = x_hq.shape
    f = rec.downscale_factor
    if h % f or w % f:
        raise ValueError(f"dims ({h},{w}) not divisible by factor {f}")
    x = x_hq
    if rec.blur_sigma > 0:
        x = np.stack([gaussian_filter(x[ch], rec.blur_sigma, mode="reflect") for ch in range(c)])
    x = _downscale(x, f)
    if rec.noise_sigma > 0:
        noise_rng = np.random.default_rng(rec.noise_seed)
        x = x + noise_rng.normal(0.0, rec.noise_sigma, size=x.shape)
    x = _block_dct_compress(np.clip(x, 0.0, 1.0), rec.quality)
    x = _upscale_nearest(x, f)
    return np.clip(x, 0.0, 1.0)


def degrade(
    x_hq: np.ndarray, recipe: DegradationRecipe, rng: np.random.Generator
) -> tuple[np.ndarray, DegradationRecord]:
    """Sample per-image parameters from the recipe and degrade."""
    rec = DegradationRecord(
        blur_sigma=float(rng.uniform(*recipe.blur_sigma_range)),
        noise_sigma=float(rng.uniform(*recipe.noise_sigma_range)),
        quality=int(rng.integers(recipe.compress_quality_range[0], recipe.compress_quality_range[1] + 1)),
        noise_seed=int(rng.integers(0, 2**31)),
        downscale_factor=recipe.downscale_factor,
    )
    return degrade_with_record(x_hq, rec), rec


def make_pairs(hq_images: np.ndarray, recipe: DegradationRecipe):
    """One (LQ, record) per HQ image, deterministic under the recipe seed."""
    if len(hq_images) == 0:
        raise ValueError("empty HQ dataset")
    rng = np.random.default_rng(recipe.seed)
    lqs, recs = [], []
    for x in hq_images:
        lq, rec = degrade(x, recipe, rng)
        lqs.append(lq)
        recs.append(rec)
    return np.stack(lqs), recs


def write_pairs(hq_dir: Path, out_dir: Path, recipe: DegradationRecipe) -> Path:
    """Assemble the paired layout: hq/NNNN.png, lq/NNNN.png, records.jsonl."""
    hq_dir, out_dir = Path(hq_dir), Path(out_dir)
    (out_dir / "hq").mkdir(parents=True, exist_ok=True)
    (out_dir / "lq").mkdir(parents=True, exist_ok=True)
    names = sorted(p.name for p in hq_dir.glob("*.png"))
    if not names:
        raise ValueError(f"no PNG images in {hq_dir}")
    rng = np.random.default_rng(recipe.seed)
    with open(out_dir / "records.jsonl", "w") as f:
        for name in names:
            x_hq = load_image(hq_dir / name)
            x_lq, rec = degrade(x_hq, recipe, rng)
            save_image(x_hq, out_dir / "hq" / name)
            save_image(x_lq, out_dir / "lq" / name)
            f.write(json.dumps({"filename": name, **asdict(rec)}) + "\n")
    if (hq_dir / "labels.csv").exists():
        shutil.copy(hq_dir / "labels.csv", out_dir / "labels.csv")
    return out_dir


def read_pairs(pair_dir: Path):
    """Load (lq, hq, labels, records) from a paired directory."""
    pair_dir = Path(pair_dir)
    records = []
    with open(pair_dir / "records.jsonl") as f:
        for line in f:
            records.append(json.loads(line))
    names = [r["filename"] for r in records]
    lq = np.stack([load_image(pair_dir / "lq" / n) for n in names])
    hq = np.stack([load_image(pair_dir / "hq" / n) for n in names])
    labels = None
    if (pair_dir / "labels.csv").exists():
        by_name = {}
        with open(pair_dir / "labels.csv", newline="") as f:
            for row in csv.DictReader(f):
                by_name[row["filename"]] = int(row["label"])
        labels = np.asarray([by_name[n] for n in names], dtype=np.int64)
    return lq, hq, labels, records
