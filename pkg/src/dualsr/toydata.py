"""Procedural labeled texture generator for the toy HQ dataset."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from PIL import Image

CLASS_NAMES = [
    "checkerboard",
    "hstripes",
    "vstripes",
    "diagstripes",
    "lineargrad",
    "radialgrad",
    "blobs",
    "rings",
]


def _two_colors(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    c1 = rng.uniform(0.0, 0.45, size=3)
    c2 = rng.uniform(0.55, 1.0, size=3)
    return c1, c2


def _mask_to_rgb(mask: np.ndarray, c1: np.ndarray, c2: np.ndarray) -> np.ndarray:
    # mask in [0,1], broadcast to 3 channels
    return c1[:, None, None] * (1.0 - mask) + c2[:, None, None] * mask


def make_texture(class_idx: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """One [3, size, size] float image in [0,1] from the given texture family."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    c1, c2 = _two_colors(rng)
    name = CLASS_NAMES[class_idx]

    if name == "checkerboard":
        cell = int(rng.choice([8, 16, 32]))
        mask = (((yy // cell) + (xx // cell)) % 2).astype(np.float64)
    elif name == "hstripes":
        period = rng.uniform(8, 24)
        phase = rng.uniform(0, 2 * np.pi)
        mask = 0.5 + 0.5 * np.sin(2 * np.pi * yy / period + phase)
    elif name == "vstripes":
        period = rng.uniform(8, 24)
        phase = rng.uniform(0, 2 * np.pi)
        mask = 0.5 + 0.5 * np.sin(2 * np.pi * xx / period + phase)
    elif name == "diagstripes":
        period = rng.uniform(10, 28)
        phase = rng.uniform(0, 2 * np.pi)
        sgn = rng.choice([-1.0, 1.0])
        mask = 0.5 + 0.5 * np.sin(2 * np.pi * (xx + sgn * yy) / period + phase)
    elif name == "lineargrad":
        ang = rng.uniform(0, 2 * np.pi)
        proj = np.cos(ang) * xx + np.sin(ang) * yy
        proj = (proj - proj.min()) / (proj.max() - proj.min() + 1e-12)
        mask = proj
    elif name == "radialgrad":
        cy, cx = rng.uniform(0.25 * size, 0.75 * size, size=2)
        r = np.hypot(yy - cy, xx - cx)
        mask = np.clip(r / (0.75 * size), 0.0, 1.0)
    elif name == "blobs":
        mask = np.zeros((size, size))
        for _ in range(int(rng.integers(3, 7))):
            cy, cx = rng.uniform(0, size, size=2)
            sig = rng.uniform(4, 10)
            mask += np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sig**2))
        mask = np.clip(mask, 0.0, 1.0)
    elif name == "rings":
        cy, cx = rng.uniform(0.3 * size, 0.7 * size, size=2)
        period = rng.uniform(10, 22)
        r = np.hypot(yy - cy, xx - cx)
        mask = 0.5 + 0.5 * np.sin(2 * np.pi * r / period)
    else:
        raise ValueError(f"unknown class index {class_idx}")

    return np.clip(_mask_to_rgb(mask, c1, c2), 0.0, 1.0)


def generate_dataset(n_images: int, size: int = 64, seed: int = 0):
    """Return (images [N,3,H,W], labels [N]); classes cycle round-robin."""
    rng = np.random.default_rng(seed)
    images = np.empty((n_images, 3, size, size), dtype=np.float64)
    labels = np.empty(n_images, dtype=np.int64)
    for i in range(n_images):
        k = i % len(CLASS_NAMES)
        images[i] = make_texture(k, size, rng)
        labels[i] = k
    return images, labels


def save_image(x: np.ndarray, path: Path) -> None:
    """Write a [3,H,W] float image in [0,1] as 8-bit RGB PNG."""
    arr = np.clip(np.round(x * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr.transpose(1, 2, 0)).save(path)


def load_image(path: Path) -> np.ndarray:
    """Read a PNG as a [3,H,W] float image in [0,1]."""
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
    return arr.transpose(2, 0, 1)


def write_dataset(out_dir: Path, n_images: int, size: int = 64, seed: int = 0) -> Path:
    """Emit NNNN.png files plus labels.csv; returns the directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    images, labels = generate_dataset(n_images, size=size, seed=seed)
    with open(out_dir / "labels.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["filename", "label", "class_name"])
        for i in range(n_images):
            fname = f"{i:04d}.png"
            save_image(images[i], out_dir / fname)
            writer.writerow([fname, int(labels[i]), CLASS_NAMES[labels[i]]])
    return out_dir


def read_dataset(dir_path: Path):
    """Load images and labels written by write_dataset."""
    dir_path = Path(dir_path)
    images, labels = [], []
    with open(dir_path / "labels.csv", newline="") as f:
        for row in csv.DictReader(f):
            images.append(load_image(dir_path / row["filename"]))
            labels.append(int(row["label"]))
    return np.stack(images), np.asarray(labels, dtype=np.int64)
