"""Small convolutional classifier: multi-layer feature taps for the
perceptual loss, and the condition extracted from restored outputs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from ._torch_utils import DTYPE, init_weights, seeded_generator, to_numpy, to_tensor

# the distinguished null condition
NULL_CONDITION = None

Condition = int | None


class FeatureNet(nn.Module):
    """Conv stack with three tap layers and a linear classification head."""

    def __init__(self, n_classes: int = 8, width: int = 16):
        super().__init__()
        self.n_classes = n_classes
        self.width = width
        w = width
        self.block1 = nn.Sequential(nn.Conv2d(3, w, 3, stride=2, padding=1), nn.SiLU())
        self.block2 = nn.Sequential(nn.Conv2d(w, 2 * w, 3, stride=2, padding=1), nn.SiLU())
        self.block3 = nn.Sequential(nn.Conv2d(2 * w, 4 * w, 3, stride=2, padding=1), nn.SiLU())
        self.head = nn.Linear(4 * w, n_classes)
        self.to(DTYPE)

    def features_t(self, x: torch.Tensor) -> list[torch.Tensor]:
        f1 = self.block1(x)
        f2 = self.block2(f1)
        f3 = self.block3(f2)
        return [f1, f2, f3]

    def logits_t(self, x: torch.Tensor) -> torch.Tensor:
        f3 = self.features_t(x)[-1]
        return self.head(f3.mean(dim=(2, 3)))

    def arch_params(self) -> dict:
        return {"n_classes": self.n_classes, "width": self.width}


def features(x: np.ndarray, net: FeatureNet) -> list[np.ndarray]:
    """One feature map per tap layer; deterministic in (x, weights)."""
    with torch.no_grad():
        return [to_numpy(f[0]) for f in net.features_t(to_tensor(x, batch=True))]


def class_probabilities(x: np.ndarray, net: FeatureNet) -> np.ndarray:
    with torch.no_grad():
        return to_numpy(torch.softmax(net.logits_t(to_tensor(x, batch=True))[0], dim=0))


def predict_condition(x: np.ndarray, net: FeatureNet) -> Condition:
    """Argmax class; ties break toward the lower index."""
    return int(np.argmax(class_probabilities(x, net)))


@dataclass
class ClassifierConfig:
    lr: float = 2e-3
    epochs: int = 30
    batch_size: int = 16
    seed: int = 0
    val_fraction: float = 0.2
    width: int = 16
    # fp32 compute for CPU speed; weights promoted to float64 afterwards
    compute_dtype: str = "float32"


def train_classifier(images: np.ndarray, labels: np.ndarray, cfg: ClassifierConfig, log=None):
    """Cross-entropy training; returns (net, per-epoch held-out accuracy)."""
    classes = np.unique(labels)
    if len(classes) < 2:
        raise ValueError("need at least 2 classes")
    net = FeatureNet(n_classes=int(labels.max()) + 1, width=cfg.width)
    init_weights(net, cfg.seed)
    cdt = getattr(torch, cfg.compute_dtype)
    net.to(cdt)
    data = to_tensor(images).to(cdt)
    targets = torch.as_tensor(labels, dtype=torch.long)
    n_val = max(1, int(len(data) * cfg.val_fraction)) if len(data) > 1 else 0
    tr_x, va_x = (data[n_val:], data[:n_val]) if n_val else (data, data)
    tr_y, va_y = (targets[n_val:], targets[:n_val]) if n_val else (targets, targets)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    loss_fn = nn.CrossEntropyLoss()
    g = seeded_generator(cfg.seed + 1)
    history = []
    for epoch in range(cfg.epochs):
        perm = torch.randperm(len(tr_x), generator=g)
        for i in range(0, len(tr_x), cfg.batch_size):
            idx = perm[i : i + cfg.batch_size]
            loss = loss_fn(net.logits_t(tr_x[idx]), tr_y[idx])
            if not torch.isfinite(loss):
                raise RuntimeError(f"non-finite classifier loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
        with torch.no_grad():
            acc = float((net.logits_t(va_x).argmax(dim=1) == va_y).double().mean())
        history.append(acc)
        if log is not None:
            log({"stage": "classifier", "epoch": epoch, "val_acc": acc})
    net.to(DTYPE)
    return net, history
