"""Small torch helpers shared by the network modules."""

from __future__ import annotations

import numpy as np
import torch

DTYPE = torch.float64


def to_tensor(x, batch: bool = False) -> torch.Tensor:
    """numpy -> float64 tensor; optionally add a leading batch axis."""
    t = torch.as_tensor(np.asarray(x), dtype=DTYPE)
    if batch and t.ndim == 3:
        t = t.unsqueeze(0)
    return t


def to_numpy(t: torch.Tensor) -> np.ndarray:
    return t.detach().cpu().numpy()


def seeded_generator(seed: int) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(int(seed))
    return g


def init_weights(module: torch.nn.Module, seed: int) -> None:
    """Deterministic Gaussian init for all conv/linear weights."""
    g = seeded_generator(seed)
    for m in module.modules():
        w = getattr(m, "weight", None)
        if isinstance(w, torch.nn.Parameter) and w.ndim >= 2:
            fan_in = int(np.prod(w.shape[1:]))
            with torch.no_grad():
                w.normal_(0.0, (1.0 / fan_in) ** 0.5, generator=g)
            b = getattr(m, "bias", None)
            if isinstance(b, torch.nn.Parameter):
                with torch.no_grad():
                    b.zero_()
