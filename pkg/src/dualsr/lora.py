"""Low-rank adapters: targetable conv/linear layers, grouping, application,
and merge semantics."""

from __future__ import annotations

import copy
from contextlib import contextmanager
from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from ._torch_utils import DTYPE, seeded_generator


class LoraConv2d(nn.Conv2d):
    """Conv2d with a transient list of low-rank deltas applied additively.

    Each term is (A: [r, fan_in], B: [out, r]) on the flattened kernel; the
    effective weight is W + sum(B @ A reshaped).
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.adapter_terms: list[tuple[torch.Tensor, torch.Tensor]] = []

    @property
    def flat_shape(self) -> tuple[int, int]:
        out_ch = self.weight.shape[0]
        return out_ch, int(self.weight.numel() // out_ch)

    def forward(self, x):
        y = super().forward(x)
        for A, B in self.adapter_terms:
            delta = (B @ A).view(self.weight.shape)
            y = y + F.conv2d(x, delta, None, self.stride, self.padding)
        return y


class LoraLinear(nn.Linear):
    """Linear layer with transient low-rank deltas, same contract as LoraConv2d."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.adapter_terms: list[tuple[torch.Tensor, torch.Tensor]] = []

    @property
    def flat_shape(self) -> tuple[int, int]:
        return tuple(self.weight.shape)

    def forward(self, x):
        y = super().forward(x)
        for A, B in self.adapter_terms:
            y = y + F.linear(x, B @ A)
        return y


_TARGET_TYPES = (LoraConv2d, LoraLinear)


def target_layer_shapes(net: nn.Module) -> dict[str, tuple[int, int]]:
    """Stable layer-identifier -> (fan_out, fan_in) for every targetable layer."""
    return {
        name: mod.flat_shape
        for name, mod in net.named_modules()
        if isinstance(mod, _TARGET_TYPES)
    }


@dataclass
class LoraAdapter:
    """Per-layer (A, B) pairs; delta is B @ A per target layer."""

    rank: int
    role: str  # "pixel" | "semantic"
    layers: dict[str, tuple[torch.Tensor, torch.Tensor]] = field(default_factory=dict)

    def parameters(self) -> list[torch.Tensor]:
        out = []
        for A, B in self.layers.values():
            out.extend([A, B])
        return out

    def set_trainable(self, trainable: bool) -> None:
        for p in self.parameters():
            p.requires_grad_(trainable)

    def clone(self) -> "LoraAdapter":
        layers = {
            lid: (A.detach().clone(), B.detach().clone())
            for lid, (A, B) in self.layers.items()
        }
        return LoraAdapter(rank=self.rank, role=self.role, layers=layers)


@dataclass
class PisaGroup:
    """Frozen pixel adapter plus trainable semantic adapter."""

    pixel: LoraAdapter
    semantic: LoraAdapter

    def __post_init__(self):
        self.pixel.set_trainable(False)

    @property
    def adapters(self) -> list[LoraAdapter]:
        return [self.pixel, self.semantic]


def init_lora(
    target_layers: dict[str, tuple[int, int]],
    rank: int = 4,
    seed: int = 0,
    role: str = "pixel",
    init_std: float = 0.02,
) -> LoraAdapter:
    """A ~ N(0, init_std^2), B = 0: the initial delta is exactly zero."""
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    g = seeded_generator(seed)
    layers = {}
    for lid, (fan_out, fan_in) in target_layers.items():
        if rank > min(fan_in, fan_out):
            raise ValueError(
                f"rank {rank} exceeds min(fan_in, fan_out)={min(fan_in, fan_out)} at layer {lid}"
            )
        A = torch.empty(rank, fan_in, dtype=DTYPE).normal_(0.0, init_std, generator=g)
        B = torch.zeros(fan_out, rank, dtype=DTYPE)
        layers[lid] = (A, B)
    return LoraAdapter(rank=rank, role=role, layers=layers)


def _resolve(net: nn.Module, lid: str):
    try:
        mod = net.get_submodule(lid)
    except AttributeError as e:
        raise KeyError(f"unknown layer identifier: {lid}") from e
    if not isinstance(mod, _TARGET_TYPES):
        raise KeyError(f"layer {lid} is not adapter-targetable")
    return mod


@contextmanager
def applied(net: nn.Module, adapters: list[LoraAdapter]):
    """Temporarily install the adapters' deltas into the network layers."""
    installed = []
    try:
        for ad in adapters:
            for lid, (A, B) in ad.layers.items():
                mod = _resolve(net, lid)
                mod.adapter_terms.append((A, B))
                installed.append(mod)
        yield net
    finally:
        for mod in installed:
            mod.adapter_terms.pop()


def merge(net: nn.Module, adapters: list[LoraAdapter]) -> nn.Module:
    """New network with W <- W + sum(B @ A) materialized; base untouched."""
    merged = copy.deepcopy(net)
    for ad in adapters:
        for lid, (A, B) in ad.layers.items():
            mod = _resolve(merged, lid)
            with torch.no_grad():
                mod.weight += (B @ A).view(mod.weight.shape)
    return merged
