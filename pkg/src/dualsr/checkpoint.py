"""Binary checkpoint bundle: JSON header + named float64 tensors + content hash."""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ._torch_utils import DTYPE
from .backbone import Denoiser
from .codec import Codec
from .lora import LoraAdapter
from .perception import FeatureNet
from .schedule import DiffusionSchedule, make_schedule

MAGIC = b"DSR1"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


@dataclass
class Bundle:
    """Everything a run can persist; any component may be absent."""

    schedule_params: dict = field(default_factory=lambda: {"T": 100, "beta_start": 1e-4, "beta_end": 0.02})
    config: dict = field(default_factory=dict)
    tag: str = "untagged"
    codec: Codec | None = None
    featnet: FeatureNet | None = None
    teacher: Denoiser | None = None
    student_base: Denoiser | None = None
    pix: LoraAdapter | None = None
    sem: LoraAdapter | None = None

    @property
    def schedule(self) -> DiffusionSchedule:
        p = self.schedule_params
        return make_schedule(int(p["T"]), float(p["beta_start"]), float(p["beta_end"]))

    def components(self) -> list[str]:
        return [n for n in ("codec", "featnet", "teacher", "student_base", "pix", "sem")
                if getattr(self, n) is not None]


def _collect_tensors(bundle: Bundle) -> tuple[dict[str, np.ndarray], dict]:
    tensors: dict[str, np.ndarray] = {}
    arch: dict = {}
    for name in ("codec", "featnet", "teacher", "student_base"):
        mod = getattr(bundle, name)
        if mod is None:
            continue
        arch[name] = mod.arch_params()
        for key, val in mod.state_dict().items():
            tensors[f"{name}/{key}"] = val.detach().cpu().numpy().astype(np.float64)
    for name in ("pix", "sem"):
        ad = getattr(bundle, name)
        if ad is None:
            continue
        arch[name] = {"rank": ad.rank, "role": ad.role}
        for lid, (A, B) in ad.layers.items():
            tensors[f"adapter_{name}/{lid}/A"] = A.detach().cpu().numpy().astype(np.float64)
            tensors[f"adapter_{name}/{lid}/B"] = B.detach().cpu().numpy().astype(np.float64)
    return tensors, arch


def save_checkpoint(bundle: Bundle, path: Path) -> None:
    tensors, arch = _collect_tensors(bundle)
    header = {
        "format_version": FORMAT_VERSION,
        "tag": bundle.tag,
        "schedule": bundle.schedule_params,
        "config": bundle.config,
        "components": bundle.components(),
        "arch": arch,
    }
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    hjson = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    buf.write(struct.pack("<Q", len(hjson)))
    buf.write(hjson)
    buf.write(struct.pack("<Q", len(tensors)))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        nb = name.encode()
        buf.write(struct.pack("<I", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    payload = buf.getvalue()
    digest = hashlib.sha256(payload).digest()
    Path(path).write_bytes(payload + digest)


def load_checkpoint(path: Path) -> Bundle:
    raw = Path(path).read_bytes()
    if len(raw) < 4 + 4 + 8 + 32:
        raise CheckpointError("truncated checkpoint file")
    payload, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise CheckpointError("checkpoint content hash mismatch")
    buf = io.BytesIO(payload)
    if buf.read(4) != MAGIC:
        raise CheckpointError("bad magic; not a checkpoint file")
    (version,) = struct.unpack("<I", buf.read(4))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})")
    (hlen,) = struct.unpack("<Q", buf.read(8))
    header = json.loads(buf.read(hlen))
    (n_tensors,) = struct.unpack("<Q", buf.read(8))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        (nlen,) = struct.unpack("<I", buf.read(4))
        name = buf.read(nlen).decode()
        (ndim,) = struct.unpack("<I", buf.read(4))
        shape = struct.unpack(f"<{ndim}Q", buf.read(8 * ndim))
        count = int(np.prod(shape)) if shape else 1
        tensors[name] = np.frombuffer(buf.read(8 * count), dtype=np.float64).reshape(shape)

    bundle = Bundle(schedule_params=header["schedule"], config=header["config"], tag=header["tag"])
    bundle.schedule  # validates the schedule invariants
    arch = header["arch"]
    builders = {
        "codec": Codec,
        "featnet": FeatureNet,
        "teacher": Denoiser,
        "student_base": Denoiser,
    }
    for name, cls in builders.items():
        if name not in header["components"]:
            continue
        mod = cls(**arch[name])
        prefix = f"{name}/"
        state = {
            key[len(prefix):]: torch.as_tensor(val.copy(), dtype=DTYPE)
            for key, val in tensors.items() if key.startswith(prefix)
        }
        mod.load_state_dict(state)
        setattr(bundle, name, mod)
    for name, role in (("pix", "pixel"), ("sem", "semantic")):
        if name not in header["components"]:
            continue
        prefix = f"adapter_{name}/"
        layers: dict[str, tuple[torch.Tensor, torch.Tensor]] = {}
        lids = sorted({key[len(prefix):].rsplit("/", 1)[0]
                       for key in tensors if key.startswith(prefix)})
        for lid in lids:
            A = torch.as_tensor(tensors[f"{prefix}{lid}/A"].copy(), dtype=DTYPE)
            B = torch.as_tensor(tensors[f"{prefix}{lid}/B"].copy(), dtype=DTYPE)
            layers[lid] = (A, B)
        meta = arch[name]
        setattr(bundle, name, LoraAdapter(rank=int(meta["rank"]), role=meta["role"], layers=layers))
    return bundle
