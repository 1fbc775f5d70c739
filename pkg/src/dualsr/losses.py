"""Training signals: l2, feature-space perceptual distance, CFG combination,
and the score-distillation latent gradients (CSD and the VSD ablation)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ._torch_utils import DTYPE, to_tensor
from .backbone import Denoiser, eps_predict
from .perception import FeatureNet
from .schedule import DiffusionSchedule, add_noise, predict_x0


@dataclass(frozen=True)
class GuidanceConfig:
    lambda_cfg: float = 7.5

    def __post_init__(self):
        if not np.isfinite(self.lambda_cfg):
            raise ValueError("lambda_cfg must be finite")


@dataclass
class LatentGradient:
    """Latent-space distillation gradient to inject as a fixed cotangent."""

    g: torch.Tensor
    w_t: float
    t: int
    eps: torch.Tensor


class NonFiniteGradientError(RuntimeError):
    def __init__(self, kind: str, t: int, w_t: float):
        super().__init__(f"non-finite {kind} gradient at t={t}, w_t={w_t}")
        self.t = t
        self.w_t = w_t


def l2_loss(x_pred, x_gt):
    """Mean squared error over all elements (numpy or torch)."""
    if tuple(x_pred.shape) != tuple(x_gt.shape):
        raise ValueError(f"shape mismatch: {tuple(x_pred.shape)} vs {tuple(x_gt.shape)}")
    d = x_pred - x_gt
    return (d * d).mean()


def _unit_normalize(f: torch.Tensor, eps: float = 1e-10) -> torch.Tensor:
    # unit-normalize the channel vector at every spatial location
    return f / (f.pow(2).sum(dim=1, keepdim=True).sqrt() + eps)


def perceptual_loss(x_pred, x_gt, featnet: FeatureNet):
    """Sum over tap layers of the MSE between unit-normalized feature maps.

    Numpy inputs give a float; torch inputs stay on the autograd tape.
    """
    if tuple(x_pred.shape) != tuple(x_gt.shape):
        raise ValueError(f"shape mismatch: {tuple(x_pred.shape)} vs {tuple(x_gt.shape)}")
    is_np = not torch.is_tensor(x_pred)
    a = to_tensor(x_pred, batch=True) if is_np else x_pred
    b = to_tensor(x_gt, batch=True) if is_np else x_gt
    if a.ndim == 3:
        a, b = a.unsqueeze(0), b.unsqueeze(0)
    def distance(x, y):
        fa = featnet.features_t(x)
        fb = featnet.features_t(y)
        return sum(
            ((_unit_normalize(fx) - _unit_normalize(fy)) ** 2).mean()
            for fx, fy in zip(fa, fb)
        )

    if is_np:
        with torch.no_grad():
            return float(distance(a, b))
    return distance(a, b)


def cfg_combine(eps_uncond, eps_cond, lambda_cfg: float):
    """eps_uncond + lambda_cfg * (eps_cond - eps_uncond)."""
    if tuple(eps_uncond.shape) != tuple(eps_cond.shape):
        raise ValueError("shape mismatch between unconditional and conditional outputs")
    return eps_uncond + lambda_cfg * (eps_cond - eps_uncond)


def _sample_t_eps(z: torch.Tensor, sched: DiffusionSchedule, rng: np.random.Generator,
                  fixed_t, fixed_eps):
    t = int(fixed_t) if fixed_t is not None else int(rng.integers(1, sched.T + 1))
    if fixed_eps is not None:
        eps = fixed_eps if torch.is_tensor(fixed_eps) else to_tensor(fixed_eps)
    else:
        eps = to_tensor(rng.standard_normal(tuple(z.shape)))
    return t, eps


def _weight(f_cfg: torch.Tensor, z_sem: torch.Tensor) -> float:
    # C*S / ||f(z_t, eps_cfg) - z_sem||_1
    n = float((f_cfg - z_sem).abs().sum())
    return float(f_cfg.numel()) / n if n > 0 else float("inf")


def csd_gradient(z_sem, teacher: Denoiser, c, sched: DiffusionSchedule,
                 gcfg: GuidanceConfig, rng: np.random.Generator, *,
                 fixed_t=None, fixed_eps=None, fixed_w=None) -> LatentGradient:
    """Classifier score distillation gradient on a single latent [C,H,W].

    Teacher evaluations are detached; the returned g is the fixed cotangent
    the trainer chains through the student's parameters.
    """
    z = (to_tensor(z_sem) if not torch.is_tensor(z_sem) else z_sem).detach()
    t, eps = _sample_t_eps(z, sched, rng, fixed_t, fixed_eps)
    z_t = add_noise(z, eps, t, sched)
    with torch.no_grad():
        e_uncond = eps_predict(z_t, t, None, teacher)
        e_cond = eps_predict(z_t, t, c, teacher)
    e_cfg = cfg_combine(e_uncond, e_cond, gcfg.lambda_cfg)
    f_uncond = predict_x0(z_t, e_uncond, t, sched)
    f_cfg = predict_x0(z_t, e_cfg, t, sched)
    w_t = float(fixed_w) if fixed_w is not None else _weight(f_cfg, z)
    g = w_t * (f_uncond - f_cfg)
    if not torch.isfinite(g).all():
        raise NonFiniteGradientError("CSD", t, w_t)
    return LatentGradient(g=g, w_t=w_t, t=t, eps=eps)


def vsd_gradient(z_sem, teacher: Denoiser, fake: Denoiser, c,
                 sched: DiffusionSchedule, gcfg: GuidanceConfig,
                 rng: np.random.Generator, *,
                 fixed_t=None, fixed_eps=None, fixed_w=None) -> LatentGradient:
    """Variational score distillation gradient (ablation path)."""
    if fake.role != "fake":
        raise ValueError(f"fake network has role {fake.role!r}, expected 'fake'")
    z = (to_tensor(z_sem) if not torch.is_tensor(z_sem) else z_sem).detach()
    t, eps = _sample_t_eps(z, sched, rng, fixed_t, fixed_eps)
    z_t = add_noise(z, eps, t, sched)
    with torch.no_grad():
        e_uncond = eps_predict(z_t, t, None, teacher)
        e_cond = eps_predict(z_t, t, c, teacher)
        e_fake = eps_predict(z_t, t, c, fake)
    e_cfg = cfg_combine(e_uncond, e_cond, gcfg.lambda_cfg)
    f_fake = predict_x0(z_t, e_fake, t, sched)
    f_cfg = predict_x0(z_t, e_cfg, t, sched)
    w_t = float(fixed_w) if fixed_w is not None else _weight(f_cfg, z)
    g = w_t * (f_fake - f_cfg)
    if not torch.isfinite(g).all():
        raise NonFiniteGradientError("VSD", t, w_t)
    return LatentGradient(g=g, w_t=w_t, t=t, eps=eps)


def cotangent_loss(grad: LatentGradient, z_sem: torch.Tensor) -> torch.Tensor:
    """<stop-gradient(g), z_sem>: backprop delivers g through dz/dtheta."""
    return (grad.g.detach() * z_sem).sum()


def fake_denoising_loss(fake: Denoiser, z_sem_batch: torch.Tensor, c_batch: torch.Tensor,
                        sched: DiffusionSchedule, rng: np.random.Generator, *,
                        fixed_t=None, fixed_eps=None) -> torch.Tensor:
    """Denoising MSE of the fake network on the student's current outputs."""
    b = z_sem_batch.shape[0]
    if b == 0:
        raise ValueError("empty batch")
    if fixed_t is not None:
        t = torch.full((b,), int(fixed_t), dtype=torch.long)
    else:
        t = torch.as_tensor(rng.integers(1, sched.T + 1, size=b))
    if fixed_eps is not None:
        eps = fixed_eps if torch.is_tensor(fixed_eps) else to_tensor(fixed_eps)
    else:
        eps = to_tensor(rng.standard_normal(tuple(z_sem_batch.shape)))
    ab = torch.as_tensor(sched.alpha_bar, dtype=DTYPE)[t][:, None, None, None]
    z_t = ab.sqrt() * z_sem_batch.detach() + (1 - ab).sqrt() * eps
    return ((fake(z_t, t, c_batch) - eps) ** 2).mean()


def update_fake_score(fake: Denoiser, z_sem_batch, c_batch, sched: DiffusionSchedule,
                      rng: np.random.Generator, optimizer=None, lr: float = 1e-3) -> float:
    """One optimizer step on the fake-score denoising loss; returns the loss."""
    zb = z_sem_batch if torch.is_tensor(z_sem_batch) else to_tensor(z_sem_batch)
    cb = c_batch if torch.is_tensor(c_batch) else torch.as_tensor(np.asarray(c_batch))
    opt = optimizer or torch.optim.Adam(fake.parameters(), lr=lr)
    loss = fake_denoising_loss(fake, zb, cb, sched, rng)
    if not torch.isfinite(loss):
        raise RuntimeError("non-finite fake-score loss")
    opt.zero_grad()
    loss.backward()
    opt.step()
    return float(loss.detach())


def verify_loss_algebra(seed: int = 0, n_cases: int = 3) -> list[dict]:
    """Null-case and decomposition checks on synthetic networks.

    Returns one row per check with its max absolute residual.
    """
    from ._torch_utils import init_weights
    from .schedule import make_schedule

    rng = np.random.default_rng(seed)
    sched = make_schedule(20)
    teacher = Denoiser(latent_channels=2, width=8, n_classes=3, role="teacher")
    init_weights(teacher, seed + 1)
    fake = Denoiser(latent_channels=2, width=8, n_classes=3, role="fake")
    init_weights(fake, seed + 2)
    rows = []

    def residual(name, value):
        rows.append({"check": name, "max_abs_residual": float(value)})

    for i in range(n_cases):
        z = to_tensor(rng.standard_normal((2, 8, 8)))
        c = int(rng.integers(0, 3))
        t = int(rng.integers(1, sched.T + 1))
        eps = to_tensor(rng.standard_normal((2, 8, 8)))

        g0 = csd_gradient(z, teacher, c, sched, GuidanceConfig(0.0), rng,
                          fixed_t=t, fixed_eps=eps)
        residual(f"csd_zero_guidance[{i}]", g0.g.abs().max())

        lam = 7.5
        w = 1.0
        csd = csd_gradient(z, teacher, c, sched, GuidanceConfig(lam), rng,
                           fixed_t=t, fixed_eps=eps, fixed_w=w)
        vsd_l = vsd_gradient(z, teacher, fake, c, sched, GuidanceConfig(lam), rng,
                             fixed_t=t, fixed_eps=eps, fixed_w=w)
        vsd_0 = vsd_gradient(z, teacher, fake, c, sched, GuidanceConfig(0.0), rng,
                             fixed_t=t, fixed_eps=eps, fixed_w=w)
        residual(f"vsd_decomposition[{i}]", (vsd_l.g - vsd_0.g - csd.g).abs().max())

    # conditional == unconditional: tie every embedding row together
    tied = Denoiser(latent_channels=2, width=8, n_classes=3, role="teacher")
    init_weights(tied, seed + 3)
    with torch.no_grad():
        tied.cond_embed.weight.copy_(tied.cond_embed.weight[tied.null_index].expand_as(
            tied.cond_embed.weight).clone())
    z = to_tensor(rng.standard_normal((2, 8, 8)))
    g = csd_gradient(z, tied, 1, sched, GuidanceConfig(7.5), rng, fixed_t=5,
                     fixed_eps=to_tensor(rng.standard_normal((2, 8, 8))))
    residual("csd_cond_equals_uncond", g.g.abs().max())
    return rows
