"""Finite-difference verification of the gradient delivery contracts."""

import numpy as np
import torch
import torch.nn as nn

from dualsr._torch_utils import DTYPE, init_weights, to_tensor
from dualsr.backbone import Denoiser
from dualsr.losses import GuidanceConfig, cotangent_loss, csd_gradient, fake_denoising_loss
from dualsr.schedule import make_schedule


class TinyStudent(nn.Module):
    """Residual student with 6 parameters: z_sem = z_L - conv1x1(z_L)."""

    def __init__(self):
        super().__init__()
        self.conv = nn.Conv2d(2, 2, 1)
        self.to(DTYPE)

    def forward(self, z_L):
        return z_L - self.conv(z_L)


class TinyFake(nn.Module):
    """1-layer eps-predictor with 6 parameters; ignores (t, c)."""

    def __init__(self):
        super().__init__()
        self.conv = nn.Conv2d(2, 2, 1)
        self.role = "fake"
        self.to(DTYPE)

    def forward(self, z, t, c):
        return self.conv(z)


def _flat_params(net):
    return torch.cat([p.reshape(-1) for p in net.parameters()])


def _set_flat(net, flat):
    i = 0
    with torch.no_grad():
        for p in net.parameters():
            n = p.numel()
            p.copy_(flat[i : i + n].view(p.shape))
            i += n


def test_csd_cotangent_matches_finite_differences():
    sched = make_schedule(20)
    teacher = Denoiser(latent_channels=2, width=8, n_classes=3, role="teacher")
    init_weights(teacher, 0)
    student = TinyStudent()
    torch.manual_seed(1)
    for p in student.parameters():
        with torch.no_grad():
            p.normal_(0.0, 0.3)

    z_L = to_tensor(np.random.default_rng(2).standard_normal((1, 2, 8, 8)))
    t, eps = 6, to_tensor(np.random.default_rng(3).standard_normal((1, 2, 8, 8))[0])

    # freeze the cotangent at the current parameters
    with torch.no_grad():
        z0 = student(z_L)[0]
    grad = csd_gradient(z0, teacher, 1, sched, GuidanceConfig(7.5),
                        np.random.default_rng(4), fixed_t=t, fixed_eps=eps)

    z_sem = student(z_L)[0]
    loss = cotangent_loss(grad, z_sem)
    loss.backward()
    analytic = torch.cat([p.grad.reshape(-1) for p in student.parameters()])

    # central differences of the scalar surrogate <g, z_sem(theta)>
    flat0 = _flat_params(student).detach().clone()
    h = 1e-6
    fd = torch.zeros_like(flat0)
    for k in range(len(flat0)):
        for sign in (+1, -1):
            pert = flat0.clone()
            pert[k] += sign * h
            _set_flat(student, pert)
            with torch.no_grad():
                s = float((grad.g * student(z_L)[0]).sum())
            fd[k] += sign * s
        fd[k] /= 2 * h
    _set_flat(student, flat0)

    rel = (analytic - fd).abs().max() / (fd.abs().max() + 1e-300)
    assert float(rel) <= 1e-3


def test_fake_score_loss_matches_finite_differences():
    sched = make_schedule(20)
    fake = TinyFake()
    torch.manual_seed(5)
    for p in fake.parameters():
        with torch.no_grad():
            p.normal_(0.0, 0.3)
    zb = to_tensor(np.random.default_rng(6).standard_normal((2, 2, 8, 8)))
    cb = torch.as_tensor([0, 1])
    t, eps = 9, to_tensor(np.random.default_rng(7).standard_normal((2, 2, 8, 8)))

    loss = fake_denoising_loss(fake, zb, cb, sched, np.random.default_rng(8),
                               fixed_t=t, fixed_eps=eps)
    loss.backward()
    analytic = torch.cat([p.grad.reshape(-1) for p in fake.parameters()])

    flat0 = _flat_params(fake).detach().clone()
    h = 1e-6
    fd = torch.zeros_like(flat0)
    for k in range(len(flat0)):
        vals = []
        for sign in (+1, -1):
            pert = flat0.clone()
            pert[k] += sign * h
            _set_flat(fake, pert)
            with torch.no_grad():
                vals.append(float(fake_denoising_loss(
                    fake, zb, cb, sched, np.random.default_rng(8),
                    fixed_t=t, fixed_eps=eps)))
        fd[k] = (vals[0] - vals[1]) / (2 * h)
    _set_flat(fake, flat0)

    rel = (analytic - fd).abs().max() / (fd.abs().max() + 1e-300)
    assert float(rel) <= 1e-3
