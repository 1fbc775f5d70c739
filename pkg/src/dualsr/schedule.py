"""Diffusion noise schedule and the closed-form noising / denoising maps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ScheduleError(ValueError):
    """Invalid schedule parameters or step indices."""


@dataclass(frozen=True)
class DiffusionSchedule:
    """Linear-beta noise schedule.

    ``alpha_bar`` has length ``T + 1`` with ``alpha_bar[0] == 1`` so that
    boundary cases are expressible; step indices run 1..T.
    """

    T: int
    beta: np.ndarray = field(repr=False)
    alpha_bar: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.T < 1:
            raise ScheduleError(f"T must be >= 1, got {self.T}")
        if self.beta.shape != (self.T,) or self.alpha_bar.shape != (self.T + 1,):
            raise ScheduleError("beta/alpha_bar lengths inconsistent with T")
        if self.alpha_bar[0] != 1.0:
            raise ScheduleError("alpha_bar[0] must equal 1")
        if not np.all(np.diff(self.alpha_bar) < 0):
            raise ScheduleError("alpha_bar must be strictly decreasing")
        if self.alpha_bar[-1] <= 0:
            raise ScheduleError("alpha_bar[T] must stay positive")

    def sigma(self, t: int) -> float:
        """Noise standard deviation sqrt(1 - alpha_bar[t])."""
        self._check_t(t, allow_zero=True)
        return float(np.sqrt(1.0 - self.alpha_bar[t]))

    def _check_t(self, t: int, allow_zero: bool = False) -> None:
        lo = 0 if allow_zero else 1
        if not (lo <= t <= self.T):
            raise ScheduleError(f"step index {t} outside [{lo}, {self.T}]")


def make_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> DiffusionSchedule:
    """Build a linear-beta schedule with cumulative products alpha_bar."""
    if T < 1:
        raise ScheduleError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ScheduleError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha_bar = np.empty(T + 1, dtype=np.float64)
    alpha_bar[0] = 1.0
    alpha_bar[1:] = np.cumprod(1.0 - beta)
    return DiffusionSchedule(T=T, beta=beta, alpha_bar=alpha_bar)


def _coeffs(sched: DiffusionSchedule, t: int) -> tuple[float, float]:
    sched._check_t(t, allow_zero=True)
    ab = float(sched.alpha_bar[t])
    return np.sqrt(ab), np.sqrt(1.0 - ab)


def add_noise(z0, eps, t: int, sched: DiffusionSchedule):
    """Forward noising: z_t = sqrt(ab_t) * z0 + sqrt(1 - ab_t) * eps.

    Works on numpy arrays and torch tensors alike (scalar coefficients).
    """
    if tuple(z0.shape) != tuple(eps.shape):
        raise ValueError(f"shape mismatch: {tuple(z0.shape)} vs {tuple(eps.shape)}")
    a, s = _coeffs(sched, t)
    return a * z0 + s * eps


def predict_x0(z_t, eps_hat, t: int, sched: DiffusionSchedule):
    """Recover the clean latent: (z_t - sqrt(1 - ab_t) * eps_hat) / sqrt(ab_t)."""
    if tuple(z_t.shape) != tuple(eps_hat.shape):
        raise ValueError(f"shape mismatch: {tuple(z_t.shape)} vs {tuple(eps_hat.shape)}")
    a, s = _coeffs(sched, t)
    return (z_t - s * eps_hat) / a
