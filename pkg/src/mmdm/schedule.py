"""Cosine noise schedule and the closed-form forward noising step."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import InvalidConfigError, InvalidInputError

ALPHA_CLIP = (1e-4, 0.9999)


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step alpha_t and cumulative products for T diffusion steps.

    Index t in [0, T) corresponds to noising step t+1 of the underlying
    chain; alpha_bars[t] is the product of alphas[0..t].
    """

    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def T(self) -> int:
        return len(self.alphas)

    @property
    def betas(self) -> np.ndarray:
        return 1.0 - self.alphas

    def validate(self) -> None:
        if self.alphas.shape != self.alpha_bars.shape or self.alphas.ndim != 1:
            raise InvalidConfigError("alphas and alpha_bars must be matching 1-D arrays")
        if not (np.all(self.alphas > 0) and np.all(self.alphas < 1)):
            raise InvalidConfigError("every alpha_t must lie in (0, 1)")
        if not np.all(np.diff(self.alpha_bars) < 0):
            raise InvalidConfigError("alpha_bars must be strictly decreasing")
        if self.T >= 100 and not (self.alpha_bars[0] > 0.99 and self.alpha_bars[-1] < 0.01):
            raise InvalidConfigError("alpha_bars endpoints out of range for a long schedule")


def make_cosine_schedule(T: int, s: float = 0.008) -> NoiseSchedule:
    """Cosine schedule: alpha_bar(t) = f(t)/f(0), f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2).

    Per-step alphas are ratios of consecutive alpha_bar values, clipped to
    ALPHA_CLIP so the reverse-step posterior variance stays bounded near the
    ends; alpha_bars is the cumulative product of the clipped alphas.
    """
    if T < 2:
        raise InvalidConfigError(f"schedule needs T >= 2, got {T}")
    t = np.arange(T + 1, dtype=np.float64)
    f = np.cos(((t / T + s) / (1.0 + s)) * np.pi / 2.0) ** 2
    f = f / f[0]
    alphas = np.clip(f[1:] / f[:-1], *ALPHA_CLIP)
    schedule = NoiseSchedule(alphas=alphas, alpha_bars=np.cumprod(alphas))
    schedule.validate()
    return schedule


def _broadcast_coeff(values: np.ndarray, t, ndim: int):
    """Index per-step coefficients at t and reshape for broadcasting over frames."""
    t = np.asarray(t)
    coeff = values[t]
    if t.ndim == 0:
        return coeff
    return coeff.reshape(t.shape + (1,) * (ndim - t.ndim))


def q_sample(x0, t, noise, schedule: NoiseSchedule):
    """Forward noising in closed form: x_t = sqrt(ab_t) * x0 + sqrt(1 - ab_t) * noise.

    ``t`` is a step index or an integer array of per-sample indices whose
    shape prefixes x0's. The caller supplies the noise (unit Gaussian by
    contract), which keeps this a pure function.
    """
    if tuple(x0.shape) != tuple(noise.shape):
        raise InvalidInputError(f"x0 shape {tuple(x0.shape)} != noise shape {tuple(noise.shape)}")
    t_arr = np.asarray(t)
    if np.any(t_arr < 0) or np.any(t_arr >= schedule.T):
        raise InvalidInputError(f"t={t} outside [0, {schedule.T})")
    ab = schedule.alpha_bars
    a = _broadcast_coeff(np.sqrt(ab), t_arr, np.ndim(x0))
    b = _broadcast_coeff(np.sqrt(1.0 - ab), t_arr, np.ndim(x0))
    if isinstance(x0, torch.Tensor):
        a = torch.as_tensor(a, dtype=x0.dtype, device=x0.device)
        b = torch.as_tensor(b, dtype=x0.dtype, device=x0.device)
        return a * x0 + b * noise
    a = np.asarray(a, dtype=x0.dtype)
    b = np.asarray(b, dtype=x0.dtype)
    return a * x0 + b * noise
