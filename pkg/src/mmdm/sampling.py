"""Reverse diffusion: guided clean-sequence prediction and the sampling loop.

The denoiser predicts the clean sequence directly at every step, so each
reverse step forms the standard DDPM posterior q(x_{t-1} | x_t, x0_hat) from
the prediction and draws the next sample from it; the final step returns the
prediction itself with no added noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .errors import InvalidConfigError, NumericFailureError
from .schedule import NoiseSchedule


@dataclass(frozen=True)
class GuidanceConfig:
    """Classifier-free guidance: scale s and train-time condition dropout."""

    scale: float = 2.5
    condition_dropout_prob: float = 0.1

    def validate(self) -> None:
        if not (math.isfinite(self.scale) and self.scale >= 0):
            raise InvalidConfigError(f"guidance scale must be >= 0, got {self.scale}")
        if not 0.0 <= self.condition_dropout_prob < 1.0:
            raise InvalidConfigError(
                f"condition_dropout_prob must be in [0, 1), got {self.condition_dropout_prob}"
            )


def guided_x0(denoiser, x_t, t: int, condition, guidance: GuidanceConfig):
    """Classifier-free combination u + s * (c - u) of the two denoiser branches.

    ``denoiser(x_t, t, condition)`` must accept condition None for the
    unconditional branch. s = 0 and s = 1 return the unconditional and
    conditional predictions exactly (single branch evaluated, no arithmetic).
    """
    s = guidance.scale
    if s == 0.0:
        return denoiser(x_t, t, None)
    if s == 1.0:
        return denoiser(x_t, t, condition)
    uncond = denoiser(x_t, t, None)
    cond = denoiser(x_t, t, condition)
    return uncond + s * (cond - uncond)


def _posterior_coefficients(schedule: NoiseSchedule, t: int) -> tuple[float, float, float]:
    """Mean coefficients (on x0_hat, on x_t) and variance of q(x_{t-1}|x_t, x0)."""
    ab_t = float(schedule.alpha_bars[t])
    ab_prev = float(schedule.alpha_bars[t - 1])
    beta_t = float(1.0 - schedule.alphas[t])
    coef_x0 = math.sqrt(ab_prev) * beta_t / (1.0 - ab_t)
    coef_xt = math.sqrt(float(schedule.alphas[t])) * (1.0 - ab_prev) / (1.0 - ab_t)
    variance = beta_t * (1.0 - ab_prev) / (1.0 - ab_t)
    return coef_x0, coef_xt, variance


def p_sample_loop(
    denoiser,
    condition,
    length: int,
    schedule: NoiseSchedule,
    guidance: GuidanceConfig,
    seed: int,
    frame_shape: tuple[int, int],
) -> np.ndarray:
    """Sample (length, J, D) motion frames from unit-Gaussian x_T.

    Deterministic given the seed; raises NumericFailureError carrying the
    step index if any intermediate state goes non-finite.
    """
    guidance.validate()
    generator = torch.Generator().manual_seed(seed)
    shape = (length, *frame_shape)
    x = torch.randn(shape, generator=generator, dtype=torch.float32)
    for t in reversed(range(schedule.T)):
        pred = guided_x0(denoiser, x, t, condition, guidance)
        if not isinstance(pred, torch.Tensor):
            pred = torch.as_tensor(np.asarray(pred))
        pred = pred.to(torch.float32)
        if tuple(pred.shape) != shape:
            raise NumericFailureError(
                f"denoiser returned shape {tuple(pred.shape)}, expected {shape}", step=t
            )
        if not bool(torch.isfinite(pred).all()):
            raise NumericFailureError(f"non-finite prediction at step {t}", step=t)
        if t == 0:
            x = pred
            break
        coef_x0, coef_xt, variance = _posterior_coefficients(schedule, t)
        z = torch.randn(shape, generator=generator, dtype=torch.float32)
        x = coef_x0 * pred + coef_xt * x + math.sqrt(variance) * z
        if not bool(torch.isfinite(x).all()):
            raise NumericFailureError(f"non-finite sample state at step {t}", step=t)
    return x.numpy()


def p_sample_loop_batch(
    batch_denoiser,
    batch_size: int,
    length: int,
    schedule: NoiseSchedule,
    guidance: GuidanceConfig,
    seed: int,
    frame_shape: tuple[int, int],
) -> np.ndarray:
    """Batched variant used by evaluation sweeps.

    ``batch_denoiser(x_t, t, conditional)`` maps a (B, N, J, D) tensor to the
    batch of clean-sequence predictions, with ``conditional=False`` selecting
    the null condition for every element.
    """
    guidance.validate()
    generator = torch.Generator().manual_seed(seed)
    shape = (batch_size, length, *frame_shape)
    x = torch.randn(shape, generator=generator, dtype=torch.float32)
    s = guidance.scale
    for t in reversed(range(schedule.T)):
        if s == 0.0:
            pred = batch_denoiser(x, t, False)
        elif s == 1.0:
            pred = batch_denoiser(x, t, True)
        else:
            uncond = batch_denoiser(x, t, False)
            cond = batch_denoiser(x, t, True)
            pred = uncond + s * (cond - uncond)
        if not bool(torch.isfinite(pred).all()):
            raise NumericFailureError(f"non-finite prediction at step {t}", step=t)
        if t == 0:
            x = pred
            break
        coef_x0, coef_xt, variance = _posterior_coefficients(schedule, t)
        z = torch.randn(shape, generator=generator, dtype=torch.float32)
        x = coef_x0 * pred + coef_xt * x + math.sqrt(variance) * z
    return x.numpy()
