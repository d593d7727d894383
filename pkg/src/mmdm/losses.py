"""Training objective: reconstruction loss plus three geometric regularizers.

All functions accept torch tensors shaped (..., N, J, D) with arbitrary
leading batch dims; the per-frame sums follow the written loss definitions
and batch dims are mean-reduced for learning-rate stability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .errors import InvalidConfigError, InvalidInputError
from .skeleton import Skeleton
from .motion import forward_kinematics


@dataclass(frozen=True)
class LossWeights:
    """Weights of the position, velocity, and foot-contact terms."""

    lambda_pos: float = 1.0
    lambda_vel: float = 1.0
    lambda_foot: float = 1.0

    def validate(self) -> None:
        for name in ("lambda_pos", "lambda_vel", "lambda_foot"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise InvalidConfigError(f"{name} must be finite and >= 0, got {value}")


@dataclass(frozen=True)
class LossBreakdown:
    """Scalar loss components; total is their exact weighted composition."""

    simple: float
    pos: float
    foot: float
    vel: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return {
            "simple": self.simple,
            "pos": self.pos,
            "foot": self.foot,
            "vel": self.vel,
            "total": self.total,
        }


def _check_same_shape(x0, x0_hat):
    if tuple(x0.shape) != tuple(x0_hat.shape):
        raise InvalidInputError(
            f"prediction shape {tuple(x0_hat.shape)} != target shape {tuple(x0.shape)}"
        )


def loss_simple(x0: torch.Tensor, x0_hat: torch.Tensor) -> torch.Tensor:
    """Mean squared error over all elements."""
    _check_same_shape(x0, x0_hat)
    return ((x0 - x0_hat) ** 2).mean()


def loss_pos(x0: torch.Tensor, x0_hat: torch.Tensor, skeleton: Skeleton) -> torch.Tensor:
    """Per-frame squared distance between FK positions, averaged over frames."""
    _check_same_shape(x0, x0_hat)
    diff = forward_kinematics(skeleton, x0) - forward_kinematics(skeleton, x0_hat)
    per_frame = (diff ** 2).sum(dim=(-2, -1))
    return per_frame.mean(dim=-1).mean()


def loss_foot(x0_hat: torch.Tensor, contacts, skeleton: Skeleton) -> torch.Tensor:
    """Squared foot displacement of the prediction, gated by ground-truth contact.

    contacts: (..., N-1, F) binary indicators over the skeleton's sorted foot
    joints, computed from the ground truth.
    """
    if x0_hat.shape[-3] < 2:
        raise InvalidInputError("foot loss needs at least 2 frames")
    feet = sorted(skeleton.foot_joints)
    if not feet:
        raise InvalidInputError("skeleton has no foot joints")
    positions = forward_kinematics(skeleton, x0_hat)[..., feet, :]
    step = positions[..., 1:, :, :] - positions[..., :-1, :, :]
    gate = torch.as_tensor(
        getattr(contacts, "contacts", contacts), dtype=x0_hat.dtype, device=x0_hat.device
    )
    if gate.shape[-2:] != step.shape[-3:-1]:
        raise InvalidInputError(
            f"contacts shape {tuple(gate.shape)} does not cover "
            f"{step.shape[-3]} transitions x {step.shape[-2]} feet"
        )
    gated = step * gate[..., None]
    per_transition = (gated ** 2).sum(dim=(-2, -1))
    return per_transition.mean(dim=-1).mean()


def loss_vel(x0: torch.Tensor, x0_hat: torch.Tensor) -> torch.Tensor:
    """Squared difference of frame-to-frame velocities, averaged over transitions."""
    _check_same_shape(x0, x0_hat)
    if x0.shape[-3] < 2:
        raise InvalidInputError("velocity loss needs at least 2 frames")
    dv = (x0[..., 1:, :, :] - x0[..., :-1, :, :]) - (
        x0_hat[..., 1:, :, :] - x0_hat[..., :-1, :, :]
    )
    per_transition = (dv ** 2).sum(dim=(-2, -1))
    return per_transition.mean(dim=-1).mean()


def total_loss(simple, pos, foot, vel, weights: LossWeights):
    """Weighted sum of the components.

    Returns (total, LossBreakdown): ``total`` keeps the input type (a tensor
    stays differentiable), while the breakdown records plain floats whose
    ``total`` field is composed exactly from the recorded components.
    """
    weights.validate()
    total = (
        simple
        + weights.lambda_pos * pos
        + weights.lambda_vel * vel
        + weights.lambda_foot * foot
    )
    simple_f, pos_f, foot_f, vel_f = (
        float(v.detach()) if isinstance(v, torch.Tensor) else float(v)
        for v in (simple, pos, foot, vel)
    )
    breakdown = LossBreakdown(
        simple=simple_f,
        pos=pos_f,
        foot=foot_f,
        vel=vel_f,
        total=simple_f
        + weights.lambda_pos * pos_f
        + weights.lambda_vel * vel_f
        + weights.lambda_foot * foot_f,
    )
    return total, breakdown


def motion_losses(
    x0: torch.Tensor,
    x0_hat: torch.Tensor,
    skeleton: Skeleton,
    contacts,
    weights: LossWeights,
):
    """All four components on one batch; contacts None skips the foot term."""
    simple = loss_simple(x0, x0_hat)
    pos = loss_pos(x0, x0_hat, skeleton)
    vel = loss_vel(x0, x0_hat)
    if contacts is None:
        foot = torch.zeros((), dtype=x0_hat.dtype, device=x0_hat.device)
    else:
        foot = loss_foot(x0_hat, contacts, skeleton)
    return total_loss(simple, pos, foot, vel, weights)
