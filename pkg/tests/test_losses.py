import numpy as np
import pytest
import torch

from mmdm.errors import InvalidConfigError, InvalidInputError
from mmdm.losses import (
    LossWeights,
    loss_foot,
    loss_pos,
    loss_simple,
    loss_vel,
    motion_losses,
    total_loss,
)
from mmdm.motion import detect_foot_contact, forward_kinematics
from mmdm.skeleton import Skeleton


@pytest.fixture(scope="module")
def micro_sk():
    """4-joint chain, positions mode, joint 3 is the foot."""
    return Skeleton(
        parents=(-1, 0, 1, 2),
        offsets=np.array([[0, 0, 0], [0.5, 0, 0], [0.5, 0, 0], [0.5, 0, 0]], dtype=float),
        part_of=("Torso", "Torso", "Torso", "Torso"),
        foot_joints=frozenset({3}),
        representation_mode="positions",
    )


@pytest.fixture(scope="module")
def micro_sk_rot(micro_sk):
    return micro_sk.with_mode("rotations")


def _rand(shape, seed, dtype=torch.float64):
    return torch.tensor(np.random.default_rng(seed).normal(size=shape), dtype=dtype)


def test_loss_simple_zero_on_equal():
    x = _rand((3, 4, 3), 0)
    assert loss_simple(x, x).item() == 0.0


def test_loss_simple_unit_offset():
    x0 = torch.zeros(5, 4, 3)
    assert loss_simple(x0, torch.ones_like(x0)).item() == pytest.approx(1.0)


def test_loss_simple_matches_loop_oracle():
    x0, xh = _rand((3, 4, 3), 1), _rand((3, 4, 3), 2)
    acc = 0.0
    for i in range(3):
        for j in range(4):
            for d in range(3):
                acc += (x0[i, j, d] - xh[i, j, d]).item() ** 2
    assert loss_simple(x0, xh).item() == pytest.approx(acc / 36, abs=1e-7)


def test_loss_pos_positions_mode_is_frame_error(micro_sk):
    x0, xh = _rand((3, 4, 3), 3), _rand((3, 4, 3), 4)
    expected = ((x0 - xh) ** 2).sum(dim=(1, 2)).mean().item()
    assert loss_pos(x0, xh, micro_sk).item() == pytest.approx(expected, rel=1e-12)


def test_loss_pos_rotations_mode_matches_fk_oracle(micro_sk_rot):
    x0, xh = 0.4 * _rand((3, 4, 6), 5), 0.4 * _rand((3, 4, 6), 6)
    p0 = forward_kinematics(micro_sk_rot, x0)
    ph = forward_kinematics(micro_sk_rot, xh)
    expected = ((p0 - ph) ** 2).sum(dim=(1, 2)).mean().item()
    assert loss_pos(x0, xh, micro_sk_rot).item() == pytest.approx(expected, rel=1e-12)


def test_loss_foot_zero_contacts_gates_everything(micro_sk):
    xh = _rand((4, 4, 3), 7)
    contacts = np.zeros((3, 1), dtype=np.uint8)
    assert loss_foot(xh, contacts, micro_sk).item() == 0.0


def test_loss_foot_static_prediction_is_zero(micro_sk):
    xh = torch.ones(4, 4, 3, dtype=torch.float64)
    contacts = np.ones((3, 1), dtype=np.uint8)
    assert loss_foot(xh, contacts, micro_sk).item() == 0.0


def test_loss_foot_matches_gated_loop_oracle(micro_sk):
    xh = _rand((5, 4, 3), 8)
    contacts = np.array([[1], [0], [1], [1]], dtype=np.uint8)
    acc = 0.0
    for i in range(4):
        if contacts[i, 0]:
            step = xh[i + 1, 3] - xh[i, 3]
            acc += (step**2).sum().item()
    assert loss_foot(xh, contacts, micro_sk).item() == pytest.approx(acc / 4, rel=1e-9)


def test_loss_vel_zero_on_equal():
    x = _rand((4, 4, 3), 9)
    assert loss_vel(x, x).item() == 0.0


def test_loss_vel_constant_offset_invariant():
    x0 = _rand((4, 4, 3), 10)
    offset = torch.full_like(x0, 0.37)
    assert loss_vel(x0, x0 + offset).item() == pytest.approx(0.0, abs=1e-14)


def test_loss_vel_not_invariant_to_nonconstant_shift():
    x0 = _rand((4, 4, 3), 11)
    ramp = torch.linspace(0, 1, 4)[:, None, None] * torch.ones_like(x0)
    assert loss_vel(x0, x0 + ramp).item() > 0


def test_loss_vel_matches_loop_oracle():
    x0, xh = _rand((4, 3, 3), 12), _rand((4, 3, 3), 13)
    acc = 0.0
    for i in range(3):
        dv = (x0[i + 1] - x0[i]) - (xh[i + 1] - xh[i])
        acc += (dv**2).sum().item()
    assert loss_vel(x0, xh).item() == pytest.approx(acc / 3, abs=1e-7)


def test_total_loss_zero_weights_is_simple():
    weights = LossWeights(0.0, 0.0, 0.0)
    total, breakdown = total_loss(0.5, 2.0, 3.0, 4.0, weights)
    assert total == 0.5
    assert breakdown.total == 0.5


def test_total_loss_composition_exact():
    weights = LossWeights(1.0, 1.0, 1.0)
    simple, pos, foot, vel = 0.123, 0.456, 0.789, 0.101
    _, breakdown = total_loss(simple, pos, foot, vel, weights)
    assert breakdown.total == simple + 1.0 * pos + 1.0 * vel + 1.0 * foot


def test_total_loss_recomposition_on_random_batch(micro_sk):
    x0, xh = _rand((2, 3, 4, 3), 14), _rand((2, 3, 4, 3), 15)
    contacts = np.ones((2, 2, 1), dtype=np.uint8)
    weights = LossWeights(1.0, 1.0, 1.0)
    total, breakdown = motion_losses(x0, xh, micro_sk, contacts, weights)
    parts = (
        loss_simple(x0, xh)
        + loss_pos(x0, xh, micro_sk)
        + loss_vel(x0, xh)
        + loss_foot(xh, contacts, micro_sk)
    )
    assert total.item() == pytest.approx(parts.item(), rel=1e-12)
    assert breakdown.total == pytest.approx(
        breakdown.simple + breakdown.pos + breakdown.vel + breakdown.foot, rel=1e-15
    )


def test_negative_weight_rejected():
    with pytest.raises(InvalidConfigError):
        LossWeights(lambda_pos=-1.0).validate()


def test_shape_mismatch_rejected():
    with pytest.raises(InvalidInputError):
        loss_simple(torch.zeros(2, 3, 3), torch.zeros(3, 2, 3))


def test_single_frame_rejected_for_vel():
    with pytest.raises(InvalidInputError):
        loss_vel(torch.zeros(1, 3, 3), torch.zeros(1, 3, 3))


def _fd_gradient(fn, x, h=1e-6):
    grad = torch.zeros_like(x)
    flat = x.reshape(-1)
    for idx in range(flat.numel()):
        plus, minus = x.clone().reshape(-1), x.clone().reshape(-1)
        plus[idx] += h
        minus[idx] -= h
        grad.reshape(-1)[idx] = (fn(plus.reshape(x.shape)) - fn(minus.reshape(x.shape))) / (2 * h)
    return grad


def _check_grad(fn, xh):
    xh = xh.clone().requires_grad_(True)
    fn(xh).backward()
    fd = _fd_gradient(lambda v: fn(v).item(), xh.detach())
    auto = xh.grad
    denom = torch.maximum(fd.abs(), auto.abs()).clamp_min(1e-8)
    rel = ((auto - fd).abs() / denom).max().item()
    assert rel <= 1e-4, f"max relative gradient error {rel}"


@pytest.mark.parametrize("mode", ["positions", "rotations"])
def test_gradients_match_finite_differences(micro_sk, mode):
    sk = micro_sk.with_mode(mode)
    d = sk.frame_dim
    x0 = 0.5 * _rand((3, 4, d), 20)
    xh = 0.5 * _rand((3, 4, d), 21)
    contacts = detect_foot_contact(
        sk, forward_kinematics(sk, x0.numpy()), fps=20.0, speed_threshold=5.0
    )

    _check_grad(lambda v: loss_simple(x0, v), xh)
    _check_grad(lambda v: loss_pos(x0, v, sk), xh)
    _check_grad(lambda v: loss_vel(x0, v), xh)
    _check_grad(lambda v: loss_foot(v, contacts.contacts, sk), xh)
