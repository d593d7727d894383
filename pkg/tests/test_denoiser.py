import numpy as np
import pytest
import torch

from mmdm.datagen import caption_vocabulary
from mmdm.denoiser import (
    BodyPartsDenoiser,
    ModelConfig,
    TimeFramesDenoiser,
    build_denoiser,
    timestep_embedding,
)
from mmdm.errors import InvalidConfigError, InvalidInputError
from mmdm.losses import LossWeights, motion_losses
from mmdm.skeleton import PART_NAMES, Skeleton, part_index_sets

VOCAB = caption_vocabulary()


@pytest.fixture(scope="module")
def tf_model(toy_sk):
    config = ModelConfig(hidden_dim=32, heads=4, encoder_layers=2, decoder_layers=1, max_length=16)
    return build_denoiser(config, toy_sk, VOCAB, seed=0)


@pytest.fixture(scope="module")
def bp_model(toy_sk):
    config = ModelConfig(
        strategy="body_parts", hidden_dim=32, heads=4, encoder_layers=2,
        decoder_layers=2, bpst_layers=2, max_length=16,
    )
    return build_denoiser(config, toy_sk, VOCAB, seed=0)


def _inputs(model, batch=2, n=10, seed=0):
    g = torch.Generator().manual_seed(seed)
    j, d = model.frame_shape
    x = torch.randn(batch, n, j, d, generator=g)
    t = torch.arange(batch, dtype=torch.long) + 3
    text = model.text_encoder(["a person walks forward"] * batch)
    return x, t, text


def test_model_config_validation():
    with pytest.raises(InvalidConfigError):
        ModelConfig(hidden_dim=30, heads=4)
    with pytest.raises(InvalidConfigError):
        ModelConfig(strategy="joints")


def test_output_shape_any_mask_ratio(tf_model):
    x, t, text = _inputs(tf_model)
    for ratio_mask in (None, np.zeros((2, 10), np.uint8), np.ones((2, 10), np.uint8)):
        out = tf_model(x, t, text, None, mask=ratio_mask)
        assert out.shape == x.shape
        assert torch.isfinite(out).all()


def test_too_long_sequence_rejected(tf_model):
    x, t, text = _inputs(tf_model, n=17)
    with pytest.raises(InvalidInputError):
        tf_model(x, t, text, None)


def test_zero_layer_encoder_is_identity(toy_sk):
    config = ModelConfig(hidden_dim=32, heads=4, encoder_layers=0, decoder_layers=1, max_length=16)
    model = build_denoiser(config, toy_sk, VOCAB, seed=1)
    x, t, text = _inputs(model)
    mask = np.zeros((2, 10), np.uint8)
    mask[:, 3] = 1
    _, stages = model(x, t, text, None, mask=mask, return_stages=True)
    assert torch.equal(stages["encoder_out"], stages["masked"])


def test_exactly_masked_rows_differ_before_decoder(tf_model):
    x, t, text = _inputs(tf_model, seed=3)
    mask = np.zeros((2, 10), np.uint8)
    mask[0, [2, 7]] = 1
    mask[1, [0, 9]] = 1
    _, stages = tf_model(x, t, text, None, mask=mask, return_stages=True)
    differs = (stages["decoder_tokens"] != stages["masked"]).any(dim=-1).numpy()
    assert np.array_equal(differs.astype(np.uint8), mask)


def test_masked_input_rows_are_token_plus_positional(tf_model):
    x, t, text = _inputs(tf_model, seed=4)
    mask = np.zeros((2, 10), np.uint8)
    mask[:, 5] = 1
    _, stages = tf_model(x, t, text, None, mask=mask, return_stages=True)
    q = tf_model.mask_token.embedding.detach()
    expected = q + tf_model.enc_pos[5].detach()
    assert torch.equal(stages["masked"][0, 5], expected)
    assert torch.equal(stages["masked"][1, 5], expected)
    assert torch.equal(stages["masked"][0, 4], stages["tokens"][0, 4])


def test_zero_mask_matches_no_mask_bitwise(tf_model):
    x, t, text = _inputs(tf_model, seed=5)
    out_zero = tf_model(x, t, text, None, mask=np.zeros((2, 10), np.uint8))
    out_none = tf_model(x, t, text, None, mask=None)
    assert torch.equal(out_zero, out_none)


def test_bp_zero_mask_matches_no_mask_bitwise(bp_model):
    x, t, text = _inputs(bp_model, seed=6)
    out_zero = bp_model(x, t, text, None, mask=np.zeros((2, 5), np.uint8))
    out_none = bp_model(x, t, text, None, mask=None)
    assert torch.equal(out_zero, out_none)


def test_condition_vs_null_changes_output(tf_model):
    x, t, text = _inputs(tf_model, seed=7)
    out_cond = tf_model(x, t, text, torch.zeros(2, dtype=torch.bool))
    out_null = tf_model(x, t, text, torch.ones(2, dtype=torch.bool))
    assert not torch.equal(out_cond, out_null)


def test_unconditional_branch_ignores_text(tf_model):
    x, t, _ = _inputs(tf_model, seed=8)
    text_a = tf_model.text_encoder(["a person walks forward", "a man crouches down low"])
    text_b = tf_model.text_encoder(["the figure kicks the right leg", ""])
    is_null = torch.ones(2, dtype=torch.bool)
    assert torch.equal(tf_model(x, t, text_a, is_null), tf_model(x, t, text_b, is_null))


def test_deterministic_forward(bp_model):
    x, t, text = _inputs(bp_model, seed=9)
    mask = np.tile(np.array([[0, 1, 0, 0, 0]], np.uint8), (2, 1))
    assert torch.equal(
        bp_model(x, t, text, None, mask=mask), bp_model(x, t, text, None, mask=mask)
    )


def test_bpst_five_tokens_per_frame(bp_model):
    x, t, text = _inputs(bp_model, seed=10)
    part_tokens = bp_model.bpst_encode(x, t, text, None)
    assert part_tokens.shape == (2, 10, 5, 32)


def test_bpst_locality_zeroing_left_arm(bp_model, toy_sk):
    x, t, text = _inputs(bp_model, seed=11)
    parts = part_index_sets(toy_sk)
    x_zeroed = x.clone()
    x_zeroed[:, :, parts["LeftArm"], :] = 0.0
    base = bp_model.bpst_encode(x, t, text, None)
    changed = bp_model.bpst_encode(x_zeroed, t, text, None)
    left_arm_slot = PART_NAMES.index("LeftArm")
    for slot in range(5):
        same = torch.equal(base[:, :, slot], changed[:, :, slot])
        assert same == (slot != left_arm_slot)


def test_bodyparts_masked_part_token_independent_of_motion(bp_model):
    x, t, text = _inputs(bp_model, seed=12)
    mask = np.tile(np.array([[1, 0, 0, 0, 0]], np.uint8), (2, 1))
    _, stages_a = bp_model(x, t, text, None, mask=mask, return_stages=True)
    _, stages_b = bp_model(2.0 * x, t, text, None, mask=mask, return_stages=True)
    masked_a = stages_a["masked"].reshape(2, 10, 5, -1)
    masked_b = stages_b["masked"].reshape(2, 10, 5, -1)
    assert torch.equal(masked_a[:, :, 0], masked_b[:, :, 0])
    assert not torch.equal(masked_a[:, :, 1], masked_b[:, :, 1])


def test_encode_text_contract(tf_model):
    a = tf_model.encode_text("a person walks forward")
    b = tf_model.encode_text("a person walks forward")
    assert torch.equal(a.vector, b.vector)
    assert not a.is_null
    null = tf_model.encode_text("   ")
    assert null.is_null


def test_oov_words_tokenize_to_zero(tf_model):
    ids = tf_model.text_encoder.tokenize("a zorblat walks")
    assert ids[1] == 0
    assert ids[0] != 0 and ids[2] != 0


def test_timestep_embedding_shape_and_determinism():
    t = torch.tensor([0, 5, 99])
    emb = timestep_embedding(t, 16)
    assert emb.shape == (3, 16)
    assert torch.equal(emb, timestep_embedding(t, 16))
    assert not torch.equal(emb[0], emb[1])


def test_build_denoiser_seeded(toy_sk):
    config = ModelConfig(hidden_dim=32, heads=4, encoder_layers=1, decoder_layers=1, max_length=16)
    a = build_denoiser(config, toy_sk, VOCAB, seed=5)
    b = build_denoiser(config, toy_sk, VOCAB, seed=5)
    c = build_denoiser(config, toy_sk, VOCAB, seed=6)
    for (ka, va), (_, vb) in zip(a.state_dict().items(), b.state_dict().items()):
        assert torch.equal(va, vb), ka
    assert any(
        not torch.equal(va, vc) for va, vc in zip(a.state_dict().values(), c.state_dict().values())
    )


def _fd_weight_check(model, skeleton, x, t, captions, mask, picks=6, h=1e-5, tol=1e-3):
    """Autograd vs central differences on a deterministic sample of weights."""
    model = model.double()
    x = x.double()
    contacts = np.ones((x.shape[0], x.shape[1] - 1, len(skeleton.foot_joints)), np.uint8)

    def compute_loss():
        text = model.text_encoder(captions)
        out = model(x, t, text, None, mask=mask)
        total, _ = motion_losses(x, out, skeleton, contacts, LossWeights())
        return total

    loss = compute_loss()
    model.zero_grad()
    loss.backward()

    params = [(name, p) for name, p in model.named_parameters() if p.grad is not None]
    rng = np.random.default_rng(0)
    chosen = [params[i] for i in rng.choice(len(params), size=min(picks, len(params)), replace=False)]
    for name, param in chosen:
        flat_idx = int(rng.integers(param.numel()))
        with torch.no_grad():
            original = param.reshape(-1)[flat_idx].item()
            param.reshape(-1)[flat_idx] = original + h
            f_plus = compute_loss().item()
            param.reshape(-1)[flat_idx] = original - h
            f_minus = compute_loss().item()
            param.reshape(-1)[flat_idx] = original
        fd = (f_plus - f_minus) / (2 * h)
        auto = param.grad.reshape(-1)[flat_idx].item()
        denom = max(abs(fd), abs(auto), 1e-8)
        assert abs(auto - fd) / denom <= tol, f"{name}[{flat_idx}]: autograd {auto} vs FD {fd}"


def test_end_to_end_gradcheck_time_frames(toy_sk):
    config = ModelConfig(hidden_dim=16, heads=2, encoder_layers=1, decoder_layers=1, max_length=4)
    model = build_denoiser(config, toy_sk, VOCAB, seed=2)
    g = torch.Generator().manual_seed(0)
    x = torch.randn(1, 2, 9, 3, generator=g)
    t = torch.tensor([1])
    mask = np.array([[1, 0]], np.uint8)
    _fd_weight_check(model, toy_sk, x, t, ["a person walks forward"], mask)


def test_end_to_end_gradcheck_body_parts(toy_sk):
    config = ModelConfig(
        strategy="body_parts", hidden_dim=16, heads=2, encoder_layers=1,
        decoder_layers=1, bpst_layers=1, max_length=4,
    )
    model = build_denoiser(config, toy_sk, VOCAB, seed=3)
    g = torch.Generator().manual_seed(1)
    x = torch.randn(1, 2, 9, 3, generator=g)
    t = torch.tensor([2])
    mask = np.array([[0, 1, 0, 0, 0]], np.uint8)
    _fd_weight_check(model, toy_sk, x, t, ["a man waves the left arm"], mask)


def test_decoder_equivariant_only_with_positions_zeroed(toy_sk):
    """Permuting input frames permutes the output correspondingly once every
    positional mechanism (both position tables and the relative biases) is
    zeroed; with them active the correspondence breaks."""
    config = ModelConfig(hidden_dim=32, heads=4, encoder_layers=0, decoder_layers=2, max_length=12)
    model = build_denoiser(config, toy_sk, VOCAB, seed=4)
    g = torch.Generator().manual_seed(5)
    x = torch.randn(1, 8, 9, 3, generator=g)
    t = torch.tensor([3])
    text = model.text_encoder(["a person walks forward"])
    perm = torch.randperm(8, generator=g)

    out = model(x, t, text, None)
    out_perm = model(x[:, perm], t, text, None)
    assert not torch.allclose(out_perm, out[:, perm], atol=1e-5)

    with torch.no_grad():
        model.enc_pos.zero_()
        model.dec_pos.zero_()
        for bias in list(model.encoder_bias) + list(model.decoder_bias):
            bias.table.zero_()
    out = model(x, t, text, None)
    out_perm = model(x[:, perm], t, text, None)
    assert torch.allclose(out_perm, out[:, perm], atol=1e-5)
