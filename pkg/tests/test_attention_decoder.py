import numpy as np
import pytest

from conftest import tiny_model
from mmda.attention_decoder import (RnnLm, attend, decoder_step, forward_teacher_forced,
                                    lm_score_step, teacher_forcing_arrays, uniform_attention)
from mmda.nn import Tensor, gradient_check, ops


def test_teacher_forcing_arrays():
    inputs, outputs, weights = teacher_forcing_arrays([[5, 6], [7]], sos=0, eos=1)
    assert inputs.tolist() == [[0, 5, 6], [0, 7, 1]]
    assert outputs.tolist() == [[5, 6, 1], [7, 1, 1]]
    assert weights.tolist() == [[1, 1, 1], [1, 1, 0]]


def test_uniform_initial_attention_over_valid_frames():
    a = uniform_attention(np.array([4, 2]), 4, np.float64)
    np.testing.assert_allclose(a, [[0.25] * 4, [0.5, 0.5, 0, 0]])


def test_attention_is_normalized_and_masked():
    model = tiny_model(64)
    rng = np.random.default_rng(0)
    enc = Tensor(rng.normal(size=(2, 6, 4)))
    mask = np.array([[True] * 6, [True] * 3 + [False] * 3])
    alpha_prev = Tensor(uniform_attention(np.array([6, 3]), 6, np.float64))
    h = Tensor(rng.normal(size=(2, 5)))
    alpha, ctx = model.attention(enc, model.attention.precompute(enc), mask, h, alpha_prev)
    assert np.allclose(alpha.data.sum(axis=1), 1.0)
    assert np.all(alpha.data >= 0)
    assert np.all(alpha.data[1, 3:] == 0)
    np.testing.assert_allclose(ctx.data, np.einsum("bt,bth->bh", alpha.data, enc.data))


def test_attention_permutation_covariant_without_location():
    model = tiny_model(64)
    att = model.attention
    att.use_location = False
    rng = np.random.default_rng(1)
    enc = Tensor(rng.normal(size=(7, 4)))
    h = Tensor(rng.normal(size=5))
    prev = Tensor(np.full(7, 1 / 7))
    perm = rng.permutation(7)
    alpha, ctx = attend(att, enc, h, prev)
    alpha_p, ctx_p = attend(att, Tensor(enc.data[perm]), h, prev)
    np.testing.assert_allclose(alpha_p.data, alpha.data[perm], atol=1e-12)
    np.testing.assert_allclose(ctx_p.data, ctx.data, atol=1e-12)


def test_decoder_step_rejects_unknown_token():
    model = tiny_model(64)
    state = model.decoder.init_state(1, np.array([3]), 3, np.float64)
    with pytest.raises(IndexError):
        decoder_step(model.decoder, 99, state, Tensor(np.zeros(4)))


def test_decoder_step_distribution_sums_to_one():
    model = tiny_model(64)
    state = model.decoder.init_state(1, np.array([3]), 3, np.float64)
    dist, (hs, cs) = decoder_step(model.decoder, 0, state, Tensor(np.ones(4)))
    assert dist.shape == (len(model.output_vocab),)
    assert dist.data.sum() == pytest.approx(1.0)
    assert len(hs) == len(cs) == model.config.dec_layers


def test_empty_target_rejected():
    model = tiny_model(64)
    enc = Tensor(np.zeros((1, 3, 4)))
    with pytest.raises(ValueError):
        forward_teacher_forced(model.attention, model.decoder, enc, np.array([3]), [[]])


def test_teacher_forced_gradient_check():
    model = tiny_model(64, init_scale=0.5)
    rng = np.random.default_rng(2)
    enc_data = rng.normal(size=(2, 4, 4))
    lengths = np.array([4, 3])
    enc_data[1, 3:] = 0
    enc = Tensor(enc_data)
    params = model.attention.parameters() + model.decoder.parameters()

    def loss():
        return forward_teacher_forced(model.attention, model.decoder, enc, lengths, [[4, 5], [5]])

    assert gradient_check(loss, params, samples_per_param=10) < 1e-4


def test_lm_step_matches_sequence_loss():
    lm = RnnLm(6, hidden=4, layers=2, seed=0)
    inputs, outputs, weights = teacher_forcing_arrays([[3, 4, 5]], 0, 1)
    seq_loss = float(lm.sequence_loss(inputs, outputs, weights).data)
    state = None
    total = 0.0
    for x, y in zip(inputs[0], outputs[0]):
        logp, state = lm_score_step(lm, int(x), state)
        total -= logp[y]
    assert total / 4 == pytest.approx(seq_loss, rel=1e-5)
