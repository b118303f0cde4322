import math

import numpy as np
import pytest

from mmda.nn import (Adadelta, NondeterministicLossError, NonFiniteError, Parameter, Tape, Tensor,
                     adadelta_update, clip_grad_norm, gradient_check, ops, precision)
from mmda.nn.layers import BiLSTM, LSTMCell


def p64(rng, *shape, name="p"):
    return Parameter(rng.normal(size=shape), name=name, partition="enc", dtype=np.float64)


def _sig(v):
    return 1.0 / (1.0 + math.exp(-v))


# ------------------------------------------------------------------ oracles

def test_lstm_step_matches_scalar_oracle():
    # D = H = 1, every gate written out by hand
    wx = Parameter(np.array([[0.5, -0.3, 0.8, 0.1]]), dtype=np.float64)
    wh = Parameter(np.array([[0.2, 0.4, -0.6, 0.7]]), dtype=np.float64)
    b = Parameter(np.array([0.1, 0.2, -0.1, 0.05]), dtype=np.float64)
    x, h0, c0 = 0.9, -0.4, 0.3
    h, c = ops.lstm_step(Tensor(np.array([[x]])), Tensor(np.array([[h0]])),
                         Tensor(np.array([[c0]])), wx, wh, b)
    zi = 0.5 * x + 0.2 * h0 + 0.1
    zf = -0.3 * x + 0.4 * h0 + 0.2
    zg = 0.8 * x - 0.6 * h0 - 0.1
    zo = 0.1 * x + 0.7 * h0 + 0.05
    c_ref = _sig(zf) * c0 + _sig(zi) * math.tanh(zg)
    h_ref = _sig(zo) * math.tanh(c_ref)
    assert c.data[0, 0] == pytest.approx(c_ref, abs=1e-12)
    assert h.data[0, 0] == pytest.approx(h_ref, abs=1e-12)


def test_lstm_step_dimension_mismatch():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        ops.lstm_step(Tensor(np.zeros((1, 3))), Tensor(np.zeros((1, 2))), Tensor(np.zeros((1, 2))),
                      p64(rng, 4, 8), p64(rng, 2, 8), p64(rng, 8))


def test_lstm_sequence_matches_unrolled_steps():
    rng = np.random.default_rng(1)
    with precision(64):
        cell = LSTMCell(rng, 3, 4, "enc")
    x = rng.normal(size=(2, 5, 3))
    lengths = np.array([5, 3])
    for reverse in (False, True):
        ys = cell.sequence(Tensor(x), lengths, reverse=reverse).data
        for bi, n in enumerate(lengths):
            h = np.zeros((1, 4))
            c = np.zeros((1, 4))
            steps = range(n - 1, -1, -1) if reverse else range(n)
            for t in steps:
                ht, ct = cell.step(Tensor(x[bi:bi + 1, t]), Tensor(h), Tensor(c))
                h, c = ht.data, ct.data
                np.testing.assert_allclose(ys[bi, t], h[0], atol=1e-12)
            assert np.all(ys[bi, n:] == 0)


def test_bilstm_is_forward_and_reversed_concatenation():
    rng = np.random.default_rng(2)
    with precision(64):
        layer = BiLSTM(rng, 3, 2, "enc")
    x = Tensor(rng.normal(size=(1, 4, 3)))
    y = layer(x, np.array([4])).data
    fwd = layer.fwd.sequence(x).data
    bwd = layer.bwd.sequence(Tensor(x.data[:, ::-1].copy())).data[:, ::-1]
    np.testing.assert_allclose(y, np.concatenate([fwd, bwd], axis=-1), atol=1e-12)


def test_embedding_is_row_copy():
    rng = np.random.default_rng(3)
    table = p64(rng, 6, 3)
    ids = np.array([[4, 0], [4, 5]])
    out = ops.embedding(ids, table).data
    for i in range(2):
        for j in range(2):
            assert np.array_equal(out[i, j], table.data[ids[i, j]])
    with pytest.raises(IndexError):
        ops.embedding([6], table)


def test_embedding_gradient_touches_gathered_rows_only():
    rng = np.random.default_rng(4)
    table = p64(rng, 6, 3)
    with Tape() as tape:
        loss = ops.sum(ops.embedding([1, 1, 3], table))
    tape.backward(loss)
    expected = np.zeros((6, 3))
    expected[1] = 2.0
    expected[3] = 1.0
    assert np.array_equal(table.grad, expected)


def test_conv1d_matches_triple_loop():
    rng = np.random.default_rng(5)
    sig = rng.normal(size=(2, 9))
    ker = rng.normal(size=(3, 5))
    out = ops.conv1d(Tensor(sig), Tensor(ker)).data
    pad = 2
    ref = np.zeros((2, 9, 3))
    for b in range(2):
        for t in range(9):
            for c in range(3):
                acc = 0.0
                for j in range(5):
                    src = t + j - pad
                    if 0 <= src < 9:
                        acc += sig[b, src] * ker[c, j]
                ref[b, t, c] = acc
    np.testing.assert_allclose(out, ref, atol=1e-12)
    with pytest.raises(ValueError):
        ops.conv1d(Tensor(sig), Tensor(np.ones(4)))


def test_softmax_cross_entropy_formula():
    logits = np.array([[1.0, 2.0, 0.5], [0.1, -0.3, 0.2]])
    targets = [1, 2]
    out = float(ops.softmax_cross_entropy(Tensor(logits), targets).data)
    ref = 0.0
    for row, t in zip(logits, targets):
        ref += -(row[t] - math.log(sum(math.exp(v) for v in row)))
    assert out == pytest.approx(ref / 2, abs=1e-12)


def test_masked_softmax_zero_at_masked_positions():
    p = ops.softmax(Tensor(np.array([[1.0, 5.0, 2.0]])), np.array([[True, False, True]])).data
    assert p[0, 1] == 0.0
    assert p.sum() == pytest.approx(1.0)


def test_pair_frames_odd_length_pads_with_zero():
    x = Tensor(np.arange(10, dtype=float).reshape(1, 5, 2))
    y, lengths = ops.pair_frames(x, np.array([5]))
    assert y.shape == (1, 3, 4)
    assert np.array_equal(y.data[0, 2], [8.0, 9.0, 0.0, 0.0])
    assert lengths.tolist() == [3]


# ----------------------------------------------------------------- adadelta

def test_adadelta_single_scalar_step_matches_oracle():
    p = Parameter(np.array([0.5]), dtype=np.float64)
    p.grad[...] = 1.0
    rho, eps = 0.95, 1e-8
    adadelta_update(p, rho, eps)
    eg2 = (1 - rho) * 1.0
    delta = -math.sqrt(0.0 + eps) / math.sqrt(eg2 + eps) * 1.0
    assert p.data[0] == pytest.approx(0.5 + delta, abs=1e-15)
    assert p.acc_grad[0] == pytest.approx(eg2, abs=1e-15)
    assert p.acc_delta[0] == pytest.approx((1 - rho) * delta * delta, abs=1e-20)


def test_adadelta_zero_gradient_leaves_values():
    rng = np.random.default_rng(6)
    p = p64(rng, 3, 3)
    before = p.data.copy()
    for _ in range(5):
        adadelta_update(p)
    assert np.array_equal(p.data, before)


def test_clip_grad_norm_rescales_jointly():
    a = Parameter(np.zeros(2), dtype=np.float64)
    b = Parameter(np.zeros(1), dtype=np.float64)
    a.grad[...] = [3.0, 0.0]
    b.grad[...] = [4.0]
    norm = clip_grad_norm([a, b], 1.0)
    assert norm == pytest.approx(5.0)
    assert np.allclose(np.concatenate([a.grad, b.grad]), [0.6, 0.0, 0.8])
    Adadelta(clip_norm=None).step([a, b])  # no clipping path


# -------------------------------------------------------------------- tape

def test_second_backward_on_same_tape_raises():
    rng = np.random.default_rng(7)
    w = p64(rng, 3)
    with Tape() as tape:
        loss = ops.sum(ops.mul(w, w))
    tape.backward(loss)
    with pytest.raises(RuntimeError):
        tape.backward(loss)


def test_non_finite_loss_raises():
    w = Parameter(np.array([np.inf]), dtype=np.float64)
    with Tape() as tape:
        loss = ops.sum(w)
    with pytest.raises(NonFiniteError):
        tape.backward(loss)


def test_gradient_check_rejects_nondeterministic_loss():
    rng = np.random.default_rng(8)
    w = p64(rng, 2)
    noise = np.random.default_rng(9)
    with pytest.raises(NondeterministicLossError):
        gradient_check(lambda: ops.sum(ops.mul(w, Tensor(noise.normal(size=2)))), [w])


def test_gradient_check_requires_float64():
    w = Parameter(np.ones(2, np.float32))
    with pytest.raises(TypeError):
        gradient_check(lambda: ops.sum(w), [w])


# ---------------------------------------------------------- per-op gradients

def _op_cases():
    rng = np.random.default_rng(10)
    a, b = p64(rng, 3, 4), p64(rng, 3, 4)
    w, bias = p64(rng, 4, 2), p64(rng, 2)
    table = p64(rng, 5, 3)
    sig, ker, ker1 = p64(rng, 2, 7), p64(rng, 2, 3), p64(rng, 5)
    seq = p64(rng, 2, 5, 3)
    wx, wh, bl = p64(rng, 3, 16), p64(rng, 4, 16), p64(rng, 16)
    h0, c0 = p64(rng, 2, 4), p64(rng, 2, 4)
    att = p64(rng, 2, 5)
    vals = p64(rng, 2, 5, 3)
    logits = p64(rng, 4, 6)
    lengths = np.array([5, 3])
    return {
        "add_broadcast": (lambda: ops.sum(ops.tanh(ops.add(a, ops.index(b, 0)))), [a, b]),
        "sub_mul": (lambda: ops.sum(ops.mul(ops.sub(a, b), a)), [a, b]),
        "sigmoid_mean": (lambda: ops.mean(ops.sigmoid(a)), [a]),
        "linear": (lambda: ops.sum(ops.tanh(ops.linear(a, w, bias))), [a, w, bias]),
        "concat_stack": (lambda: ops.sum(ops.tanh(ops.concat([a, ops.stack([b[0], b[1], b[2]])], 0))), [a, b]),
        "reshape_index": (lambda: ops.sum(ops.mul(ops.reshape(a, (4, 3))[1:], ops.reshape(a, (4, 3))[1:])), [a]),
        "embedding": (lambda: ops.sum(ops.tanh(ops.embedding([[1, 4], [1, 0]], table))), [table]),
        "conv1d_channels": (lambda: ops.sum(ops.tanh(ops.conv1d(sig, ker))), [sig, ker]),
        "conv1d_single": (lambda: ops.sum(ops.tanh(ops.conv1d(ops.reshape(seq, (2, 15)), ker1))), [seq, ker1]),
        "softmax_masked": (lambda: ops.sum(ops.mul(ops.softmax(att, np.array([[1, 1, 1, 0, 0], [1] * 5], bool)),
                                                   Tensor(np.arange(10.0).reshape(2, 5)))), [att]),
        "weighted_sum": (lambda: ops.sum(ops.tanh(ops.weighted_sum(att, vals))), [att, vals]),
        "xent_weighted": (lambda: ops.softmax_cross_entropy(logits, [0, 5, 2, 1], np.array([1.0, 1.0, 0.0, 1.0])),
                          [logits]),
        "lstm_step_masked": (lambda: ops.sum(ops.tanh(ops.lstm_step(seq[:, 0], h0, c0, wx, wh, bl,
                                                                     np.array([1.0, 0.0]))[0])),
                             [seq, h0, c0, wx, wh, bl]),
        "lstm_sequence": (lambda: ops.sum(ops.tanh(ops.lstm_sequence(seq, wx, wh, bl, lengths))), [seq, wx, wh, bl]),
        "lstm_sequence_reverse": (lambda: ops.sum(ops.tanh(ops.lstm_sequence(seq, wx, wh, bl, lengths, True))),
                                  [seq, wx, wh, bl]),
        "pair_frames": (lambda: ops.sum(ops.tanh(ops.pair_frames(seq, lengths)[0])), [seq]),
    }


@pytest.mark.parametrize("name", sorted(_op_cases()))
def test_op_gradient(name):
    fn, params = _op_cases()[name]
    assert gradient_check(fn, params, epsilon=1e-5, samples_per_param=30) < 1e-4
