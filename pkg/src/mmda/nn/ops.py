"""Differentiable primitives.

Every function takes and returns :class:`~mmda.nn.tensor.Tensor` objects and
records its adjoint on the active tape when any input requires a gradient.
Recurrent cells are fused (one record per step or per sequence) because a
per-gate graph is far too slow in pure Python.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, active_tape, as_tensor


def _out(data, inputs) -> Tensor:
    return Tensor(data, requires_grad=any(t.requires_grad for t in inputs), dtype=data.dtype)


def _record(inputs, outputs, backward) -> None:
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(inputs, outputs, backward)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form: one ufunc pass and no overflow for large |x|
    return 0.5 + 0.5 * np.tanh(0.5 * x)


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _out(a.data + b.data, (a, b))
    _record((a, b), (out,), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _out(a.data - b.data, (a, b))
    _record((a, b), (out,), lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _out(a.data * b.data, (a, b))
    _record((a, b), (out,), lambda g: (_unbroadcast(g * b.data, a.shape),
                                       _unbroadcast(g * a.data, b.shape)))
    return out


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out = _out(y, (x,))
    _record((x,), (out,), lambda g: (g * (1.0 - y * y),))
    return out


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    out = _out(y, (x,))
    _record((x,), (out,), lambda g: (g * y * (1.0 - y),))
    return out


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    out = _out(np.asarray(x.data.sum(), dtype=x.dtype), (x,))
    _record((x,), (out,), lambda g: (np.broadcast_to(g, x.shape).copy(),))
    return out


def mean(x: Tensor) -> Tensor:
    n = x.data.size
    out = _out(np.asarray(x.data.mean(), dtype=x.dtype), (x,))
    _record((x,), (out,), lambda g: (np.broadcast_to(g / n, x.shape).copy(),))
    return out


# ------------------------------------------------------------------ structure

def reshape(x: Tensor, shape) -> Tensor:
    out = _out(x.data.reshape(shape), (x,))
    _record((x,), (out,), lambda g: (g.reshape(x.shape),))
    return out


def index(x: Tensor, idx) -> Tensor:
    out = _out(np.array(x.data[idx]), (x,))

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    _record((x,), (out,), backward)
    return out


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = _out(np.concatenate([t.data for t in tensors], axis=axis), tensors)
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes, axis=axis))

    _record(tensors, (out,), backward)
    return out


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = _out(np.stack([t.data for t in tensors], axis=axis), tensors)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    _record(tensors, (out,), backward)
    return out


def pair_frames(x: Tensor, lengths: np.ndarray) -> tuple[Tensor, np.ndarray]:
    """Concatenate adjacent time steps: ``[B, L, D] -> [B, ceil(L/2), 2D]``.

    Odd lengths are zero padded at the end before pairing.  Padded positions
    of ``x`` are expected to be zero already.
    """
    b, n, d = x.shape
    if n % 2:
        data = np.concatenate([x.data, np.zeros((b, 1, d), x.dtype)], axis=1)
    else:
        data = x.data
    out = _out(data.reshape(b, data.shape[1] // 2, 2 * d), (x,))
    _record((x,), (out,), lambda g: (g.reshape(b, -1, d)[:, :n],))
    return out, (np.asarray(lengths) + 1) // 2


# -------------------------------------------------------------------- algebra

def matmul(a: Tensor, w: Tensor) -> Tensor:
    """``a @ w`` for ``a`` of shape ``[..., n]`` and a 2-D ``w`` of shape ``[n, m]``."""
    a, w = as_tensor(a), as_tensor(w)
    out = _out(a.data @ w.data, (a, w))

    def backward(g):
        ga = g @ w.data.T if a.requires_grad else None
        gw = None
        if w.requires_grad:
            gw = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gw

    _record((a, w), (out,), backward)
    return out


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Affine map ``x @ weight + bias`` over the last axis."""
    x = as_tensor(x)
    if bias is None:
        return matmul(x, weight)
    inputs = (x, weight, bias)
    out = _out(x.data @ weight.data + bias.data, inputs)

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ weight.data.T if x.requires_grad else None
        gw = x.data.reshape(-1, x.shape[-1]).T @ g2 if weight.requires_grad else None
        gb = g2.sum(axis=0) if bias.requires_grad else None
        return gx, gw, gb

    _record(inputs, (out,), backward)
    return out


def weighted_sum(weights: Tensor, values: Tensor) -> Tensor:
    """Per-batch ``sum_t weights[b, t] * values[b, t, :]``."""
    out = _out(np.einsum("bt,bth->bh", weights.data, values.data), (weights, values))

    def backward(g):
        gw = np.einsum("bh,bth->bt", g, values.data) if weights.requires_grad else None
        gv = weights.data[:, :, None] * g[:, None, :] if values.requires_grad else None
        return gw, gv

    _record((weights, values), (out,), backward)
    return out


def embedding(ids, table: Tensor) -> Tensor:
    """Row gather ``table[ids]``; the gradient scatters into gathered rows only."""
    ids = np.asarray(ids, dtype=np.int64)
    v = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= v):
        bad = ids[(ids < 0) | (ids >= v)]
        raise IndexError(f"token id {int(bad[0])} out of range [0, {v})")
    out = _out(table.data[ids], (table,))

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    _record((table,), (out,), backward)
    return out


def conv1d(signal: Tensor, kernel: Tensor) -> Tensor:
    """Same-length cross-correlation with zero padding.

    ``signal`` is ``[..., T]``.  A 1-D ``kernel`` of odd width ``K`` gives a
    ``[..., T]`` result; a 2-D ``[C, K]`` kernel gives ``[..., T, C]``.
    """
    signal, kernel = as_tensor(signal), as_tensor(kernel)
    k = kernel.shape[-1]
    if k % 2 == 0:
        raise ValueError(f"conv1d kernel width must be odd, got {k}")
    pad = (k - 1) // 2
    t = signal.shape[-1]
    padded = np.pad(signal.data, [(0, 0)] * (signal.ndim - 1) + [(pad, pad)])
    windows = sliding_window_view(padded, k, axis=-1)  # [..., T, K]
    single = kernel.ndim == 1
    kmat = kernel.data[None, :] if single else kernel.data
    y = windows @ kmat.T
    out = _out(y[..., 0] if single else y, (signal, kernel))

    def backward(g):
        if single:
            g = g[..., None]
        gk = None
        if kernel.requires_grad:
            gk = g.reshape(-1, g.shape[-1]).T @ windows.reshape(-1, k)
            if single:
                gk = gk[0]
        gs = None
        if signal.requires_grad:
            gwin = g @ kmat  # [..., T, K]
            gpad = np.zeros(padded.shape, dtype=padded.dtype)
            for j in range(k):
                gpad[..., j:j + t] += gwin[..., j]
            gs = gpad[..., pad:pad + t]
        return gs, gk

    _record((signal, kernel), (out,), backward)
    return out


# ------------------------------------------------------------ probabilistic

def softmax(x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """Softmax over the last axis; ``mask == False`` entries get probability 0."""
    z = x.data
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    out = _out(p, (x,))

    def backward(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    _record((x,), (out,), backward)
    return out


def log_softmax_np(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits: Tensor, targets, weights: Optional[np.ndarray] = None,
                          normalize: Optional[float] = None) -> Tensor:
    """Mean negative log-likelihood of ``targets`` under ``softmax(logits)``.

    ``logits`` is ``[V]`` (with a scalar target) or ``[N, V]``.  ``weights``
    masks out padded rows; the sum is divided by ``normalize`` or, by default,
    by the total weight.
    """
    logits = as_tensor(logits)
    single = logits.ndim == 1
    z = logits.data[None, :] if single else logits.data
    tgt = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    n, v = z.shape
    if tgt.shape != (n,):
        raise ValueError(f"targets shape {tgt.shape} does not match logits {logits.shape}")
    if tgt.size and (tgt.min() < 0 or tgt.max() >= v):
        raise IndexError(f"target out of range [0, {v})")
    w = np.ones(n, dtype=z.dtype) if weights is None else np.asarray(weights, dtype=z.dtype)
    denom = float(w.sum()) if normalize is None else float(normalize)
    if denom <= 0:
        raise ValueError("cross-entropy over zero tokens")
    logp = log_softmax_np(z)
    nll = -logp[np.arange(n), tgt]
    out = _out(np.asarray((w * nll).sum() / denom, dtype=z.dtype), (logits,))

    def backward(g):
        grad = np.exp(logp)
        grad[np.arange(n), tgt] -= 1.0
        grad *= (w / denom)[:, None] * g
        return (grad[0] if single else grad,)

    _record((logits,), (out,), backward)
    return out


# ------------------------------------------------------------------ recurrent

def _lstm_gates(z: np.ndarray, hd: int):
    s = _sigmoid(z)
    return s[:, :hd], s[:, hd:2 * hd], np.tanh(z[:, 2 * hd:3 * hd]), s[:, 3 * hd:]


def _lstm_cell_backward(dh, dc, cache, hd):
    """Adjoint of one unmasked cell; returns (dz, dc_prev)."""
    i, f, g, o, c_prev, tc = cache
    do = dh * tc
    dct = dc + dh * o * (1.0 - tc * tc)
    di = dct * g
    dg = dct * i
    df = dct * c_prev
    dz = np.concatenate([di * i * (1.0 - i), df * f * (1.0 - f),
                         dg * (1.0 - g * g), do * o * (1.0 - o)], axis=1)
    return dz, dct * f


def lstm_step(x: Tensor, h_prev: Tensor, c_prev: Tensor, w_x: Tensor, w_h: Tensor,
              b: Tensor, mask: Optional[np.ndarray] = None) -> tuple[Tensor, Tensor]:
    """One LSTM step on a batch ``x: [B, D]`` (a 1-D ``x`` is treated as B = 1).

    Gate order in the ``4H`` weight columns is input, forget, candidate,
    output.  Rows with ``mask == 0`` carry ``h_prev``/``c_prev`` through
    unchanged.
    """
    x, h_prev, c_prev = as_tensor(x), as_tensor(h_prev), as_tensor(c_prev)
    squeeze = x.ndim == 1
    xd = x.data[None] if squeeze else x.data
    hp = h_prev.data[None] if squeeze else h_prev.data
    cp = c_prev.data[None] if squeeze else c_prev.data
    hd = w_h.shape[0]
    if xd.shape[1] != w_x.shape[0] or hp.shape[1] != hd or cp.shape[1] != hd \
            or w_x.shape[1] != 4 * hd or w_h.shape[1] != 4 * hd or b.shape != (4 * hd,):
        raise ValueError(f"lstm_step dimension mismatch: x {x.shape}, h {h_prev.shape}, "
                         f"c {c_prev.shape}, W_x {w_x.shape}, W_h {w_h.shape}, b {b.shape}")
    z = xd @ w_x.data + hp @ w_h.data + b.data
    i, f, g, o = _lstm_gates(z, hd)
    c = f * cp + i * g
    tc = np.tanh(c)
    h = o * tc
    if mask is not None:
        m = np.asarray(mask, dtype=xd.dtype)[:, None]
        h = m * h + (1.0 - m) * hp
        c = m * c + (1.0 - m) * cp
    else:
        m = None
    inputs = (x, h_prev, c_prev, w_x, w_h, b)
    h_out = _out(h[0] if squeeze else h, inputs)
    c_out = _out(c[0] if squeeze else c, inputs)
    cache = (i, f, g, o, cp, tc)

    def backward(gh, gc):
        if squeeze:
            gh, gc = gh[None], gc[None]
        if m is not None:
            dz, dcp = _lstm_cell_backward(m * gh, m * gc, cache, hd)
            dcp = dcp + (1.0 - m) * gc
            dhp = dz @ w_h.data.T + (1.0 - m) * gh
        else:
            dz, dcp = _lstm_cell_backward(gh, gc, cache, hd)
            dhp = dz @ w_h.data.T
        dx = dz @ w_x.data.T
        grads = (dx, dhp, dcp, xd.T @ dz, hp.T @ dz, dz.sum(axis=0))
        if squeeze:
            grads = (dx[0], dhp[0], dcp[0]) + grads[3:]
        return grads

    _record(inputs, (h_out, c_out), backward)
    return h_out, c_out


def lstm_sequence(x: Tensor, w_x: Tensor, w_h: Tensor, b: Tensor,
                  lengths: Optional[np.ndarray] = None, reverse: bool = False) -> Tensor:
    """Run an LSTM over ``x: [B, L, D]`` from zero state.

    Returns ``[B, L, H]`` with zeros at padded positions (``t >= lengths[b]``).
    With ``reverse=True`` each sequence is read from its own last valid frame
    back to frame 0.
    """
    bsz, n, d = x.shape
    hd = w_h.shape[0]
    if n < 1:
        raise ValueError("LSTM over an empty sequence")
    if d != w_x.shape[0]:
        raise ValueError(f"input dim {d} does not match weights {w_x.shape}")
    dtype = x.dtype
    lengths = np.full(bsz, n) if lengths is None else np.asarray(lengths)
    masks = (np.arange(n)[None, :] < lengths[:, None]).astype(dtype)  # [B, L]
    full = bool(masks.all())
    xw = x.data @ w_x.data + b.data  # input projection for all steps at once
    order = range(n - 1, -1, -1) if reverse else range(n)
    h = np.zeros((bsz, hd), dtype)
    c = np.zeros((bsz, hd), dtype)
    ys = np.zeros((bsz, n, hd), dtype)
    caches = [None] * n
    hprevs = [None] * n
    for t in order:
        z = xw[:, t] + h @ w_h.data
        i, f, g, o = _lstm_gates(z, hd)
        cn = f * c + i * g
        tc = np.tanh(cn)
        hn = o * tc
        caches[t] = (i, f, g, o, c, tc)
        hprevs[t] = h
        if full:
            h, c = hn, cn
            ys[:, t] = hn
        else:
            m = masks[:, t:t + 1]
            ys[:, t] = m * hn
            h = m * hn + (1.0 - m) * h
            c = m * cn + (1.0 - m) * c
    inputs = (x, w_x, w_h, b)
    out = _out(ys, inputs)

    def backward(gy):
        dz_all = np.zeros((bsz, n, 4 * hd), dtype)
        dh = np.zeros((bsz, hd), dtype)
        dc = np.zeros((bsz, hd), dtype)
        gwh = np.zeros_like(w_h.data)
        for t in reversed(list(order)):
            m = masks[:, t:t + 1]
            dh_new = m * (gy[:, t] + dh)
            dc_new = m * dc
            dz, dcp = _lstm_cell_backward(dh_new, dc_new, caches[t], hd)
            dz_all[:, t] = dz
            gwh += hprevs[t].T @ dz
            dh = dz @ w_h.data.T + (1.0 - m) * dh
            dc = dcp + (1.0 - m) * dc
        dz2 = dz_all.reshape(-1, 4 * hd)
        gx = dz_all @ w_x.data.T if x.requires_grad else None
        gwx = x.data.reshape(-1, d).T @ dz2
        return gx, gwx, gwh, dz2.sum(axis=0)

    _record(inputs, (out,), backward)
    return out
