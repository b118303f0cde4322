"""Location-aware attention, the LSTM decoder and the character RNN language model.

One :class:`Attention` and one :class:`Decoder` instance serve both encoder
paths; nothing here knows whether the encodings came from audio or from
symbols.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import ModelConfig
from .nn import Embedding, Linear, LSTMCell, Module, ops
from .nn.layers import uniform_param
from .nn.tensor import Tensor


def length_mask(lengths: np.ndarray, max_len: Optional[int] = None) -> np.ndarray:
    lengths = np.asarray(lengths)
    max_len = int(lengths.max()) if max_len is None else max_len
    return np.arange(max_len)[None, :] < lengths[:, None]


def uniform_attention(lengths: np.ndarray, max_len: int, dtype) -> np.ndarray:
    """Initial attention weights: ``1/T_b`` on each valid frame."""
    mask = length_mask(lengths, max_len)
    return (mask / np.asarray(lengths)[:, None]).astype(dtype)


class Attention(Module):
    """Location-aware energies ``w . tanh(W s + V h_t + U conv(alpha_prev)_t + b)``."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.kernel = uniform_param(rng, (cfg.att_channels, cfg.att_kernel), "kernel", "att")
        self.loc_proj = Linear(rng, cfg.att_channels, cfg.att_dim, "att", bias=False)
        self.dec_proj = Linear(rng, cfg.dec_hidden, cfg.att_dim, "att")
        self.enc_proj = Linear(rng, cfg.projection_dim, cfg.att_dim, "att", bias=False)
        self.score = Linear(rng, cfg.att_dim, 1, "att", bias=False)
        self.use_location = True

    def precompute(self, enc: Tensor) -> Tensor:
        """``V h_t`` for every frame; constant across decoder steps."""
        return self.enc_proj(enc)

    def __call__(self, enc: Tensor, enc_keys: Tensor, mask: np.ndarray, dec_h: Tensor,
                 alpha_prev: Tensor) -> tuple[Tensor, Tensor]:
        b, t, _ = enc.shape
        if t < 1:
            raise ValueError("attention over zero frames")
        q = ops.reshape(self.dec_proj(dec_h), (b, 1, -1))
        e = ops.add(enc_keys, q)
        if self.use_location:
            e = ops.add(e, self.loc_proj(ops.conv1d(alpha_prev, self.kernel)))
        scores = ops.reshape(self.score(ops.tanh(e)), (b, t))
        alpha = ops.softmax(scores, mask)
        return alpha, ops.weighted_sum(alpha, enc)


@dataclass
class DecoderState:
    h: list  # per layer Tensor[B, H_dec]
    c: list
    alpha: Tensor  # [B, T] previous attention weights

    def select(self, rows: np.ndarray) -> "DecoderState":
        """Reorder/duplicate batch rows (beam bookkeeping, inference only)."""
        return DecoderState([Tensor(h.data[rows]) for h in self.h],
                            [Tensor(c.data[rows]) for c in self.c],
                            Tensor(self.alpha.data[rows]))


class Decoder(Module):
    """``s_j = LSTM(embed(y_{j-1}), s_{j-1}, c_j)`` followed by an affine output layer."""

    def __init__(self, cfg: ModelConfig, vocab_size: int, rng: np.random.Generator):
        self.embedding = Embedding(rng, vocab_size, cfg.dec_embedding, "dec")
        self.cells = []
        d_in = cfg.dec_embedding + cfg.projection_dim
        for _ in range(cfg.dec_layers):
            self.cells.append(LSTMCell(rng, d_in, cfg.dec_hidden, "dec"))
            d_in = cfg.dec_hidden
        self.output = Linear(rng, cfg.dec_hidden, vocab_size, "dec")

    @property
    def vocab_size(self) -> int:
        return self.embedding.vocab_size

    def init_state(self, batch: int, enc_lengths: np.ndarray, max_len: int, dtype) -> DecoderState:
        hd = self.cells[0].hidden
        zeros = [Tensor(np.zeros((batch, hd), dtype)) for _ in self.cells]
        return DecoderState(zeros, list(zeros), Tensor(uniform_attention(enc_lengths, max_len, dtype)))

    def step_hidden(self, y_emb: Tensor, context: Tensor, state: DecoderState,
                    mask: Optional[np.ndarray] = None) -> tuple[list, list]:
        x = ops.concat([y_emb, context], axis=-1)
        hs, cs = [], []
        for cell, h, c in zip(self.cells, state.h, state.c):
            h, c = cell.step(x, h, c, mask)
            hs.append(h)
            cs.append(c)
            x = h
        return hs, cs

    def step(self, y_prev, state: DecoderState, context: Tensor) -> tuple[Tensor, list, list]:
        """One decoder step; returns logits ``[B, V]`` and the new LSTM states."""
        emb = self.embedding(np.asarray(y_prev, dtype=np.int64))
        hs, cs = self.step_hidden(emb, context, state)
        return self.output(hs[-1]), hs, cs


def run_decoder(attention: Attention, decoder: Decoder, enc: Tensor, enc_lengths: np.ndarray,
                inputs: np.ndarray, return_alphas: bool = False):
    """Teacher-forced unroll: ``inputs`` are ``[B, U]`` previous tokens (starting with sos).

    Returns logits ``[B, U, V]`` (and the list of attention weights per step).
    """
    b, t, _ = enc.shape
    mask = length_mask(enc_lengths, t)
    keys = attention.precompute(enc)
    state = decoder.init_state(b, enc_lengths, t, enc.dtype)
    embs = decoder.embedding(inputs)
    tops = []
    alphas = []
    for j in range(inputs.shape[1]):
        alpha, ctx = attention(enc, keys, mask, state.h[-1], state.alpha)
        hs, cs = decoder.step_hidden(ops.index(embs, (slice(None), j)), ctx, state)
        state = DecoderState(hs, cs, alpha)
        tops.append(hs[-1])
        if return_alphas:
            alphas.append(alpha)
    logits = decoder.output(ops.stack(tops, axis=1))
    return (logits, alphas) if return_alphas else logits


def teacher_forcing_arrays(targets: Sequence[Sequence[int]], sos: int, eos: int):
    """Build ``(inputs, outputs, weights)`` ``[B, U]`` arrays; outputs end with eos."""
    outs = [list(t) + ([eos] if not t or t[-1] != eos else []) for t in targets]
    u = max(len(o) for o in outs)
    b = len(outs)
    inputs = np.full((b, u), eos, dtype=np.int64)
    outputs = np.full((b, u), eos, dtype=np.int64)
    weights = np.zeros((b, u))
    for i, o in enumerate(outs):
        inputs[i, 0] = sos
        inputs[i, 1:len(o)] = o[:-1]
        outputs[i, :len(o)] = o
        weights[i, :len(o)] = 1.0
    return inputs, outputs, weights


def forward_teacher_forced(attention: Attention, decoder: Decoder, enc: Tensor,
                           enc_lengths: np.ndarray, targets: Sequence[Sequence[int]],
                           sos: int = 0, eos: int = 1) -> Tensor:
    """Mean per-token cross-entropy of ``targets`` (each ending in eos) given encodings."""
    for t in targets:
        if len(t) == 0:
            raise ValueError("empty target sequence")
    inputs, outputs, weights = teacher_forcing_arrays(targets, sos, eos)
    logits = run_decoder(attention, decoder, enc, enc_lengths, inputs)
    v = logits.shape[-1]
    return ops.softmax_cross_entropy(ops.reshape(logits, (-1, v)), outputs.reshape(-1),
                                     weights.reshape(-1))


def attend(attention: Attention, enc: Tensor, dec_h: Tensor, alpha_prev: Tensor) -> tuple[Tensor, Tensor]:
    """Unbatched attention: ``enc [T, H]``, ``dec_h [H_dec]``, ``alpha_prev [T]``."""
    t = enc.shape[0]
    if t < 1:
        raise ValueError("attention over zero frames")
    e3 = ops.reshape(enc, (1,) + enc.shape)
    alpha, ctx = attention(e3, attention.precompute(e3), np.ones((1, t), bool),
                           ops.reshape(dec_h, (1, -1)), ops.reshape(alpha_prev, (1, t)))
    return ops.reshape(alpha, (t,)), ops.reshape(ctx, (ctx.shape[-1],))


def decoder_step(decoder: Decoder, y_prev: int, state: DecoderState, context: Tensor):
    """Unbatched decoder step returning ``(dist [V], (h, c))``."""
    if not 0 <= int(y_prev) < decoder.vocab_size:
        raise IndexError(f"token {y_prev} outside vocabulary of {decoder.vocab_size}")
    logits, hs, cs = decoder.step(np.array([y_prev]), state, ops.reshape(context, (1, -1)))
    dist = ops.softmax(logits)
    return ops.reshape(dist, (dist.shape[-1],)), (hs, cs)


# --------------------------------------------------------------- language model

@dataclass
class LmState:
    h: list
    c: list

    def select(self, rows: np.ndarray) -> "LmState":
        return LmState([Tensor(h.data[rows]) for h in self.h], [Tensor(c.data[rows]) for c in self.c])


class RnnLm(Module):
    """Multi-layer LSTM character language model over the output vocabulary."""

    def __init__(self, vocab_size: int, hidden: int = 650, layers: int = 2,
                 embedding_dim: Optional[int] = None, seed: int = 1):
        rng = np.random.default_rng(seed)
        embedding_dim = embedding_dim or hidden
        self.embedding = Embedding(rng, vocab_size, embedding_dim, "lm")
        self.cells = []
        d_in = embedding_dim
        for _ in range(layers):
            self.cells.append(LSTMCell(rng, d_in, hidden, "lm"))
            d_in = hidden
        self.output = Linear(rng, hidden, vocab_size, "lm")

    @property
    def vocab_size(self) -> int:
        return self.embedding.vocab_size

    @property
    def config(self) -> dict:
        return {"vocab_size": self.vocab_size, "hidden": self.cells[0].hidden,
                "layers": len(self.cells), "embedding_dim": self.embedding.table.shape[1]}

    def init_state(self, batch: int) -> LmState:
        dtype = self.output.weight.dtype
        zeros = [Tensor(np.zeros((batch, c.hidden), dtype)) for c in self.cells]
        return LmState(zeros, list(zeros))

    def sequence_loss(self, inputs: np.ndarray, outputs: np.ndarray, weights: np.ndarray) -> Tensor:
        lengths = weights.sum(axis=1).astype(np.int64)
        x = self.embedding(inputs)
        for cell in self.cells:
            x = cell.sequence(x, lengths)
        logits = self.output(x)
        v = logits.shape[-1]
        return ops.softmax_cross_entropy(ops.reshape(logits, (-1, v)), outputs.reshape(-1),
                                         weights.reshape(-1))

    def step(self, y_prev: np.ndarray, state: LmState) -> tuple[np.ndarray, LmState]:
        y_prev = np.asarray(y_prev, dtype=np.int64)
        x = self.embedding(y_prev)
        hs, cs = [], []
        for cell, h, c in zip(self.cells, state.h, state.c):
            h, c = cell.step(x, h, c)
            hs.append(h)
            cs.append(c)
            x = h
        return ops.log_softmax_np(self.output(x).data), LmState(hs, cs)


def lm_score_step(lm: RnnLm, y_prev, lm_state: Optional[LmState] = None):
    """Next-token log-probabilities; ``y_prev`` may be a scalar or a ``[N]`` array."""
    scalar = np.ndim(y_prev) == 0
    ids = np.atleast_1d(np.asarray(y_prev, dtype=np.int64))
    if lm_state is None:
        lm_state = lm.init_state(len(ids))
    logp, new_state = lm.step(ids, lm_state)
    return (logp[0] if scalar else logp), new_state
