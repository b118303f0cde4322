"""Beam search with output-length bounds and optional shallow LM fusion."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

import numpy as np

from .attention_decoder import Attention, Decoder, DecoderState, RnnLm
from .config import BeamConfig
from .encoders import AcousticInput, SymbolicInput
from .nn import ops
from .nn.tensor import Tensor

log = logging.getLogger(__name__)

FORCED_EOS = "forced_eos"


def length_bounds(n_frames: int, min_ratio: float = 0.3, max_ratio: float = 0.8) -> tuple[int, int]:
    """``(floor(min_ratio * F), ceil(max_ratio * F))`` computed exactly on decimal ratios."""
    lo = Fraction(repr(float(min_ratio))) * n_frames
    hi = Fraction(repr(float(max_ratio))) * n_frames
    return math.floor(lo), math.ceil(hi)


def fuse_scores(asr_logp: np.ndarray, lm_logp: np.ndarray, weight: float) -> np.ndarray:
    """Shallow fusion: ``asr_logp + weight * lm_logp``."""
    if weight < 0:
        raise ValueError("LM weight must be >= 0")
    asr_logp = np.asarray(asr_logp)
    if weight == 0:
        return asr_logp.copy()
    return asr_logp + weight * np.asarray(lm_logp)


@dataclass
class Hypothesis:
    tokens: tuple
    score: float
    flags: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.tokens)


class _Stepper:
    """Runs attention + decoder (+ LM) for a batch of live hypotheses."""

    def __init__(self, attention: Attention, decoder: Decoder, enc: Tensor,
                 lm: Optional[RnnLm], lm_weight: float):
        self.attention = attention
        self.decoder = decoder
        self.enc = enc.data  # [1, T, H]
        self.keys = attention.precompute(enc).data
        self.t = enc.shape[1]
        self.lm = lm if lm is not None and lm_weight > 0 else None
        self.lm_weight = lm_weight

    def initial(self):
        dec = self.decoder.init_state(1, np.array([self.t]), self.t, self.enc.dtype)
        lm = self.lm.init_state(1) if self.lm is not None else None
        return dec, lm

    def __call__(self, y_prev: np.ndarray, dec: DecoderState, lm_state):
        n = len(y_prev)
        enc = Tensor(np.broadcast_to(self.enc, (n,) + self.enc.shape[1:]))
        keys = Tensor(np.broadcast_to(self.keys, (n,) + self.keys.shape[1:]))
        mask = np.ones((n, self.t), bool)
        alpha, ctx = self.attention(enc, keys, mask, dec.h[-1], dec.alpha)
        logits, hs, cs = self.decoder.step(y_prev, dec, ctx)
        logp = ops.log_softmax_np(logits.data.astype(np.float64))
        new_lm = None
        if self.lm is not None:
            lm_logp, new_lm = self.lm.step(y_prev, lm_state)
            logp = fuse_scores(logp, lm_logp, self.lm_weight)
        return logp, DecoderState(hs, cs, alpha), new_lm


def _encode(model, inp) -> Tensor:
    if isinstance(inp, AcousticInput):
        enc, _ = model.encode_acoustic([np.asarray(inp.features)])
    elif isinstance(inp, SymbolicInput):
        enc, _ = model.encode_augmenting([list(inp.tokens)])
    else:
        raise TypeError(f"expected AcousticInput or SymbolicInput, got {type(inp).__name__}")
    return enc


def beam_search(model, inp: Union[AcousticInput, SymbolicInput], cfg: Optional[BeamConfig] = None,
                lm: Optional[RnnLm] = None) -> list[Hypothesis]:
    """Decode one input with ``model``; works identically for both encoder paths."""
    cfg = cfg or BeamConfig()
    enc = _encode(model, inp)
    v = model.output_vocab
    return beam_search_encoded(model.attention, model.decoder, enc, cfg, lm, v.sos, v.eos)


def beam_search_encoded(attention: Attention, decoder: Decoder, enc: Tensor, cfg: BeamConfig,
                        lm: Optional[RnnLm] = None, sos: int = 0, eos: int = 1) -> list[Hypothesis]:
    """Beam search over encodings ``enc: [1, F, H]``.

    At each step the ``beam_size`` best expansions are kept, eos expansions
    included; eos expansions become finished hypotheses.  eos is disallowed
    below ``floor(min_ratio * F)`` tokens and forced at ``ceil(max_ratio * F)``
    tokens (eos not counted).  Returns finished hypotheses best first.
    """
    if lm is not None and lm.vocab_size != decoder.vocab_size:
        raise ValueError("LM vocabulary size does not match the decoder")
    f = enc.shape[1]
    if f < 1:
        raise ValueError("empty encoder output")
    min_len, max_len = length_bounds(f, cfg.min_ratio, cfg.max_ratio)
    stepper = _Stepper(attention, decoder, enc, lm, cfg.lm_weight)
    dec_state, lm_state = stepper.initial()
    tokens: list[tuple] = [()]
    scores = np.zeros(1)
    finished: list[Hypothesis] = []
    vsize = decoder.vocab_size
    for length in range(max_len + 1):
        y_prev = np.array([t[-1] if t else sos for t in tokens], dtype=np.int64)
        logp, new_dec, new_lm = stepper(y_prev, dec_state, lm_state)
        logp[:, sos] = -np.inf
        if length < min_len:
            logp[:, eos] = -np.inf
        forced = length >= max_len
        if forced:
            keep = logp[:, eos].copy()
            logp[:] = -np.inf
            logp[:, eos] = keep
        total = (scores[:, None] + logp).reshape(-1)
        order = np.argsort(-total, kind="stable")[:cfg.beam_size]
        order = order[np.isfinite(total[order])]
        rows, next_tokens, next_scores = [], [], []
        for flat in order:
            row, tok = divmod(int(flat), vsize)
            if tok == eos:
                finished.append(Hypothesis(tokens[row], float(total[flat]),
                                           [FORCED_EOS] if forced else []))
            else:
                rows.append(row)
                next_tokens.append(tokens[row] + (tok,))
                next_scores.append(float(total[flat]))
        if not rows:
            break
        # log-probabilities are <= 0, so no live hypothesis can overtake a finished one
        if finished and max(h.score for h in finished) >= max(next_scores):
            break
        idx = np.array(rows)
        dec_state = new_dec.select(idx)
        lm_state = new_lm.select(idx) if new_lm is not None else None
        tokens, scores = next_tokens, np.array(next_scores)
    finished.sort(key=lambda h: -h.score)
    if finished and FORCED_EOS in finished[0].flags:
        log.warning("best hypothesis reached the maximum length %d (F=%d); eos was forced", max_len, f)
    return finished


def greedy_search_encoded(attention: Attention, decoder: Decoder, enc: Tensor, cfg: BeamConfig,
                          lm: Optional[RnnLm] = None, sos: int = 0, eos: int = 1) -> Hypothesis:
    """Argmax decoding under the same length constraints as :func:`beam_search_encoded`."""
    min_len, max_len = length_bounds(enc.shape[1], cfg.min_ratio, cfg.max_ratio)
    stepper = _Stepper(attention, decoder, enc, lm, cfg.lm_weight)
    dec_state, lm_state = stepper.initial()
    tokens: list[int] = []
    score = 0.0
    while True:
        y_prev = np.array([tokens[-1] if tokens else sos])
        logp, dec_state, lm_state = stepper(y_prev, dec_state, lm_state)
        logp = logp[0]
        logp[sos] = -np.inf
        if len(tokens) < min_len:
            logp[eos] = -np.inf
        if len(tokens) >= max_len:
            return Hypothesis(tuple(tokens), score + float(logp[eos]), [FORCED_EOS])
        tok = int(np.argmax(logp))
        score += float(logp[tok])
        if tok == eos:
            return Hypothesis(tuple(tokens), score)
        tokens.append(tok)


def hypothesis_text(vocab, hyp: Hypothesis) -> str:
    """Transcription with runs of word boundaries collapsed and edges trimmed."""
    return " ".join(vocab.decode(hyp.tokens).split())


def decode_line(uttid: str, text: str, hyp: Hypothesis, lm_weight: Optional[float] = None) -> str:
    """``UTTID<TAB>TRANSCRIPTION<TAB>LOG_SCORE<TAB>FLAGS``."""
    flags = list(hyp.flags)
    if lm_weight is not None:
        flags.append(f"lm_weight={lm_weight:g}")
    return f"{uttid}\t{text}\t{hyp.score:.6f}\t{','.join(flags) if flags else '-'}\n"


def parse_decode_line(line: str) -> tuple[str, str, float, list[str]]:
    uttid, text, score, flags = line.rstrip("\n").split("\t")
    return uttid, text, float(score), [] if flags == "-" else flags.split(",")
