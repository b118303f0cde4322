"""Acoustic (pyramidal biLSTM) and augmenting (embedding + biLSTM) encoders.

Both encoders map their input to ``[B, T, projection_dim]`` so the shared
attention cannot tell which path produced an encoding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import ModelConfig
from .nn import BiLSTM, Embedding, Linear, Module, ops
from .nn.tensor import Tensor, get_default_dtype


class InputTooShortError(ValueError):
    pass


@dataclass
class AcousticInput:
    features: np.ndarray  # [L_x, D_x]
    utterance_id: str = ""


@dataclass
class SymbolicInput:
    tokens: Sequence[int]
    utterance_id: str = ""


def output_length(n_frames: int, pyramid_layers: Sequence[int] = (2, 3)) -> int:
    """Encoder output length after one ceil-halving per pyramid layer."""
    for _ in pyramid_layers:
        n_frames = math.ceil(n_frames / 2)
    return n_frames


def pad_batch(arrays: Sequence[np.ndarray], dtype=None) -> tuple[np.ndarray, np.ndarray]:
    """Stack variable-length ``[L_i, ...]`` arrays into ``[B, max L, ...]`` with zero padding."""
    lengths = np.array([len(a) for a in arrays], dtype=np.int64)
    first = np.asarray(arrays[0])
    out = np.zeros((len(arrays), int(lengths.max())) + first.shape[1:],
                   dtype=dtype or first.dtype)
    for i, a in enumerate(arrays):
        out[i, :len(a)] = a
    return out, lengths


class AcousticEncoder(Module):
    """Stacked biLSTM layers, each followed by a linear projection to ``projection_dim``.

    Layers listed in ``pyramid_layers`` concatenate adjacent output frames
    (``2H -> 4H``) before projecting, halving the time resolution.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.pyramid = tuple(cfg.pyramid_layers)
        self.input_dim = cfg.input_dim
        self.layers = []
        self.projections = []
        d_in = cfg.input_dim
        for i in range(cfg.acoustic_layers):
            self.layers.append(BiLSTM(rng, d_in, cfg.hidden, "enc"))
            width = 4 * cfg.hidden if i in self.pyramid else 2 * cfg.hidden
            self.projections.append(Linear(rng, width, cfg.projection_dim, "enc"))
            d_in = cfg.projection_dim

    @property
    def min_frames(self) -> int:
        return 2 ** len(self.pyramid)

    def __call__(self, x: Tensor, lengths: np.ndarray) -> tuple[Tensor, np.ndarray]:
        lengths = np.asarray(lengths)
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"feature dim {x.shape[-1]} != configured input_dim {self.input_dim}")
        if lengths.min() < self.min_frames:
            raise InputTooShortError(
                f"utterance of {int(lengths.min())} frames is shorter than {self.min_frames}")
        for i, (layer, proj) in enumerate(zip(self.layers, self.projections)):
            h = layer(x, lengths)
            if i in self.pyramid:
                h, lengths = ops.pair_frames(h, lengths)
            x = proj(h)
        return x, lengths


class AugmentingEncoder(Module):
    """Symbol embedding, one biLSTM layer and a projection; no down-sampling."""

    def __init__(self, cfg: ModelConfig, vocab_size: int, rng: np.random.Generator):
        self.embedding = Embedding(rng, vocab_size, cfg.embedding_dim, "aug")
        self.layer = BiLSTM(rng, cfg.embedding_dim, cfg.hidden, "aug")
        self.projection = Linear(rng, 2 * cfg.hidden, cfg.projection_dim, "aug")

    def __call__(self, ids: np.ndarray, lengths: np.ndarray) -> tuple[Tensor, np.ndarray]:
        lengths = np.asarray(lengths)
        if lengths.min() < 1:
            raise ValueError("empty symbolic input")
        z = self.embedding(ids)
        h = self.layer(z, lengths)
        return self.projection(h), lengths


def encode_acoustic(encoder: AcousticEncoder, inp: AcousticInput) -> Tensor:
    """Single-utterance encoding ``[L_x, D_x] -> [F, H]``."""
    feats = np.asarray(inp.features, dtype=encoder.projections[0].weight.dtype)
    out, _ = encoder(Tensor(feats[None]), np.array([len(feats)]))
    return ops.reshape(out, out.shape[1:])


def encode_augmenting(encoder: AugmentingEncoder, inp: SymbolicInput) -> Tensor:
    """Single-sequence encoding ``[L_z] -> [L_z, H]``."""
    ids = np.asarray(inp.tokens, dtype=np.int64)
    out, _ = encoder(ids[None], np.array([len(ids)]))
    return ops.reshape(out, out.shape[1:])


def acoustic_batch(features: Sequence[np.ndarray], dtype=None) -> tuple[Tensor, np.ndarray]:
    x, lengths = pad_batch(features, dtype=dtype or get_default_dtype())
    return Tensor(x), lengths
