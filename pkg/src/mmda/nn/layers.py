"""Parameter containers for the layer primitives."""

from __future__ import annotations

from typing import Iterator, Optional

import numpy as np

from . import ops
from .tensor import Parameter, Tensor, get_default_dtype

INIT_SCALE = 0.1


def uniform_param(rng: np.random.Generator, shape, name: str, partition: str,
                  scale: float = INIT_SCALE) -> Parameter:
    data = rng.uniform(-scale, scale, size=shape).astype(get_default_dtype())
    return Parameter(data, name=name, partition=partition)


class Module:
    """Minimal parameter tree: subclasses register children and parameters as attributes."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, val in vars(self).items():
            if isinstance(val, Parameter):
                yield prefix + key, val
            elif isinstance(val, Module):
                yield from val.named_parameters(prefix + key + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{prefix}{key}.{i}", item

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]


class Linear(Module):
    def __init__(self, rng, d_in: int, d_out: int, partition: str, bias: bool = True):
        self.weight = uniform_param(rng, (d_in, d_out), "weight", partition)
        self.bias = uniform_param(rng, (d_out,), "bias", partition) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class Embedding(Module):
    def __init__(self, rng, vocab_size: int, dim: int, partition: str):
        self.table = uniform_param(rng, (vocab_size, dim), "table", partition)

    @property
    def vocab_size(self) -> int:
        return self.table.shape[0]

    def __call__(self, ids) -> Tensor:
        return ops.embedding(ids, self.table)


class LSTMCell(Module):
    """Weights of one LSTM direction; gate blocks ordered i, f, g, o."""

    def __init__(self, rng, d_in: int, hidden: int, partition: str):
        self.w_x = uniform_param(rng, (d_in, 4 * hidden), "w_x", partition)
        self.w_h = uniform_param(rng, (hidden, 4 * hidden), "w_h", partition)
        self.b = uniform_param(rng, (4 * hidden,), "b", partition)

    @property
    def hidden(self) -> int:
        return self.w_h.shape[0]

    def step(self, x, h, c, mask=None) -> tuple[Tensor, Tensor]:
        return ops.lstm_step(x, h, c, self.w_x, self.w_h, self.b, mask)

    def sequence(self, x: Tensor, lengths=None, reverse: bool = False) -> Tensor:
        return ops.lstm_sequence(x, self.w_x, self.w_h, self.b, lengths, reverse)


class BiLSTM(Module):
    """Bidirectional LSTM layer: ``[B, L, D] -> [B, L, 2H]``."""

    def __init__(self, rng, d_in: int, hidden: int, partition: str):
        self.fwd = LSTMCell(rng, d_in, hidden, partition)
        self.bwd = LSTMCell(rng, d_in, hidden, partition)

    def __call__(self, x: Tensor, lengths: Optional[np.ndarray] = None) -> Tensor:
        if x.shape[1] < 1:
            raise ValueError("bidirectional LSTM over an empty sequence")
        f = self.fwd.sequence(x, lengths)
        b = self.bwd.sequence(x, lengths, reverse=True)
        return ops.concat([f, b], axis=-1)


def bilstm_layer(x: Tensor, layer: BiLSTM) -> Tensor:
    """Unbatched convenience wrapper: ``[L, D] -> [L, 2H]``."""
    if x.shape[0] < 1:
        raise ValueError("bidirectional LSTM over an empty sequence")
    out = layer(ops.reshape(x, (1,) + x.shape))
    return ops.reshape(out, out.shape[1:])
