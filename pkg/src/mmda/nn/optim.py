"""Adadelta and gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .tensor import Parameter


def adadelta_update(param: Parameter, rho: float = 0.95, eps: float = 1e-8, lr: float = 1.0) -> None:
    """One Adadelta step on ``param`` using its populated ``grad``.

    E[g^2] <- rho E[g^2] + (1 - rho) g^2
    dx     <- -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
    E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
    """
    g = param.grad
    param.acc_grad *= rho
    param.acc_grad += (1.0 - rho) * g * g
    delta = -np.sqrt(param.acc_delta + eps) / np.sqrt(param.acc_grad + eps) * g
    param.acc_delta *= rho
    param.acc_delta += (1.0 - rho) * delta * delta
    param.data += lr * delta


def global_grad_norm(params: Iterable[Parameter]) -> float:
    return float(np.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for p in params)))


def clip_grad_norm(params: Iterable[Parameter], max_norm: Optional[float]) -> float:
    """Rescale gradients so their joint L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    params = list(params)
    norm = global_grad_norm(params)
    if max_norm is not None and max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params:
            p.grad *= p.grad.dtype.type(scale)
    return norm


@dataclass
class Adadelta:
    rho: float = 0.95
    eps: float = 1e-8
    lr: float = 1.0
    clip_norm: Optional[float] = 5.0

    def step(self, params: Iterable[Parameter]) -> float:
        params = list(params)
        norm = clip_grad_norm(params, self.clip_norm)
        for p in params:
            adadelta_update(p, self.rho, self.eps, self.lr)
        return norm
