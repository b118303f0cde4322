"""Finite-difference verification of tape gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Parameter, Tape, Tensor


class NondeterministicLossError(RuntimeError):
    pass


def _value(loss_fn) -> float:
    out = loss_fn()
    return float(out.data if isinstance(out, Tensor) else out)


def gradient_check(loss_fn: Callable[[], Tensor], params: Sequence[Parameter],
                   epsilon: float = 1e-5, samples_per_param: int = 20,
                   seed: int = 0, floor: float = 1e-6) -> float:
    """Max relative error between tape gradients and central differences.

    Up to ``samples_per_param`` coordinates of each parameter are probed.
    Relative error is ``|a - n| / max(|a|, |n|, floor)``.  The floor keeps
    coordinates whose gradient is at the level of finite-difference roundoff
    (about 1e-11 at epsilon 1e-5) from dominating; with ``floor=0`` a
    coordinate where both gradients are exactly 0 counts as 0.  ``loss_fn``
    is called repeatedly and must be deterministic.
    """
    params = list(params)
    for p in params:
        if p.data.dtype != np.float64:
            raise TypeError(f"gradient check needs float64 parameters; {p.name} is {p.data.dtype}")
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
    base = float(loss.data)
    tape.backward(loss)
    if _value(loss_fn) != base:
        raise NondeterministicLossError("loss_fn returned different values for identical parameters")
    analytic = [p.grad.copy() for p in params]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, grad in zip(params, analytic):
        n = p.data.size
        picks = rng.choice(n, size=min(samples_per_param, n), replace=False)
        flat = p.data.reshape(-1)
        for k in picks:
            orig = flat[k]
            flat[k] = orig + epsilon
            up = _value(loss_fn)
            flat[k] = orig - epsilon
            down = _value(loss_fn)
            flat[k] = orig
            num = (up - down) / (2 * epsilon)
            ana = float(grad.reshape(-1)[k])
            scale = max(abs(num), abs(ana), floor)
            if scale == 0:
                continue
            worst = max(worst, abs(num - ana) / scale)
    for p in params:
        p.zero_grad()
    return worst
