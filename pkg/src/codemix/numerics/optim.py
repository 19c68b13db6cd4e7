"""AdamW with bias correction and decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor


@dataclass
class AdamWState:
    """Per-parameter first/second moments plus the step counter."""

    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(params: dict[str, np.ndarray | Tensor],
               grads: dict[str, np.ndarray],
               state: AdamWState) -> AdamWState:
    """One AdamW update, in place on the parameter arrays.

    p -= lr * (mhat / (sqrt(vhat) + eps) + weight_decay * p)
    Missing gradients are treated as zero (decay still applies).
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        arr = p.data if isinstance(p, Tensor) else p
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(arr)
        if g.shape != arr.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape "
                             f"{arr.shape} for '{name}'")
        if name not in state.m:
            state.m[name] = np.zeros_like(arr)
            state.v[name] = np.zeros_like(arr)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if state.weight_decay:
            update = update + state.weight_decay * arr
        arr -= state.lr * update
    return state


def step_tensors(params: dict[str, Tensor], state: AdamWState) -> AdamWState:
    """AdamW over tape tensors, reading grads from `.grad` and clearing them."""
    grads = {k: t.grad for k, t in params.items() if t.grad is not None}
    adamw_step(params, grads, state)
    for t in params.values():
        t.zero_grad()
    return state
