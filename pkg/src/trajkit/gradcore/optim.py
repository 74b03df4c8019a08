"""Decoupled weight-decay adaptive-moment optimizer (AdamW) over named arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    clip_norm: float | None = None  # global-norm clip, applied before moments
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def optim_init(params: dict, lr: float, **kw) -> OptimState:
    state = OptimState(lr=lr, **kw)
    for name, p in params.items():
        state.m[name] = np.zeros_like(p)
        state.v[name] = np.zeros_like(p)
    return state


def optim_step(params: dict, grads: dict, state: OptimState) -> dict:
    """One AdamW update; returns new params, mutates `state` moments/counter.

    Rejects non-finite gradients before touching anything so a failed step
    never leaves params half-updated.
    """
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"optim_step: grad shape {g.shape} != param shape {p.shape} for {name!r}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"optim_step: non-finite gradient for {name!r}")

    if state.clip_norm is not None:
        total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        if total > state.clip_norm:
            scale = state.clip_norm / total
            grads = {k: g * scale for k, g in grads.items()}

    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    out = {}
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        out[name] = p - state.lr * (update + state.weight_decay * p)
    return out
