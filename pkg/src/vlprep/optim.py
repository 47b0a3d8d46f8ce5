"""AdamW with global-norm gradient clipping, on dicts of numpy arrays.

Defaults are the training hyperparameters used throughout: beta1 0.9, beta2
0.98, eps 1e-6, weight decay 0.05, clip 1.0. Clipping rescales the whole
gradient dict to global norm 1.0 before any moment update; weight decay is
decoupled (applied to the parameter directly, scaled by the learning rate,
never entering the moments).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

Arrays = dict[str, np.ndarray]


@dataclass(frozen=True)
class AdamWHyper:
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-6
    weight_decay: float = 5e-2
    clip_norm: float | None = 1.0


@dataclass
class AdamWState:
    step: int
    m: Arrays
    v: Arrays


def init_state(params: Arrays) -> AdamWState:
    return AdamWState(
        step=0,
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
    )


def global_norm(grads: Arrays) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def clip_by_global_norm(grads: Arrays, max_norm: float) -> Arrays:
    norm = global_norm(grads)
    if norm <= max_norm:
        return dict(grads)
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


def adamw_step(
    params: Arrays,
    grads: Arrays,
    state: AdamWState,
    hyper: AdamWHyper = AdamWHyper(),
    lr: float = 1e-3,
) -> tuple[Arrays, AdamWState]:
    """One update. Returns new params and state; inputs are not mutated."""
    if set(params) != set(grads):
        raise ValueError("params and grads must have identical keys")
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {k}")

    if hyper.clip_norm is not None:
        grads = clip_by_global_norm(grads, hyper.clip_norm)

    t = state.step + 1
    bc1 = 1.0 - hyper.beta1**t
    bc2 = 1.0 - hyper.beta2**t
    new_params: Arrays = {}
    new_m: Arrays = {}
    new_v: Arrays = {}
    for k, p in params.items():
        g = grads[k]
        m = hyper.beta1 * state.m[k] + (1.0 - hyper.beta1) * g
        v = hyper.beta2 * state.v[k] + (1.0 - hyper.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        update = lr * m_hat / (np.sqrt(v_hat) + hyper.eps)
        new_params[k] = p - update - lr * hyper.weight_decay * p
        new_m[k] = m
        new_v[k] = v
    return new_params, AdamWState(step=t, m=new_m, v=new_v)
