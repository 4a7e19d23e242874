"""Adam with bias correction over named parameter dictionaries.

Updates happen in place: the training loop owns exactly one AdamState
per run and calls adam_step once per batch with the accumulated
gradients.  An optional global-norm clip is available for robustness
but is off by default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteGradient, ShapeMismatch
from .numerics import Tensor

Params = dict[str, Tensor]
Grads = dict[str, np.ndarray]


@dataclass
class AdamState:
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = None
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_adam(
    params: Params,
    alpha: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    clip_norm: float | None = None,
) -> AdamState:
    if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
        raise ValueError("beta1 and beta2 must lie in [0, 1)")
    if alpha <= 0.0 or eps <= 0.0:
        raise ValueError("alpha and eps must be positive")
    return AdamState(
        alpha=alpha,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
        clip_norm=clip_norm,
        m={k: np.zeros_like(t.data) for k, t in params.items()},
        v={k: np.zeros_like(t.data) for k, t in params.items()},
    )


def global_norm(grads: Grads) -> float:
    return math.sqrt(sum(float((g * g).sum()) for g in grads.values()))


def adam_step(params: Params, grads: Grads, state: AdamState) -> None:
    """One bias-corrected update, mutating params and state in place."""
    if set(grads) != set(state.m):
        missing = sorted(set(state.m) - set(grads))
        extra = sorted(set(grads) - set(state.m))
        raise ShapeMismatch(f"gradient names differ: missing={missing} extra={extra}")
    for name, g in grads.items():
        if g.shape != params[name].data.shape:
            raise ShapeMismatch(
                f"{name}: gradient shape {g.shape} != parameter shape "
                f"{params[name].data.shape}"
            )
        if not np.isfinite(g).all():
            raise NonFiniteGradient(f"{name}: gradient contains NaN or Inf")
    scale = 1.0
    if state.clip_norm is not None:
        norm = global_norm(grads)
        if norm > state.clip_norm:
            scale = state.clip_norm / norm
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for name, g in grads.items():
        if scale != 1.0:
            g = g * scale
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        params[name].data -= state.alpha * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
