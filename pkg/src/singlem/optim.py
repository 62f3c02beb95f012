"""AdamW with decoupled weight decay, plus the cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ParamDict
from .errors import StateShapeMismatch


@dataclass
class AdamWState:
    """First/second moment estimates per parameter and the shared step count."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adamw_step(params: ParamDict, state: AdamWState, lr: float,
               beta1: float = 0.9, beta2: float = 0.95,
               weight_decay: float = 0.1, eps: float = 1e-8) -> None:
    """One in-place update from the gradients currently stored on the tensors.

    Weight decay is decoupled: it shrinks the weights directly instead of
    flowing through the moment estimates. Moments are bias-corrected.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, p in params.items():
        if not p.trainable:
            continue
        g = p.tensor.grad
        if g is None:
            g = np.zeros_like(p.tensor.data)
        if name not in state.m:
            state.m[name] = np.zeros_like(p.tensor.data)
            state.v[name] = np.zeros_like(p.tensor.data)
        m, v = state.m[name], state.v[name]
        if m.shape != p.tensor.data.shape:
            raise StateShapeMismatch(
                f"state for {name!r} has shape {m.shape}, "
                f"parameter has {p.tensor.data.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + eps)
        p.tensor.data = p.tensor.data - lr * (update + weight_decay * p.tensor.data)


def cosine_lr(step: int, total_steps: int, lr_max: float = 1e-4,
              lr_min: float = 1e-6) -> float:
    """Half-cosine decay from lr_max at step 0 to lr_min at step = total_steps."""
    if total_steps <= 0:
        return lr_max
    frac = min(max(step / total_steps, 0.0), 1.0)
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * frac))
