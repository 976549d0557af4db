"""Adam with bias correction and decoupled weight decay, updating arrays in place."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from loguru import logger

from ..common.errors import ConfigError, ShapeError


@dataclass(eq=False)
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    skipped: int = 0

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")

    @classmethod
    def for_params(cls, params: list[np.ndarray], **kwargs) -> "OptimizerState":
        state = cls(**kwargs)
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
        return state

    def to_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        arrays = {
            f"{prefix}.hyper": np.array(
                [self.lr, self.beta1, self.beta2, self.eps, self.weight_decay]
            ),
            f"{prefix}.step": np.array(self.step),
        }
        for index, (m, v) in enumerate(zip(self.m, self.v)):
            arrays[f"{prefix}.m{index}"] = m
            arrays[f"{prefix}.v{index}"] = v
        return arrays

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], prefix: str) -> "OptimizerState":
        lr, beta1, beta2, eps, weight_decay = (float(x) for x in arrays[f"{prefix}.hyper"])
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay)
        state.step = int(arrays[f"{prefix}.step"])
        index = 0
        while f"{prefix}.m{index}" in arrays:
            state.m.append(arrays[f"{prefix}.m{index}"].copy())
            state.v.append(arrays[f"{prefix}.v{index}"].copy())
            index += 1
        return state


def adam_step(
    params: list[np.ndarray], grads: list[np.ndarray], state: OptimizerState
) -> list[np.ndarray]:
    """Apply one update to ``params`` in place and return them.

    A step whose gradients contain NaN/inf is skipped entirely.
    """
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameter arrays but {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"shape mismatch: param {p.shape}, grad {g.shape}, moment {m.shape}")

    if not all(np.all(np.isfinite(g)) for g in grads):
        state.skipped += 1
        logger.warning(f"Skipping optimizer step {state.step + 1}: non-finite gradient")
        return params

    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        if state.weight_decay:
            p -= state.lr * state.weight_decay * p
        p -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return params
