from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..common.errors import CacheMissingError, ShapeError

PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3")


def time_embedding(t: np.ndarray | int, dim: int, max_period: float = 10_000.0) -> np.ndarray:
    """Sinusoidal embedding of integer timesteps, shape (len(t), dim)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half) / half)
    angles = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


@dataclass
class _ForwardCache:
    inputs: np.ndarray
    h1: np.ndarray
    h2: np.ndarray


class DenoiserNet:
    """x0-predicting MLP: [z_t, emb(t)] -> tanh -> tanh -> linear.

    One instance per node type (``theta`` for users, ``psi`` for items).
    ``backward`` needs the cache left by the latest ``forward``.
    """

    def __init__(
        self,
        dim: int,
        hidden_dim: int = 64,
        time_embed_dim: int = 32,
        tag: str = "theta",
        seed: int | None = 0,
    ):
        if time_embed_dim % 2:
            raise ShapeError("time_embed_dim must be even")
        self.dim = dim
        self.hidden_dim = hidden_dim
        self.time_embed_dim = time_embed_dim
        self.tag = tag
        rng = np.random.default_rng(seed)
        in_dim = dim + time_embed_dim
        self.params: dict[str, np.ndarray] = {
            "w1": _xavier(rng, in_dim, hidden_dim),
            "b1": np.zeros(hidden_dim),
            "w2": _xavier(rng, hidden_dim, hidden_dim),
            "b2": np.zeros(hidden_dim),
            "w3": _xavier(rng, hidden_dim, dim),
            "b3": np.zeros(dim),
        }
        self.grads = {name: np.zeros_like(value) for name, value in self.params.items()}
        self._cache: _ForwardCache | None = None

    def forward(self, z_t: np.ndarray, t: np.ndarray | int) -> np.ndarray:
        z_t = np.asarray(z_t, dtype=np.float64)
        if z_t.ndim != 2 or z_t.shape[1] != self.dim:
            raise ShapeError(f"{self.tag}: expected (n, {self.dim}) input, got {z_t.shape}")
        t = np.broadcast_to(np.asarray(t), (z_t.shape[0],))
        inputs = np.concatenate([z_t, time_embedding(t, self.time_embed_dim)], axis=1)
        p = self.params
        h1 = np.tanh(inputs @ p["w1"] + p["b1"])
        h2 = np.tanh(h1 @ p["w2"] + p["b2"])
        self._cache = _ForwardCache(inputs, h1, h2)
        return h2 @ p["w3"] + p["b3"]

    __call__ = forward

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients into ``self.grads``; return d/d z_t."""
        if self._cache is None:
            raise CacheMissingError(f"{self.tag}: backward called before forward")
        cache = self._cache
        grad_out = np.asarray(grad_out, dtype=np.float64)
        if grad_out.shape != (cache.inputs.shape[0], self.dim):
            raise ShapeError(f"{self.tag}: upstream gradient has shape {grad_out.shape}")
        p = self.params
        self.grads["w3"] += cache.h2.T @ grad_out
        self.grads["b3"] += grad_out.sum(axis=0)
        d2 = (grad_out @ p["w3"].T) * (1.0 - cache.h2**2)
        self.grads["w2"] += cache.h1.T @ d2
        self.grads["b2"] += d2.sum(axis=0)
        d1 = (d2 @ p["w2"].T) * (1.0 - cache.h1**2)
        self.grads["w1"] += cache.inputs.T @ d1
        self.grads["b1"] += d1.sum(axis=0)
        return (d1 @ p["w1"].T)[:, : self.dim]

    def zero_grad(self) -> None:
        for grad in self.grads.values():
            grad.fill(0.0)

    def param_list(self) -> list[np.ndarray]:
        return [self.params[name] for name in PARAM_NAMES]

    def grad_list(self) -> list[np.ndarray]:
        return [self.grads[name] for name in PARAM_NAMES]

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.params.values())

    def to_arrays(self) -> dict[str, np.ndarray]:
        arrays = {f"{self.tag}.{name}": self.params[name] for name in PARAM_NAMES}
        arrays[f"{self.tag}.shape"] = np.array([self.dim, self.hidden_dim, self.time_embed_dim])
        return arrays

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], tag: str) -> "DenoiserNet":
        dim, hidden_dim, time_embed_dim = (int(v) for v in arrays[f"{tag}.shape"])
        net = cls(dim, hidden_dim, time_embed_dim, tag=tag, seed=None)
        for name in PARAM_NAMES:
            value = arrays[f"{tag}.{name}"]
            if value.shape != net.params[name].shape:
                raise ShapeError(f"{tag}.{name} has shape {value.shape}")
            net.params[name] = value.astype(np.float64).copy()
        net.zero_grad()
        return net


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))
