"""Directional forward diffusion in the tangent chart at the origin, and the reverse chain.

One forward step is

    z_t = sqrt(1 - beta_t) z + sqrt(beta_t) (signs * |eps|) + delta tanh(k / |z|) z

with ``eps ~ N(0, I)`` (so ``|eps|`` is half-normal), ``k = 1 / (sqrt(c) r)``
and the stride term set to zero when ``|z| < eps_norm``. Sums of half-normal
steps are not half-normal again, so chains are simulated step by step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from loguru import logger

from ..common.errors import ClusterError, ConfigError, DiffusionNumericError, ShapeError
from ..geometry.functional import row_dot, row_norm
from ..geometry.manifold import Manifold
from .cluster import ClusterModel
from .denoiser import DenoiserNet

HALF_NORMAL_MEAN = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class DiffusionConfig:
    steps: int = 30
    inference_steps: int = 10
    beta_min: float = 1e-4
    beta_max: float = 1e-2
    delta: float = 0.1
    r: float = 1.0
    eps_norm: float = 1e-8
    kappa: float = -1.0

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if not 1 <= self.inference_steps <= self.steps:
            raise ConfigError("inference_steps must lie in [1, steps]")
        if not 0 < self.beta_min <= self.beta_max < 1:
            raise ConfigError("need 0 < beta_min <= beta_max < 1")
        if self.delta < 0 or self.r <= 0 or self.eps_norm <= 0 or self.kappa >= 0:
            raise ConfigError("need delta >= 0, r > 0, eps_norm > 0 and kappa < 0")

    @property
    def stride_scale(self) -> float:
        """k in tanh(k / |z|): sqrt(c) * zeta / r with zeta = 1 / (c |z|)."""
        return 1.0 / (math.sqrt(-self.kappa) * self.r)

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {
            "diffusion.steps": np.array([self.steps, self.inference_steps]),
            "diffusion.params": np.array(
                [self.beta_min, self.beta_max, self.delta, self.r, self.eps_norm, self.kappa]
            ),
        }

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "DiffusionConfig":
        steps, inference_steps = (int(v) for v in arrays["diffusion.steps"])
        beta_min, beta_max, delta, r, eps_norm, kappa = (
            float(v) for v in arrays["diffusion.params"]
        )
        return cls(steps, inference_steps, beta_min, beta_max, delta, r, eps_norm, kappa)


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    beta: np.ndarray
    alpha_bar: np.ndarray

    @classmethod
    def linear(cls, config: DiffusionConfig) -> "NoiseSchedule":
        beta = np.linspace(config.beta_min, config.beta_max, config.steps)
        return cls(beta, np.cumprod(1.0 - beta))

    @property
    def steps(self) -> int:
        return len(self.beta)

    def beta_at(self, t: np.ndarray | int) -> np.ndarray:
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.steps):
            raise DiffusionNumericError(f"timestep outside [1, {self.steps}]: {t}")
        return self.beta[t - 1]

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {"schedule.beta": self.beta, "schedule.alpha_bar": self.alpha_bar}

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "NoiseSchedule":
        return cls(arrays["schedule.beta"].copy(), arrays["schedule.alpha_bar"].copy())


@dataclass(frozen=True, eq=False)
class DirectionalNoise:
    """Per-node signs in {-1, 0, +1} of the geodesic direction to the node's cluster center."""

    sign_user: np.ndarray
    sign_item: np.ndarray

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {"signs.user": self.sign_user, "signs.item": self.sign_item}

    @classmethod
    def unconstrained(cls, num_users: int, num_items: int, dim: int) -> "DirectionalNoise":
        return cls(np.ones((num_users, dim)), np.ones((num_items, dim)))


@dataclass(eq=False)
class ForwardTrace:
    """States z_0..z_max kept by ``forward_chain`` for the backward pass."""

    states: list[np.ndarray]
    t_target: np.ndarray
    betas: np.ndarray
    stride_scale: float
    delta: float
    eps_norm: float


def sample_poincare_noise(shape: int | tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """Half-normal draws |N(0, 1)|: the Poincaré normal at the origin with unit scale."""
    return np.abs(rng.standard_normal(shape))


def direction_signs(model: ClusterModel, manifold: Manifold, num_nodes: int | None = None) -> np.ndarray:
    if num_nodes is not None and len(model.assignments) != num_nodes:
        raise ClusterError(
            f"clustering covers {len(model.assignments)} nodes, expected {num_nodes}"
        )
    centers = model.center_of(np.arange(len(model.assignments)))
    return np.sign(manifold.spatial(manifold.log_origin(centers)))


def _stride_factor(z: np.ndarray, scale: float, delta: float, eps_norm: float) -> tuple[np.ndarray, np.ndarray]:
    rho = row_norm(z, keepdims=True)
    safe = np.where(rho < eps_norm, 1.0, rho)
    factor = np.where(rho < eps_norm, 0.0, delta * np.tanh(scale / safe))
    return factor, rho


def _check_rows(z: np.ndarray, signs: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ShapeError(f"diffusion states must be (n, d), got {z.shape}")
    signs = np.broadcast_to(np.asarray(signs, dtype=np.float64), z.shape)
    return signs


def forward_step(
    z_prev: np.ndarray,
    t: np.ndarray | int,
    config: DiffusionConfig,
    schedule: NoiseSchedule,
    signs: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    z_prev = np.asarray(z_prev, dtype=np.float64)
    signs = _check_rows(z_prev, signs)
    beta = np.broadcast_to(schedule.beta_at(t), (z_prev.shape[0],))[:, None]
    noise = sample_poincare_noise(z_prev.shape, rng)
    return _step(z_prev, beta, signs * noise, config, t)


def _step(z, beta, directed_noise, config: DiffusionConfig, t) -> np.ndarray:
    factor, _ = _stride_factor(z, config.stride_scale, config.delta, config.eps_norm)
    out = np.sqrt(1.0 - beta) * z + np.sqrt(beta) * directed_noise + factor * z
    if not np.all(np.isfinite(out)):
        raise DiffusionNumericError(f"non-finite diffusion state at t={t}")
    return out


def _as_targets(t_target: np.ndarray | int, n: int, steps: int) -> np.ndarray:
    t = np.broadcast_to(np.asarray(t_target, dtype=np.int64), (n,)).copy()
    if np.any(t < 0) or np.any(t > steps):
        raise DiffusionNumericError(f"target timestep outside [0, {steps}]")
    return t


def sample_timesteps(n: int, steps: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform training timesteps in [1, steps]."""
    return rng.integers(1, steps + 1, size=n)


def forward_chain(
    z0: np.ndarray,
    t_target: np.ndarray | int,
    config: DiffusionConfig,
    schedule: NoiseSchedule,
    signs: np.ndarray,
    rng: np.random.Generator,
    keep_trace: bool = False,
) -> np.ndarray | tuple[np.ndarray, ForwardTrace]:
    """Iterate ``forward_step``; rows stop once they reach their own target."""
    z = np.asarray(z0, dtype=np.float64)
    signs = _check_rows(z, signs)
    targets = _as_targets(t_target, z.shape[0], schedule.steps)
    states = [z]
    for s in range(1, int(targets.max(initial=0)) + 1):
        active = targets >= s
        if active.all():
            z = forward_step(z, s, config, schedule, signs, rng)
        else:
            z = z.copy()
            noise = sample_poincare_noise((int(active.sum()), z.shape[1]), rng)
            beta = np.full((int(active.sum()), 1), schedule.beta_at(s))
            z[active] = _step(z[active], beta, signs[active] * noise, config, s)
        states.append(z)
    if not keep_trace:
        return z
    trace = ForwardTrace(
        states=states,
        t_target=targets,
        betas=schedule.beta,
        stride_scale=config.stride_scale,
        delta=config.delta,
        eps_norm=config.eps_norm,
    )
    return z, trace


def mean_chain(
    z0: np.ndarray,
    t_target: np.ndarray | int,
    config: DiffusionConfig,
    schedule: NoiseSchedule,
    signs: np.ndarray,
) -> np.ndarray:
    """Forward chain with every half-normal draw replaced by its mean sqrt(2/pi)."""
    z = np.asarray(z0, dtype=np.float64)
    signs = _check_rows(z, signs)
    targets = _as_targets(t_target, z.shape[0], schedule.steps)
    for s in range(1, int(targets.max(initial=0)) + 1):
        active = targets >= s
        beta = schedule.beta_at(s)
        moved = _step(z[active], beta, signs[active] * HALF_NORMAL_MEAN, config, s)
        z = z.copy()
        z[active] = moved
    return z


def forward_chain_backward(trace: ForwardTrace, grad_t: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of the chain: d loss / d z_0 from d loss / d z_t."""
    g = np.asarray(grad_t, dtype=np.float64).copy()
    if g.shape != trace.states[0].shape:
        raise ShapeError(f"gradient shape {g.shape} does not match the chain")
    for s in range(len(trace.states) - 1, 0, -1):
        active = trace.t_target >= s
        z = trace.states[s - 1][active]
        beta = trace.betas[s - 1]
        factor, rho = _stride_factor(z, trace.stride_scale, trace.delta, trace.eps_norm)
        ga = g[active]
        safe = np.where(rho < trace.eps_norm, 1.0, rho)
        ratio = trace.stride_scale / safe
        sech2 = 1.0 - np.tanh(ratio) ** 2
        radial = np.where(
            rho < trace.eps_norm,
            0.0,
            trace.delta * sech2 * trace.stride_scale / safe**3,
        )
        g[active] = np.sqrt(1.0 - beta) * ga + factor * ga - radial * row_dot(z, ga, keepdims=True) * z
    return g


def inference_timesteps(config: DiffusionConfig) -> np.ndarray:
    """``inference_steps`` distinct timesteps evenly spaced from T down to 1."""
    grid = np.linspace(config.steps, 1, config.inference_steps)
    return np.floor(grid + 1e-9).astype(np.int64)


def denoise_forward(net: DenoiserNet, z_t: np.ndarray, t: np.ndarray | int) -> np.ndarray:
    return net.forward(z_t, t)


def denoise_backward(net: DenoiserNet, grad_out: np.ndarray) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Gradients of the cached forward pass; returns (parameter grads, input grad)."""
    net.zero_grad()
    grad_in = net.backward(grad_out)
    return {name: grad.copy() for name, grad in net.grads.items()}, grad_in


def reverse_chain(
    net_user: DenoiserNet,
    net_item: DenoiserNet,
    z_user_T: np.ndarray,
    z_item_T: np.ndarray,
    config: DiffusionConfig,
    schedule: NoiseSchedule,
    signs: DirectionalNoise,
) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic x0-parameterised reverse chain, users and items independently."""
    z_user = _reverse_one(net_user, z_user_T, config, schedule, signs.sign_user)
    z_item = _reverse_one(net_item, z_item_T, config, schedule, signs.sign_item)
    return z_user, z_item


def _reverse_one(net, z_T, config, schedule, signs) -> np.ndarray:
    timesteps = inference_timesteps(config)
    z = np.asarray(z_T, dtype=np.float64)
    for index, t in enumerate(timesteps):
        x0 = net.forward(z, int(t))
        if not np.all(np.isfinite(x0)):
            raise DiffusionNumericError(f"{net.tag}: non-finite prediction at t={t}")
        if index == len(timesteps) - 1:
            return x0
        z = mean_chain(x0, int(timesteps[index + 1]), config, schedule, signs)
    raise DiffusionNumericError("empty inference schedule")


def denoise_embeddings(
    net_user: DenoiserNet,
    net_item: DenoiserNet,
    z_user: np.ndarray,
    z_item: np.ndarray,
    config: DiffusionConfig,
    schedule: NoiseSchedule,
    signs: DirectionalNoise,
) -> tuple[np.ndarray, np.ndarray]:
    """Inference path: diffuse clean states to z_T along the mean chain, then reverse."""
    start_user = mean_chain(z_user, config.steps, config, schedule, signs.sign_user)
    start_item = mean_chain(z_item, config.steps, config, schedule, signs.sign_item)
    logger.debug(f"Running reverse chain over {config.inference_steps} inference steps")
    return reverse_chain(net_user, net_item, start_user, start_item, config, schedule, signs)
