"""Fermi-Dirac scores, margin ranking loss, reconstruction loss and their gradients.

Scores are computed between chart coordinates ``a`` (tangent vectors at the
origin); the points compared are ``exp_o(a)``. ``OriginDistance`` kernels give
squared distances and their exact gradients in those chart coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..common.errors import ConfigError, ShapeError
from ..geometry.functional import arcosh1p, arcosh1p_ratio, row_dot
from ..geometry.manifold import Lorentz, Manifold, PoincareBall


@dataclass(frozen=True)
class LossConfig:
    margin: float = 0.2
    alpha: float = 0.3
    gamma: float = 0.4
    fermi_q: float = 2.0
    fermi_t: float = 1.0

    def __post_init__(self) -> None:
        if self.margin < 0:
            raise ConfigError("margin must be >= 0")
        if not 0 <= self.alpha <= 1:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.gamma < 0:
            raise ConfigError("gamma must be >= 0")
        if self.fermi_t <= 0:
            raise ConfigError("fermi_t must be positive")


# -- squared distance kernels ---------------------------------------------------


class OriginDistance:
    """Squared distance between ``exp_o(a)`` and ``exp_o(b)`` for chart rows a, b."""

    def sq_dist(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sq_dist_grad(self, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def pairwise_sq_dist(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @staticmethod
    def for_manifold(manifold: Manifold | None) -> "OriginDistance":
        if manifold is None:
            return EuclideanChartDistance()
        if isinstance(manifold, Lorentz):
            return LorentzOriginDistance(manifold)
        if isinstance(manifold, PoincareBall):
            return PoincareOriginDistance(manifold)
        raise ConfigError(f"no distance kernel for {type(manifold).__name__}")


class EuclideanChartDistance(OriginDistance):
    def sq_dist(self, a, b):
        diff = np.asarray(a) - np.asarray(b)
        return row_dot(diff, diff)

    def sq_dist_grad(self, a, b):
        diff = 2.0 * (np.asarray(a) - np.asarray(b))
        return diff, -diff

    def pairwise_sq_dist(self, a, b):
        sq = row_dot(a, a)[:, None] + row_dot(b, b)[None, :] - 2.0 * a @ b.T
        return np.maximum(sq, 0.0)


class LorentzOriginDistance(OriginDistance):
    def __init__(self, manifold: Lorentz):
        self.manifold = manifold
        self.c = manifold.c

    def _gap(self, x, y):
        diff = x - y
        minkowski = -diff[..., 0] ** 2 + row_dot(diff[..., 1:], diff[..., 1:])
        return np.maximum(0.5 * self.c * minkowski, 0.0)

    def sq_dist(self, a, b):
        x = self.manifold.exp_origin(a)
        y = self.manifold.exp_origin(b)
        return (arcosh1p(self._gap(x, y)) / self.manifold.sqrt_c) ** 2

    def sq_dist_grad(self, a, b):
        x = self.manifold.exp_origin(a)
        y = self.manifold.exp_origin(b)
        # d(d^2)/du = (2/c) ratio(u) and du/dx = -c * eta y (eta flips the time sign)
        coef = -2.0 * arcosh1p_ratio(self._gap(x, y))[..., None]
        eta_y = np.concatenate([-y[..., :1], y[..., 1:]], axis=-1)
        eta_x = np.concatenate([-x[..., :1], x[..., 1:]], axis=-1)
        grad_x = coef * eta_y
        grad_y = coef * eta_x
        return (
            self.manifold.exp_origin_vjp(a, grad_x),
            self.manifold.exp_origin_vjp(b, grad_y),
        )

    def pairwise_sq_dist(self, a, b):
        x = self.manifold.exp_origin(a)
        y = self.manifold.exp_origin(b)
        inner = -np.outer(x[:, 0], y[:, 0]) + x[:, 1:] @ y[:, 1:].T
        gap = np.maximum(-1.0 - self.c * inner, 0.0)
        return (arcosh1p(gap) / self.manifold.sqrt_c) ** 2


class PoincareOriginDistance(OriginDistance):
    def __init__(self, manifold: PoincareBall):
        self.manifold = manifold
        self.c = manifold.c

    def sq_dist(self, a, b):
        x = self.manifold.exp_origin(a)
        y = self.manifold.exp_origin(b)
        diff = x - y
        gap = 2.0 * self.c * row_dot(diff, diff) / (
            (1.0 - self.c * row_dot(x, x)) * (1.0 - self.c * row_dot(y, y))
        )
        return (arcosh1p(gap) / self.manifold.sqrt_c) ** 2

    def sq_dist_grad(self, a, b):
        c = self.c
        x = self.manifold.exp_origin(a)
        y = self.manifold.exp_origin(b)
        diff = x - y
        n = row_dot(diff, diff, keepdims=True)
        dx = 1.0 - c * row_dot(x, x, keepdims=True)
        dy = 1.0 - c * row_dot(y, y, keepdims=True)
        gap = 2.0 * c * n / (dx * dy)
        outer = (2.0 / c) * arcosh1p_ratio(gap)
        grad_x = outer * 2.0 * c * (2.0 * diff / (dx * dy) + 2.0 * c * n * x / (dx**2 * dy))
        grad_y = outer * 2.0 * c * (-2.0 * diff / (dx * dy) + 2.0 * c * n * y / (dx * dy**2))
        return (
            self.manifold.exp_origin_vjp(a, grad_x),
            self.manifold.exp_origin_vjp(b, grad_y),
        )

    def pairwise_sq_dist(self, a, b):
        c = self.c
        x = self.manifold.exp_origin(a)
        y = self.manifold.exp_origin(b)
        xx = row_dot(x, x)
        yy = row_dot(y, y)
        sq = np.maximum(xx[:, None] + yy[None, :] - 2.0 * x @ y.T, 0.0)
        gap = 2.0 * c * sq / np.outer(1.0 - c * xx, 1.0 - c * yy)
        return (arcosh1p(gap) / self.manifold.sqrt_c) ** 2


# -- scores and losses -------------------------------------------------------------


def fermi_dirac(sq_dist: np.ndarray, config: LossConfig) -> np.ndarray:
    """1 / (exp((d^2 - q) / t) + 1)."""
    return expit((config.fermi_q - np.asarray(sq_dist, dtype=np.float64)) / config.fermi_t)


def fermi_dirac_score(
    e_u: np.ndarray, e_i: np.ndarray, config: LossConfig, manifold: Manifold
) -> np.ndarray | float:
    """Score two manifold points directly from their geodesic distance."""
    out = fermi_dirac(manifold.dist(e_u, e_i) ** 2, config)
    return out if np.ndim(out) else float(out)


def margin_loss(s_pos: np.ndarray, s_neg: np.ndarray, m: float) -> np.ndarray:
    return np.maximum(np.asarray(s_neg) - np.asarray(s_pos) + m, 0.0)


def recon_loss(z0: np.ndarray, z0_hat: np.ndarray) -> np.ndarray:
    """Per-row squared error |z0 - z0_hat|^2."""
    z0 = np.asarray(z0, dtype=np.float64)
    z0_hat = np.asarray(z0_hat, dtype=np.float64)
    if z0.shape != z0_hat.shape:
        raise ShapeError(f"recon_loss shapes differ: {z0.shape} vs {z0_hat.shape}")
    diff = z0 - z0_hat
    return row_dot(diff, diff)


def joint_recon_loss(z_user, z_user_hat, z_item, z_item_hat) -> np.ndarray:
    """(L_u + L_i) / 2 per (user, item) row."""
    return 0.5 * (recon_loss(z_user, z_user_hat) + recon_loss(z_item, z_item_hat))


def total_loss(rec: np.ndarray | float, re: np.ndarray | float, alpha: float) -> np.ndarray | float:
    """alpha * ranking loss + (1 - alpha) * reconstruction loss."""
    return alpha * rec + (1.0 - alpha) * re


def reweight(s_pos: np.ndarray, gamma: float) -> np.ndarray:
    """sigmoid(s_pos) ** gamma, used as a constant weight per triplet."""
    if gamma == 0:
        return np.ones_like(np.asarray(s_pos, dtype=np.float64))
    return expit(np.asarray(s_pos, dtype=np.float64)) ** gamma


@dataclass(frozen=True, eq=False)
class RankingGrads:
    loss: float
    per_triplet: np.ndarray
    s_pos: np.ndarray
    s_neg: np.ndarray
    active: np.ndarray
    grad_user: np.ndarray
    grad_pos: np.ndarray
    grad_neg: np.ndarray


def ranking_loss_and_grads(
    kernel: OriginDistance,
    z_user: np.ndarray,
    z_pos: np.ndarray,
    z_neg: np.ndarray,
    config: LossConfig,
    weights: np.ndarray | None = None,
    scale: float = 1.0,
) -> RankingGrads:
    """Batch-mean of ``scale * w * margin_loss`` and its gradients w.r.t. the chart rows.

    ``weights`` are constants; the hinge sub-gradient at the kink is 0.
    """
    d_pos = kernel.sq_dist(z_user, z_pos)
    d_neg = kernel.sq_dist(z_user, z_neg)
    s_pos = fermi_dirac(d_pos, config)
    s_neg = fermi_dirac(d_neg, config)
    per_triplet = margin_loss(s_pos, s_neg, config.margin)
    active = (s_neg - s_pos + config.margin) > 0
    batch = len(z_user)
    w = np.ones(batch) if weights is None else np.asarray(weights, dtype=np.float64)
    coef = scale * w * active / batch

    # ds/d(d^2) = -s (1 - s) / t
    g_dpos = coef * s_pos * (1.0 - s_pos) / config.fermi_t
    g_dneg = -coef * s_neg * (1.0 - s_neg) / config.fermi_t
    gu_pos, g_pos = kernel.sq_dist_grad(z_user, z_pos)
    gu_neg, g_neg = kernel.sq_dist_grad(z_user, z_neg)
    return RankingGrads(
        loss=float(np.sum(scale * w * per_triplet) / batch),
        per_triplet=per_triplet,
        s_pos=s_pos,
        s_neg=s_neg,
        active=active,
        grad_user=g_dpos[:, None] * gu_pos + g_dneg[:, None] * gu_neg,
        grad_pos=g_dpos[:, None] * g_pos,
        grad_neg=g_dneg[:, None] * g_neg,
    )


def loss_backward(
    kernel: OriginDistance,
    z_user: np.ndarray,
    z_pos: np.ndarray,
    z_neg: np.ndarray,
    config: LossConfig,
) -> RankingGrads:
    """Weighted ranking part of the total loss for (u, i, j) triplets.

    The reweight factor comes from the positive score and is held constant.
    """
    s_pos = fermi_dirac(kernel.sq_dist(z_user, z_pos), config)
    return ranking_loss_and_grads(
        kernel, z_user, z_pos, z_neg, config, weights=reweight(s_pos, config.gamma)
    )
