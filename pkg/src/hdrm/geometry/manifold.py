"""Hyperbolic manifold kernels for the Lorentz (hyperboloid) and Poincaré ball models.

Curvature is stored as ``kappa < 0``; every formula uses ``c = |kappa|``.
Lorentz points satisfy ``<x, x>_L = 1/kappa = -1/c`` with ``x0 > 0``; Poincaré
points satisfy ``c * |x|^2 < 1``.

All array kernels are batched over leading axes: the last axis holds the
coordinates (``dim + 1`` for Lorentz, ``dim`` for Poincaré).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np

from ..common.errors import (
    ManifoldConfigError,
    ManifoldDimensionError,
    ManifoldNumericError,
)
from .functional import (
    arcosh1p,
    artanhc,
    row_dot,
    row_norm,
    sinhc,
    sinhc_slope,
    tanhc,
    tanhc_slope,
)

CONSTRAINT_ATOL = 1e-8
# Poincaré points are clipped to this fraction of the ball radius.
BALL_CLIP = 1.0 - 1e-6


class ManifoldModel(StrEnum):
    LORENTZ = "lorentz"
    POINCARE = "poincare"


@dataclass(frozen=True)
class ManifoldConfig:
    model: ManifoldModel = ManifoldModel.LORENTZ
    kappa: float = -1.0
    dim: int = 2
    eps: float = 1e-12

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "model", ManifoldModel(self.model))
        except ValueError as exc:
            raise ManifoldConfigError(f"unknown manifold model {self.model!r}") from exc
        if not math.isfinite(self.kappa) or self.kappa >= 0:
            raise ManifoldConfigError(
                f"curvature must be negative and finite, got {self.kappa}"
            )
        if self.dim < 2:
            raise ManifoldConfigError(f"dim must be >= 2, got {self.dim}")
        if not self.eps > 0:
            raise ManifoldConfigError("eps must be positive")

    @property
    def c(self) -> float:
        return -self.kappa

    @property
    def sqrt_c(self) -> float:
        return math.sqrt(self.c)

    @property
    def ambient_dim(self) -> int:
        return self.dim + 1 if self.model is ManifoldModel.LORENTZ else self.dim

    def manifold(self) -> "Manifold":
        return make_manifold(self)


def lorentz_inner(x: np.ndarray, y: np.ndarray) -> np.ndarray | float:
    """Minkowski inner product -x0 y0 + sum_i x_i y_i over the last axis."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[-1] != y.shape[-1]:
        raise ManifoldDimensionError(
            f"length mismatch in lorentz_inner: {x.shape[-1]} vs {y.shape[-1]}"
        )
    if x.shape[-1] < 2:
        raise ManifoldDimensionError("lorentz_inner needs vectors of length >= 2")
    out = -x[..., 0] * y[..., 0] + row_dot(x[..., 1:], y[..., 1:])
    return out if np.ndim(out) else float(out)


def _ensure_finite(op: str, *arrays: np.ndarray) -> None:
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise ManifoldNumericError(f"non-finite value in {op}")


def _identical_rows(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.all(x == y, axis=-1, keepdims=True)


class Manifold:
    """Shared surface of the two hyperbolic models."""

    def __init__(self, config: ManifoldConfig):
        self.config = config
        self.c = config.c
        self.sqrt_c = config.sqrt_c

    def _as_array(self, x: np.ndarray, what: str = "point") -> np.ndarray:
        arr = np.asarray(x, dtype=np.float64)
        if arr.shape[-1:] != (self.config.ambient_dim,):
            raise ManifoldDimensionError(
                f"{what} has {arr.shape[-1:] or 'no'} coordinates, "
                f"expected {self.config.ambient_dim}"
            )
        return arr

    # -- overridden by the concrete models ---------------------------------
    def origin(self) -> np.ndarray:
        raise NotImplementedError

    def lift(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def spatial(self, v: np.ndarray) -> np.ndarray:
        """Inverse of ``lift``: the Euclidean chart coordinates of a tangent at o."""
        raise NotImplementedError

    def project(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dist(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def exp_map(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log_map(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def parallel_transport(
        self, x: np.ndarray, y: np.ndarray, v: np.ndarray
    ) -> np.ndarray:
        raise NotImplementedError

    def tangent_norm(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def exp_origin(self, a: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def exp_origin_vjp(self, a: np.ndarray, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def constraint_residual(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # -- shared ------------------------------------------------------------
    def log_origin(self, y: np.ndarray) -> np.ndarray:
        y = self._as_array(y)
        return self.log_map(np.broadcast_to(self.origin(), y.shape), y)

    def check_point(self, x: np.ndarray, atol: float = CONSTRAINT_ATOL) -> None:
        residual = self.constraint_residual(x)
        if not np.all(residual <= atol):
            raise ManifoldNumericError(
                f"point off the {self.config.model} manifold "
                f"(max residual {float(np.max(residual)):.3e})"
            )


class Lorentz(Manifold):
    """Hyperboloid model in R^(n+1) with the Minkowski inner product."""

    def origin(self) -> np.ndarray:
        o = np.zeros(self.config.dim + 1)
        o[0] = 1.0 / self.sqrt_c
        return o

    def inner(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return lorentz_inner(x, y)

    def lift(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        zeros = np.zeros(x.shape[:-1] + (1,))
        return np.concatenate([zeros, x], axis=-1)

    def spatial(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=np.float64)[..., 1:]

    def project(self, x: np.ndarray) -> np.ndarray:
        x = self._as_array(x)
        space = x[..., 1:]
        x0 = np.sqrt(1.0 / self.c + row_dot(space, space, keepdims=True))
        return np.concatenate([x0, space], axis=-1)

    def project_tangent(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        x = self._as_array(x)
        v = self._as_array(v, "tangent")
        return v + self.c * np.asarray(lorentz_inner(x, v))[..., None] * x

    def tangent_norm(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        v = self._as_array(v, "tangent")
        return np.sqrt(np.maximum(lorentz_inner(v, v), 0.0))

    def _chord_gap(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        # -c <x, y>_L = 1 + u with u = c <x - y, x - y>_L / 2, free of cancellation
        diff = x - y
        return np.maximum(0.5 * self.c * np.asarray(lorentz_inner(diff, diff)), 0.0)

    def dist(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = self._as_array(x)
        y = self._as_array(y)
        _ensure_finite("dist", x, y)
        return arcosh1p(self._chord_gap(x, y)) / self.sqrt_c

    def exp_map(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        x = self._as_array(x)
        v = self._as_array(v, "tangent")
        _ensure_finite("exp_map", x, v)
        v = self.project_tangent(x, v)
        theta = self.sqrt_c * self.tangent_norm(x, v)[..., None]
        out = np.cosh(theta) * x + sinhc(theta) * v
        _ensure_finite("exp_map", out)
        return self.project(out)

    def log_map(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = self._as_array(x)
        y = self._as_array(y)
        _ensure_finite("log_map", x, y)
        u = self._chord_gap(x, y)[..., None]
        w = (y - x) - u * x
        w = self.project_tangent(x, w)
        d = arcosh1p(u) / self.sqrt_c
        out = w / sinhc(self.sqrt_c * d)
        return np.where(_identical_rows(x, y), 0.0, out)

    def parallel_transport(
        self, x: np.ndarray, y: np.ndarray, v: np.ndarray
    ) -> np.ndarray:
        x = self._as_array(x)
        y = self._as_array(y)
        v = self._as_array(v, "tangent")
        _ensure_finite("parallel_transport", x, y, v)
        alpha = 1.0 + self._chord_gap(x, y)
        coef = self.c * np.asarray(lorentz_inner(y, v)) / (alpha + 1.0)
        return v + coef[..., None] * (x + y)

    def exp_origin(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=np.float64)
        theta = self.sqrt_c * row_norm(a, keepdims=True)
        x0 = np.cosh(theta) / self.sqrt_c
        return self.project(np.concatenate([x0, sinhc(theta) * a], axis=-1))

    def exp_origin_vjp(self, a: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Pull ``w`` (gradient wrt ``exp_o(lift(a))``) back to the chart ``a``."""
        a = np.asarray(a, dtype=np.float64)
        w = np.asarray(w, dtype=np.float64)
        theta = self.sqrt_c * row_norm(a, keepdims=True)
        w0 = w[..., :1]
        ws = w[..., 1:]
        s = sinhc(theta)
        return (
            w0 * self.sqrt_c * s * a
            + s * ws
            + self.c * sinhc_slope(theta) * row_dot(a, ws, keepdims=True) * a
        )

    def constraint_residual(self, x: np.ndarray) -> np.ndarray:
        x = self._as_array(x)
        residual = np.abs(np.asarray(lorentz_inner(x, x)) + 1.0 / self.c)
        return np.where(x[..., 0] > 0, residual, np.inf)

    def check_tangent(
        self, x: np.ndarray, v: np.ndarray, atol: float = CONSTRAINT_ATOL
    ) -> None:
        if not np.all(np.abs(lorentz_inner(x, v)) <= atol):
            raise ManifoldNumericError("vector is not tangent to the hyperboloid")

    def to_poincare(self, x: np.ndarray) -> np.ndarray:
        x = self._as_array(x)
        return x[..., 1:] / (1.0 / self.sqrt_c + x[..., :1])

    def to_poincare_tangent(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Push a tangent vector at ``x`` through the stereographic projection."""
        x = self._as_array(x)
        v = self._as_array(v, "tangent")
        den = 1.0 / self.sqrt_c + x[..., :1]
        return v[..., 1:] / den - x[..., 1:] * v[..., :1] / den**2


class PoincareBall(Manifold):
    """Poincaré ball of radius 1/sqrt(c) with the conformal metric λ_x² g_E."""

    @property
    def max_radius(self) -> float:
        return BALL_CLIP / self.sqrt_c

    def origin(self) -> np.ndarray:
        return np.zeros(self.config.dim)

    def lift(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64)

    def spatial(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=np.float64)

    def project(self, x: np.ndarray) -> np.ndarray:
        x = self._as_array(x)
        norm = row_norm(x, keepdims=True)
        scale = np.where(norm > self.max_radius, self.max_radius / np.maximum(norm, 1e-300), 1.0)
        return x * scale

    def _check_inside(self, op: str, *points: np.ndarray) -> None:
        limit = 1.0 - self.config.eps
        for p in points:
            if not np.all(self.c * row_dot(p, p) < limit):
                raise ManifoldNumericError(f"boundary overflow in {op}")

    def conformal_factor(self, x: np.ndarray) -> np.ndarray:
        x = self._as_array(x)
        self._check_inside("conformal_factor", x)
        return 2.0 / (1.0 - self.c * row_dot(x, x))

    def mobius_add(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = self._as_array(x)
        y = self._as_array(y)
        _ensure_finite("mobius_add", x, y)
        self._check_inside("mobius_add", x, y)
        c = self.c
        xy = row_dot(x, y, keepdims=True)
        x2 = row_dot(x, x, keepdims=True)
        y2 = row_dot(y, y, keepdims=True)
        num = (1.0 + 2.0 * c * xy + c * y2) * x + (1.0 - c * x2) * y
        den = 1.0 + 2.0 * c * xy + c * c * x2 * y2
        if not np.all(den > 0):
            raise ManifoldNumericError("boundary overflow in mobius_add")
        out = num / den
        _ensure_finite("mobius_add", out)
        return self.project(out)

    def gyration(self, u: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        """gyr[u, v] w in closed form."""
        c = self.c
        u2 = row_dot(u, u, keepdims=True)
        v2 = row_dot(v, v, keepdims=True)
        uv = row_dot(u, v, keepdims=True)
        uw = row_dot(u, w, keepdims=True)
        vw = row_dot(v, w, keepdims=True)
        a = -c * c * uw * v2 + c * vw + 2.0 * c * c * uv * vw
        b = -c * c * vw * u2 - c * uw
        d = 1.0 + 2.0 * c * uv + c * c * u2 * v2
        return w + 2.0 * (a * u + b * v) / np.maximum(d, 1e-300)

    def tangent_norm(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        v = self._as_array(v, "tangent")
        return self.conformal_factor(x) * row_norm(v)

    def dist(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = self._as_array(x)
        y = self._as_array(y)
        _ensure_finite("dist", x, y)
        self._check_inside("dist", x, y)
        diff = x - y
        den = (1.0 - self.c * row_dot(x, x)) * (1.0 - self.c * row_dot(y, y))
        u = 2.0 * self.c * row_dot(diff, diff) / den
        return arcosh1p(u) / self.sqrt_c

    def exp_map(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        x = self._as_array(x)
        v = self._as_array(v, "tangent")
        _ensure_finite("exp_map", x, v)
        lam = self.conformal_factor(x)[..., None]
        arg = 0.5 * self.sqrt_c * lam * row_norm(v, keepdims=True)
        step = tanhc(arg) * 0.5 * lam * v
        return self.mobius_add(np.broadcast_to(x, step.shape), step)

    def log_map(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = self._as_array(x)
        y = self._as_array(y)
        _ensure_finite("log_map", x, y)
        x_b, y_b = np.broadcast_arrays(x, y)
        w = self.mobius_add(-x_b, y_b)
        lam = self.conformal_factor(x_b)[..., None]
        out = (2.0 / lam) * artanhc(self.sqrt_c * row_norm(w, keepdims=True)) * w
        return np.where(_identical_rows(x_b, y_b), 0.0, out)

    def parallel_transport(
        self, x: np.ndarray, y: np.ndarray, v: np.ndarray
    ) -> np.ndarray:
        x = self._as_array(x)
        y = self._as_array(y)
        v = self._as_array(v, "tangent")
        _ensure_finite("parallel_transport", x, y, v)
        ratio = (self.conformal_factor(x) / self.conformal_factor(y))[..., None]
        return self.gyration(y, -x, v) * ratio

    def exp_origin(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=np.float64)
        theta = self.sqrt_c * row_norm(a, keepdims=True)
        return self.project(tanhc(theta) * a)

    def exp_origin_vjp(self, a: np.ndarray, w: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=np.float64)
        w = np.asarray(w, dtype=np.float64)
        theta = self.sqrt_c * row_norm(a, keepdims=True)
        return tanhc(theta) * w + self.c * tanhc_slope(theta) * row_dot(
            a, w, keepdims=True
        ) * a

    def constraint_residual(self, x: np.ndarray) -> np.ndarray:
        x = self._as_array(x)
        excess = self.c * row_dot(x, x) - (1.0 - self.config.eps)
        # negative excess means strictly inside; report 0 for valid points
        return np.where(excess < 0, 0.0, np.inf)

    def to_lorentz(self, p: np.ndarray) -> np.ndarray:
        p = self._as_array(p)
        p2 = self.c * row_dot(p, p, keepdims=True)
        den = 1.0 - p2
        x0 = (1.0 + p2) / (self.sqrt_c * den)
        return np.concatenate([x0, 2.0 * p / den], axis=-1)


def make_manifold(config: ManifoldConfig) -> Manifold:
    if config.model is ManifoldModel.LORENTZ:
        return Lorentz(config)
    return PoincareBall(config)


# -- typed point / tangent wrappers -------------------------------------------


@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    coords: np.ndarray
    config: ManifoldConfig
    manifold: Manifold = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        coords = np.asarray(self.coords, dtype=np.float64)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "manifold", make_manifold(self.config))
        self.manifold._as_array(coords)

    def check(self, atol: float = CONSTRAINT_ATOL) -> "ManifoldPoint":
        self.manifold.check_point(self.coords, atol)
        return self


@dataclass(frozen=True, eq=False)
class TangentVector:
    coords: np.ndarray
    base: ManifoldPoint

    def __post_init__(self) -> None:
        coords = np.asarray(self.coords, dtype=np.float64)
        object.__setattr__(self, "coords", coords)
        self.base.manifold._as_array(coords, "tangent")

    @property
    def config(self) -> ManifoldConfig:
        return self.base.config

    def norm(self) -> np.ndarray:
        return self.base.manifold.tangent_norm(self.base.coords, self.coords)


def _same_config(*configs: ManifoldConfig) -> ManifoldConfig:
    first = configs[0]
    for other in configs[1:]:
        if other != first:
            raise ManifoldConfigError(
                f"operands live on different manifolds: {first} vs {other}"
            )
    return first


def origin(config: ManifoldConfig) -> ManifoldPoint:
    return ManifoldPoint(make_manifold(config).origin(), config)


def dist(x: ManifoldPoint, y: ManifoldPoint) -> np.ndarray | float:
    config = _same_config(x.config, y.config)
    out = make_manifold(config).dist(x.coords, y.coords)
    return out if np.ndim(out) else float(out)


def exp_map(x: ManifoldPoint, v: TangentVector) -> ManifoldPoint:
    config = _same_config(x.config, v.config)
    return ManifoldPoint(x.manifold.exp_map(x.coords, v.coords), config)


def log_map(x: ManifoldPoint, y: ManifoldPoint) -> TangentVector:
    _same_config(x.config, y.config)
    return TangentVector(x.manifold.log_map(x.coords, y.coords), x)


def parallel_transport(
    x: ManifoldPoint, y: ManifoldPoint, v: TangentVector
) -> TangentVector:
    _same_config(x.config, y.config, v.config)
    return TangentVector(x.manifold.parallel_transport(x.coords, y.coords, v.coords), y)


def _require_ball(config: ManifoldConfig, op: str) -> PoincareBall:
    if config.model is not ManifoldModel.POINCARE:
        raise ManifoldConfigError(f"{op} is defined on the Poincaré ball only")
    return PoincareBall(config)


def mobius_add(x: ManifoldPoint, y: ManifoldPoint) -> ManifoldPoint:
    config = _same_config(x.config, y.config)
    ball = _require_ball(config, "mobius_add")
    return ManifoldPoint(ball.mobius_add(x.coords, y.coords), config)


def conformal_factor(x: ManifoldPoint) -> np.ndarray | float:
    ball = _require_ball(x.config, "conformal_factor")
    out = ball.conformal_factor(x.coords)
    return out if np.ndim(out) else float(out)


def lift_to_tangent(x: np.ndarray, config: ManifoldConfig) -> TangentVector:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != config.dim:
        raise ManifoldDimensionError(
            f"lift expects {config.dim} coordinates, got {x.shape[-1]}"
        )
    manifold = make_manifold(config)
    base = ManifoldPoint(np.broadcast_to(manifold.origin(), x.shape[:-1] + (config.ambient_dim,)), config)
    return TangentVector(manifold.lift(x), base)


def _require_lorentz(config: ManifoldConfig, op: str) -> Lorentz:
    if config.model is not ManifoldModel.LORENTZ:
        raise ManifoldConfigError(f"{op} expects a Lorentz point")
    return Lorentz(config)


def ball_config(config: ManifoldConfig) -> ManifoldConfig:
    return ManifoldConfig(ManifoldModel.POINCARE, config.kappa, config.dim, config.eps)


def hyperboloid_config(config: ManifoldConfig) -> ManifoldConfig:
    return ManifoldConfig(ManifoldModel.LORENTZ, config.kappa, config.dim, config.eps)


def lorentz_to_poincare(x: ManifoldPoint) -> ManifoldPoint:
    """Stereographic projection p = x_s / (1/sqrt(c) + x0)."""
    hyperboloid = _require_lorentz(x.config, "lorentz_to_poincare")
    return ManifoldPoint(hyperboloid.to_poincare(x.coords), ball_config(x.config))


def lorentz_to_poincare_tangent(v: TangentVector) -> TangentVector:
    hyperboloid = _require_lorentz(v.config, "lorentz_to_poincare_tangent")
    base = lorentz_to_poincare(v.base)
    return TangentVector(hyperboloid.to_poincare_tangent(v.base.coords, v.coords), base)


def poincare_to_lorentz(p: ManifoldPoint) -> ManifoldPoint:
    ball = _require_ball(p.config, "poincare_to_lorentz")
    return ManifoldPoint(ball.to_lorentz(p.coords), hyperboloid_config(p.config))
