from .manifold import (
    Lorentz,
    Manifold,
    ManifoldConfig,
    ManifoldModel,
    ManifoldPoint,
    PoincareBall,
    TangentVector,
    conformal_factor,
    dist,
    exp_map,
    lift_to_tangent,
    log_map,
    lorentz_inner,
    lorentz_to_poincare,
    lorentz_to_poincare_tangent,
    make_manifold,
    mobius_add,
    origin,
    parallel_transport,
    poincare_to_lorentz,
)

__all__ = [
    "Lorentz",
    "Manifold",
    "ManifoldConfig",
    "ManifoldModel",
    "ManifoldPoint",
    "PoincareBall",
    "TangentVector",
    "conformal_factor",
    "dist",
    "exp_map",
    "lift_to_tangent",
    "log_map",
    "lorentz_inner",
    "lorentz_to_poincare",
    "lorentz_to_poincare_tangent",
    "make_manifold",
    "mobius_add",
    "origin",
    "parallel_transport",
    "poincare_to_lorentz",
]
