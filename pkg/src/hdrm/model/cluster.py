"""Hyperbolic k-means with Karcher-mean centers, and the geodesic LCA point."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from loguru import logger
from scipy.optimize import minimize_scalar

from ..common.errors import ClusterError
from ..geometry.manifold import Manifold

KARCHER_MAX_ITER = 50
KARCHER_TOL = 1e-8
MONOTONE_SLACK = 1e-9


@dataclass(eq=False)
class ClusterModel:
    centers: np.ndarray
    assignments: np.ndarray
    objective: float
    history: list[float] = field(default_factory=list)

    @property
    def c(self) -> int:
        return self.centers.shape[0]

    def center_of(self, nodes: np.ndarray | int) -> np.ndarray:
        nodes = np.asarray(nodes, dtype=np.int64)
        if np.any(nodes < 0) or np.any(nodes >= len(self.assignments)):
            raise ClusterError("node is outside the clustered set")
        labels = self.assignments[nodes]
        if np.any(labels < 0):
            raise ClusterError("node has no cluster assignment")
        return self.centers[labels]

    def to_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        return {
            f"{prefix}.centers": self.centers,
            f"{prefix}.assignments": self.assignments,
            f"{prefix}.objective": np.array(self.objective),
            f"{prefix}.history": np.asarray(self.history, dtype=np.float64),
        }

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], prefix: str) -> "ClusterModel":
        return cls(
            centers=arrays[f"{prefix}.centers"].copy(),
            assignments=arrays[f"{prefix}.assignments"].astype(np.int64),
            objective=float(arrays[f"{prefix}.objective"]),
            history=arrays[f"{prefix}.history"].tolist(),
        )


def _pairwise_dist(manifold: Manifold, points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return manifold.dist(points[:, None, :], centers[None, :, :])


def _kmeans_plus_plus(
    manifold: Manifold, points: np.ndarray, c: int, rng: np.random.Generator
) -> np.ndarray:
    chosen = [int(rng.integers(len(points)))]
    closest = manifold.dist(points, points[chosen[0]]) ** 2
    for _ in range(1, c):
        total = closest.sum()
        if total <= 0:
            raise ClusterError("fewer distinct points than clusters")
        pick = int(rng.choice(len(points), p=closest / total))
        chosen.append(pick)
        closest = np.minimum(closest, manifold.dist(points, points[pick]) ** 2)
    return points[chosen].copy()


def karcher_mean(
    manifold: Manifold,
    points: np.ndarray,
    start: np.ndarray,
    max_iter: int = KARCHER_MAX_ITER,
    tol: float = KARCHER_TOL,
) -> np.ndarray:
    """Fixed-point iteration mu <- exp_mu(mean log_mu(points))."""
    mu = start
    for _ in range(max_iter):
        step = manifold.log_map(np.broadcast_to(mu, points.shape), points).mean(axis=0)
        if manifold.tangent_norm(mu, step) < tol:
            break
        mu = manifold.exp_map(mu, step)
    return mu


def _cluster_cost(manifold: Manifold, members: np.ndarray, center: np.ndarray) -> float:
    return float(np.sum(manifold.dist(members, center) ** 2))


def kmeans(
    points: np.ndarray,
    c: int,
    manifold: Manifold,
    seed: int,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> ClusterModel:
    """Alternate nearest-center assignment and Karcher-mean updates.

    The objective sum d(e_i, mu_a(i))^2 never increases: a Karcher update is
    kept only when it does not raise its cluster's cost, and an emptied
    cluster is re-seeded at the point farthest from its own center.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or len(points) == 0:
        raise ClusterError("kmeans needs a non-empty (n, d) point array")
    if c < 1:
        raise ClusterError(f"cluster count must be >= 1, got {c}")
    distinct = len(np.unique(points, axis=0))
    if c > distinct:
        raise ClusterError(f"asked for {c} clusters but only {distinct} distinct points exist")

    rng = np.random.default_rng(seed)
    centers = _kmeans_plus_plus(manifold, points, c, rng)
    dists = _pairwise_dist(manifold, points, centers)
    assignments = dists.argmin(axis=1)
    objective = float(np.sum(dists[np.arange(len(points)), assignments] ** 2))
    history = [objective]

    for iteration in range(1, max_iter + 1):
        moved = 0.0
        for k in range(c):
            members = points[assignments == k]
            if len(members) == 0:
                own = dists[np.arange(len(points)), assignments]
                far = int(own.argmax())
                logger.warning(f"Cluster {k} is empty; re-seeding at point {far}")
                centers[k] = points[far]
                continue
            candidate = karcher_mean(manifold, members, centers[k])
            if _cluster_cost(manifold, members, candidate) <= _cluster_cost(
                manifold, members, centers[k]
            ):
                moved = max(moved, float(manifold.dist(candidate, centers[k])))
                centers[k] = candidate

        dists = _pairwise_dist(manifold, points, centers)
        new_assignments = dists.argmin(axis=1)
        new_objective = float(np.sum(dists[np.arange(len(points)), new_assignments] ** 2))
        if new_objective > objective + MONOTONE_SLACK:
            raise ClusterError(
                f"k-means objective increased at iteration {iteration}: "
                f"{objective:.6g} -> {new_objective:.6g}"
            )
        history.append(new_objective)
        converged = np.array_equal(new_assignments, assignments) and moved < tol
        assignments, objective = new_assignments, new_objective
        if converged:
            logger.debug(f"k-means converged after {iteration} iterations")
            break

    manifold.check_point(centers)
    logger.info(f"k-means with c={c}: objective {objective:.4g} after {len(history) - 1} iterations")
    return ClusterModel(centers, assignments.astype(np.int64), objective, history)


def log_at_center(
    model: ClusterModel, manifold: Manifold, points: np.ndarray, nodes: np.ndarray | int
) -> np.ndarray:
    """log_{mu_a(i)}(e_i) for the given node indices and their embeddings."""
    centers = model.center_of(nodes)
    return manifold.log_map(centers, np.asarray(points, dtype=np.float64))


def lca(
    x: np.ndarray,
    y: np.ndarray,
    manifold: Manifold,
    grid: int = 64,
    tol: float = 1e-10,
) -> np.ndarray:
    """Point on the geodesic segment x -> y closest to the origin."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.array_equal(x, y):
        return x.copy()
    origin = manifold.origin()
    direction = manifold.log_map(x, y)

    def point_at(s: float) -> np.ndarray:
        return manifold.exp_map(x, s * direction)

    def height(s: float) -> float:
        return float(manifold.dist(origin, point_at(s)))

    samples = np.linspace(0.0, 1.0, grid + 1)
    heights = np.array([height(s) for s in samples])
    best = int(heights.argmin())
    lo = samples[max(best - 1, 0)]
    hi = samples[min(best + 1, grid)]
    result = minimize_scalar(height, bounds=(lo, hi), method="bounded", options={"xatol": tol})
    candidates = [(float(result.fun), float(result.x)), (heights[0], 0.0), (heights[-1], 1.0)]
    _, s_best = min(candidates)
    if s_best == 0.0:
        return x.copy()
    if s_best == 1.0:
        return y.copy()
    return point_at(s_best)
