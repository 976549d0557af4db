"""Parameter-free hyperbolic GCN encoder over the user-item bipartite graph.

Euclidean parameters are lifted to the tangent space at the origin,
propagated ``K`` times with ``I + D^-1 A``, sum-pooled over layers 0..K and
mapped onto the manifold with ``exp_o``. Because the propagation is linear,
the gradient with respect to the parameters is the transposed operator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from loguru import logger

from ..common.errors import ConfigError, NumericError, ShapeError
from ..geometry.manifold import Manifold


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 3
    dim: int = 16
    init_std: float = 0.1

    def __post_init__(self) -> None:
        # layers == 0 is the degenerate no-propagation encoder
        if self.layers < 0:
            raise ConfigError(f"layers must be >= 0, got {self.layers}")
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")
        if self.init_std < 0:
            raise ConfigError("init_std must be >= 0")


@dataclass(eq=False)
class EmbeddingTable:
    user_params: np.ndarray
    item_params: np.ndarray
    init_std: float = 0.1
    user_grad: np.ndarray = field(init=False, repr=False)
    item_grad: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.user_params = np.asarray(self.user_params, dtype=np.float64)
        self.item_params = np.asarray(self.item_params, dtype=np.float64)
        if self.user_params.shape[1:] != self.item_params.shape[1:]:
            raise ShapeError("user and item parameters must share the embedding dim")
        self.zero_grad()

    @property
    def num_users(self) -> int:
        return self.user_params.shape[0]

    @property
    def num_items(self) -> int:
        return self.item_params.shape[0]

    @property
    def dim(self) -> int:
        return self.user_params.shape[1]

    def params(self) -> list[np.ndarray]:
        return [self.user_params, self.item_params]

    def grads(self) -> list[np.ndarray]:
        return [self.user_grad, self.item_grad]

    def zero_grad(self) -> None:
        self.user_grad = np.zeros_like(self.user_params)
        self.item_grad = np.zeros_like(self.item_params)

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.user_params, self.item_params])

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.user_params.copy(), self.item_params.copy(), self.init_std)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.user_params)) and np.all(np.isfinite(self.item_params)))

    def to_arrays(self, prefix: str = "table") -> dict[str, np.ndarray]:
        return {
            f"{prefix}.user": self.user_params,
            f"{prefix}.item": self.item_params,
            f"{prefix}.init_std": np.array(self.init_std),
        }

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], prefix: str = "table") -> "EmbeddingTable":
        return cls(
            arrays[f"{prefix}.user"].copy(),
            arrays[f"{prefix}.item"].copy(),
            float(arrays[f"{prefix}.init_std"]),
        )


@dataclass(frozen=True, eq=False)
class EncoderOutput:
    """Pooled tangent states (chart coordinates at the origin) and their manifold images.

    ``manifold`` is None for the Euclidean chart, where ``e`` equals ``z``.
    """

    z_user: np.ndarray
    z_item: np.ndarray
    e_user: np.ndarray
    e_item: np.ndarray
    manifold: Manifold | None = None


class GraphPropagation:
    """The operator ``P = I + D^-1 A`` on the stacked [users; items] node set."""

    def __init__(self, train_matrix: sp.spmatrix):
        r = sp.csr_matrix(train_matrix, dtype=np.float64)
        self.num_users, self.num_items = r.shape
        adjacency = sp.bmat([[None, r], [r.T, None]], format="csr")
        degree = np.asarray(adjacency.sum(axis=1)).ravel()
        # isolated nodes keep a zero row and pass through unchanged
        inv_degree = np.divide(1.0, degree, out=np.zeros_like(degree), where=degree > 0)
        identity = sp.identity(self.num_nodes, format="csr")
        self.operator = (identity + sp.diags(inv_degree) @ adjacency).tocsr()
        self.operator_t = self.operator.T.tocsr()

    @classmethod
    def from_dataset(cls, dataset) -> "GraphPropagation":
        return cls(dataset.train_matrix)

    @property
    def num_nodes(self) -> int:
        return self.num_users + self.num_items

    def dense(self) -> np.ndarray:
        return self.operator.toarray()

    def split(self, stacked: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return stacked[: self.num_users], stacked[self.num_users :]

    def pool(self, x: np.ndarray, layers: int) -> np.ndarray:
        """sum_{k=0..K} P^k x, checking every layer for non-finite values."""
        state = x
        total = x.copy()
        for layer in range(1, layers + 1):
            state = aggregate(state, self)
            if not np.all(np.isfinite(state)):
                raise NumericError(f"non-finite tangent state after layer {layer}")
            total += state
        return total

    def pool_transpose(self, g: np.ndarray, layers: int) -> np.ndarray:
        state = g
        total = g.copy()
        for _ in range(layers):
            state = self.operator_t @ state
            total += state
        return total


def aggregate(z_in: np.ndarray, propagation: GraphPropagation) -> np.ndarray:
    """One layer: every node adds the mean of its neighbours' states."""
    z_in = np.asarray(z_in, dtype=np.float64)
    if z_in.shape[0] != propagation.num_nodes:
        raise ShapeError(
            f"expected {propagation.num_nodes} stacked node states, got {z_in.shape[0]}"
        )
    return propagation.operator @ z_in


def init_embeddings(
    config: EncoderConfig, num_users: int, num_items: int, seed: int
) -> EmbeddingTable:
    rng = np.random.default_rng(seed)
    user = rng.normal(0.0, config.init_std, size=(num_users, config.dim))
    item = rng.normal(0.0, config.init_std, size=(num_items, config.dim))
    return EmbeddingTable(user, item, config.init_std)


def encode(
    table: EmbeddingTable,
    propagation: GraphPropagation,
    config: EncoderConfig,
    manifold: Manifold | None,
) -> EncoderOutput:
    if (table.num_users, table.num_items) != (propagation.num_users, propagation.num_items):
        raise ShapeError("embedding table does not match the graph")
    pooled = propagation.pool(table.stacked(), config.layers)
    z_user, z_item = propagation.split(pooled)
    if manifold is None:
        return EncoderOutput(z_user, z_item, z_user, z_item, None)
    e_user = manifold.exp_origin(z_user)
    e_item = manifold.exp_origin(z_item)
    logger.debug(
        f"Encoded {table.num_users} users and {table.num_items} items "
        f"(max tangent norm {float(np.abs(pooled).max(initial=0.0)):.3g})"
    )
    return EncoderOutput(z_user, z_item, e_user, e_item, manifold)


def encode_backward(
    grad_user: np.ndarray,
    grad_item: np.ndarray,
    propagation: GraphPropagation,
    config: EncoderConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Map gradients w.r.t. pooled chart states back to the parameter table."""
    grad_user = np.asarray(grad_user, dtype=np.float64)
    grad_item = np.asarray(grad_item, dtype=np.float64)
    if grad_user.shape[0] != propagation.num_users or grad_item.shape[0] != propagation.num_items:
        raise ShapeError("gradient rows do not match the graph's node counts")
    if grad_user.shape[1:] != grad_item.shape[1:]:
        raise ShapeError("user and item gradients must share the embedding dim")
    stacked = np.concatenate([grad_user, grad_item])
    return propagation.split(propagation.pool_transpose(stacked, config.layers))
