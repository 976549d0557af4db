from __future__ import annotations

import json
import typing
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any

from .errors import ConfigError

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    """Every tunable of a run in one flat, typed document.

    Defaults sit in the middle of the tuning grids (lr, weight decay, layers,
    margin, T, alpha, gamma). Paths are relative to the workspace root.
    """

    schema_version: int = SCHEMA_VERSION
    seed: int = 2024
    threads: int = 1

    # data
    rating_threshold: float = 4.0
    min_interactions: int = 3
    val_ratio: float = 0.1
    test_ratio: float = 0.2
    popularity_quantile: float = 0.5

    # manifold and encoder
    manifold: str = "lorentz"
    kappa: float = -1.0
    dim: int = 16
    eps: float = 1e-12
    layers: int = 3
    init_std: float = 0.1

    # clustering
    user_clusters: int = 10
    item_clusters: int = 10
    cluster_max_iter: int = 100
    cluster_tol: float = 1e-6

    # diffusion
    steps: int = 30
    inference_steps: int = 10
    beta_min: float = 1e-4
    beta_max: float = 1e-2
    stride: float = 0.1
    growth_rate: float = 1.0
    eps_norm: float = 1e-8
    hidden_dim: int = 64
    time_embed_dim: int = 32

    # objective
    margin: float = 0.2
    alpha: float = 0.3
    gamma: float = 0.4
    fermi_q: float = 2.0
    fermi_t: float = 1.0

    # optimisation
    lr: float = 1e-3
    weight_decay: float = 0.005
    batch_size: int = 1024
    epochs_stage1: int = 50
    epochs_stage2: int = 30
    patience: int = 5
    fine_tune: bool = True
    bpr_epochs: int = 50

    # workspace layout
    data_dir: str = "data"
    checkpoint_dir: str = "checkpoints"
    run_dir: str = "runs"
    metrics_dir: str = "metrics"
    export_dir: str = "exports"

    def __post_init__(self) -> None:
        _check_types(self)
        _check_ranges(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config document must be a JSON object")
        schema_version = data.get("schema_version", SCHEMA_VERSION)
        if schema_version != SCHEMA_VERSION:
            raise ConfigError(f"schema_version {schema_version} is not supported")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: Path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=4)

    def with_overrides(self, **changes: Any) -> "RunConfig":
        return replace(self, **changes)

    # -- views consumed by the model modules --------------------------------
    def manifold_config(self):
        from ..geometry.manifold import ManifoldConfig

        return ManifoldConfig(self.manifold, self.kappa, self.dim, self.eps)

    def encoder_config(self):
        from ..model.encoder import EncoderConfig

        return EncoderConfig(layers=self.layers, dim=self.dim, init_std=self.init_std)

    def diffusion_config(self):
        from ..model.diffusion import DiffusionConfig

        return DiffusionConfig(
            steps=self.steps,
            inference_steps=self.inference_steps,
            beta_min=self.beta_min,
            beta_max=self.beta_max,
            delta=self.stride,
            r=self.growth_rate,
            eps_norm=self.eps_norm,
            kappa=self.kappa,
        )

    def loss_config(self):
        from ..model.objective import LossConfig

        return LossConfig(
            margin=self.margin,
            alpha=self.alpha,
            gamma=self.gamma,
            fermi_q=self.fermi_q,
            fermi_t=self.fermi_t,
        )


def _check_types(config: RunConfig) -> None:
    hints = typing.get_type_hints(RunConfig)
    for f in fields(config):
        expected = hints[f.name]
        value = getattr(config, f.name)
        if expected is bool:
            ok = isinstance(value, bool)
        elif expected is int:
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif expected is float:
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            if ok:
                object.__setattr__(config, f.name, float(value))
        else:
            ok = isinstance(value, expected)
        if not ok:
            raise ConfigError(
                f"{f.name} must be {expected.__name__}, got {type(value).__name__}"
            )


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _check_ranges(c: RunConfig) -> None:
    _require(c.threads >= 1, "threads must be >= 1")
    _require(c.min_interactions >= 3, "min_interactions must be >= 3")
    _require(0 < c.val_ratio < 1 and 0 < c.test_ratio < 1, "split ratios must lie in (0, 1)")
    _require(c.val_ratio + c.test_ratio < 1, "val_ratio + test_ratio must leave room for train")
    _require(0 < c.popularity_quantile < 1, "popularity_quantile must lie in (0, 1)")
    _require(c.manifold in ("lorentz", "poincare"), f"unknown manifold {c.manifold!r}")
    _require(c.kappa < 0, "kappa must be negative")
    _require(c.dim >= 2, "dim must be >= 2")
    _require(c.eps > 0, "eps must be positive")
    _require(c.layers >= 1, "layers must be >= 1")
    _require(c.init_std >= 0, "init_std must be >= 0")
    _require(c.user_clusters >= 1 and c.item_clusters >= 1, "cluster counts must be >= 1")
    _require(c.cluster_max_iter >= 1, "cluster_max_iter must be >= 1")
    _require(c.cluster_tol > 0, "cluster_tol must be positive")
    _require(c.steps >= 1, "steps must be >= 1")
    _require(1 <= c.inference_steps <= c.steps, "inference_steps must lie in [1, steps]")
    _require(0 < c.beta_min <= c.beta_max < 1, "need 0 < beta_min <= beta_max < 1")
    _require(c.stride >= 0, "stride must be >= 0")
    _require(c.growth_rate > 0, "growth_rate must be positive")
    _require(c.eps_norm > 0, "eps_norm must be positive")
    _require(c.hidden_dim >= 1 and c.time_embed_dim >= 2, "network sizes too small")
    _require(c.time_embed_dim % 2 == 0, "time_embed_dim must be even")
    _require(c.margin >= 0, "margin must be >= 0")
    _require(0 <= c.alpha <= 1, "alpha must lie in [0, 1]")
    _require(c.gamma >= 0, "gamma must be >= 0")
    _require(c.fermi_t > 0, "fermi_t must be positive")
    _require(c.lr > 0, "lr must be positive")
    _require(c.weight_decay >= 0, "weight_decay must be >= 0")
    _require(c.batch_size >= 1, "batch_size must be >= 1")
    _require(c.epochs_stage1 >= 1 and c.epochs_stage2 >= 1, "epochs must be >= 1")
    _require(c.bpr_epochs >= 1, "bpr_epochs must be >= 1")
    _require(c.patience >= 1, "patience must be >= 1")
