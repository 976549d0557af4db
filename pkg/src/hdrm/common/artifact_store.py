from __future__ import annotations

import io
import json
import os
import uuid
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping

import numpy as np
import pandas as pd
from loguru import logger

from .config_service import ConfigService
from .errors import CheckpointError, MissingArtifactError

CHECKPOINT_FORMAT_VERSION = 1
SPLITS = ("train", "val", "test", "noise_pool")


def _atomic_write(path: Path, write: Callable[[Path], None]) -> Path:
    """Write through a same-directory temp file and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    temp_path = path.with_name(f"{path.name}.tmp-{os.getpid()}-{uuid.uuid4().hex}")
    try:
        write(temp_path)
        temp_path.replace(path)
    except Exception:
        temp_path.unlink(missing_ok=True)
        logger.exception(f"Failed to write {path}")
        raise
    return path


def atomic_write_text(path: Path, text: str) -> Path:
    return _atomic_write(path, lambda tmp: tmp.write_text(text))


def atomic_write_bytes(path: Path, payload: bytes) -> Path:
    return _atomic_write(path, lambda tmp: tmp.write_bytes(payload))


class ArtifactStore:
    """Persist prepared data, checkpoints, run logs, metrics and exports.

    Every file lands through ``_atomic_write`` so a crashed command never
    leaves a half-written artifact behind.
    """

    def __init__(self, config: ConfigService):
        self.config = config

    # -- paths ---------------------------------------------------------------
    @property
    def interactions_path(self) -> Path:
        return self.config.data_dir / "interactions.parquet"

    @property
    def manifest_path(self) -> Path:
        return self.config.data_dir / "manifest.tsv"

    @property
    def stats_path(self) -> Path:
        return self.config.data_dir / "stats.json"

    @property
    def train_log_path(self) -> Path:
        return self.config.run_dir / "train_log.jsonl"

    def id_map_path(self, kind: str) -> Path:
        return self.config.data_dir / f"{kind}_ids.tsv"

    def checkpoint_path(self, name: str) -> Path:
        return self.config.checkpoint_dir / f"{name}.npz"

    # -- prepared dataset ----------------------------------------------------
    def write_dataset(
        self,
        dataset,
        user_ids: np.ndarray,
        item_ids: np.ndarray,
        stats: Mapping[str, Any] | None = None,
    ) -> None:
        frames = []
        for name in SPLITS:
            pairs = getattr(dataset, name)
            frames.append(
                pd.DataFrame(
                    {
                        "split": pd.Series([name] * len(pairs), dtype="object"),
                        "user": pairs[:, 0],
                        "item": pairs[:, 1],
                    }
                )
            )
        frame = pd.concat(frames, ignore_index=True)
        _atomic_write(
            self.interactions_path,
            lambda tmp: frame.to_parquet(tmp, index=False, engine="pyarrow"),
        )
        atomic_write_text(self.manifest_path, _manifest_text(dataset))
        atomic_write_text(self.id_map_path("user"), _id_map_text(user_ids))
        atomic_write_text(self.id_map_path("item"), _id_map_text(item_ids))
        meta = {
            "num_users": dataset.num_users,
            "num_items": dataset.num_items,
            "noise_injected": dataset.noise_injected,
            **dict(stats or dataset.stats()),
        }
        atomic_write_text(self.stats_path, json.dumps(meta, indent=4, sort_keys=True))
        logger.info(f"Wrote prepared dataset to {self.config.data_dir}")

    def read_dataset(self):
        from ..data.dataset import InteractionDataset

        if not self.interactions_path.is_file():
            raise MissingArtifactError(
                f"no prepared dataset under {self.config.data_dir}; run `hdrm prepare` first"
            )
        meta = self.read_stats()
        frame = pd.read_parquet(self.interactions_path, engine="pyarrow")
        parts = {
            name: frame.loc[frame["split"] == name, ["user", "item"]].to_numpy(dtype=np.int64)
            for name in SPLITS
        }
        return InteractionDataset(
            num_users=int(meta["num_users"]),
            num_items=int(meta["num_items"]),
            noise_injected=int(meta.get("noise_injected", 0)),
            **parts,
        )

    def read_stats(self) -> dict[str, Any]:
        if not self.stats_path.is_file():
            raise MissingArtifactError(f"{self.stats_path} not found; run `hdrm prepare` first")
        return json.loads(self.stats_path.read_text())

    def read_id_map(self, kind: str) -> pd.DataFrame:
        path = self.id_map_path(kind)
        if not path.is_file():
            raise MissingArtifactError(f"{path} not found; run `hdrm prepare` first")
        return pd.read_csv(
            path, sep="\t", header=None, names=["original_id", "dense_id"], dtype={"original_id": str}
        )

    # -- checkpoints ---------------------------------------------------------
    def has_checkpoint(self, name: str) -> bool:
        return self.checkpoint_path(name).is_file()

    def remove_checkpoint(self, name: str) -> bool:
        path = self.checkpoint_path(name)
        if not path.is_file():
            return False
        path.unlink()
        logger.info(f"Removed stale checkpoint {path.name}")
        return True

    def save_checkpoint(self, name: str, arrays: Mapping[str, np.ndarray]) -> Path:
        if "format_version" in arrays:
            raise CheckpointError("format_version is a reserved checkpoint key")
        buffer = io.BytesIO()
        np.savez(
            buffer,
            format_version=np.array(CHECKPOINT_FORMAT_VERSION),
            **{key: np.asarray(value) for key, value in arrays.items()},
        )
        path = atomic_write_bytes(self.checkpoint_path(name), buffer.getvalue())
        logger.debug(f"Saved checkpoint {path} ({len(arrays)} arrays)")
        return path

    def load_checkpoint(self, name: str) -> dict[str, np.ndarray]:
        path = self.checkpoint_path(name)
        if not path.is_file():
            raise MissingArtifactError(
                f"checkpoint {path.name} not found; run `hdrm train` first"
            )
        with np.load(path, allow_pickle=False) as archive:
            arrays = {key: archive[key] for key in archive.files}
        version = arrays.pop("format_version", None)
        if version is None or int(version) != CHECKPOINT_FORMAT_VERSION:
            raise CheckpointError(f"{path.name} has unsupported format version {version}")
        return arrays

    # -- logs, metrics, exports ----------------------------------------------
    def reset_train_log(self, stage: str | None = None) -> None:
        """Drop earlier records of ``stage`` (all records when None)."""
        records = [] if stage is None else [
            r for r in self.read_train_log() if r.get("stage") != stage
        ]
        atomic_write_text(self.train_log_path, "".join(json.dumps(r) + "\n" for r in records))

    def append_train_log(self, record: Mapping[str, Any]) -> None:
        path = self.train_log_path
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a") as handle:
            handle.write(json.dumps(dict(record)) + "\n")

    def read_train_log(self) -> list[dict[str, Any]]:
        path = self.train_log_path
        if not path.is_file():
            return []
        return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]

    def write_metrics(self, name: str, document: Mapping[str, Any]) -> Path:
        path = self.config.metrics_dir / f"{name}.json"
        return atomic_write_text(path, json.dumps(dict(document), indent=4, sort_keys=True))

    def write_table(self, name: str, text: str) -> Path:
        return atomic_write_text(self.config.metrics_dir / f"{name}.txt", text)

    def write_frame(self, frame: pd.DataFrame, name: str, fmt: str = "csv") -> Path:
        path = self.config.export_dir / f"{name}.{fmt}"
        if fmt == "parquet":
            return _atomic_write(path, lambda tmp: frame.to_parquet(tmp, index=False, engine="pyarrow"))
        return _atomic_write(path, lambda tmp: frame.to_csv(tmp, index=False, float_format="%.17g"))


def _manifest_text(dataset) -> str:
    lines: list[str] = []
    for name in SPLITS:
        lines.append(f"# {name}")
        lines.extend(f"{u}\t{i}" for u, i in getattr(dataset, name))
    return "\n".join(lines) + "\n"


def _id_map_text(ids: Iterable[Any]) -> str:
    return "".join(f"{original}\t{dense}\n" for dense, original in enumerate(ids))
