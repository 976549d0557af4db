import json

import numpy as np
import pytest

from hdrm.common.artifact_store import ArtifactStore, atomic_write_text
from hdrm.common.config_service import ConfigService
from hdrm.common.errors import CheckpointError, MissingArtifactError


@pytest.fixture
def store(tmp_path):
    return ArtifactStore(ConfigService(tmp_path, environ={}))


def test_atomic_write_leaves_no_temp_files(tmp_path):
    path = atomic_write_text(tmp_path / "nested" / "out.txt", "hello")
    assert path.read_text() == "hello"
    assert [p.name for p in path.parent.iterdir()] == ["out.txt"]


def test_atomic_write_cleans_up_on_failure(tmp_path):
    from hdrm.common.artifact_store import _atomic_write

    def boom(tmp):
        tmp.write_text("partial")
        raise RuntimeError("disk full")

    with pytest.raises(RuntimeError):
        _atomic_write(tmp_path / "out.txt", boom)
    assert list(tmp_path.iterdir()) == []


def test_dataset_round_trip(store, tiny_dataset):
    store.write_dataset(tiny_dataset, np.array(["a", "b", "c"], dtype=object), np.arange(5).astype(str))
    loaded = store.read_dataset()
    assert loaded.num_items == 5
    np.testing.assert_array_equal(loaded.val, tiny_dataset.val)
    assert store.read_stats()["train"] == 6
    ids = store.read_id_map("user")
    assert ids["original_id"].tolist() == ["a", "b", "c"]
    assert ids["dense_id"].tolist() == [0, 1, 2]
    manifest = store.manifest_path.read_text().splitlines()
    assert manifest[0] == "# train"
    assert "# noise_pool" in manifest


def test_missing_dataset(store):
    with pytest.raises(MissingArtifactError) as excinfo:
        store.read_dataset()
    assert excinfo.value.exit_code == 3


def test_read_dataset_needs_stats(store, tiny_dataset):
    store.write_dataset(tiny_dataset, np.array(["a", "b", "c"], dtype=object), np.arange(5).astype(str))
    store.stats_path.unlink()
    with pytest.raises(MissingArtifactError, match="stats.json"):
        store.read_dataset()


def test_checkpoints(store):
    store.save_checkpoint("stage1", {"table.user": np.ones((2, 3))})
    assert store.has_checkpoint("stage1")
    arrays = store.load_checkpoint("stage1")
    assert set(arrays) == {"table.user"}
    with pytest.raises(CheckpointError):
        store.save_checkpoint("bad", {"format_version": np.array(1)})
    assert store.remove_checkpoint("stage1")
    assert not store.remove_checkpoint("stage1")
    with pytest.raises(MissingArtifactError):
        store.load_checkpoint("stage1")


def test_checkpoint_version_check(store):
    path = store.checkpoint_path("old")
    path.parent.mkdir(parents=True)
    np.savez(path, format_version=np.array(0), x=np.zeros(1))
    with pytest.raises(CheckpointError):
        store.load_checkpoint("old")


def test_train_log(store):
    store.append_train_log({"stage": "stage1", "epoch": 1})
    store.append_train_log({"stage": "stage2", "epoch": 1})
    store.reset_train_log("stage2")
    assert store.read_train_log() == [{"stage": "stage1", "epoch": 1}]
    store.reset_train_log()
    assert store.read_train_log() == []


def test_metrics_tables_and_frames(store):
    import pandas as pd

    path = store.write_metrics("eval", {"recall@20": 0.5})
    assert json.loads(path.read_text()) == {"recall@20": 0.5}
    assert store.write_table("eval", "table").read_text() == "table"
    frame = pd.DataFrame({"node_id": [0, 1], "tangent_0": [0.1, 0.2]})
    csv = store.write_frame(frame, "embeddings")
    assert pd.read_csv(csv)["tangent_0"].tolist() == [0.1, 0.2]
    parquet = store.write_frame(frame, "embeddings", "parquet")
    pd.testing.assert_frame_equal(pd.read_parquet(parquet), frame)
