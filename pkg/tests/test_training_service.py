import numpy as np
import pytest

from hdrm.common.artifact_store import ArtifactStore
from hdrm.common.config_service import ConfigService
from hdrm.common.errors import ConfigError, MissingArtifactError
from hdrm.evaluation.baselines import popularity_baseline
from hdrm.model.denoiser import PARAM_NAMES
from hdrm.training_service import (
    Ablation,
    Stage,
    SweepKind,
    TrainingService,
    popularity_labels,
)


@pytest.fixture
def service(tmp_path, small_run, planted_dataset):
    config = ConfigService(tmp_path, environ={})
    config.use_run_config(small_run)
    store = ArtifactStore(config)
    store.write_dataset(
        planted_dataset,
        np.array([f"u{k}" for k in range(planted_dataset.num_users)], dtype=object),
        np.array([f"i{k}" for k in range(planted_dataset.num_items)], dtype=object),
    )
    return TrainingService(config, store, small_run)


def test_popularity_labels_split_exactly():
    labels = popularity_labels(np.array([5, 1, 3, 3]), 0.5)
    assert labels.tolist() == ["head", "tail", "head", "tail"]
    assert (popularity_labels(np.arange(10), 0.8) == "head").sum() == 2


def test_prepare_writes_workspace(tmp_path, interaction_file, small_run):
    config = ConfigService(tmp_path / "ws", environ={})
    service = TrainingService(config, ArtifactStore(config), small_run)
    dataset = service.prepare(interaction_file)
    assert dataset.num_users == 4
    loaded = service.load_dataset()
    np.testing.assert_array_equal(loaded.train, dataset.train)
    users = service.store.read_id_map("user")["original_id"].tolist()
    assert users == ["u0", "u1", "u2", "u3"]


def test_prepare_with_noise(tmp_path, interaction_file, small_run):
    config = ConfigService(tmp_path / "ws", environ={})
    service = TrainingService(config, ArtifactStore(config), small_run)
    clean = service.prepare(interaction_file)
    noisy = service.prepare(interaction_file, noise=True)
    assert noisy.noise_injected == 2 * len(clean.noise_pool)
    assert service.store.read_stats()["noise_injected"] == noisy.noise_injected


def test_stage1_is_deterministic(service, planted_dataset):
    first = service.train_stage1(planted_dataset, persist=False)
    second = service.train_stage1(planted_dataset, persist=False)
    np.testing.assert_array_equal(first.user_params, second.user_params)
    assert first.is_finite()
    assert not service.store.has_checkpoint("stage1")


def test_stage1_beats_popularity_on_planted_blocks(tmp_path, small_run, planted_dataset):
    run = small_run.with_overrides(dim=8, lr=0.01, epochs_stage1=30, patience=30)
    service = TrainingService(ConfigService(tmp_path, environ={}), run=run)
    table = service.train_stage1(planted_dataset, persist=False)
    model = service._stage1_model(planted_dataset, table, Ablation.NONE)
    ours = service.evaluate_model(planted_dataset, model, "val").means
    popular = popularity_baseline(planted_dataset, split="val").means
    assert ours["recall@20"] > popular["recall@20"]
    assert ours["recall@10"] > popular["recall@10"]


def test_full_pipeline(service):
    model = service.train(Stage.ALL)
    store = service.store
    for name in ("stage1", "clusters", "stage2"):
        assert store.has_checkpoint(name)
    stages = {record["stage"] for record in store.read_train_log()}
    assert stages == {"stage1", "stage2"}
    assert model.diffusion is not None

    documents = service.evaluate(baselines=True)
    assert set(documents) == {"hdrm", "popularity", "mf-bpr"}
    hdrm = documents["hdrm"]
    assert 0.0 <= hdrm["recall@20"] <= 1.0
    assert hdrm["users_evaluated"] == 40

    frame = service.export_frame()
    assert len(frame) == 40 + 30
    assert {"tangent_0", "manifold_4", "poincare_3", "cluster", "popularity"} <= set(frame.columns)
    assert set(frame["popularity"]) == {"head", "tail"}
    assert frame.loc[frame["node_type"] == "item", "original_id"].iloc[0] == "i0"


def test_retraining_stage1_drops_stale_stage2(service):
    service.train(Stage.ALL)
    service.train(Stage.ONE)
    assert not service.store.has_checkpoint("stage2")
    assert service.load_model(service.load_dataset()).diffusion is None


def test_stage2_alone_reuses_stage1(service):
    service.train(Stage.ONE)
    before = service.store.load_checkpoint("stage1")["table.user"]
    service.train(Stage.TWO)
    assert service.store.has_checkpoint("stage2")
    np.testing.assert_array_equal(service.store.load_checkpoint("stage1")["table.user"], before)


def test_diffusion_ablation_skips_stage2(service):
    model = service.train(Stage.ALL, Ablation.DIFF)
    assert model.diffusion is None
    assert not service.store.has_checkpoint("stage2")
    assert service.evaluate()["hdrm"]["users_evaluated"] == 40


def test_hyperbolic_ablation_uses_euclidean_chart(service):
    model = service.train(Stage.ALL, Ablation.HYP)
    assert model.manifold is None
    frame = service.export_frame()
    assert not any(column.startswith("poincare_") for column in frame.columns)
    np.testing.assert_array_equal(frame["tangent_0"], frame["manifold_0"])
    with pytest.raises(ConfigError):
        service.train(Stage.TWO, Ablation.NONE)


def test_geometry_ablation_uses_unconstrained_noise(service, planted_dataset):
    table = service.train_stage1(planted_dataset, Ablation.GEO, persist=False)
    clusters = service.cluster(planted_dataset, table, Ablation.GEO, persist=False)
    assert np.all(clusters.signs.sign_user == 1)
    assert service.diffusion_config_for(Ablation.GEO).delta == 0.0


def test_full_ranking_weight_leaves_denoisers_untouched(tmp_path, small_run, planted_dataset):
    run = small_run.with_overrides(alpha=1.0, weight_decay=0.0, fine_tune=False)
    service = TrainingService(ConfigService(tmp_path, environ={}), run=run)
    table = service.train_stage1(planted_dataset, persist=False)
    clusters = service.cluster(planted_dataset, table, persist=False)
    model = service.train_stage2(planted_dataset, table, clusters, persist=False)
    fresh = service.new_diffusion(Ablation.NONE)
    for name in PARAM_NAMES:
        np.testing.assert_array_equal(model.diffusion.net_user.params[name], fresh.net_user.params[name])
        np.testing.assert_array_equal(model.diffusion.net_item.params[name], fresh.net_item.params[name])
    np.testing.assert_array_equal(model.table.user_params, table.user_params)


def test_steps_sweep(service):
    service.train(Stage.ONE)
    frame = service.sweep(SweepKind.STEPS, [2, 3])
    assert frame["steps"].tolist() == [2, 3]
    assert "ndcg@10" in frame.columns


def test_missing_artifacts(tmp_path, small_run):
    config = ConfigService(tmp_path, environ={})
    service = TrainingService(config, ArtifactStore(config), small_run)
    with pytest.raises(MissingArtifactError):
        service.train()


def test_load_model_without_checkpoint(service, planted_dataset):
    with pytest.raises(MissingArtifactError):
        service.load_model(planted_dataset)
