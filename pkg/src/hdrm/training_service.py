from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, replace
from enum import StrEnum
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger
from rich.progress import track
from scipy.cluster.vq import kmeans2

from .common.artifact_store import ArtifactStore
from .common.config_service import ConfigService
from .common.errors import ConfigError, MissingArtifactError, TrainingDivergedError
from .common.run_config import RunConfig
from .data.dataset import InteractionDataset, SplitSpec, binarize, inject_noise, sample_negatives, split
from .data.interaction_parser import InputFormat, load_interactions
from .evaluation.baselines import BprConfig, mf_bpr_baseline, popularity_baseline
from .evaluation.metrics import RankingResult, evaluate
from .geometry.manifold import Lorentz, Manifold, make_manifold
from .model.cluster import ClusterModel, kmeans
from .model.denoiser import DenoiserNet
from .model.diffusion import (
    DiffusionConfig,
    DirectionalNoise,
    NoiseSchedule,
    denoise_embeddings,
    direction_signs,
    forward_chain,
    forward_chain_backward,
    sample_timesteps,
)
from .model.encoder import (
    EmbeddingTable,
    EncoderConfig,
    EncoderOutput,
    GraphPropagation,
    encode,
    encode_backward,
    init_embeddings,
)
from .model.objective import (
    LossConfig,
    OriginDistance,
    fermi_dirac,
    joint_recon_loss,
    ranking_loss_and_grads,
    reweight,
    total_loss,
)
from .model.optimizer import OptimizerState, adam_step

VALIDATION_K = 20
MARGIN_GRID = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4)
STEPS_GRID = (5, 10, 20, 40)


class Ablation(StrEnum):
    NONE = "none"
    GEO = "geo"
    DIFF = "diff"
    HYP = "hyp"


class Stage(StrEnum):
    ONE = "1"
    TWO = "2"
    ALL = "all"


class SweepKind(StrEnum):
    MARGIN = "margin"
    STEPS = "steps"


@dataclass(eq=False)
class ClusterState:
    users: ClusterModel
    items: ClusterModel
    signs: DirectionalNoise

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {
            **self.users.to_arrays("clusters.user"),
            **self.items.to_arrays("clusters.item"),
            **self.signs.to_arrays(),
        }

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "ClusterState":
        return cls(
            users=ClusterModel.from_arrays(arrays, "clusters.user"),
            items=ClusterModel.from_arrays(arrays, "clusters.item"),
            signs=DirectionalNoise(arrays["signs.user"].copy(), arrays["signs.item"].copy()),
        )


@dataclass(eq=False)
class DiffusionState:
    net_user: DenoiserNet
    net_item: DenoiserNet
    schedule: NoiseSchedule
    config: DiffusionConfig

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {
            **self.net_user.to_arrays(),
            **self.net_item.to_arrays(),
            **self.schedule.to_arrays(),
            **self.config.to_arrays(),
        }

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "DiffusionState":
        return cls(
            net_user=DenoiserNet.from_arrays(arrays, "theta"),
            net_item=DenoiserNet.from_arrays(arrays, "psi"),
            schedule=NoiseSchedule.from_arrays(arrays),
            config=DiffusionConfig.from_arrays(arrays),
        )

    def copy(self) -> "DiffusionState":
        return DiffusionState.from_arrays(self.to_arrays())


@dataclass(eq=False)
class HdrmModel:
    """Everything needed to score: table, graph, geometry and optionally the denoisers."""

    table: EmbeddingTable
    propagation: GraphPropagation
    encoder: EncoderConfig
    manifold: Manifold | None
    clusters: ClusterState | None = None
    diffusion: DiffusionState | None = None

    def embeddings(self) -> EncoderOutput:
        return encode(self.table, self.propagation, self.encoder, self.manifold)

    def final_states(self) -> tuple[np.ndarray, np.ndarray]:
        """Chart states used for ranking: denoised when the diffusion stage is present."""
        out = self.embeddings()
        if self.diffusion is None or self.clusters is None:
            return out.z_user, out.z_item
        return denoise_embeddings(
            self.diffusion.net_user,
            self.diffusion.net_item,
            out.z_user,
            out.z_item,
            self.diffusion.config,
            self.diffusion.schedule,
            self.clusters.signs,
        )

    def score_fn(self, loss: LossConfig) -> Callable[[np.ndarray], np.ndarray]:
        z_user, z_item = self.final_states()
        kernel = OriginDistance.for_manifold(self.manifold)

        def score(users: np.ndarray) -> np.ndarray:
            return fermi_dirac(kernel.pairwise_sq_dist(z_user[users], z_item), loss)

        return score


class TrainingService:
    """
    Orchestrates the HDRM pipeline: prepare, two-stage training, evaluation,
    sweeps and embedding export.

    Checkpoints go through the injected ``ArtifactStore``; ``persist=False``
    runs (used by the sweeps) keep everything in memory.
    """

    def __init__(
        self,
        config: ConfigService | None = None,
        store: ArtifactStore | None = None,
        run: RunConfig | None = None,
        show_progress: bool = False,
    ):
        self.config = config or ConfigService()
        self.store = store or ArtifactStore(self.config)
        self.run = run or self.config.run_config
        self.show_progress = show_progress

    # -- configuration views ---------------------------------------------------
    @property
    def loss_config(self) -> LossConfig:
        return self.run.loss_config()

    def manifold_for(self, ablation: Ablation) -> Manifold | None:
        if ablation is Ablation.HYP:
            return None
        return make_manifold(self.run.manifold_config())

    def diffusion_config_for(self, ablation: Ablation) -> DiffusionConfig:
        config = self.run.diffusion_config()
        if ablation is Ablation.GEO:
            return replace(config, delta=0.0)
        return config

    def _rng(self, stream: int) -> np.random.Generator:
        return np.random.default_rng([self.run.seed, stream])

    def _track(self, sequence, description: str):
        return track(sequence, description=description, disable=not self.show_progress)

    # -- data --------------------------------------------------------------------
    def prepare(
        self,
        input_path: Path,
        fmt: InputFormat | str = InputFormat.TSV,
        noise: bool = False,
        natural_noise: bool = False,
    ) -> InteractionDataset:
        run = self.run
        records = load_interactions(input_path, fmt)
        pairs = binarize(records, run.rating_threshold, keep_natural_noise=natural_noise)
        spec = SplitSpec(
            ratios=(1.0 - run.val_ratio - run.test_ratio, run.val_ratio, run.test_ratio),
            seed=run.seed,
            min_interactions=run.min_interactions,
        )
        dataset = split(pairs, spec)
        if noise:
            dataset = inject_noise(dataset, self._rng(99))
        self.store.write_dataset(dataset, records.user_ids[dataset.user_index], records.item_ids)
        return dataset

    def load_dataset(self) -> InteractionDataset:
        return self.store.read_dataset()

    # -- stage 1 -----------------------------------------------------------------
    def _validate(self, dataset: InteractionDataset, model: HdrmModel) -> RankingResult:
        return evaluate(
            dataset,
            model.score_fn(self.loss_config),
            split="val",
            ks=(VALIDATION_K,),
            threads=self.run.threads,
        )

    def _log_epoch(self, stage: str, epoch: int, loss: float, result: RankingResult, persist: bool) -> None:
        record = {
            "stage": stage,
            "epoch": epoch,
            "loss": loss,
            "recall@20": result.means.get(f"recall@{VALIDATION_K}", 0.0),
            "ndcg@20": result.means.get(f"ndcg@{VALIDATION_K}", 0.0),
        }
        logger.info(
            f"{stage} epoch {epoch}: loss {loss:.5f}, "
            f"val recall@20 {record['recall@20']:.4f}, ndcg@20 {record['ndcg@20']:.4f}"
        )
        if persist:
            self.store.append_train_log(record)

    def _abort(self, stage: str, arrays: dict[str, np.ndarray], epoch: int) -> TrainingDivergedError:
        self.store.save_checkpoint("aborted", arrays)
        logger.error(f"{stage} diverged in epoch {epoch}; state saved to aborted.npz")
        return TrainingDivergedError(f"{stage} loss became non-finite in epoch {epoch}")

    def _batches(self, dataset: InteractionDataset, rng: np.random.Generator):
        order = rng.permutation(len(dataset.train))
        for start in range(0, len(order), self.run.batch_size):
            batch = dataset.train[order[start : start + self.run.batch_size]]
            users, pos = batch[:, 0], batch[:, 1]
            yield users, pos, sample_negatives(dataset, users, rng)

    def train_stage1(
        self,
        dataset: InteractionDataset,
        ablation: Ablation = Ablation.NONE,
        persist: bool = True,
    ) -> EmbeddingTable:
        """Pretrain the embedding table with the margin ranking loss."""
        run = self.run
        encoder = run.encoder_config()
        manifold = self.manifold_for(ablation)
        kernel = OriginDistance.for_manifold(manifold)
        propagation = GraphPropagation.from_dataset(dataset)
        table = init_embeddings(encoder, dataset.num_users, dataset.num_items, run.seed)
        state = OptimizerState.for_params(table.params(), lr=run.lr, weight_decay=run.weight_decay)
        rng = self._rng(1)
        model = HdrmModel(table, propagation, encoder, manifold)
        if persist:
            self.store.reset_train_log("stage1")

        best_recall, best_table, best_epoch, stale = -1.0, table.copy(), 0, 0
        for epoch in self._track(range(1, run.epochs_stage1 + 1), "Stage 1"):
            total, count = 0.0, 0
            for users, pos, neg in self._batches(dataset, rng):
                out = encode(table, propagation, encoder, manifold)
                grads = ranking_loss_and_grads(
                    kernel, out.z_user[users], out.z_item[pos], out.z_item[neg], self.loss_config
                )
                if not np.isfinite(grads.loss):
                    raise self._abort("stage1", table.to_arrays(), epoch)
                total += grads.loss * len(users)
                count += len(users)

                grad_user = np.zeros_like(out.z_user)
                grad_item = np.zeros_like(out.z_item)
                np.add.at(grad_user, users, grads.grad_user)
                np.add.at(grad_item, pos, grads.grad_pos)
                np.add.at(grad_item, neg, grads.grad_neg)
                table.user_grad, table.item_grad = encode_backward(
                    grad_user, grad_item, propagation, encoder
                )
                adam_step(table.params(), table.grads(), state)

            result = self._validate(dataset, model)
            self._log_epoch("stage1", epoch, total / max(count, 1), result, persist)
            recall = result.means.get(f"recall@{VALIDATION_K}", 0.0)
            if recall > best_recall:
                best_recall, best_table, best_epoch, stale = recall, table.copy(), epoch, 0
            else:
                stale += 1
                if stale >= run.patience:
                    logger.info(f"Stage 1 stopped early after epoch {epoch}")
                    break

        logger.info(f"Stage 1 best epoch {best_epoch} (val recall@20 {best_recall:.4f})")
        if persist:
            self.store.save_checkpoint(
                "stage1",
                {
                    **best_table.to_arrays(),
                    **state.to_arrays("stage1.adam"),
                    "meta.ablation": np.array(str(ablation)),
                    "meta.best_epoch": np.array(best_epoch),
                },
            )
        return best_table

    # -- clustering ----------------------------------------------------------------
    def cluster(
        self,
        dataset: InteractionDataset,
        table: EmbeddingTable,
        ablation: Ablation = Ablation.NONE,
        persist: bool = True,
    ) -> ClusterState:
        """Cluster users and items once on the stage-1 embeddings and derive noise signs."""
        run = self.run
        manifold = self.manifold_for(ablation)
        out = encode(table, GraphPropagation.from_dataset(dataset), run.encoder_config(), manifold)
        if manifold is None:
            users = _euclidean_clusters(out.z_user, run.user_clusters, run.seed)
            items = _euclidean_clusters(out.z_item, run.item_clusters, run.seed + 1)
            signs = DirectionalNoise(
                np.sign(users.center_of(np.arange(dataset.num_users))),
                np.sign(items.center_of(np.arange(dataset.num_items))),
            )
        else:
            users = kmeans(
                out.e_user,
                _cluster_count(run.user_clusters, out.e_user, "user"),
                manifold,
                run.seed,
                run.cluster_max_iter,
                run.cluster_tol,
            )
            items = kmeans(
                out.e_item,
                _cluster_count(run.item_clusters, out.e_item, "item"),
                manifold,
                run.seed + 1,
                run.cluster_max_iter,
                run.cluster_tol,
            )
            signs = DirectionalNoise(
                direction_signs(users, manifold, dataset.num_users),
                direction_signs(items, manifold, dataset.num_items),
            )
        if ablation is Ablation.GEO:
            signs = DirectionalNoise.unconstrained(dataset.num_users, dataset.num_items, run.dim)
        clusters = ClusterState(users, items, signs)
        if persist:
            self.store.save_checkpoint("clusters", clusters.to_arrays())
        return clusters

    # -- stage 2 ---------------------------------------------------------------------
    def new_diffusion(self, ablation: Ablation) -> DiffusionState:
        run = self.run
        config = self.diffusion_config_for(ablation)
        return DiffusionState(
            net_user=DenoiserNet(run.dim, run.hidden_dim, run.time_embed_dim, "theta", run.seed + 2),
            net_item=DenoiserNet(run.dim, run.hidden_dim, run.time_embed_dim, "psi", run.seed + 3),
            schedule=NoiseSchedule.linear(config),
            config=config,
        )

    def train_stage2(
        self,
        dataset: InteractionDataset,
        table: EmbeddingTable,
        clusters: ClusterState,
        ablation: Ablation = Ablation.NONE,
        persist: bool = True,
    ) -> HdrmModel:
        """Train the user/item denoisers; optionally fine-tune a copy of the table."""
        run = self.run
        encoder = run.encoder_config()
        manifold = self.manifold_for(ablation)
        propagation = GraphPropagation.from_dataset(dataset)
        table = table.copy()
        diffusion = self.new_diffusion(ablation)
        model = HdrmModel(table, propagation, encoder, manifold, clusters, diffusion)
        kernel = OriginDistance.for_manifold(manifold)
        hyper = {"lr": run.lr, "weight_decay": run.weight_decay}
        net_states = {
            net.tag: OptimizerState.for_params(net.param_list(), **hyper)
            for net in (diffusion.net_user, diffusion.net_item)
        }
        table_state = OptimizerState.for_params(table.params(), **hyper)
        rng = self._rng(2)
        if persist:
            self.store.reset_train_log("stage2")

        best_recall, best_epoch, stale = -1.0, 0, 0
        best_table, best_diffusion = table.copy(), diffusion.copy()
        for epoch in self._track(range(1, run.epochs_stage2 + 1), "Stage 2"):
            total, count = 0.0, 0
            out = encode(table, propagation, encoder, manifold)
            for users, pos, neg in self._batches(dataset, rng):
                if run.fine_tune:
                    out = encode(table, propagation, encoder, manifold)
                loss, grad_user, grad_item = self._stage2_batch(
                    model, kernel, out, users, pos, neg, rng, net_states
                )
                if not np.isfinite(loss):
                    raise self._abort("stage2", {**table.to_arrays(), **diffusion.to_arrays()}, epoch)
                total += loss * len(users)
                count += len(users)
                if run.fine_tune:
                    table.user_grad, table.item_grad = encode_backward(
                        grad_user, grad_item, propagation, encoder
                    )
                    adam_step(table.params(), table.grads(), table_state)

            result = self._validate(dataset, model)
            self._log_epoch("stage2", epoch, total / max(count, 1), result, persist)
            recall = result.means.get(f"recall@{VALIDATION_K}", 0.0)
            if recall > best_recall:
                best_recall, best_epoch, stale = recall, epoch, 0
                best_table, best_diffusion = table.copy(), diffusion.copy()
            else:
                stale += 1
                if stale >= run.patience:
                    logger.info(f"Stage 2 stopped early after epoch {epoch}")
                    break

        logger.info(f"Stage 2 best epoch {best_epoch} (val recall@20 {best_recall:.4f})")
        best = HdrmModel(best_table, propagation, encoder, manifold, clusters, best_diffusion)
        if persist:
            self.store.save_checkpoint(
                "stage2",
                {
                    **best_table.to_arrays(),
                    **best_diffusion.to_arrays(),
                    "meta.ablation": np.array(str(ablation)),
                    "meta.best_epoch": np.array(best_epoch),
                },
            )
        return best

    def _stage2_batch(
        self,
        model: HdrmModel,
        kernel: OriginDistance,
        out: EncoderOutput,
        users: np.ndarray,
        pos: np.ndarray,
        neg: np.ndarray,
        rng: np.random.Generator,
        net_states: dict[str, OptimizerState],
    ) -> tuple[float, np.ndarray | None, np.ndarray | None]:
        """One weighted total-loss step; returns the loss and chart gradients for the table.

        Nets see only the reconstruction gradient. The ranking term is scored on
        the denoised states and passed straight through to the clean states.
        """
        run = self.run
        loss_cfg = self.loss_config
        diffusion = model.diffusion
        signs = model.clusters.signs
        n = len(users)
        t = sample_timesteps(n, diffusion.config.steps, rng)
        items = np.concatenate([pos, neg])
        t_items = np.concatenate([t, t])

        z_user0 = out.z_user[users]
        z_items0 = out.z_item[items]
        z_user_t, trace_user = forward_chain(
            z_user0, t, diffusion.config, diffusion.schedule, signs.sign_user[users], rng, keep_trace=True
        )
        z_items_t, trace_items = forward_chain(
            z_items0, t_items, diffusion.config, diffusion.schedule, signs.sign_item[items], rng, keep_trace=True
        )
        user_hat = diffusion.net_user.forward(z_user_t, t)
        items_hat = diffusion.net_item.forward(z_items_t, t_items)
        pos_hat, neg_hat = items_hat[:n], items_hat[n:]

        weights = reweight(fermi_dirac(kernel.sq_dist(user_hat, pos_hat), loss_cfg), loss_cfg.gamma)
        ranking = ranking_loss_and_grads(
            kernel, user_hat, pos_hat, neg_hat, loss_cfg, weights=weights, scale=loss_cfg.alpha
        )
        recon = joint_recon_loss(z_user0, user_hat, z_items0[:n], pos_hat)
        loss = float(np.mean(weights * total_loss(ranking.per_triplet, recon, loss_cfg.alpha)))

        coef = (weights * (1.0 - loss_cfg.alpha) / n)[:, None]
        grad_user_hat = coef * (user_hat - z_user0)
        grad_items_hat = np.concatenate([coef * (pos_hat - z_items0[:n]), np.zeros_like(neg_hat)])
        diffusion.net_user.zero_grad()
        grad_user_t = diffusion.net_user.backward(grad_user_hat)
        diffusion.net_item.zero_grad()
        grad_items_t = diffusion.net_item.backward(grad_items_hat)
        for net in (diffusion.net_user, diffusion.net_item):
            adam_step(net.param_list(), net.grad_list(), net_states[net.tag])

        if not run.fine_tune:
            return loss, None, None
        grad_user0 = (
            -grad_user_hat + forward_chain_backward(trace_user, grad_user_t) + ranking.grad_user
        )
        grad_items0 = (
            -grad_items_hat
            + forward_chain_backward(trace_items, grad_items_t)
            + np.concatenate([ranking.grad_pos, ranking.grad_neg])
        )
        grad_user = np.zeros_like(out.z_user)
        grad_item = np.zeros_like(out.z_item)
        np.add.at(grad_user, users, grad_user0)
        np.add.at(grad_item, items, grad_items0)
        return loss, grad_user, grad_item

    # -- orchestration ---------------------------------------------------------------
    def train(self, stage: Stage = Stage.ALL, ablation: Ablation = Ablation.NONE) -> HdrmModel:
        """Run stage 1, clustering and stage 2 as selected; checkpoints land in the store."""
        dataset = self.load_dataset()
        if stage in (Stage.ONE, Stage.ALL):
            table = self.train_stage1(dataset, ablation)
            # a new stage-1 table invalidates any earlier denoisers
            self.store.remove_checkpoint("stage2")
        else:
            table = self._load_stage1(ablation)
        clusters = self.cluster(dataset, table, ablation)
        if stage is Stage.ONE or ablation is Ablation.DIFF:
            if ablation is Ablation.DIFF:
                logger.info("Diffusion stage disabled; ranking on stage-1 embeddings")
                self.store.remove_checkpoint("stage2")
            return self._stage1_model(dataset, table, ablation, clusters)
        return self.train_stage2(dataset, table, clusters, ablation)

    def _stage1_model(self, dataset, table, ablation, clusters=None) -> HdrmModel:
        return HdrmModel(
            table,
            GraphPropagation.from_dataset(dataset),
            self.run.encoder_config(),
            self.manifold_for(ablation),
            clusters,
        )

    def _load_stage1(self, ablation: Ablation) -> EmbeddingTable:
        arrays = self.store.load_checkpoint("stage1")
        trained = Ablation(str(arrays["meta.ablation"]))
        if (trained is Ablation.HYP) != (ablation is Ablation.HYP):
            raise ConfigError(
                f"stage-1 checkpoint was trained with ablation '{trained}', "
                f"cannot continue with '{ablation}'"
            )
        return EmbeddingTable.from_arrays(arrays)

    def load_model(self, dataset: InteractionDataset) -> HdrmModel:
        """Latest trained model: stage 2 when present, else stage 1."""
        if self.store.has_checkpoint("stage2"):
            arrays = self.store.load_checkpoint("stage2")
            ablation = Ablation(str(arrays["meta.ablation"]))
            clusters = ClusterState.from_arrays(self.store.load_checkpoint("clusters"))
            return HdrmModel(
                EmbeddingTable.from_arrays(arrays),
                GraphPropagation.from_dataset(dataset),
                self.run.encoder_config(),
                self.manifold_for(ablation),
                clusters,
                DiffusionState.from_arrays(arrays),
            )
        if not self.store.has_checkpoint("stage1"):
            raise MissingArtifactError("no trained checkpoint found; run `hdrm train` first")
        arrays = self.store.load_checkpoint("stage1")
        ablation = Ablation(str(arrays["meta.ablation"]))
        clusters = None
        if self.store.has_checkpoint("clusters"):
            clusters = ClusterState.from_arrays(self.store.load_checkpoint("clusters"))
        return HdrmModel(
            EmbeddingTable.from_arrays(arrays),
            GraphPropagation.from_dataset(dataset),
            self.run.encoder_config(),
            self.manifold_for(ablation),
            clusters,
        )

    # -- evaluation ------------------------------------------------------------------
    def evaluate_model(self, dataset: InteractionDataset, model: HdrmModel, split_name: str = "test") -> RankingResult:
        return evaluate(
            dataset, model.score_fn(self.loss_config), split=split_name, threads=self.run.threads
        )

    def bpr_config(self) -> BprConfig:
        run = self.run
        return BprConfig(
            dim=run.dim,
            epochs=run.bpr_epochs,
            batch_size=run.batch_size,
            lr=run.lr,
            init_std=run.init_std,
            seed=run.seed,
        )

    def evaluate(self, baselines: bool = False) -> dict[str, dict[str, float | int]]:
        dataset = self.load_dataset()
        documents = {"hdrm": self.evaluate_model(dataset, self.load_model(dataset)).to_document()}
        if baselines:
            documents["popularity"] = popularity_baseline(dataset).to_document()
            documents["mf-bpr"] = mf_bpr_baseline(dataset, self.bpr_config()).to_document()
        return documents

    def sweep(self, kind: SweepKind, values: Sequence[float] | None = None) -> pd.DataFrame:
        """Retrain per grid value and evaluate on the test split; one row per value."""
        dataset = self.load_dataset()
        rows = []
        if kind is SweepKind.MARGIN:
            for margin in self._track(list(values or MARGIN_GRID), "Margin sweep"):
                service = self._with_run(self.run.with_overrides(margin=float(margin)))
                table = service.train_stage1(dataset, persist=False)
                clusters = service.cluster(dataset, table, persist=False)
                model = service.train_stage2(dataset, table, clusters, persist=False)
                rows.append({"margin": float(margin), **service.evaluate_model(dataset, model).to_document()})
        else:
            table = self._load_stage1(Ablation.NONE)
            clusters = ClusterState.from_arrays(self.store.load_checkpoint("clusters"))
            for steps in self._track([int(v) for v in (values or STEPS_GRID)], "Steps sweep"):
                run = self.run.with_overrides(
                    steps=steps, inference_steps=min(self.run.inference_steps, steps)
                )
                service = self._with_run(run)
                model = service.train_stage2(dataset, table, clusters, persist=False)
                rows.append({"steps": steps, **service.evaluate_model(dataset, model).to_document()})
        return pd.DataFrame(rows)

    def _with_run(self, run: RunConfig) -> "TrainingService":
        return TrainingService(self.config, self.store, run, show_progress=False)

    # -- export ----------------------------------------------------------------------
    def export_frame(self) -> pd.DataFrame:
        """One row per user and item: ids, cluster, popularity label and coordinates."""
        dataset = self.load_dataset()
        model = self.load_model(dataset)
        out = model.embeddings()
        clusters = model.clusters
        quantile = self.run.popularity_quantile
        user_ids = self.store.read_id_map("user")["original_id"].to_numpy()
        item_ids = self.store.read_id_map("item")["original_id"].to_numpy()

        frames = []
        for node_type, z, e, degree, original, assignments in (
            ("user", out.z_user, out.e_user, dataset.user_degree, user_ids,
             clusters.users.assignments if clusters else None),
            ("item", out.z_item, out.e_item, dataset.item_degree, item_ids,
             clusters.items.assignments if clusters else None),
        ):
            frame = pd.DataFrame(
                {
                    "node_type": node_type,
                    "node_id": np.arange(len(z)),
                    "original_id": original,
                    "cluster": assignments if assignments is not None else -1,
                    "popularity": popularity_labels(degree, quantile),
                }
            )
            columns = {f"tangent_{k}": z[:, k] for k in range(z.shape[1])}
            columns |= {f"manifold_{k}": e[:, k] for k in range(e.shape[1])}
            if isinstance(model.manifold, Lorentz):
                ball = model.manifold.to_poincare(e)
                columns |= {f"poincare_{k}": ball[:, k] for k in range(ball.shape[1])}
            frames.append(pd.concat([frame, pd.DataFrame(columns)], axis=1))
        return pd.concat(frames, ignore_index=True)


def popularity_labels(degree: np.ndarray, quantile: float) -> np.ndarray:
    """'head' for the top (1 - quantile) share of nodes by degree, 'tail' for the rest.

    Ties are broken by ascending id so the split is exact.
    """
    degree = np.asarray(degree)
    n_head = int(round(len(degree) * (1.0 - quantile)))
    order = np.argsort(-degree, kind="stable")
    labels = np.full(len(degree), "tail", dtype=object)
    labels[order[:n_head]] = "head"
    return labels


def _cluster_count(requested: int, points: np.ndarray, kind: str) -> int:
    distinct = len(np.unique(points, axis=0))
    if requested > distinct:
        logger.warning(f"Only {distinct} distinct {kind} embeddings; using {distinct} clusters")
        return distinct
    return requested


def _euclidean_clusters(points: np.ndarray, requested: int, seed: int) -> ClusterModel:
    """Plain k-means in the Euclidean chart, for the ``hyp`` ablation."""
    c = _cluster_count(requested, points, "chart")
    centers, labels = kmeans2(points, c, minit="++", rng=np.random.default_rng(seed))
    objective = float(np.sum((points - centers[labels]) ** 2))
    return ClusterModel(centers, labels.astype(np.int64), objective, [objective])
