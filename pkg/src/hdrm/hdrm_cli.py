import sys
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Annotated

import typer
from loguru import logger
from rich.console import Console

from .common.artifact_store import ArtifactStore
from .common.config_service import ConfigService
from .common.errors import ConfigError, HdrmError
from .common.run_config import RunConfig
from .data.interaction_parser import InputFormat
from .evaluation.metrics import metrics_table, render_table
from .training_service import Ablation, Stage, SweepKind, TrainingService

app = typer.Typer(no_args_is_help=True)
console = Console()

LOG_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} - {message}"


@contextmanager
def _exit_on_error() -> Iterator[None]:
    """Translate library failures into the documented exit codes."""
    try:
        yield
    except HdrmError as exc:
        logger.error(str(exc))
        raise typer.Exit(exc.exit_code) from exc


def _service(ctx: typer.Context) -> TrainingService:
    return ctx.obj["service"]


@app.callback()
def main(
    ctx: typer.Context,
    wrk_dir: Annotated[
        Path, typer.Option(help="Workspace directory, default is current directory")
    ] = Path.cwd(),
    config: Annotated[
        Path | None, typer.Option(help="Run config JSON (default: <wrk-dir>/config.json)")
    ] = None,
    log_level: Annotated[str, typer.Option(help="Log level")] = "INFO",
    log_file: Annotated[
        Path | None,
        typer.Option(help="Log to file instead of stderr (enables rotation)"),
    ] = None,
    threads: Annotated[
        int | None, typer.Option(min=1, help="Cap on worker threads (overrides the config)")
    ] = None,
):
    """
    HDRM - hyperbolic directional diffusion recommender.
    Use --wrk-dir to pick the workspace, --config to point at a run config.
    """
    logger.remove()
    if log_file:
        logger.add(
            log_file,
            level=log_level,
            rotation="10 MB",
            retention="30 days",
            compression="gz",
            enqueue=True,
            format=LOG_FORMAT,
        )
    else:
        logger.add(sys.stderr, level=log_level)

    service_config = ConfigService(wrk_dir, config)
    with _exit_on_error():
        run = service_config.run_config
        if threads is not None:
            run = service_config.use_run_config(run.with_overrides(threads=threads))
    ctx.obj = {
        "config": service_config,
        "service": TrainingService(
            service_config,
            ArtifactStore(service_config),
            run,
            show_progress=log_level.upper() == "INFO",
        ),
    }


@app.command("init-config")
def init_config(
    ctx: typer.Context,
    force: Annotated[bool, typer.Option("--force", help="Overwrite an existing file")] = False,
):
    """Write the default run config document."""
    config: ConfigService = ctx.obj["config"]
    with _exit_on_error():
        if config.config_path.exists() and not force:
            raise ConfigError(f"{config.config_path} exists; use --force to overwrite")
        path = config.save_run_config(RunConfig())
    logger.info(f"Wrote default config to {path}")


@app.command()
def prepare(
    ctx: typer.Context,
    input_path: Annotated[Path, typer.Argument(help="Interaction log: user, item, rating[, timestamp]")],
    fmt: Annotated[InputFormat, typer.Option("--format", help="Input field separator")] = InputFormat.TSV,
    noise: Annotated[
        bool, typer.Option("--noise", help="Inject natural noise plus as many random pairs into train")
    ] = False,
    natural_noise: Annotated[
        bool, typer.Option("--natural-noise", help="Keep low-rated pairs as positives")
    ] = False,
):
    """Parse, binarize and split an interaction log into the workspace."""
    service = _service(ctx)
    with _exit_on_error():
        if not input_path.is_file():
            raise ConfigError(f"input file not found: {input_path}")
        dataset = service.prepare(input_path, fmt, noise=noise, natural_noise=natural_noise)
    console.print(metrics_table({"dataset": dataset.stats()}, title="Prepared dataset"))


@app.command()
def train(
    ctx: typer.Context,
    stage: Annotated[Stage, typer.Option(help="Which stage(s) to run")] = Stage.ALL,
    ablate: Annotated[
        Ablation | None,
        typer.Option(help="geo: no sign/stride constraints; diff: skip stage 2; hyp: Euclidean chart"),
    ] = None,
):
    """Two-stage training: encoder pretraining, clustering, then the denoisers."""
    service = _service(ctx)
    with _exit_on_error():
        service.train(stage, ablate or Ablation.NONE)
    logger.info(f"Training finished; checkpoints in {service.config.checkpoint_dir}")


def _parse_values(raw: str | None) -> list[float] | None:
    if raw is None:
        return None
    try:
        return [float(part) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"--values must be comma-separated numbers, got {raw!r}") from exc


@app.command("eval")
def eval_command(
    ctx: typer.Context,
    sweep: Annotated[
        SweepKind | None, typer.Option(help="Retrain over a margin or diffusion-steps grid")
    ] = None,
    values: Annotated[
        str | None, typer.Option(help="Comma-separated grid values for --sweep")
    ] = None,
    baselines: Annotated[
        bool, typer.Option("--baselines", help="Also evaluate popularity and MF-BPR")
    ] = False,
):
    """Full-ranking Recall/NDCG at 10 and 20 on the test split."""
    service = _service(ctx)
    store = service.store
    with _exit_on_error():
        if sweep is not None:
            frame = service.sweep(sweep, _parse_values(values))
            records = frame.to_dict(orient="records")
            name = f"sweep_{sweep}"
            store.write_metrics(name, {"sweep": str(sweep), "rows": records})
            labels = {f"{sweep}={row[str(sweep)]:g}": row for row in records}
            table = metrics_table(labels, title=f"{sweep} sweep")
        else:
            documents = service.evaluate(baselines=baselines)
            name = "eval"
            store.write_metrics(name, documents["hdrm"])
            if baselines:
                store.write_metrics("baselines", {k: v for k, v in documents.items() if k != "hdrm"})
            table = metrics_table(documents)
        store.write_table(name, render_table(table))
    console.print(table)


@app.command()
def export(
    ctx: typer.Context,
    fmt: Annotated[str, typer.Option("--format", help="csv or parquet")] = "csv",
):
    """Write tangent/manifold coordinates, cluster ids and popularity labels."""
    service = _service(ctx)
    with _exit_on_error():
        if fmt not in ("csv", "parquet"):
            raise ConfigError(f"unsupported export format {fmt!r}")
        path = service.store.write_frame(service.export_frame(), "embeddings", fmt)
    logger.info(f"Exported embeddings to {path}")


if __name__ == "__main__":
    app()
