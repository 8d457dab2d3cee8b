"""Command-line surface: data generation, ingest, pretraining, simulated
studies, log evaluation, report export, and the HTTP service."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from .acquisition import AcquisitionConfig
from .embed import (
    ArchSpec,
    EmbeddingModel,
    OptConfig,
    SceneDataset,
    load_checkpoint,
    pretrain,
    save_checkpoint,
)
from .errors import ScenesimError
from .ingest import ExtractConfig, extract_scenes, read_tracking_csv
from .oracles import CohortConfig, LatentSpace, OracleProfile, make_cohort
from .ordinal import TsteConfig
from .scenes import load_scene_archive, save_scene_archive
from .session import PHASES, SessionLog, StudyConfig
from .study import report_from_logs, run_simulated_study
from .synth import DESK_PROFILE, SynthProfile, synth_generate

logger = logging.getLogger(__name__)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(verbose):
    """Similarity-learning study toolkit for football tracking scenes."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _fail(err: ScenesimError) -> None:
    click.echo(f"error: {err}", err=True)
    sys.exit(1)


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n", "n_scenes", type=int, required=True, help="Number of scenes.")
@click.option("--out", type=click.Path(), required=True)
@click.option("--desk", is_flag=True, help="Small 5v5 low-rate profile.")
def synth(seed, n_scenes, out, desk):
    """Generate a deterministic synthetic scene archive."""
    profile = DESK_PROFILE if desk else SynthProfile()
    try:
        scenes = synth_generate(seed=seed, n_scenes=n_scenes, profile=profile)
        save_scene_archive(scenes, out)
    except ScenesimError as e:
        _fail(e)
    click.echo(f"wrote {n_scenes} scenes to {out}")


@main.command()
@click.option("--csv", "csv_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--window", type=float, default=5.0, show_default=True, help="Seconds.")
@click.option("--overlap", type=float, default=0.5, show_default=True)
def ingest(csv_path, out, window, overlap):
    """Cut a tracking CSV into normalized fixed-length scenes."""
    try:
        table = read_tracking_csv(csv_path)
        scenes = extract_scenes(table, window_s=window, overlap=overlap, cfg=ExtractConfig())
        save_scene_archive(scenes, out)
    except ScenesimError as e:
        _fail(e)
    click.echo(f"extracted {len(scenes)} scenes to {out}")


@main.command("pretrain")
@click.option("--dataset", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--pairs", type=int, default=2000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--width", type=int, default=32, show_default=True)
@click.option("--embed-dim", type=int, default=64, show_default=True)
@click.option("--epochs", type=int, default=10, show_default=True)
def pretrain_cmd(dataset, out, pairs, seed, width, embed_dim, epochs):
    """Siamese-pretrain an embedding net against assignment distances."""
    try:
        scenes = load_scene_archive(dataset)
        arch = ArchSpec(
            in_channels=2 * scenes[0].n_agents, width=width, embed_dim=embed_dim
        )
        model = EmbeddingModel(arch, seed=seed)
        pretrain(model, scenes, pair_budget=pairs, opt_cfg=OptConfig(epochs=epochs, seed=seed))
        save_checkpoint(model, out)
    except ScenesimError as e:
        _fail(e)
    click.echo(f"checkpoint written to {out}")


def _study_options(f):
    for opt in reversed(
        [
            click.option("--tuple-size", type=int, default=9, show_default=True),
            click.option("--warmup-quota", type=int, default=5, show_default=True),
            click.option("--repeat-quota", type=int, default=20, show_default=True),
            click.option("--train-quota", type=int, default=20, show_default=True),
            click.option("--test-quota", type=int, default=10, show_default=True),
            click.option("--phases", type=str, default=",".join(PHASES), show_default=True),
            click.option("--epochs", type=int, default=3, show_default=True),
            click.option("--d-ord", type=int, default=4, show_default=True),
            click.option("--bootstrap", type=int, default=4, show_default=True),
        ]
    ):
        f = opt(f)
    return f


def _build_study_cfg(seed, tuple_size, warmup_quota, repeat_quota, train_quota,
                     test_quota, phases, epochs, d_ord, bootstrap) -> StudyConfig:
    return StudyConfig(
        tuple_size=tuple_size,
        warmup_quota=warmup_quota,
        repeat_quota=repeat_quota,
        train_quota=train_quota,
        test_quota=test_quota,
        seed=seed,
        phases=tuple(p.strip() for p in phases.split(",") if p.strip()),
        opt=OptConfig(epochs=epochs, seed=seed),
        tste=TsteConfig(d_ord=d_ord, bootstrap=bootstrap, max_iter=100, restarts=1, seed=seed),
        acq=AcquisitionConfig(n_candidates=40, n_permutations=10, mc_passes=10),
    )


@main.command()
@click.option("--dataset", type=click.Path(exists=True), required=True)
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--out-dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option(
    "--cohort",
    type=str,
    default="default18",
    show_default=True,
    help="'default18' or a JSON file of oracle profile objects.",
)
@_study_options
def simulate(dataset, checkpoint, out_dir, seed, cohort, **study_kwargs):
    """Run the full study protocol with simulated annotators."""
    try:
        scenes = load_scene_archive(dataset)
        ds = SceneDataset(scenes)
        model = load_checkpoint(checkpoint)
        space = LatentSpace(ds, seed=seed)
        if cohort == "default18":
            profiles = make_cohort(space, CohortConfig(seed=seed))
        else:
            spec = json.loads(Path(cohort).read_text())
            profiles = [OracleProfile(**p) for p in spec]
        cfg = _build_study_cfg(seed, **study_kwargs)
        _, report = run_simulated_study(
            ds, model, profiles, cfg, seed=seed, space=space, out_dir=out_dir
        )
    except ScenesimError as e:
        _fail(e)
    click.echo(f"report for {len(profiles)} annotators written to {out_dir}")


@main.command()
@click.option("--logs-dir", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), default=None, help="Report JSON path.")
def evaluate(logs_dir, out):
    """Recompute the metrics report from stored session logs."""
    try:
        paths = sorted(Path(logs_dir).glob("session-*.jsonl"))
        logs = [SessionLog.load(p) for p in paths]
        report = report_from_logs(logs)
    except ScenesimError as e:
        _fail(e)
    text = report.to_json()
    if out:
        Path(out).write_text(text)
        click.echo(f"report written to {out}")
    else:
        click.echo(text)


@main.command()
@click.option("--logs-dir", type=click.Path(exists=True), required=True)
@click.option("--out-dir", type=click.Path(), required=True)
def export(logs_dir, out_dir):
    """Export report tables (JSON + CSV) from stored session logs."""
    try:
        paths = sorted(Path(logs_dir).glob("session-*.jsonl"))
        logs = [SessionLog.load(p) for p in paths]
        report = report_from_logs(logs)
    except ScenesimError as e:
        _fail(e)
    outp = Path(out_dir)
    outp.mkdir(parents=True, exist_ok=True)
    (outp / "report.json").write_text(report.to_json())
    (outp / "report.csv").write_text(report.to_csv())
    click.echo(f"report tables written to {out_dir}")


@main.command()
@click.option("--dataset", type=click.Path(exists=True), required=True)
@click.option("--checkpoint", type=click.Path(exists=True), default=None)
@click.option("--storage-dir", type=click.Path(), default="sessions", show_default=True)
@click.option("--host", type=str, default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@_study_options
def serve(dataset, checkpoint, storage_dir, host, port, seed, **study_kwargs):
    """Launch the HTTP annotation service."""
    import uvicorn

    from .server import ServiceConfig, create_app

    try:
        cfg = ServiceConfig(
            dataset_path=dataset,
            checkpoint_path=checkpoint,
            storage_dir=storage_dir,
            study=_build_study_cfg(seed, **study_kwargs),
            host=host,
            port=port,
        )
        app = create_app(cfg)
    except ScenesimError as e:
        _fail(e)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
