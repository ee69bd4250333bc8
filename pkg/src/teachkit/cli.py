"""Operator entry points: simulate, prepare, serve, report."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import click
import numpy as np

from . import reporting
from .dataset import (
    FeatureDataset,
    fit_pca,
    load_manifest,
    load_pca,
    save_pca,
)
from .propagation import build_similarity
from .session import PreparedDataset
from .simulator import (
    DEFAULT_BENCHMARK,
    DEFAULT_GUESS_NOISE,
    DEFAULT_STUDENT_GAMMA_SCALE,
    DEFAULT_TEACHER_GAMMA,
    ExperimentPlan,
    StudentKind,
    StudentSpec,
    learning_curve,
    make_gaussian_mixture,
    run_experiment,
)
from .strategies import StrategyKind

DEFAULT_ADDRESS = "127.0.0.1:8000"
ADDRESS_ENV_VAR = "TEACHKIT_ADDR"


def parse_seed_spec(spec: str) -> list[int]:
    """Parse trial indices: inclusive ranges `a..b` and singletons, comma-joined."""
    indices: list[int] = []
    for chunk in spec.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if ".." in chunk:
            low, high = chunk.split("..", 1)
            lo, hi = int(low), int(high)
            if hi < lo:
                raise click.UsageError(f"empty seed range {chunk!r}")
            indices.extend(range(lo, hi + 1))
        else:
            indices.append(int(chunk))
    if not indices:
        raise click.UsageError(f"no trial indices in {spec!r}")
    return indices


def parse_strategies(spec: str) -> list[StrategyKind]:
    names = [s.strip() for s in spec.split(",") if s.strip()]
    if not names:
        raise click.UsageError("strategy list is empty")
    try:
        return [StrategyKind.parse(name) for name in names]
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None


def _load_prepared(
    manifest_path: str | None,
    gamma: float | None,
    pca_dim: int | None,
    synthetic_seed: int,
    sparsify_top_k: int | None = None,
) -> tuple[PreparedDataset, dict]:
    """Build the prepared dataset from a manifest or the synthetic benchmark."""
    if manifest_path is not None:
        manifest = load_manifest(manifest_path)
        base_dir = Path(manifest_path).parent
        data = FeatureDataset.from_manifest(manifest, base_dir)
        effective_gamma = gamma if gamma is not None else 0.025
        source = {"manifest": str(manifest_path)}
    else:
        data = make_gaussian_mixture(seed=synthetic_seed, name="benchmark", **DEFAULT_BENCHMARK)
        effective_gamma = gamma if gamma is not None else DEFAULT_TEACHER_GAMMA
        source = {"synthetic": dict(DEFAULT_BENCHMARK, seed=synthetic_seed)}
    prepared = PreparedDataset.prepare(
        data, gamma=effective_gamma, pca_dim=pca_dim, sparsify_top_k=sparsify_top_k
    )
    source["gamma"] = effective_gamma
    source["pca_dim"] = pca_dim
    if sparsify_top_k is not None:
        source["sparsify_top_k"] = sparsify_top_k
    return prepared, source


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"cannot read config file {path}: {exc}") from None


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON config file with default option values.")
@click.pass_context
def main(ctx, config_path):
    """Interactive machine-teaching toolkit."""
    ctx.obj = _load_config_file(config_path)


@main.command()
@click.option("--dataset", "manifest_path", type=click.Path(exists=True), default=None,
              help="Dataset manifest; omit to use the synthetic benchmark.")
@click.option("--strategies", default="rnd,cc,wp,batch,eer", show_default=True)
@click.option("--seeds", default="0..49", show_default=True,
              help="Trial indices, e.g. 0..199 or 0..9,20.")
@click.option("--base-seed", default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), default="results", show_default=True)
@click.option("--gamma", type=float, default=None, help="Similarity length scale.")
@click.option("--pca-dim", type=int, default=None, help="PCA target dimension (manifest data).")
@click.option("--teach-rounds", type=int, default=None)
@click.option("--test-rounds", type=int, default=None)
@click.option("--student-gamma-scale", default=DEFAULT_STUDENT_GAMMA_SCALE, show_default=True,
              help="Student length scale as a multiple of the teacher's.")
@click.option("--guess-noise", default=DEFAULT_GUESS_NOISE, show_default=True)
@click.option("--memory-limit", type=int, default=None)
@click.option("--student-kind", type=click.Choice([k.value for k in StudentKind]),
              default=StudentKind.NOISY_GRF_LEARNER.value, show_default=True)
@click.option("--data-seed", default=0, show_default=True, help="Synthetic dataset seed.")
@click.option("--jobs", default=1, show_default=True)
@click.pass_context
def simulate(ctx, manifest_path, strategies, seeds, base_seed, out_dir, gamma, pca_dim,
             teach_rounds, test_rounds, student_gamma_scale, guess_noise, memory_limit,
             student_kind, data_seed, jobs):
    """Run a strategy-comparison experiment with simulated students."""
    defaults = ctx.obj or {}
    gamma = gamma if gamma is not None else defaults.get("gamma")
    pca_dim = pca_dim if pca_dim is not None else defaults.get("pca_dim")

    strategy_list = parse_strategies(strategies)
    trial_indices = parse_seed_spec(seeds)
    prepared, source = _load_prepared(
        manifest_path, gamma, pca_dim, data_seed,
        sparsify_top_k=defaults.get("sparsify_top_k"),
    )

    student = StudentSpec(
        kind=StudentKind(student_kind),
        gamma=prepared.gamma * student_gamma_scale,
        guess_noise=guess_noise,
        memory_limit=memory_limit,
    )
    plan = ExperimentPlan(
        strategies=strategy_list,
        trial_indices=trial_indices,
        student=student,
        base_seed=base_seed,
        teach_rounds=teach_rounds,
        test_rounds=test_rounds,
    )
    results = run_experiment(prepared, plan, jobs=jobs)

    resolved = {
        "source": source,
        "strategies": [s.value for s in strategy_list],
        "trial_indices": {"first": trial_indices[0], "last": trial_indices[-1],
                          "count": len(trial_indices)},
        "base_seed": base_seed,
        "teach_rounds": teach_rounds,
        "test_rounds": test_rounds,
        "student": {
            "kind": student.kind.value,
            "gamma": student.gamma,
            "guess_noise": student.guess_noise,
            "memory_limit": student.memory_limit,
        },
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reporting.write_trials_csv(results, out / "trials.csv", resolved)
    curves = {
        strategy.value: learning_curve([r for r in results if r.strategy == strategy.value])
        for strategy in strategy_list
    }
    reporting.write_curves_json(curves, out / "curves.json", resolved)
    report = reporting.compare_strategies(results)
    reporting.write_summary_json(report, out / "summary.json", resolved)
    click.echo(f"{len(results)} trials -> {out}")
    click.echo(reporting.format_summary_table(report))


def _content_hash(manifest_path: Path, params: dict) -> str:
    manifest = load_manifest(manifest_path)
    feature_path = Path(manifest.feature_file)
    if not feature_path.is_absolute():
        feature_path = manifest_path.parent / feature_path
    digest = hashlib.sha256()
    digest.update(manifest_path.read_bytes())
    digest.update(feature_path.read_bytes())
    digest.update(json.dumps(params, sort_keys=True).encode())
    return digest.hexdigest()[:16]


@main.command()
@click.option("--dataset", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--out", "cache_dir", type=click.Path(), default="cache", show_default=True)
@click.option("--gamma", type=float, default=0.025, show_default=True)
@click.option("--pca-dim", type=int, default=50, show_default=True)
@click.option("--batch-length", type=int, default=None,
              help="Teaching order length to precompute (default 3 x classes).")
def prepare(manifest_path, cache_dir, gamma, pca_dim, batch_length):
    """Precompute and cache the PCA model, similarity graph, and batch order."""
    manifest_path = Path(manifest_path)
    cache = Path(cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    params = {"gamma": gamma, "pca_dim": pca_dim, "batch_length": batch_length}
    key = _content_hash(manifest_path, params)
    pca_path = cache / f"{key}.pca.npz"
    graph_path = cache / f"{key}.graph.npz"
    batch_path = cache / f"{key}.batch.json"

    if pca_path.exists() and graph_path.exists() and batch_path.exists():
        try:
            load_pca(pca_path)
            np.load(graph_path)
            json.loads(batch_path.read_text())
            click.echo(f"cache hit: {key}")
            return
        except Exception:
            click.echo(f"cache corrupted, recomputing: {key}")

    manifest = load_manifest(manifest_path)
    data = FeatureDataset.from_manifest(manifest, manifest_path.parent)
    target = min(pca_dim, data.features.shape[0], data.features.shape[1])
    model = fit_pca(data.features, target)
    save_pca(model, pca_path)
    from .dataset import apply_pca
    from .strategies import compute_batch_order

    reduced = apply_pca(model, data.features)
    graph = build_similarity(reduced, gamma)
    np.savez(graph_path, weights=graph.weights, gamma=gamma)
    length = batch_length if batch_length is not None else 3 * data.n_classes
    order = compute_batch_order(graph, data.labels, range(data.n_items), length, data.n_classes)
    batch_path.write_text(
        json.dumps(
            {
                "version": reporting.version_string(),
                "params": params,
                "order": [data.item_ids[i] for i in order],
            },
            indent=2,
        )
        + "\n"
    )
    click.echo(f"cache written: {key}")


@main.command()
@click.option("--dataset", "manifest_paths", type=click.Path(exists=True), multiple=True)
@click.option("--synthetic", is_flag=True, help="Also register the synthetic benchmark.")
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.option("--gamma", type=float, default=None)
@click.option("--pca-dim", type=int, default=None)
@click.option("--log-dir", type=click.Path(), default="sessions", show_default=True)
@click.pass_context
def serve(ctx, manifest_paths, synthetic, host, port, gamma, pca_dim, log_dir):
    """Serve the session API (and images) over HTTP."""
    import uvicorn

    from .service import ServiceRegistry, create_app

    if not manifest_paths and not synthetic:
        raise click.UsageError("register at least one --dataset or pass --synthetic")
    address = os.environ.get(ADDRESS_ENV_VAR, DEFAULT_ADDRESS)
    default_host, _, default_port = address.partition(":")
    host = host or default_host or "127.0.0.1"
    port = port if port is not None else int(default_port or 8000)

    defaults = ctx.obj or {}
    sparsify_top_k = defaults.get("sparsify_top_k")
    registry = ServiceRegistry(log_dir=log_dir)
    for path in manifest_paths:
        prepared, _ = _load_prepared(path, gamma, pca_dim, 0, sparsify_top_k=sparsify_top_k)
        registry.add_dataset(prepared)
        click.echo(f"registered dataset {prepared.data.name!r} ({prepared.data.n_items} items)")
    if synthetic:
        prepared, _ = _load_prepared(None, gamma, None, 0, sparsify_top_k=sparsify_top_k)
        registry.add_dataset(prepared)
        click.echo(f"registered dataset {prepared.data.name!r} ({prepared.data.n_items} items)")
    uvicorn.run(create_app(registry), host=host, port=port, log_level="info")


@main.command()
@click.option("--results", "results_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Output directory (defaults to the results directory).")
def report(results_dir, out_dir):
    """Aggregate an existing results directory: tables, curve CSV, figures."""
    results = Path(results_dir)
    out = Path(out_dir) if out_dir is not None else results
    out.mkdir(parents=True, exist_ok=True)
    trials_path = results / "trials.csv"
    curves_path = results / "curves.json"
    if not trials_path.exists():
        raise click.ClickException(f"missing {trials_path}")
    rows = reporting.read_trials_csv(trials_path)
    if not rows:
        raise click.ClickException(f"{trials_path} contains no trials")
    comparison = reporting.comparison_from_rows(rows)
    table = reporting.format_summary_table(comparison)
    source_config = {"results_dir": str(results)}
    (out / "summary.txt").write_text(
        table + f"\n\n{reporting.version_string()}  source: {results}\n"
    )
    curves = {}
    if curves_path.exists():
        curves = reporting.read_curves_json(curves_path)
        reporting.write_curve_points_csv(curves, out / "curve_points.csv", source_config)
    figures = reporting.render_figures(curves, comparison, out)
    click.echo(table)
    click.echo(f"wrote summary.txt, curve_points.csv, {', '.join(f.name for f in figures)}")


if __name__ == "__main__":
    main()
