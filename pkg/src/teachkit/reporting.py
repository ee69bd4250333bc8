"""Result artifacts: trial tables, curve files, summaries, and figures.

Every artifact embeds the resolved run configuration and a version string so
a results directory is self-describing. The delimited outputs are stable
byte-for-byte for a fixed spec; figures are rendered to files next to them.
"""

from __future__ import annotations

import csv
import io
import json
import subprocess
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .simulator import ComparisonReport, LearningCurve, TrialResult, compare_strategies

STRATEGY_LABELS = {
    "rnd": "Random",
    "cc": "Centroids",
    "wp": "Worst Pred.",
    "batch": "Batch",
    "eer": "EER",
}
STRATEGY_ORDER = ["rnd", "cc", "wp", "batch", "eer"]


def version_string() -> str:
    """Package version, extended with the git description when available."""
    from . import __version__

    base = f"teachkit-{__version__}"
    try:
        described = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if described.returncode == 0 and described.stdout.strip():
            return f"{base}+{described.stdout.strip()}"
    except (OSError, subprocess.TimeoutExpired):
        pass
    return base


def provenance(config: dict) -> dict:
    return {"version": version_string(), "config": config}


def _ordered(strategies) -> list[str]:
    known = [s for s in STRATEGY_ORDER if s in strategies]
    return known + sorted(set(strategies) - set(known))


# -- trials table ----------------------------------------------------------


def write_trials_csv(results: list[TrialResult], path: str | Path, config: dict) -> None:
    path = Path(path)
    buffer = io.StringIO()
    buffer.write(f"# version: {version_string()}\n")
    buffer.write(f"# config: {json.dumps(config, sort_keys=True)}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["strategy", "seed", "score", "mean_ms"])
    for result in results:
        writer.writerow([result.strategy, result.seed, repr(result.score), repr(result.mean_test_ms)])
    path.write_text(buffer.getvalue())


def read_trials_csv(path: str | Path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    for row in csv.DictReader(lines):
        rows.append(
            {
                "strategy": row["strategy"],
                "seed": int(row["seed"]),
                "score": float(row["score"]),
                "mean_ms": float(row["mean_ms"]),
            }
        )
    return rows


# -- curves ------------------------------------------------------------------


def write_curves_json(
    curves: dict[str, LearningCurve], path: str | Path, config: dict
) -> None:
    doc = provenance(config)
    doc["curves"] = {name: curve.to_dict() for name, curve in curves.items()}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_curves_json(path: str | Path) -> dict[str, LearningCurve]:
    doc = json.loads(Path(path).read_text())
    return {
        name: LearningCurve(
            bin_means=tuple(entry["bin_means"]),
            bin_counts=tuple(entry["bin_counts"]),
            note=entry.get("note", ""),
        )
        for name, entry in doc["curves"].items()
    }


def write_curve_points_csv(
    curves: dict[str, LearningCurve], path: str | Path, config: dict | None = None
) -> None:
    """Plot-ready long-format table: one row per (strategy, progress bin)."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# version: {version_string()}\n")
        if config is not None:
            fh.write(f"# config: {json.dumps(config, sort_keys=True)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["strategy", "bin", "progress_pct", "mean_correct", "count"])
        for name in _ordered(curves):
            curve = curves[name]
            for b, (mean, count) in enumerate(zip(curve.bin_means, curve.bin_counts)):
                writer.writerow([name, b, 5 + 10 * b, repr(mean), count])


# -- summary -----------------------------------------------------------------


def summary_rows(report: ComparisonReport) -> list[dict]:
    rows = []
    for name in _ordered(report.means):
        rows.append(
            {
                "strategy": name,
                "label": STRATEGY_LABELS.get(name, name),
                "mean_time_ms": report.mean_times_ms[name],
                "mean_score": report.means[name],
                "n_trials": report.n_trials[name],
                "p_value_vs_reference": report.p_values.get(name),
            }
        )
    return rows


def write_summary_json(report: ComparisonReport, path: str | Path, config: dict) -> None:
    doc = provenance(config)
    doc["reference"] = report.reference
    doc["test_name"] = report.test_name
    doc["strategies"] = summary_rows(report)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def format_summary_table(report: ComparisonReport) -> str:
    header = f"{'Strategy':<14}{'Ave. Time (ms)':>16}{'Ave. Score':>12}{'n':>6}  p vs {report.reference}"
    lines = [header, "-" * len(header)]
    for row in summary_rows(report):
        p = row["p_value_vs_reference"]
        p_text = "-" if p is None else (f"{p:.4f}" if p >= 1e-4 else "< 0.0001")
        lines.append(
            f"{row['label']:<14}{row['mean_time_ms']:>16.0f}{row['mean_score']:>12.3f}"
            f"{row['n_trials']:>6}  {p_text}"
        )
    return "\n".join(lines)


def comparison_from_rows(rows: list[dict], reference: str = "eer") -> ComparisonReport:
    """Rebuild the comparison report from a trials table (no re-simulation)."""
    results = [
        TrialResult(
            strategy=row["strategy"],
            trial_index=i,
            seed=row["seed"],
            dataset="",
            score=row["score"],
            mean_test_ms=row["mean_ms"],
            teaching_correct=(),
        )
        for i, row in enumerate(rows)
    ]
    return compare_strategies(results, reference=reference)


# -- figures -------------------------------------------------------------------


def render_figures(
    curves: dict[str, LearningCurve], report: ComparisonReport, out_dir: str | Path
) -> list[Path]:
    """Render the learning-curve and score-comparison figures to PNG files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    progress = [5 + 10 * b for b in range(10)]
    for name in _ordered(curves):
        curve = curves[name]
        mask = [c > 0 for c in curve.bin_counts]
        xs = [x for x, keep in zip(progress, mask) if keep]
        ys = [y for y, keep in zip(curve.bin_means, mask) if keep]
        ax.plot(xs, ys, marker="o", label=STRATEGY_LABELS.get(name, name))
    ax.set_xlabel("Teaching progress (%)")
    ax.set_ylabel("Mean correctness")
    ax.set_ylim(0.0, 1.0)
    ax.set_xlim(0, 100)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right", fontsize=9)
    ax.set_title("Teaching-phase learning curves")
    fig.tight_layout()
    curve_path = out_dir / "learning_curves.png"
    fig.savefig(curve_path, dpi=150)
    plt.close(fig)
    written.append(curve_path)

    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    names = _ordered(report.means)
    scores = [report.means[n] for n in names]
    bars = ax.bar(
        [STRATEGY_LABELS.get(n, n) for n in names],
        scores,
        color=["#4477aa" if n != report.reference else "#228833" for n in names],
    )
    ax.bar_label(bars, fmt="%.3f", fontsize=8)
    ax.set_ylabel("Mean test score")
    ax.set_ylim(0.0, 1.0)
    ax.set_title("Strategy comparison")
    fig.tight_layout()
    scores_path = out_dir / "scores.png"
    fig.savefig(scores_path, dpi=150)
    plt.close(fig)
    written.append(scores_path)
    return written
