"""Report outputs: delimited metric tables and matplotlib figures.

Every reporting path writes a TSV for machines plus a PNG figure for humans
next to it; the TSV is the format of record and round-trips.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .errors import DecodeError
from .evaluation import REPORT_FIELDS, MetricsReport, MetricsValue

ABLATION_COLUMNS = (
    "variant",
    "fid",
    "r_precision_top3",
    "mm_dist",
    "diversity",
    "multimodality",
    "error",
)

_METRIC_LABELS = {
    "fid": "FID",
    "r_precision_top1": "R-Precision top-1",
    "r_precision_top2": "R-Precision top-2",
    "r_precision_top3": "R-Precision top-3",
    "mm_dist": "MM-Dist",
    "diversity": "Diversity",
    "multimodality": "Multimodality",
}


def write_metrics_tsv(report: MetricsReport, path) -> None:
    lines = ["metric\tmean\tci95"]
    for name in REPORT_FIELDS:
        value = getattr(report, name)
        if value is None:
            lines.append(f"{name}\t-\t-")
        else:
            lines.append(f"{name}\t{value.mean!r}\t{value.ci95!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_metrics_tsv(path) -> MetricsReport:
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not lines or lines[0].split("\t") != ["metric", "mean", "ci95"]:
        raise DecodeError(f"{path}: not a metrics table")
    values: dict[str, MetricsValue | None] = {}
    for line in lines[1:]:
        name, mean, ci = line.split("\t")
        values[name] = None if mean == "-" else MetricsValue(float(mean), float(ci))
    missing = [name for name in REPORT_FIELDS if name not in values]
    if missing:
        raise DecodeError(f"{path}: missing metrics {missing}")
    return MetricsReport(**{name: values[name] for name in REPORT_FIELDS})


def plot_metrics(report: MetricsReport, path) -> None:
    """Bar chart of all metrics with 95% CI error bars."""
    names = [n for n in REPORT_FIELDS if getattr(report, n) is not None]
    means = [getattr(report, n).mean for n in names]
    errors = [getattr(report, n).ci95 for n in names]
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.bar(range(len(names)), means, yerr=errors, capsize=3, color="#4183d7")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels([_METRIC_LABELS[n] for n in names], rotation=30, ha="right")
    ax.set_title("Evaluation metrics (mean ± 95% CI)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_ablation_tsv(rows: list[dict], path) -> None:
    lines = ["\t".join(ABLATION_COLUMNS)]
    for row in rows:
        cells = []
        for col in ABLATION_COLUMNS:
            value = row.get(col, "")
            if isinstance(value, float):
                cells.append(f"{value:.4f}")
            else:
                cells.append("" if value is None else str(value))
        lines.append("\t".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def format_ablation_table(rows: list[dict]) -> str:
    """Fixed-width text table mirroring the TSV, for terminal output."""
    header = [c for c in ABLATION_COLUMNS]
    table = [header]
    for row in rows:
        table.append(
            [
                f"{row.get(c, ''):.4f}" if isinstance(row.get(c), float) else str(row.get(c, "") or "")
                for c in ABLATION_COLUMNS
            ]
        )
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    return "\n".join(
        "  ".join(cell.ljust(width) for cell, width in zip(row, widths)) for row in table
    )


def plot_ablation(rows: list[dict], path, title: str = "Ablation sweep") -> None:
    """One panel per metric across sweep variants."""
    metrics = [c for c in ABLATION_COLUMNS if c not in ("variant", "error")]
    labels = [str(r["variant"]) for r in rows]
    fig, axes = plt.subplots(1, len(metrics), figsize=(3.2 * len(metrics), 3.4))
    for ax, metric in zip(axes, metrics):
        values = [r.get(metric) for r in rows]
        ok = [i for i, v in enumerate(values) if isinstance(v, (int, float))]
        ax.plot([labels[i] for i in ok], [values[i] for i in ok], marker="o")
        ax.set_title(_METRIC_LABELS.get(metric, metric))
        ax.tick_params(axis="x", rotation=45)
        ax.grid(alpha=0.3)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_loss_curve(history, path) -> None:
    """Loss components vs step; history is LossBreakdown objects or a JSONL path."""
    if isinstance(history, (str, Path)):
        records = [json.loads(line) for line in Path(history).read_text().splitlines() if line]
    else:
        records = [
            {"step": i + 1, **b.as_dict()} for i, b in enumerate(history)
        ]
    if not records:
        return
    steps = [r["step"] for r in records]
    fig, ax = plt.subplots(figsize=(7, 4))
    for key in ("total", "simple", "pos", "vel", "foot"):
        ax.plot(steps, [r[key] for r in records], label=key, linewidth=1)
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
