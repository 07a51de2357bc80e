"""Report figures rendered to files next to the JSON/TSV outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import EvalReport


def render_position_figure(report: EvalReport, path) -> Path:
    """Bar chart of ALL / SEQ / per-position accuracy."""
    pos = report.summary_positions()
    labels = ["ALL", "SEQ"] + [f"POS{k}" for k in (1, 2, 3) if pos[k] is not None]
    values = [report.all_acc, report.seq_acc] + [pos[k] for k in (1, 2, 3) if pos[k] is not None]

    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    ax.bar(labels, [v * 100 for v in values], color="#4878a8")
    ax.set_ylabel("accuracy (%)")
    ax.set_ylim(0, 100)
    ax.set_title("Question and sequence accuracy")
    for i, v in enumerate(values):
        ax.text(i, v * 100 + 1.5, f"{v * 100:.1f}", ha="center", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def render_table_size_figure(report: EvalReport, path) -> Path:
    """Scatter of per-table accuracy against table size (cell count)."""
    sizes = [e["n_cells"] for e in report.per_table]
    accs = [e["accuracy"] * 100 for e in report.per_table]
    weights = [e["n_questions"] for e in report.per_table]

    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    ax.scatter(sizes, accs, s=[10 + 6 * w for w in weights], alpha=0.6, color="#a85448")
    ax.set_xlabel("table size (cells)")
    ax.set_ylabel("accuracy (%)")
    ax.set_ylim(-5, 105)
    ax.set_title("Accuracy by table size")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def render_report_figures(report: EvalReport, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [render_position_figure(report, out_dir / "position_accuracy.png")]
    if report.per_table:
        paths.append(render_table_size_figure(report, out_dir / "table_size.png"))
    return paths


def render_training_curve(log_entries: list[dict], path) -> Path:
    """Loss and train-subset accuracy over steps, from the training log."""
    steps = [e["step"] for e in log_entries]
    losses = [e["loss"] for e in log_entries]
    accs = [e.get("train_all") for e in log_entries]

    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    ax.plot(steps, losses, color="#4878a8", label="loss")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    if any(a is not None for a in accs):
        ax2 = ax.twinx()
        ax2.plot(steps, [a if a is not None else float("nan") for a in accs],
                 color="#a85448", label="train ALL")
        ax2.set_ylabel("train ALL")
        ax2.set_ylim(0, 1.05)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)
