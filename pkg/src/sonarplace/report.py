"""Figure rendering for evaluation and training outputs.

Reads the delimited files written by the evaluation and training paths
and renders headless matplotlib figures next to them. The library never
imports this module; only the command-line report path does.
"""

from __future__ import annotations

import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .core import ValidationError

FIGURE_DPI = 150


def read_csv_columns(path: str | os.PathLike) -> dict[str, np.ndarray]:
    """Parse a comma-delimited file with a header row into named columns."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header:
            raise ValidationError(f"{path}: empty delimited file")
        names = header.split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if any(len(row) != len(names) for row in rows):
        raise ValidationError(f"{path}: ragged rows")
    cols = {}
    for k, name in enumerate(names):
        cols[name] = np.array([float(row[k]) for row in rows])
    return cols


def plot_pr_curves(curves: dict[str, str | os.PathLike], out_path: str | os.PathLike) -> None:
    """Overlay recall/precision curves from one or more sweep files."""
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    for label, path in sorted(curves.items()):
        cols = read_csv_columns(path)
        ax.plot(cols["recall"], cols["precision"], label=label)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=FIGURE_DPI)
    plt.close(fig)


def plot_overlap_precision(
    series: dict[str, str | os.PathLike], out_path: str | os.PathLike
) -> None:
    """Fraction of nearest neighbors above each FOV-overlap threshold."""
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    for label, path in sorted(series.items()):
        cols = read_csv_columns(path)
        ax.plot(cols["threshold"], cols["fraction"], marker="o", label=label)
    ax.set_xlabel("FOV overlap threshold")
    ax.set_ylabel("fraction of queries")
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=FIGURE_DPI)
    plt.close(fig)


def plot_descriptors_2d(path: str | os.PathLike, out_path: str | os.PathLike) -> None:
    """Scatter the 2-D descriptor embedding, colored by record id."""
    cols = read_csv_columns(path)
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    sc = ax.scatter(cols["x"], cols["y"], c=cols["id"], cmap="viridis", s=18)
    fig.colorbar(sc, ax=ax, label="record id")
    ax.set_xlabel("dimension 1")
    ax.set_ylabel("dimension 2")
    ax.set_aspect("equal", adjustable="datalim")
    fig.tight_layout()
    fig.savefig(out_path, dpi=FIGURE_DPI)
    plt.close(fig)


def plot_train_log(path: str | os.PathLike, out_path: str | os.PathLike) -> None:
    """Training loss per epoch, with validation AUC when present."""
    cols = read_csv_columns(path)
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.plot(cols["epoch"], cols["mean_loss"], marker="o", color="tab:blue", label="mean loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean triplet loss")
    ax.grid(True, alpha=0.3)
    if "val_auc" in cols and np.isfinite(cols["val_auc"]).any():
        ax2 = ax.twinx()
        ax2.plot(cols["epoch"], cols["val_auc"], marker="s", color="tab:orange", label="val AUC")
        ax2.set_ylabel("validation AUC")
        ax2.set_ylim(0.0, 1.05)
    fig.tight_layout()
    fig.savefig(out_path, dpi=FIGURE_DPI)
    plt.close(fig)


def render_run_figures(run_dir: str | os.PathLike, out_dir: str | os.PathLike | None = None) -> list[str]:
    """Render all figures a run directory's delimited outputs support.

    Discovers <prefix>pr_curve.csv, <prefix>overlap_precision.csv,
    <prefix>descriptors_2d.csv, and train_log.csv; returns the paths of
    the figures written.
    """
    run = Path(run_dir)
    out = Path(out_dir) if out_dir is not None else run / "figures"
    out.mkdir(parents=True, exist_ok=True)
    written: list[str] = []

    def prefix_of(path: Path, suffix: str) -> str:
        stem = path.name[: -len(suffix)]
        return stem.rstrip("_") or "run"

    pr_files = {prefix_of(p, "pr_curve.csv"): p for p in sorted(run.glob("*pr_curve.csv"))}
    if pr_files:
        target = out / "pr_curve.png"
        plot_pr_curves(pr_files, target)
        written.append(str(target))

    ov_files = {
        prefix_of(p, "overlap_precision.csv"): p
        for p in sorted(run.glob("*overlap_precision.csv"))
    }
    if ov_files:
        target = out / "overlap_precision.png"
        plot_overlap_precision(ov_files, target)
        written.append(str(target))

    for p in sorted(run.glob("*descriptors_2d.csv")):
        target = out / (prefix_of(p, "descriptors_2d.csv") + "_descriptors_2d.png")
        plot_descriptors_2d(p, target)
        written.append(str(target))

    log = run / "train_log.csv"
    if log.exists():
        target = out / "train_loss.png"
        plot_train_log(log, target)
        written.append(str(target))

    return written
