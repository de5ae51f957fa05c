"""Evaluation report rendering: precision/recall CSVs and matplotlib
figures written next to the JSON report."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluate import APResult


def write_pr_csv(path: str | Path, result: APResult) -> None:
    """Score-ordered precision/recall points as delimited text."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["score", "precision", "recall"])
        for s, p, r in zip(result.scores, result.precision, result.recall):
            writer.writerow([f"{s:.6f}", f"{p:.6f}", f"{r:.6f}"])


def write_scene_csv(path: str | Path, rows: Sequence[dict]) -> None:
    """Per-scene counts: ground truth, detections, true positives."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scene", "gt", "detections", "tp"])
        for row in rows:
            writer.writerow([row["scene"], row["gt"], row["detections"], row["tp"]])


def render_pr_curve(path: str | Path, result: APResult) -> None:
    """Plot the precision/recall curve with the AP in the title."""
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    if result.recall.size:
        ax.step(result.recall, result.precision, where="post", color="#1f6fb2")
        ax.fill_between(
            result.recall, result.precision, step="post", alpha=0.15, color="#1f6fb2"
        )
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.05)
    ap_text = "undefined" if result.ap is None else f"{result.ap:.4f}"
    ax.set_title(f"precision-recall (AP = {ap_text})")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
