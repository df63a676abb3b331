"""Report rendering: CSV tables and matplotlib figures written to a directory.

Every CLI subcommand that produces metrics can mirror them here as delimited
files plus a PNG figure. Core library code never renders; this module is the
only place matplotlib is touched.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Dict, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import EvalResult
from .inference import CamGrid, PredictionEntry, WordImportanceEntry, upsample_bilinear
from .train import GridRow, TrainReport


def _ensure_dir(out_dir) -> Path:
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_train_report(report: TrainReport, out_dir) -> Dict[str, str]:
    """report.json, metrics CSVs, and a loss/accuracy curve figure."""
    out = _ensure_dir(out_dir)
    paths = {
        "report": str(out / "report.json"),
        "losses": str(out / "losses.csv"),
        "accuracy": str(out / "val_accuracy.csv"),
        "figure": str(out / "training_curves.png"),
    }
    with open(paths["report"], "w", encoding="utf-8") as f:
        json.dump(report.to_json(), f, sort_keys=True)
    with open(paths["losses"], "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "mean_loss"])
        for epoch, loss in enumerate(report.epoch_losses):
            writer.writerow([epoch, f"{loss:.6f}"])
    with open(paths["accuracy"], "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["evaluation", "epoch", "val_accuracy"])
        for i, (epoch, acc) in enumerate(zip(report.eval_epochs, report.val_accuracies)):
            writer.writerow([i, epoch, f"{acc:.6f}"])

    fig, ax_loss = plt.subplots(figsize=(7, 4.5))
    ax_loss.plot(range(len(report.epoch_losses)), report.epoch_losses, color="tab:red", label="train loss")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("mean cross-entropy", color="tab:red")
    ax_acc = ax_loss.twinx()
    n_evals = max(1, len(report.val_accuracies))
    xs = np.arange(1, n_evals + 1) * (len(report.epoch_losses) / n_evals) - 1.0
    ax_acc.plot(xs[: len(report.val_accuracies)], report.val_accuracies, color="tab:blue", label="val accuracy")
    ax_acc.set_ylabel("validation top-1 accuracy", color="tab:blue")
    ax_acc.set_ylim(0.0, 1.05)
    ax_loss.set_title(f"best epoch {report.best_epoch}, accuracy {report.best_accuracy:.3f}")
    fig.tight_layout()
    fig.savefig(paths["figure"], dpi=120)
    plt.close(fig)
    return paths


def write_eval_report(result: EvalResult, out_dir) -> Dict[str, str]:
    """eval.json, a per-type CSV, and an accuracy-by-type bar figure."""
    out = _ensure_dir(out_dir)
    paths = {
        "result": str(out / "eval.json"),
        "table": str(out / "eval.csv"),
        "figure": str(out / "accuracy_by_type.png"),
    }
    with open(paths["result"], "w", encoding="utf-8") as f:
        json.dump(result.to_json(), f, sort_keys=True)
    buckets = ["overall"] + [b for b in ("yes/no", "number", "other", "unknown") if result.counts.get(b)]
    accs = [result.overall] + [result.by_type.get(b, 0.0) for b in buckets[1:]]
    counts = [result.total] + [result.counts.get(b, 0) for b in buckets[1:]]
    with open(paths["table"], "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["bucket", "accuracy_pct", "questions"])
        for bucket, acc, count in zip(buckets, accs, counts):
            writer.writerow([bucket, f"{100.0 * acc:.2f}", count])

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(range(len(buckets)), [100.0 * a for a in accs], color="tab:blue")
    ax.set_xticks(range(len(buckets)))
    ax.set_xticklabels(buckets)
    ax.set_ylabel("accuracy (%)")
    ax.set_ylim(0, 100)
    for i, (acc, count) in enumerate(zip(accs, counts)):
        ax.text(i, 100.0 * acc + 1, f"{100.0 * acc:.1f} (n={count})", ha="center", fontsize=8)
    fig.tight_layout()
    fig.savefig(paths["figure"], dpi=120)
    plt.close(fig)
    return paths


def write_grid_report(param_name: str, rows: Sequence[GridRow], out_dir) -> Dict[str, str]:
    """grid.csv plus an accuracy-vs-value figure."""
    out = _ensure_dir(out_dir)
    paths = {"table": str(out / "grid.csv"), "figure": str(out / "grid_search.png")}
    with open(paths["table"], "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow([param_name, "val_accuracy"])
        for row in rows:
            writer.writerow([row.value, f"{row.accuracy:.6f}"])

    by_value = sorted(rows, key=lambda r: float(r.value))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([float(r.value) for r in by_value], [r.accuracy for r in by_value], marker="o")
    ax.set_xlabel(param_name)
    ax.set_ylabel("validation top-1 accuracy")
    ax.set_ylim(0.0, 1.05)
    fig.tight_layout()
    fig.savefig(paths["figure"], dpi=120)
    plt.close(fig)
    return paths


def write_cam_pgm(grid: CamGrid, path) -> None:
    """Plain PGM (P2): the min-max-normalized grid scaled to 0..255."""
    values = np.rint(grid.normalized() * 255).astype(int)
    lines = ["P2", f"{grid.width} {grid.height}", "255"]
    lines += [" ".join(str(v) for v in row) for row in values]
    with open(path, "w", encoding="ascii") as f:
        f.write("\n".join(lines) + "\n")


def write_explain_report(
    question: str,
    image_id: int,
    entries: Sequence[PredictionEntry],
    importances: Sequence[WordImportanceEntry],
    out_dir,
    cam_grid: Optional[CamGrid] = None,
) -> Dict[str, str]:
    """Attribution CSV, a diverging contribution figure, and a CAM heat figure."""
    out = _ensure_dir(out_dir)
    paths = {
        "table": str(out / "attribution.csv"),
        "figure": str(out / "attribution.png"),
    }
    with open(paths["table"], "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["answer", "logit", "prob", "word_contrib", "image_contrib"])
        for e in entries:
            writer.writerow([e.answer, f"{e.logit:.6f}", f"{e.prob:.6f}", f"{e.word_contrib:.6f}", f"{e.image_contrib:.6f}"])

    n_rows = 2 if importances else 1
    fig, axes = plt.subplots(n_rows, 1, figsize=(7, 3 * n_rows), squeeze=False)
    ax = axes[0][0]
    labels = [e.answer for e in entries][::-1]
    word = [e.word_contrib for e in entries][::-1]
    image = [e.image_contrib for e in entries][::-1]
    ys = np.arange(len(labels))
    ax.barh(ys, word, color="tab:blue", label="words")
    ax.barh(ys, image, left=word, color="tab:orange", label="image")
    ax.set_yticks(ys)
    ax.set_yticklabels(labels)
    ax.set_xlabel("score contribution")
    ax.legend(fontsize=8)
    ax.set_title(f"image {image_id}: {question!r}", fontsize=9)
    if importances:
        ax2 = axes[1][0]
        toks = [w.token for w in importances][::-1]
        vals = [w.importance for w in importances][::-1]
        colors = ["tab:gray" if w.oov else "tab:green" for w in importances][::-1]
        ax2.barh(np.arange(len(toks)), vals, color=colors)
        ax2.set_yticks(np.arange(len(toks)))
        ax2.set_yticklabels(toks)
        ax2.set_xlabel(f"word importance for {entries[0].answer!r}")
    fig.tight_layout()
    fig.savefig(paths["figure"], dpi=120)
    plt.close(fig)

    if cam_grid is not None:
        paths["cam_figure"] = str(out / "cam.png")
        heat = upsample_bilinear(cam_grid.values, max(cam_grid.height, 112), max(cam_grid.width, 112))
        fig, ax = plt.subplots(figsize=(4.5, 4))
        im = ax.imshow(heat, cmap="jet")
        ax.set_title(f"activation map for {entries[0].answer!r}", fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
        fig.colorbar(im, ax=ax, fraction=0.046)
        fig.tight_layout()
        fig.savefig(paths["cam_figure"], dpi=120)
        plt.close(fig)
    return paths
