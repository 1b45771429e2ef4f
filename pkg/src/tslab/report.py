"""Metric tables (aligned text + CSV) and report figures.

The text table mirrors the GEDFs-vs-raw comparison layout: one row per
(training method, split), five metric columns per input variant.  The CSV
carries the same numbers in machine-readable form.  Figures (ROC curves,
training history, example trajectories and feature heatmaps) are rendered
to PNG files next to the delimited output.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .metrics import MetricsReport

METHOD_LABELS = {"scl": "Supervised contrastive learning", "sl": "Supervised learning"}
CSV_COLUMNS = ("window", "variant", "method", "split", "seed",
               "acc", "precision", "recall", "f1", "auc", "tp", "tn", "fp", "fn")


def _cell(value, pct: bool) -> str:
    if value is None:
        return "undefined"
    return f"{100.0 * value:.2f}" if pct else f"{value:.4f}"


def write_metrics_csv(reports, path, window: float | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r, w in sorted(((r, w) for r, w in reports),
                           key=lambda t: (t[1], t[0].variant, t[0].method, t[0].split, t[0].seed)):
            writer.writerow([
                f"{w:.2f}", r.variant, r.method, r.split, r.seed,
                *(("" if v is None else f"{v:.6f}")
                  for v in (r.acc, r.precision, r.recall, r.f1, r.auc)),
                r.tp, r.tn, r.fp, r.fn,
            ])


def read_metrics_csv(path):
    """Rows back as (MetricsReport, window) pairs."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            def num(key):
                return None if row[key] == "" else float(row[key])
            rep = MetricsReport(
                acc=num("acc"), precision=num("precision"), recall=num("recall"),
                f1=num("f1"), auc=num("auc"),
                tp=int(row["tp"]), tn=int(row["tn"]), fp=int(row["fp"]), fn=int(row["fn"]),
                split=row["split"], variant=row["variant"], method=row["method"],
                seed=int(row["seed"]),
            )
            out.append((rep, float(row["window"])))
    return out


def metrics_table(reports, window: float) -> str:
    """Aligned comparison table for one window length.

    ``reports`` is an iterable of MetricsReport (seed-averaged rows are the
    caller's choice); rows are grouped by method and split, columns by
    variant.
    """
    reports = list(reports)
    methods = [m for m in ("sl", "scl") if any(r.method == m for r in reports)]
    splits = sorted({r.split for r in reports})
    variants = [v for v in ("gedf", "raw") if any(r.variant == v for r in reports)]

    header1 = f"{'Training method':<34} {'Split':<6}"
    header2 = f"{'':<34} {'':<6}"
    for v in variants:
        group = {"gedf": "GEDFs", "raw": "Raw data"}[v]
        header1 += f" | {group:^47}"
        header2 += " | " + " ".join(f"{c:>8}" for c in ("ACC%", "Prec%", "Rec%", "F1%", "AUC"))
    lines = [f"window {window:.2f} s", header1, header2,
             "-" * max(len(header1), len(header2))]
    for m in methods:
        for s in splits:
            row = f"{METHOD_LABELS.get(m, m):<34} {s.upper():<6}"
            for v in variants:
                match = [r for r in reports if r.method == m and r.split == s and r.variant == v]
                if not match:
                    row += " | " + " ".join(f"{'-':>8}" for _ in range(5))
                    continue
                r = match[0]
                cells = [_cell(r.acc, True), _cell(r.precision, True), _cell(r.recall, True),
                         _cell(r.f1, True), _cell(r.auc, False)]
                row += " | " + " ".join(f"{c:>8}" for c in cells)
            lines.append(row)
    return "\n".join(lines) + "\n"


def average_reports(reports) -> list:
    """Mean metrics over seeds for each (variant, method, split) group."""
    groups: dict = {}
    for r in reports:
        groups.setdefault((r.variant, r.method, r.split), []).append(r)
    out = []
    for (variant, method, split), rs in sorted(groups.items()):
        def mean(attr):
            vals = [getattr(r, attr) for r in rs if getattr(r, attr) is not None]
            return float(np.mean(vals)) if vals else None
        out.append(MetricsReport(
            acc=mean("acc"), precision=mean("precision"), recall=mean("recall"),
            f1=mean("f1"), auc=mean("auc"),
            tp=sum(r.tp for r in rs), tn=sum(r.tn for r in rs),
            fp=sum(r.fp for r in rs), fn=sum(r.fn for r in rs),
            split=split, variant=variant, method=method, seed=-1,
        ))
    return out


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------

def roc_points(scores, labels):
    scores = np.asarray(scores, float)
    labels = np.asarray(labels, int)
    order = np.argsort(-scores, kind="stable")
    y = labels[order]
    tp = np.concatenate([[0], np.cumsum(y == 1)])
    fp = np.concatenate([[0], np.cumsum(y == 0)])
    n_pos, n_neg = max(tp[-1], 1), max(fp[-1], 1)
    return fp / n_neg, tp / n_pos


def roc_figure(curves: dict, path) -> None:
    """``curves``: label -> (scores, labels)."""
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    for name, (scores, labels) in curves.items():
        fpr, tpr = roc_points(scores, labels)
        ax.plot(fpr, tpr, label=name, linewidth=1.4)
    ax.plot([0, 1], [0, 1], "k--", linewidth=0.8, alpha=0.5)
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.set_title("ROC")
    ax.legend(fontsize=8, loc="lower right")
    fig.tight_layout()
    _save(fig, path)


def history_figure(histories: dict, path) -> None:
    """``histories``: run label -> list of HistoryRow."""
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6))
    for name, rows in histories.items():
        axes[0].plot([r.train_loss for r in rows], label=name, linewidth=1.2)
        accs = [(i, r.val_acc) for i, r in enumerate(rows) if not np.isnan(r.val_acc)]
        if accs:
            axes[1].plot([a[0] for a in accs], [a[1] for a in accs], label=name, linewidth=1.2)
    axes[0].set_xlabel("epoch")
    axes[0].set_ylabel("train loss")
    axes[1].set_xlabel("epoch")
    axes[1].set_ylabel("validation accuracy")
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def trajectory_figure(records: dict, path) -> None:
    """``records``: panel title -> TrajectoryRecord; plots rotor angles."""
    n = len(records)
    fig, axes = plt.subplots(1, n, figsize=(4.5 * n, 3.4), squeeze=False)
    for ax, (title, rec) in zip(axes[0], records.items()):
        ref = rec.rotor_delta - rec.rotor_delta.mean(axis=0, keepdims=True)
        for k in range(ref.shape[0]):
            ax.plot(rec.times, ref[k], linewidth=0.9)
        ax.set_title(f"{title} (label={rec.label}, eta={rec.tsi:.3f})", fontsize=9)
        ax.set_xlabel("t [s]")
        ax.set_ylabel("rotor angle, center-of-angle frame [rad]")
    fig.tight_layout()
    _save(fig, path)


def heatmap_figure(samples: dict, path) -> None:
    """``samples``: panel title -> GedfSample; renders the feature matrices."""
    n = len(samples)
    fig, axes = plt.subplots(1, n, figsize=(4.0 * n, 3.6), squeeze=False)
    for ax, (title, sample) in zip(axes[0], samples.items()):
        im = ax.imshow(sample.matrix, aspect="auto", cmap="RdBu_r", vmin=-1, vmax=1)
        ax.set_title(f"{title} (label={sample.label})", fontsize=9)
        ax.set_xlabel("sample")
        ax.set_ylabel("node")
        fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    _save(fig, path)


def window_trend_figure(rows, path) -> None:
    """``rows``: (window, method, split, acc) tuples."""
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    keys = sorted({(m, s) for _, m, s, _ in rows})
    for m, s in keys:
        pts = sorted((w, a) for w, mm, ss, a in rows if mm == m and ss == s)
        ax.plot([p[0] for p in pts], [100 * p[1] for p in pts],
                marker="o", linewidth=1.2, label=f"{m.upper()} {s.upper()}")
    ax.set_xlabel("window length [s]")
    ax.set_ylabel("accuracy [%]")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def _save(fig, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=130)
    plt.close(fig)
