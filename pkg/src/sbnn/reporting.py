"""Artifact writers: deterministic JSON/CSV plus rendered figures.

CSV cells use '.' decimals, '\n' line endings, and 17 significant digits so
float64 values round-trip bit-exactly. Report JSON contains no timestamps
(the run manifest carries those separately), making reruns byte-identical.
Figures are rendered beside the delimited output as PNG.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def fmt_float(x) -> str:
    return f"{float(x):.17g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, payload: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, sort_keys=True, indent=1)
        fh.write("\n")
    return path


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        cells = [
            fmt_float(v) if isinstance(v, (float, np.floating)) else str(v)
            for v in row
        ]
        lines.append(",".join(cells))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def config_hash(config: dict) -> str:
    canon = json.dumps(_jsonable(config), sort_keys=True).encode()
    return hashlib.sha256(canon).hexdigest()[:16]


def write_manifest(out_dir, command: str, config: dict, seed, artifacts):
    """Run manifest; the timestamp lives here, never inside the reports."""
    return write_json(Path(out_dir) / "manifest.json", {
        "command": command,
        "config_hash": config_hash(config),
        "seed": seed,
        "artifacts": sorted(str(Path(a).name) for a in artifacts),
        "timestamp_unix": int(time.time()),
    })


# ----------------------------------------------------------------------
# figures
# ----------------------------------------------------------------------

def save_training_curve(path, history):
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = [row["epoch"] for row in history]
    ax.plot(epochs, [row["total"] for row in history], label="total")
    ax.plot(epochs, [row["nll_term"] for row in history], label="data term",
            alpha=0.7)
    ax.set_xlabel("epoch")
    ax.set_ylabel("negative ELBO")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_uncertainty_bands(path, grid_x, sample_preds, train_x=None,
                           train_y=None, title=None):
    """Median prediction with 5-95 percentile epistemic band over the grid."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    lo, med, hi = np.percentile(sample_preds, [5, 50, 95], axis=0)
    ax.fill_between(grid_x, lo, hi, alpha=0.3, label="5-95% epistemic band")
    ax.plot(grid_x, med, lw=1.5, label="median prediction")
    if train_x is not None:
        ax.plot(train_x, train_y, "x", ms=2, alpha=0.4, label="train data")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_spectral_decay(path, layer_reports: dict):
    """Per-layer singular values (log scale) and energy-retention curves."""
    n = len(layer_reports)
    fig, axes = plt.subplots(2, n, figsize=(4 * n, 6), squeeze=False)
    for col, (name, rep) in enumerate(layer_reports.items()):
        s = rep.singular_values
        axes[0][col].semilogy(np.arange(1, len(s) + 1), s)
        axes[0][col].set_title(name)
        axes[0][col].set_xlabel("index")
        axes[0][col].set_ylabel("singular value")
        axes[1][col].plot(np.arange(len(rep.energy_retention)), rep.energy_retention)
        axes[1][col].set_xlabel("rank")
        axes[1][col].set_ylabel("energy retained")
        axes[1][col].set_ylim(0, 1.02)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_reliability_diagram(path, bins):
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot([0, 1], [0, 1], "--", color="gray", lw=1)
    mask = bins.count > 0
    ax.bar(bins.confidence[mask], bins.accuracy[mask], width=0.04, alpha=0.6,
           label=f"{bins.binning}, {bins.n_bins} bins")
    ax.set_xlabel("confidence")
    ax.set_ylabel("accuracy")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_rank_pareto(path, table, x_key="val_nll", y_key="auroc_ood"):
    fig, ax = plt.subplots(figsize=(6, 4.5))
    xs = [row.get(x_key) for row in table]
    ys = [row.get(y_key) for row in table]
    ax.plot(xs, ys, "o-")
    for row, x, y in zip(table, xs, ys):
        if x is not None and y is not None:
            ax.annotate(f"r={row['rank']}", (x, y), fontsize=8,
                        xytext=(4, 4), textcoords="offset points")
    ax.set_xlabel(x_key)
    ax.set_ylabel(y_key)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
