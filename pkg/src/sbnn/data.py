"""Dataset generation and loading for the desk-scale experiments.

All generators draw from counter-based streams, so a (seed, task) pair
produces identical arrays on every platform. Normalization statistics are
always fit on the training split only.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .rng import stream


@dataclass
class DatasetSplits:
    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray | None = None
    y_val: np.ndarray | None = None
    x_test: np.ndarray | None = None
    y_test: np.ndarray | None = None
    x_ood: np.ndarray | None = None
    y_ood: np.ndarray | None = None
    x_grid: np.ndarray | None = None
    norm_mean: np.ndarray | None = None
    norm_std: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


def toy_regression_curve(x, eps):
    """y = x + 0.3 sin(2 pi (x + eps)) + 0.3 sin(4 pi (x + eps)) + eps."""
    shifted = x + eps
    return (
        x
        + 0.3 * np.sin(2.0 * math.pi * shifted)
        + 0.3 * np.sin(4.0 * math.pi * shifted)
        + eps
    )


def gen_toy_regression(n_train=1024, n_test=2048, seed=0, noise_std=0.02):
    """Noisy oscillatory regression task.

    Train inputs uniform on [-0.1, 0.6], test on [-0.25, 0.85], observation
    noise N(0, noise_std^2); a dense grid over [-0.5, 1.5] rides along for
    uncertainty profiles in and out of the training support.
    """
    rng = stream(seed, "toy_regression")
    x_train = rng.uniform(-0.1, 0.6, n_train)
    x_test = rng.uniform(-0.25, 0.85, n_test)
    y_train = toy_regression_curve(x_train, rng.normal(0.0, noise_std, n_train))
    y_test = toy_regression_curve(x_test, rng.normal(0.0, noise_std, n_test))
    grid = np.linspace(-0.5, 1.5, 401)
    return DatasetSplits(
        x_train=x_train[:, None], y_train=y_train[:, None],
        x_test=x_test[:, None], y_test=y_test[:, None],
        x_grid=grid[:, None],
        meta={"task": "toy_regression", "noise_std": noise_std, "seed": seed},
    )


def gen_synthetic_classification(n=2000, d=8, separation=4.0, seed=0):
    """Two Gaussian class blobs plus an OOD copy shifted along a random direction.

    The OOD set is drawn exactly like the in-domain mixture and then
    displaced by `separation`, so separation = 0 makes it indistinguishable
    from the in-domain distribution by construction.
    """
    if d < 1:
        raise DataError(f"need d >= 1, got {d}")
    rng = stream(seed, "synthetic_classification")
    axis = rng.standard_normal(d)
    axis /= np.linalg.norm(axis)
    shift_dir = rng.standard_normal(d)
    shift_dir /= np.linalg.norm(shift_dir)

    def mixture(count):
        labels = rng.integers(0, 2, count)
        centers = np.where(labels[:, None] == 1, axis, -axis)
        return centers + rng.standard_normal((count, d)), labels

    n_train = int(0.7 * n)
    n_val = int(0.15 * n)
    x, y = mixture(n)
    x_ood, y_ood = mixture(n)
    x_ood = x_ood + separation * shift_dir
    return DatasetSplits(
        x_train=x[:n_train], y_train=y[:n_train].astype(np.float64),
        x_val=x[n_train:n_train + n_val],
        y_val=y[n_train:n_train + n_val].astype(np.float64),
        x_test=x[n_train + n_val:],
        y_test=y[n_train + n_val:].astype(np.float64),
        x_ood=x_ood, y_ood=y_ood.astype(np.float64),
        meta={"task": "synthetic_classification", "separation": separation,
              "seed": seed, "d": d},
    )


def gen_synthetic_sequence(n=800, T=24, seed=0, noise_std=0.05, period=37.0):
    """Windows of a sine-plus-noise series; target is the next value.

    Shapes: x (n, T, 1), y (n, 1).
    """
    rng = stream(seed, "synthetic_sequence")
    total = n + T + 1
    t = np.arange(total, dtype=np.float64)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    series = np.sin(2.0 * math.pi * t / period + phase)
    if noise_std > 0:
        series = series + rng.normal(0.0, noise_std, total)
    x = np.stack([series[i:i + T] for i in range(n)])[:, :, None]
    y = series[T:T + n][:, None]
    n_train = int(0.7 * n)
    n_val = int(0.15 * n)
    return DatasetSplits(
        x_train=x[:n_train], y_train=y[:n_train],
        x_val=x[n_train:n_train + n_val], y_val=y[n_train:n_train + n_val],
        x_test=x[n_train + n_val:], y_test=y[n_train + n_val:],
        meta={"task": "synthetic_sequence", "T": T, "noise_std": noise_std,
              "seed": seed},
    )


def load_csv(path, target_column, split_fractions=(0.8, 0.1, 0.1), seed=0):
    """Seeded shuffle-split of a numeric CSV with train-fit standardization."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        if target_column not in header:
            raise DataError(f"{path}: target column {target_column!r} not found")
        target_idx = header.index(target_column)
        rows = []
        for line_no, row in enumerate(reader, start=2):
            parsed = []
            for col_no, cell in enumerate(row):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric cell at row {line_no}, "
                        f"column {header[col_no]!r}: {cell!r}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise DataError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=np.float64)
    y = data[:, target_idx]
    x = np.delete(data, target_idx, axis=1)

    rng = stream(seed, f"csv:{target_column}")
    order = rng.permutation(len(x))
    x, y = x[order], y[order]
    f_train, f_val, _ = split_fractions
    n = len(x)
    n_train = int(math.floor(f_train * n))
    n_val = int(math.floor(f_val * n))
    mean = x[:n_train].mean(axis=0)
    std = x[:n_train].std(axis=0)
    std = np.where(std > 0, std, 1.0)
    xs = (x - mean) / std
    return DatasetSplits(
        x_train=xs[:n_train], y_train=y[:n_train][:, None],
        x_val=xs[n_train:n_train + n_val], y_val=y[n_train:n_train + n_val][:, None],
        x_test=xs[n_train + n_val:], y_test=y[n_train + n_val:][:, None],
        norm_mean=mean, norm_std=std,
        meta={"task": "csv", "path": str(path), "target": target_column,
              "seed": seed},
    )


def generate(task_cfg: dict) -> DatasetSplits:
    """Dispatch on the config's task name."""
    kind = task_cfg.get("name", "toy_regression")
    seed = task_cfg.get("seed", 0)
    if kind == "toy_regression":
        return gen_toy_regression(
            n_train=task_cfg.get("n_train", 1024),
            n_test=task_cfg.get("n_test", 2048),
            seed=seed,
            noise_std=task_cfg.get("noise_std", 0.02),
        )
    if kind == "synthetic_classification":
        return gen_synthetic_classification(
            n=task_cfg.get("n", 2000), d=task_cfg.get("d", 8),
            separation=task_cfg.get("separation", 4.0), seed=seed,
        )
    if kind == "synthetic_sequence":
        return gen_synthetic_sequence(
            n=task_cfg.get("n", 800), T=task_cfg.get("T", 24), seed=seed,
            noise_std=task_cfg.get("noise_std", 0.05),
        )
    if kind == "csv":
        return load_csv(
            task_cfg["path"], task_cfg["target_column"],
            split_fractions=tuple(task_cfg.get("split_fractions", (0.8, 0.1, 0.1))),
            seed=seed,
        )
    raise DataError(f"unknown task: {kind!r}")
