"""Calibration, discrimination, OOD, and selective-prediction metrics.

Conventions: probabilities are clamped at 1e-12 inside NLL (Monte-Carlo
means can hit exact 0/1 at small sample counts), entropies and NLL are in
nats, ECE searches 6 binning configurations (equal-width / equal-mass x
10/15/20 bins) and reports the lowest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, rankdata

from .errors import DataError, DomainError

ECE_BIN_COUNTS = (10, 15, 20)
ECE_BINNINGS = ("equal_width", "equal_mass")
PROB_FLOOR = 1e-12


@dataclass
class ReliabilityBins:
    binning: str
    n_bins: int
    confidence: np.ndarray
    accuracy: np.ndarray
    count: np.ndarray


@dataclass
class IntervalSet:
    lower: np.ndarray
    upper: np.ndarray
    level: float


def prediction_intervals(mu, sigma, level: float = 0.95) -> IntervalSet:
    """Central Gaussian intervals mean +- z_{(1+level)/2} sigma."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma < 0):
        raise DomainError("interval sigma must be non-negative")
    z = norm.ppf(0.5 + level / 2.0)
    return IntervalSet(lower=mu - z * sigma, upper=mu + z * sigma, level=level)


def nll(probs, labels) -> float:
    """-mean log p_hat(y). probs: (N,) binary p(y=1) or (N, C) rows."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels)
    if p.ndim == 1:
        picked = np.where(y.astype(bool), p, 1.0 - p)
    else:
        idx = y.astype(np.int64)
        if np.any(idx < 0) or np.any(idx >= p.shape[1]):
            raise DataError("label index out of range")
        picked = p[np.arange(len(p)), idx]
    return float(-np.mean(np.log(np.clip(picked, PROB_FLOOR, None))))


def brier(probs, labels) -> float:
    """Mean squared error between the probability vector and the one-hot label."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels)
    if p.ndim == 1:
        p = np.stack([1.0 - p, p], axis=1)
    onehot = np.zeros_like(p)
    onehot[np.arange(len(p)), y.astype(np.int64)] = 1.0
    return float(np.mean(np.sum((p - onehot) ** 2, axis=1)))


def accuracy(probs, labels) -> float:
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels)
    pred = (p >= 0.5).astype(np.int64) if p.ndim == 1 else p.argmax(axis=1)
    return float(np.mean(pred == y.astype(np.int64)))


def _bin_edges(confidences, binning, n_bins):
    if binning == "equal_width":
        return np.linspace(0.0, 1.0, n_bins + 1)
    qs = np.quantile(confidences, np.linspace(0.0, 1.0, n_bins + 1))
    qs[0], qs[-1] = 0.0, 1.0
    return np.maximum.accumulate(qs)


def ece_for_config(confidences, correctness, binning, n_bins):
    conf = np.asarray(confidences, dtype=np.float64)
    corr = np.asarray(correctness, dtype=np.float64)
    edges = _bin_edges(conf, binning, n_bins)
    idx = np.clip(np.searchsorted(edges, conf, side="right") - 1, 0, n_bins - 1)
    total = len(conf)
    bin_conf = np.zeros(n_bins)
    bin_acc = np.zeros(n_bins)
    bin_count = np.zeros(n_bins, dtype=np.int64)
    ece = 0.0
    for b in range(n_bins):
        mask = idx == b
        bin_count[b] = mask.sum()
        if bin_count[b]:
            bin_conf[b] = conf[mask].mean()
            bin_acc[b] = corr[mask].mean()
            ece += bin_count[b] / total * abs(bin_acc[b] - bin_conf[b])
    bins = ReliabilityBins(binning, n_bins, bin_conf, bin_acc, bin_count)
    return float(ece), bins


def ece_best_config(confidences, correctness):
    """Lowest ECE over the 6 binning configurations, with its bins."""
    if len(confidences) < min(ECE_BIN_COUNTS):
        raise DataError("need at least as many points as bins")
    best = None
    for binning in ECE_BINNINGS:
        for n_bins in ECE_BIN_COUNTS:
            ece, bins = ece_for_config(confidences, correctness, binning, n_bins)
            if best is None or ece < best[0]:
                best = (ece, bins)
    return best


def auroc(scores, labels) -> float:
    """Rank-based AUROC with average ranks for ties (Mann-Whitney)."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise DomainError("auroc needs both classes present")
    ranks = rankdata(s)
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def aupr(scores, labels) -> float:
    """Average precision via precision-recall step integration."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(np.float64)
    n_pos = y.sum()
    if n_pos == 0 or n_pos == len(y):
        raise DomainError("aupr needs both classes present")
    order = np.argsort(-s, kind="stable")
    y_sorted = y[order]
    s_sorted = s[order]
    tp = np.cumsum(y_sorted)
    fp = np.cumsum(1.0 - y_sorted)
    # evaluate only at distinct-threshold boundaries (ties grouped)
    boundary = np.append(s_sorted[1:] != s_sorted[:-1], True)
    tp, fp = tp[boundary], fp[boundary]
    precision = tp / (tp + fp)
    recall = tp / n_pos
    recall_prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - recall_prev) * precision))


def picp_mpiw(intervals: IntervalSet, y) -> tuple[float, float]:
    """Coverage fraction and mean width of the interval set."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != intervals.lower.shape:
        raise DataError(f"targets shape {y.shape} != intervals {intervals.lower.shape}")
    inside = (y >= intervals.lower) & (y <= intervals.upper)
    return float(inside.mean()), float((intervals.upper - intervals.lower).mean())


def gaussian_crps(mu, sigma, y) -> float:
    """Closed-form CRPS of a Gaussian forecast, averaged over points.

    sigma * [ z (2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi) ], z = (y - mu)/sigma.
    """
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(sigma < 0):
        raise DomainError("gaussian_crps: sigma must be >= 0")
    out = np.zeros(np.broadcast(mu, sigma, y).shape)
    sig = np.broadcast_to(sigma, out.shape)
    mu_b = np.broadcast_to(mu, out.shape)
    y_b = np.broadcast_to(y, out.shape)
    pos = sig > 0
    z = (y_b[pos] - mu_b[pos]) / sig[pos]
    out[pos] = sig[pos] * (
        z * (2.0 * norm.cdf(z) - 1.0) + 2.0 * norm.pdf(z) - 1.0 / math.sqrt(math.pi)
    )
    out[~pos] = np.abs(y_b[~pos] - mu_b[~pos])  # degenerate point forecast
    return float(out.mean())


def selective_prediction_curve(point_errors, uncertainties, retention_levels):
    """Mean error on the retained set after dropping the most-uncertain points.

    At retention level rho the ceil((1 - rho) N) most-uncertain points are
    dropped; ties broken by original index (lower index dropped first).
    """
    err = np.asarray(point_errors, dtype=np.float64)
    unc = np.asarray(uncertainties, dtype=np.float64)
    if err.shape != unc.shape:
        raise DataError("errors and uncertainties must align")
    n = len(err)
    # most-uncertain first; among ties, the smaller original index first
    order = np.lexsort((np.arange(n), -unc))
    rows = []
    for rho in retention_levels:
        n_drop = math.ceil((1.0 - rho) * n)
        keep = order[n_drop:]
        rows.append({
            "retention": float(rho),
            "n_kept": int(len(keep)),
            "mean_error": float(err[keep].mean()) if len(keep) else float("nan"),
        })
    return rows


def regression_calibration_auc(mu, sigma, y, levels=None) -> float:
    """Mean |observed - nominal| central coverage over nominal levels.

    Levels default to 0.05, 0.10, ..., 0.95; the value is the area between
    the empirical calibration curve and the diagonal.
    """
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(sigma <= 0):
        raise DomainError("regression_calibration_auc: sigma must be > 0")
    if levels is None:
        levels = np.arange(0.05, 0.951, 0.05)
    dev = np.abs(y - mu) / sigma
    gaps = []
    for q in levels:
        z = norm.ppf(0.5 + q / 2.0)
        observed = float(np.mean(dev <= z))
        gaps.append(abs(observed - q))
    return float(np.mean(gaps))
