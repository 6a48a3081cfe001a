"""Monte-Carlo posterior predictive inference.

S independent weight samples per input batch; classification averages
per-sample probabilities and decomposes predictive entropy into aleatoric
and epistemic (mutual information) parts, regression reports the sample
mean and variance. Sample fan-out across threads is capped by SBNN_THREADS
and reduces in fixed sample-index order either way.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .modelio import load_model_dict, model_to_dict
from .rng import substreams


@dataclass
class PredictiveSummary:
    task: str                       # "binary" | "multiclass" | "regression"
    mean_prediction: np.ndarray     # probabilities, or regression means
    per_sample_outputs: np.ndarray  # (S, ...) raw per-draw outputs
    n_samples: int
    epistemic_variance: np.ndarray | None = None
    entropy_of_mean: np.ndarray | None = None
    mean_entropy: np.ndarray | None = None
    mutual_information: np.ndarray | None = None


def _entropy_rows(p: np.ndarray) -> np.ndarray:
    """Shannon entropy in nats per row, with 0 log 0 = 0."""
    q = np.clip(p, 0.0, 1.0)
    terms = np.where(q > 0.0, -q * np.log(np.where(q > 0.0, q, 1.0)), 0.0)
    return terms.sum(axis=-1)


def task_of(model) -> str:
    if model.loss_kind == "softmax_ce":
        return "multiclass"
    if model.loss_kind == "binary_ce":
        return "binary"
    return "regression"


def _one_sample(model, x, rng):
    out, _ = model.forward_sample(x, rng)
    value = out.value
    if model.loss_kind == "softmax_ce":
        z = value - value.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)
    if model.loss_kind == "binary_ce":
        return value[:, 0] if value.ndim == 2 else value
    return value[:, 0] if value.ndim == 2 and value.shape[1] == 1 else value


def mc_predict(model, inputs, n_samples: int, rng) -> PredictiveSummary:
    """Posterior predictive summary from n_samples weight draws."""
    if n_samples < 1:
        raise DomainError(f"mc_predict needs n_samples >= 1, got {n_samples}")
    x = np.asarray(inputs, dtype=np.float64)
    streams = substreams(rng, n_samples)
    workers = int(os.environ.get("SBNN_THREADS", "1") or "1")
    if workers > 1:
        draws = _fanout(model, x, streams, workers)
    else:
        draws = [_one_sample(model, x, rs) for rs in streams]
    samples = np.stack(draws, axis=0)
    task = task_of(model)

    if task == "regression":
        mean = samples.mean(axis=0)
        var = (
            samples.var(axis=0, ddof=1) if n_samples > 1 else np.zeros_like(mean)
        )
        return PredictiveSummary(
            task=task, mean_prediction=mean, per_sample_outputs=samples,
            n_samples=n_samples, epistemic_variance=var,
        )

    if task == "binary":
        two_col = np.stack([1.0 - samples, samples], axis=-1)  # (S, N, 2)
    else:
        two_col = samples
    mean_probs = two_col.mean(axis=0)
    h_mean = _entropy_rows(mean_probs)
    h_each = _entropy_rows(two_col).mean(axis=0)
    mi = h_mean - h_each
    return PredictiveSummary(
        task=task,
        mean_prediction=samples.mean(axis=0) if task == "binary" else mean_probs,
        per_sample_outputs=samples,
        n_samples=n_samples,
        entropy_of_mean=h_mean,
        mean_entropy=h_each,
        mutual_information=mi,
    )


def _fanout(model, x, streams, workers):
    """Thread fan-out with worker-local model clones (LSTM caches mutate)."""
    snapshot = model_to_dict(model, getattr(model, "_config", None) or {})
    if not snapshot["config"]:
        # no config attached: fall back to serial evaluation
        return [_one_sample(model, x, rs) for rs in streams]

    def run(rs):
        clone = load_model_dict(snapshot)
        return _one_sample(clone, x, rs)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, streams))
