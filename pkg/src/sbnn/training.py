"""ELBO assembly, KL annealing, Adam, and the deterministic training loop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, NumericError, ShapeError
from .rng import stream


@dataclass
class AnnealSchedule:
    warmup_epochs: int = 0
    zero_epochs: int = 0

    def __post_init__(self):
        if not self.warmup_epochs >= self.zero_epochs >= 0:
            raise ConfigError(
                f"need warmup_epochs >= zero_epochs >= 0, got "
                f"({self.warmup_epochs}, {self.zero_epochs})"
            )


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 100
    kl_weight: float = 1.0
    anneal: AnnealSchedule = field(default_factory=AnnealSchedule)
    seed: int = 0
    loss: str = "gaussian_nll"
    sigma_y: float = 0.02
    gradient_clip: float | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")


def kl_weight_for_batch_count(beta_numerator: float, n_batches: int) -> float:
    """Helper for the c / N_batches KL-scaling convention."""
    return beta_numerator / n_batches


def kl_weight_for_train_size(beta_numerator: float, n_train: int) -> float:
    """Helper for the c / N_train KL-scaling convention."""
    return beta_numerator / n_train


@dataclass
class ELBOBreakdown:
    """Negative-ELBO decomposition; total == nll + weight * kl, exactly."""

    nll_term: float
    kl_term: float
    effective_kl_weight: float
    total: float
    total_tensor: ad.Tensor | None = None


def elbo_loss(model, batch, kl_weight_now: float, rng) -> ELBOBreakdown:
    """Single-weight-sample negative ELBO on the tape.

    batch is (x, y); the data term is the mean loss over the batch and the
    KL term is the summed one-sample layer KLs, sharing the same draw.
    """
    x, y = batch
    if len(x) == 0:
        raise ConfigError("elbo_loss: empty batch")
    pred, kl = model.forward_sample(x, rng)
    nll = ad.loss_primitives(pred, y, model.loss_kind, sigma_y=model.sigma_y)
    total = ad.add(nll, ad.mul(kl, float(kl_weight_now)))
    return ELBOBreakdown(
        nll_term=nll.item(),
        kl_term=kl.item(),
        effective_kl_weight=float(kl_weight_now),
        total=total.item(),
        total_tensor=total,
    )


def kl_anneal_weight(epoch: int, kl_weight: float, anneal: AnnealSchedule) -> float:
    """0 before zero_epochs, linear ramp to kl_weight at warmup_epochs, flat after."""
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}")
    if epoch < anneal.zero_epochs:
        return 0.0
    if epoch >= anneal.warmup_epochs:
        return kl_weight
    span = anneal.warmup_epochs - anneal.zero_epochs
    return kl_weight * (epoch - anneal.zero_epochs) / span


class Adam:
    """Standard bias-corrected Adam over named parameters."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)  # (name, Tensor)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros_like(t.value) for name, t in self.params}
        self.v = {name: np.zeros_like(t.value) for name, t in self.params}

    def step(self, grads: dict):
        """grads maps Tensor -> gradient array; missing entries mean zero."""
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for name, tensor in self.params:
            g = grads.get(tensor)
            if g is None:
                continue
            g = np.asarray(g, dtype=np.float64)
            if g.shape != tensor.value.shape:
                raise ShapeError(
                    f"gradient shape {g.shape} != parameter {name} {tensor.value.shape}"
                )
            m = self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            v = self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            tensor.value -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def adam_step(params, grads, state: Adam):
    """Functional wrapper over Adam.step for a pre-built state object."""
    state.step(grads)
    return state


def clip_gradients(grads: dict, max_norm: float):
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.square(g)))
    norm = np.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * scale
    return grads


def _batches(n, batch_size, order):
    for lo in range(0, n, batch_size):
        yield order[lo:lo + batch_size]


def train(model, dataset, config: TrainConfig, validate=None):
    """Seed-deterministic mini-batch training.

    dataset carries x_train / y_train (and optional validation arrays the
    validate callback may use). Returns one history row per epoch; the loop
    aborts with a diagnostic if the loss goes non-finite. LSTM weight caches
    are cleared at every batch boundary by the model's own forward pass.
    """
    x_train = np.asarray(dataset.x_train, dtype=np.float64)
    y_train = np.asarray(dataset.y_train, dtype=np.float64)
    n = len(x_train)
    order_rng = stream(config.seed, "batch_order")
    weight_rng = stream(config.seed, "weights")
    optimizer = Adam([(k, t) for k, t in model.named_parameters()],
                     lr=config.learning_rate)
    history = []
    for epoch in range(config.epochs):
        w_now = kl_anneal_weight(epoch, config.kl_weight, config.anneal)
        order = order_rng.permutation(n)
        nll_sum = kl_sum = total_sum = 0.0
        n_batches = 0
        for batch_idx, sel in enumerate(_batches(n, config.batch_size, order)):
            breakdown = elbo_loss(model, (x_train[sel], y_train[sel]), w_now, weight_rng)
            if not np.isfinite(breakdown.total):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch {batch_idx}: "
                    f"nll={breakdown.nll_term}, kl={breakdown.kl_term}"
                )
            grads = ad.backward(breakdown.total_tensor)
            if config.gradient_clip is not None:
                grads = clip_gradients(grads, config.gradient_clip)
            optimizer.step(grads)
            nll_sum += breakdown.nll_term
            kl_sum += breakdown.kl_term
            total_sum += breakdown.total
            n_batches += 1
        row = {
            "epoch": epoch,
            "nll_term": nll_sum / n_batches,
            "kl_term": kl_sum / n_batches,
            "effective_kl_weight": w_now,
            "total": total_sum / n_batches,
        }
        if validate is not None:
            row.update(validate(model, epoch))
        history.append(row)
    return history
