"""Variance-matching initialization of factor posteriors and SVD warm starts.

The factor means are drawn so that Var((mu_A mu_B^T)_ij) reproduces the
dense reference variance sigma_W^2 (condition r * v_A * v_B = sigma_W^2,
split symmetrically), and the raw scales start at a fixed fraction eta of
the mean scale. Warm starts split singular values symmetrically across the
factors so mu_A mu_B^T equals the best rank-r approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, NumericError


@dataclass
class InitSpec:
    scheme: str = "glorot"          # glorot | he
    family: str = "gaussian"        # gaussian | uniform
    eta: float = 0.1                # scale fraction sigma = eta * s
    damping: float = 1.0            # plain multiplier on the matched mean scale
    rho_override: float | None = None   # fixed raw scale instead of eta * s

    def __post_init__(self):
        if self.scheme not in ("glorot", "he"):
            raise ConfigError(f"unknown init scheme: {self.scheme!r}")
        if self.family not in ("gaussian", "uniform"):
            raise ConfigError(f"unknown init family: {self.family!r}")
        if not 0.0 < self.eta < 1.0:
            raise DomainError(f"eta must be in (0, 1), got {self.eta}")
        if self.damping <= 0.0:
            raise DomainError(f"damping must be positive, got {self.damping}")


def reference_variance(fan_in: int, fan_out: int, scheme: str) -> float:
    """Dense-layer weight variance that preserves activation variance."""
    if fan_in < 1 or fan_out < 1:
        raise DomainError(f"fan dims must be >= 1, got ({fan_in}, {fan_out})")
    if scheme == "glorot":
        return 2.0 / (fan_in + fan_out)
    if scheme == "he":
        return 2.0 / fan_in
    raise ConfigError(f"unknown init scheme: {scheme!r}")


def matched_gaussian_std(sigma_w_sq: float, rank: int) -> float:
    """Symmetric factor-mean std: s = (sigma_W^2 / r)^(1/4)."""
    if sigma_w_sq <= 0 or rank < 1:
        raise DomainError(f"need sigma_w_sq > 0 and rank >= 1, got ({sigma_w_sq}, {rank})")
    return (sigma_w_sq / rank) ** 0.25


def matched_uniform_limit(sigma_w_sq: float, rank: int) -> float:
    """Uniform(-a, a) limit with the same matched variance: a = sqrt(3) * s."""
    return math.sqrt(3.0) * matched_gaussian_std(sigma_w_sq, rank)


def initial_rho(s: float, eta: float) -> float:
    """Raw scale whose softplus equals eta * s (inverse softplus).

    For very small targets exp underflows expm1 precision, so the log
    asymptote softplus^-1(y) ~ log(y) takes over.
    """
    target = eta * s
    if target <= 0:
        raise DomainError(f"target scale must be positive, got {target}")
    if target < 1e-10:
        return math.log(target)
    return math.log(math.expm1(target))


def svd_warm_start(w_full: np.ndarray, rank: int):
    """Factor means (mu_A, mu_B) with mu_A mu_B^T = best rank-r approximation.

    Singular values split symmetrically: mu_A = U_r sqrt(S_r),
    mu_B = V_r sqrt(S_r). Sign convention: the largest-magnitude entry of
    each left singular vector is forced non-negative so warm starts are
    reproducible across platforms.
    """
    w = np.asarray(w_full, dtype=np.float64)
    m, n = w.shape
    if rank < 1 or rank > min(m, n):
        raise DomainError(f"rank {rank} out of range for shape {w.shape}")
    try:
        u, s, vt = np.linalg.svd(w, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD failed: {exc}") from exc
    for k in range(rank):
        pivot = np.argmax(np.abs(u[:, k]))
        if u[pivot, k] < 0:
            u[:, k] = -u[:, k]
            vt[k, :] = -vt[k, :]
    root = np.sqrt(s[:rank])
    mu_a = u[:, :rank] * root
    mu_b = vt[:rank, :].T * root
    return mu_a, mu_b


def spectral_project(factor: np.ndarray, c_max: float) -> np.ndarray:
    """Rescale into the spectral-norm ball: A <- min(1, C / ||A||_2) A."""
    if c_max <= 0:
        raise DomainError(f"spectral bound must be positive, got {c_max}")
    a = np.asarray(factor, dtype=np.float64)
    norm = np.linalg.norm(a, 2)
    if norm <= c_max:
        return a.copy()
    return a * (c_max / norm)


def draw_factor_means(rng, shape, sigma_w_sq: float, rank: int, spec: InitSpec):
    """Random factor means at the variance-matched scale (damped)."""
    if spec.family == "gaussian":
        s = matched_gaussian_std(sigma_w_sq, rank) * spec.damping
        return rng.standard_normal(shape) * s
    a = matched_uniform_limit(sigma_w_sq, rank) * spec.damping
    return rng.uniform(-a, a, shape)


def initialize_model(model, spec: InitSpec, rng):
    """In-place init of every layer's posteriors per the variance-matching rule.

    Full-rank weight posteriors draw means at the dense reference std
    directly; low-rank factors use the symmetric matched scale. Raw scales
    start at softplus^-1(eta * mean scale) unless rho_override pins them.
    """
    for layer in _iter_linear_layers(model):
        fan_in, fan_out = layer.m, layer.n
        sigma_w_sq = reference_variance(fan_in, fan_out, spec.scheme)
        if layer.family == "low_rank":
            for post in (layer.a_post, layer.b_post):
                post.mu.value[...] = draw_factor_means(
                    rng, post.shape, sigma_w_sq, layer.rank, spec
                )
                s = matched_gaussian_std(sigma_w_sq, layer.rank) * spec.damping
                post.rho.value[...] = (
                    spec.rho_override if spec.rho_override is not None
                    else initial_rho(s, spec.eta)
                )
        elif layer.family == "full_rank":
            s = math.sqrt(sigma_w_sq) * spec.damping
            if spec.family == "gaussian":
                layer.weight_post.mu.value[...] = rng.standard_normal((fan_in, fan_out)) * s
            else:
                limit = math.sqrt(3.0) * s
                layer.weight_post.mu.value[...] = rng.uniform(-limit, limit, (fan_in, fan_out))
            layer.weight_post.rho.value[...] = (
                spec.rho_override if spec.rho_override is not None
                else initial_rho(s, spec.eta)
            )
        elif layer.family == "rank1":
            s = math.sqrt(sigma_w_sq) * spec.damping
            if spec.family == "gaussian":
                layer.w0.value[...] = rng.standard_normal((fan_in, fan_out)) * s
            else:
                limit = math.sqrt(3.0) * s
                layer.w0.value[...] = rng.uniform(-limit, limit, (fan_in, fan_out))
            for post in (layer.r_post, layer.s_post):
                post.mu.value[...] = 0.0
                post.rho.value[...] = (
                    spec.rho_override if spec.rho_override is not None else -5.0
                )
        elif layer.family == "dense":
            s = math.sqrt(sigma_w_sq) * spec.damping
            if spec.family == "gaussian":
                layer.weight.value[...] = rng.standard_normal((fan_in, fan_out)) * s
            else:
                limit = math.sqrt(3.0) * s
                layer.weight.value[...] = rng.uniform(-limit, limit, (fan_in, fan_out))
    _reapply_forget_bias(model)
    return model


def uniform_range_init(model, rng, mu_limit=0.2, rho_low=-5.0, rho_high=-4.0):
    """Mean-field style init: mu ~ U(-limit, limit), rho ~ U(low, high).

    Applies to every posterior in the model (weights and biases alike);
    deterministic parameters are left untouched.
    """
    for layer in _iter_linear_layers(model):
        posts = list(getattr(layer, "_posteriors", lambda: [])())
        if getattr(layer, "bias_mode", None) == "variational":
            posts.append(("bias", layer.bias_post))
        for _, post in posts:
            post.mu.value[...] = rng.uniform(-mu_limit, mu_limit, post.shape)
            post.rho.value[...] = rng.uniform(rho_low, rho_high, post.shape)
    _reapply_forget_bias(model)
    return model


def apply_init_config(model, cfg: dict, rng):
    """Dispatch on the config's init kind."""
    kind = cfg.get("kind", "principled")
    if kind == "principled":
        spec = InitSpec(
            scheme=cfg.get("scheme", "glorot"),
            family=cfg.get("family", "gaussian"),
            eta=cfg.get("eta", 0.1),
            damping=cfg.get("damping", 1.0),
            rho_override=cfg.get("rho_override"),
        )
        return initialize_model(model, spec, rng)
    if kind == "uniform_range":
        return uniform_range_init(
            model, rng,
            mu_limit=cfg.get("mu_limit", 0.2),
            rho_low=cfg.get("rho_low", -5.0),
            rho_high=cfg.get("rho_high", -4.0),
        )
    raise ConfigError(f"unknown init kind: {kind!r}")


def warm_start_low_rank(layer, w_pretrained: np.ndarray, spec: InitSpec):
    """SVD warm start of one low-rank layer from a pretrained dense matrix."""
    mu_a, mu_b = svd_warm_start(w_pretrained, layer.rank)
    layer.a_post.mu.value[...] = mu_a
    layer.b_post.mu.value[...] = mu_b
    sigma_w_sq = reference_variance(layer.m, layer.n, spec.scheme)
    s = matched_gaussian_std(sigma_w_sq, layer.rank) * spec.damping
    rho = spec.rho_override if spec.rho_override is not None else initial_rho(s, spec.eta)
    layer.a_post.rho.value[...] = rho
    layer.b_post.rho.value[...] = rho
    return layer


def _iter_linear_layers(model):
    for attr in ("layers",):
        if hasattr(model, attr):
            yield from getattr(model, attr)
            return
    # LSTM model: gate projections of each cell plus the head
    for cell in model.cells:
        yield cell.x_layer
        yield cell.h_layer
    yield model.head


def _reapply_forget_bias(model):
    if hasattr(model, "cells"):
        for cell in model.cells:
            cell._set_forget_bias(1.0)
