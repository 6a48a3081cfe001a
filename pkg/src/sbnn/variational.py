"""Variational posterior families, the scale-mixture prior, and KL estimation.

Posteriors are location/raw-scale pairs (mu, rho) with the positive scale
recovered through softplus. Sampling is reparameterized so gradients flow to
both parameters; the KL against the scale-mixture prior has no closed form
and is estimated from the same weight sample used by the likelihood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DomainError, ShapeError
from .rng import unit_laplace

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class ScaleMixturePrior:
    """Two-component zero-mean Gaussian mixture, sigma1 >> sigma2.

    pi = 1 degenerates to a single wide Gaussian, which is how the
    closed-form KL oracle is exercised.
    """

    pi: float = 0.5
    sigma1: float = 1.0
    sigma2: float = math.exp(-6.0)

    def __post_init__(self):
        if not 0.0 < self.pi <= 1.0:
            raise DomainError(f"prior pi must be in (0, 1], got {self.pi}")
        if not self.sigma1 > self.sigma2 > 0.0:
            raise DomainError(
                f"prior scales must satisfy sigma1 > sigma2 > 0, got "
                f"({self.sigma1}, {self.sigma2})"
            )


@dataclass
class KLEstimate:
    value: float
    n_samples: int
    std_error: float


class GaussianPosterior:
    """Mean-field Gaussian over an array of weights: N(mu, softplus(rho)^2)."""

    kind = "gaussian"

    def __init__(self, mu, rho, name=""):
        self.mu = mu if isinstance(mu, ad.Tensor) else ad.parameter(mu, f"{name}.mu")
        self.rho = rho if isinstance(rho, ad.Tensor) else ad.parameter(rho, f"{name}.rho")
        if self.mu.shape != self.rho.shape:
            raise ShapeError(
                f"posterior mu/rho shapes differ: {self.mu.shape} vs {self.rho.shape}"
            )
        self.name = name

    @property
    def shape(self):
        return self.mu.shape

    def parameters(self):
        return [self.mu, self.rho]

    def scale_values(self) -> np.ndarray:
        return np.logaddexp(0.0, self.rho.value)

    def draw_eps(self, rng) -> np.ndarray:
        return rng.standard_normal(self.shape)

    def sample(self, eps) -> ad.Tensor:
        """Reparameterized sample mu + softplus(rho) * eps on the tape."""
        eps = np.asarray(eps, dtype=np.float64)
        if eps.shape != self.mu.shape:
            raise ShapeError(f"eps shape {eps.shape} != posterior shape {self.mu.shape}")
        return ad.add(self.mu, ad.mul(ad.softplus(self.rho), ad.Tensor(eps)))

    def log_q(self, w: ad.Tensor) -> ad.Tensor:
        """Summed log density of the posterior at w, differentiable in all three."""
        sigma = ad.softplus(self.rho)
        z = ad.mul(ad.sub(w, self.mu), _reciprocal(sigma))
        quad = ad.mul(ad.square(z), -0.5)
        return ad.tsum(
            ad.add(ad.add(quad, ad.neg(ad.log(sigma))), ad.Tensor(-0.5 * LOG_2PI))
        )

    def entry_moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-entry (mean, variance) used by the covariance closed form."""
        s = self.scale_values()
        return self.mu.value.copy(), s * s


class LaplacePosterior:
    """Mean-field Laplace: location mu, scale b = softplus(rho)."""

    kind = "laplace"

    def __init__(self, mu, rho, name=""):
        self.mu = mu if isinstance(mu, ad.Tensor) else ad.parameter(mu, f"{name}.mu")
        self.rho = rho if isinstance(rho, ad.Tensor) else ad.parameter(rho, f"{name}.rho")
        if self.mu.shape != self.rho.shape:
            raise ShapeError(
                f"posterior mu/rho shapes differ: {self.mu.shape} vs {self.rho.shape}"
            )
        self.name = name

    @property
    def shape(self):
        return self.mu.shape

    def parameters(self):
        return [self.mu, self.rho]

    def scale_values(self) -> np.ndarray:
        return np.logaddexp(0.0, self.rho.value)

    def draw_eps(self, rng) -> np.ndarray:
        return unit_laplace(rng, self.shape)

    def sample(self, eps) -> ad.Tensor:
        eps = np.asarray(eps, dtype=np.float64)
        if eps.shape != self.mu.shape:
            raise ShapeError(f"eps shape {eps.shape} != posterior shape {self.mu.shape}")
        return ad.add(self.mu, ad.mul(ad.softplus(self.rho), ad.Tensor(eps)))

    def log_q(self, w: ad.Tensor) -> ad.Tensor:
        b = ad.softplus(self.rho)
        dev = ad.mul(ad.absolute(ad.sub(w, self.mu)), _reciprocal(b))
        return ad.tsum(
            ad.add(ad.neg(dev), ad.neg(ad.log(ad.mul(b, 2.0))))
        )

    def entry_moments(self) -> tuple[np.ndarray, np.ndarray]:
        b = self.scale_values()
        return self.mu.value.copy(), 2.0 * b * b


def _reciprocal(t: ad.Tensor) -> ad.Tensor:
    return ad.exp(ad.neg(ad.log(t)))


def sample_reparam(post, eps) -> ad.Tensor:
    """Location-scale reparameterized draw: mu + scale o eps."""
    return post.sample(eps)


def log_prior_density(w: ad.Tensor, prior: ScaleMixturePrior) -> ad.Tensor:
    """Summed log scale-mixture density at w, via log-sum-exp.

    The narrow component (sigma2 = e^-6) underflows a naive evaluation for
    |w| beyond a few hundredths, so each component is kept in log space.
    """
    w = ad.as_tensor(w)
    c1 = math.log(prior.pi) - math.log(prior.sigma1) - 0.5 * LOG_2PI
    quad1 = ad.mul(ad.square(w), -0.5 / prior.sigma1**2)
    comp1 = ad.add(quad1, ad.Tensor(np.full(w.shape, c1)))
    if prior.pi == 1.0:
        return ad.tsum(comp1)
    c2 = math.log1p(-prior.pi) - math.log(prior.sigma2) - 0.5 * LOG_2PI
    quad2 = ad.mul(ad.square(w), -0.5 / prior.sigma2**2)
    comp2 = ad.add(quad2, ad.Tensor(np.full(w.shape, c2)))
    return ad.tsum(ad.logaddexp(comp1, comp2))


def kl_log_ratio(post, prior: ScaleMixturePrior, eps) -> ad.Tensor:
    """One-sample KL integrand log q(w) - log p(w) on the tape.

    This is the training-path estimator: the sample w is shared with the
    likelihood term (common random numbers, one draw per step).
    """
    w = post.sample(eps)
    return ad.sub(post.log_q(w), log_prior_density(w, prior))


def log_prior_density_np(w: np.ndarray, prior: ScaleMixturePrior) -> np.ndarray:
    """Elementwise log mixture density, plain numpy (no tape)."""
    w = np.asarray(w, dtype=np.float64)
    c1 = math.log(prior.pi) - math.log(prior.sigma1) - 0.5 * LOG_2PI
    comp1 = c1 - 0.5 * (w / prior.sigma1) ** 2
    if prior.pi == 1.0:
        return comp1
    c2 = math.log1p(-prior.pi) - math.log(prior.sigma2) - 0.5 * LOG_2PI
    comp2 = c2 - 0.5 * (w / prior.sigma2) ** 2
    return np.logaddexp(comp1, comp2)


def mc_kl(post, prior: ScaleMixturePrior, n_samples: int, rng) -> KLEstimate:
    """Monte-Carlo KL(q || p) with a standard error over n_samples draws.

    Vectorized over samples; the S=1 tape-path estimator used during
    training is kl_log_ratio, which computes the identical integrand.
    """
    if n_samples < 1:
        raise DomainError(f"mc_kl needs n_samples >= 1, got {n_samples}")
    mu = post.mu.value.ravel()
    scale = post.scale_values().ravel()
    if post.kind == "gaussian":
        eps = rng.standard_normal((n_samples, mu.size))
        w = mu + scale * eps
        log_q = np.sum(
            -0.5 * LOG_2PI - np.log(scale) - 0.5 * ((w - mu) / scale) ** 2, axis=1
        )
    else:
        eps = unit_laplace(rng, (n_samples, mu.size))
        w = mu + scale * eps
        log_q = np.sum(-np.log(2.0 * scale) - np.abs(w - mu) / scale, axis=1)
    log_p = np.sum(log_prior_density_np(w, prior), axis=1)
    draws = log_q - log_p
    se = float(draws.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
    return KLEstimate(value=float(draws.mean()), n_samples=n_samples, std_error=se)


def closed_form_gaussian_kl(mu, sigma, prior_sigma: float) -> float:
    """Exact KL( N(mu, sigma^2) || N(0, prior_sigma^2) ), summed over entries.

    Validation oracle for mc_kl in the pi = 1 degenerate-prior case.
    """
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0) or prior_sigma <= 0:
        raise DomainError("closed_form_gaussian_kl: scales must be positive")
    term = (
        np.log(prior_sigma / sigma)
        + (sigma**2 + mu**2) / (2.0 * prior_sigma**2)
        - 0.5
    )
    return float(np.sum(term))
