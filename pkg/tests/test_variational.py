"""Posterior sampling, the scale-mixture prior, and MC-KL behavior."""

import math

import numpy as np
import pytest

from sbnn import autodiff as ad
from sbnn import variational as vr
from sbnn.errors import DomainError, ShapeError
from sbnn.rng import stream

from conftest import finite_difference_grad, max_relative_error


def softplus_inv(y):
    return float(np.log(np.expm1(y)))


class TestSampleReparam:
    def test_zero_eps_returns_mu(self):
        post = vr.GaussianPosterior(np.zeros(3), np.full(3, softplus_inv(1.0)))
        out = vr.sample_reparam(post, np.zeros(3))
        np.testing.assert_allclose(out.value, 0.0, atol=1e-15)

    def test_linearity(self):
        post = vr.GaussianPosterior(np.array([2.0]), np.array([softplus_inv(0.5)]))
        out = vr.sample_reparam(post, np.array([-2.0]))
        assert out.value[0] == pytest.approx(1.0, rel=1e-12)

    def test_eps_shape_mismatch(self):
        post = vr.GaussianPosterior(np.zeros(3), np.zeros(3))
        with pytest.raises(ShapeError):
            vr.sample_reparam(post, np.zeros(4))

    def test_empirical_moments_gaussian(self):
        # n i.i.d. entries with shared (mu, sigma) stand in for n repeated draws
        mu, sigma, n = 0.7, 0.3, 100_000
        post = vr.GaussianPosterior(
            np.full(n, mu), np.full(n, softplus_inv(sigma))
        )
        rng = stream(11, "moments")
        draws = vr.sample_reparam(post, post.draw_eps(rng)).value
        assert abs(draws.mean() - mu) <= 3 * sigma / math.sqrt(n)
        se_std = sigma / math.sqrt(2 * (n - 1))
        assert abs(draws.std(ddof=1) - sigma) <= 3 * se_std

    def test_empirical_moments_laplace(self):
        mu, b, n = -0.2, 0.4, 100_000
        post = vr.LaplacePosterior(np.full(n, mu), np.full(n, softplus_inv(b)))
        rng = stream(12, "moments")
        draws = vr.sample_reparam(post, post.draw_eps(rng)).value
        true_std = b * math.sqrt(2.0)
        assert abs(draws.mean() - mu) <= 3 * true_std / math.sqrt(n)
        # Laplace variance 2 b^2; allow 4 sigma on the heavier-tailed std estimate
        assert abs(draws.std(ddof=1) - true_std) <= 4 * true_std / math.sqrt(n)


class TestLogPriorDensity:
    def test_mixture_value_at_zero(self):
        # log(0.5 phi(0;1) + 0.5 phi(0;e^-6)) evaluated with mpmath
        prior = vr.ScaleMixturePrior(pi=0.5, sigma1=1.0, sigma2=math.exp(-6.0))
        out = vr.log_prior_density(ad.Tensor([0.0]), prior)
        assert out.item() == pytest.approx(4.390389971373112, rel=1e-10)

    def test_pi_one_is_single_gaussian(self):
        prior = vr.ScaleMixturePrior(pi=1.0, sigma1=1.0, sigma2=1e-3)
        out = vr.log_prior_density(ad.Tensor([0.0]), prior)
        assert out.item() == pytest.approx(-0.9189385332046727, rel=1e-12)

    def test_huge_weight_no_overflow(self):
        prior = vr.ScaleMixturePrior()
        out = vr.log_prior_density(ad.Tensor([1e6]), prior)
        assert np.isfinite(out.item())
        assert out.item() < -1e11

    def test_maximal_at_zero(self):
        prior = vr.ScaleMixturePrior()
        at_zero = vr.log_prior_density(ad.Tensor([0.0]), prior).item()
        for w in np.linspace(-2, 2, 41):
            if w != 0.0:
                assert vr.log_prior_density(ad.Tensor([w]), prior).item() < at_zero


class TestMcKL:
    def test_identical_distributions_concentrate_at_zero(self):
        post = vr.GaussianPosterior(np.zeros(4), np.full(4, softplus_inv(1.0)))
        prior = vr.ScaleMixturePrior(pi=1.0, sigma1=1.0, sigma2=1e-4)
        est = vr.mc_kl(post, prior, 10_000, stream(21, "kl0"))
        assert abs(est.value) <= 3 * est.std_error

    @pytest.mark.parametrize(
        "mu,sigma,expected",
        [
            (1.0, 1.0, 0.5),
            (0.0, 0.5, 0.31814718055994531),  # ln 2 + 0.125 - 0.5
        ],
    )
    def test_matches_gaussian_closed_form(self, mu, sigma, expected):
        post = vr.GaussianPosterior(np.array([mu]), np.array([softplus_inv(sigma)]))
        prior = vr.ScaleMixturePrior(pi=1.0, sigma1=1.0, sigma2=1e-4)
        est = vr.mc_kl(post, prior, 100_000, stream(22, f"kl:{mu}:{sigma}"))
        assert abs(est.value - expected) <= 3 * est.std_error
        assert est.value == pytest.approx(
            vr.closed_form_gaussian_kl([mu], [sigma], 1.0), abs=4 * est.std_error
        )

    def test_requires_at_least_one_sample(self):
        post = vr.GaussianPosterior(np.zeros(1), np.zeros(1))
        with pytest.raises(DomainError):
            vr.mc_kl(post, vr.ScaleMixturePrior(), 0, stream(0, "x"))

    @pytest.mark.parametrize("family", ["gaussian", "laplace"])
    def test_single_sample_gradients_match_fd(self, family):
        rng = np.random.default_rng(3)
        mu0 = rng.uniform(-1, 1, (2, 3))
        rho0 = rng.uniform(-3, -1, (2, 3))
        cls = vr.GaussianPosterior if family == "gaussian" else vr.LaplacePosterior
        eps = cls(mu0, rho0).draw_eps(np.random.default_rng(4))
        prior = vr.ScaleMixturePrior()

        def f(p):
            post = cls(p["mu"].copy(), p["rho"].copy())
            return vr.kl_log_ratio(post, prior, eps).item()

        post = cls(mu0, rho0)
        grads = ad.backward(vr.kl_log_ratio(post, prior, eps))
        numeric = finite_difference_grad(f, {"mu": mu0, "rho": rho0})
        analytic = {"mu": grads[post.mu], "rho": grads[post.rho]}
        assert max_relative_error(analytic, numeric) <= 1e-5


class TestClosedFormKL:
    def test_equal_distributions(self):
        assert vr.closed_form_gaussian_kl([0.0], [1.0], 1.0) == 0.0

    def test_unit_shift(self):
        assert vr.closed_form_gaussian_kl([1.0], [1.0], 1.0) == pytest.approx(0.5)

    def test_wide_posterior(self):
        # -ln 2 + 2 - 1/2
        assert vr.closed_form_gaussian_kl([0.0], [2.0], 1.0) == pytest.approx(
            0.8068528194400547, rel=1e-12
        )

    def test_rejects_nonpositive_scale(self):
        with pytest.raises(DomainError):
            vr.closed_form_gaussian_kl([0.0], [0.0], 1.0)
        with pytest.raises(DomainError):
            vr.closed_form_gaussian_kl([0.0], [1.0], -1.0)


class TestPriorValidation:
    def test_pi_range(self):
        with pytest.raises(DomainError):
            vr.ScaleMixturePrior(pi=0.0)
        with pytest.raises(DomainError):
            vr.ScaleMixturePrior(pi=1.5)

    def test_scale_ordering(self):
        with pytest.raises(DomainError):
            vr.ScaleMixturePrior(sigma1=0.1, sigma2=1.0)
