"""Bounds lab: EYM identities, covariance lemma vs MC oracle, PAC-Bayes and
Gaussian-complexity calculators against independently evaluated closed forms."""

import math

import numpy as np
import pytest

from sbnn import bounds as bd
from sbnn.errors import DomainError
from sbnn.rng import stream
from sbnn.variational import GaussianPosterior, LaplacePosterior


def softplus_inv(y):
    return float(np.log(np.expm1(y)))


def gaussian_post(mu, sigma, name="p"):
    mu = np.asarray(mu, dtype=float)
    rho = np.log(np.expm1(np.asarray(sigma, dtype=float)))
    return GaussianPosterior(mu, rho, name)


class TestSpectralReport:
    def test_diag_321_tails(self):
        rep = bd.spectral_report(np.diag([3.0, 2.0, 1.0]))
        assert bd.tail_energy(rep, 1) == pytest.approx(math.sqrt(5.0), rel=1e-12)
        assert bd.tail_energy(rep, 2) == pytest.approx(1.0, rel=1e-12)
        assert bd.tail_energy(rep, 3) == 0.0

    def test_diag_321_retention(self):
        rep = bd.spectral_report(np.diag([3.0, 2.0, 1.0]))
        assert rep.energy_retention[2] == pytest.approx(13.0 / 14.0, rel=1e-12)
        assert rep.energy_retention[-1] == pytest.approx(1.0, rel=1e-14)
        assert np.all(np.diff(rep.energy_retention) >= -1e-15)

    def test_exact_low_rank_product_has_tiny_tail(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(12, 4))
        b = rng.normal(size=(9, 4))
        rep = bd.spectral_report(a @ b.T)
        assert bd.tail_energy(rep, 4) <= 1e-10 * rep.singular_values[0]

    def test_singular_values_sorted(self):
        rng = np.random.default_rng(1)
        rep = bd.spectral_report(rng.normal(size=(6, 5)))
        assert np.all(np.diff(rep.singular_values) <= 0)
        assert np.all(rep.singular_values >= 0)


class TestEYM:
    def test_tail_identity(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            w = rng.normal(size=(8, 6))
            rep = bd.spectral_report(w)
            for r in (1, 2, 4):
                err = np.linalg.norm(w - bd.truncate_rank(w, r))
                assert err == pytest.approx(bd.tail_energy(rep, r), abs=1e-10)

    def test_optimality_against_random_competitors(self):
        rng = np.random.default_rng(3)
        w = rng.normal(size=(7, 5))
        r = 2
        best = np.linalg.norm(w - bd.truncate_rank(w, r))
        for _ in range(100):
            m = rng.normal(size=(7, r)) @ rng.normal(size=(r, 5))
            assert best <= np.linalg.norm(w - m) + 1e-12


class TestLossGapBound:
    def test_full_rank_gap_zero(self):
        rep = bd.spectral_report(np.diag([3.0, 2.0, 1.0]))
        assert bd.loss_gap_bound(1.0, 1.0, rep, 3) == 0.0

    def test_sqrt2_lipschitz_example(self):
        # softmax cross-entropy is sqrt(2)-Lipschitz; tail at r=2 is 1
        rep = bd.spectral_report(np.diag([3.0, 2.0, 1.0]))
        assert bd.loss_gap_bound(math.sqrt(2.0), 1.0, rep, 2) == pytest.approx(
            math.sqrt(2.0), rel=1e-12
        )

    def test_monotone_in_rank(self):
        rng = np.random.default_rng(4)
        rep = bd.spectral_report(rng.normal(size=(10, 10)))
        vals = [bd.loss_gap_bound(1.0, 1.0, rep, r) for r in range(11)]
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


class TestDecompositionBound:
    def test_zero_learning_error(self):
        rng = np.random.default_rng(5)
        w_star = rng.normal(size=(5, 4))
        learned = bd.truncate_rank(w_star, 2)
        out = bd.decomposition_bound(1.0, 1.0, learned, w_star, 2)
        assert out.learning_error == pytest.approx(0.0, abs=1e-10)

    def test_full_rank_no_bias(self):
        out = bd.decomposition_bound(1.0, 1.0, np.eye(3), np.eye(3), 3)
        assert out.rank_bias_squared_convention == 0.0
        assert out.rank_bias_sqrt_convention == 0.0

    def test_components_match_svd_oracle(self):
        rng = np.random.default_rng(6)
        learned = rng.normal(size=(6, 5))
        w_star = rng.normal(size=(6, 5))
        r = 3
        out = bd.decomposition_bound(2.0, 1.5, learned, w_star, r)
        s = np.linalg.svd(w_star, compute_uv=False)
        tail = math.sqrt(np.sum(s[r:] ** 2))
        le = np.linalg.norm(learned - bd.truncate_rank(w_star, r))
        assert out.learning_error == pytest.approx(le, abs=1e-10)
        assert out.rank_bias_sqrt_convention == pytest.approx(tail, abs=1e-10)
        assert out.rank_bias_squared_convention == pytest.approx(tail**2, abs=1e-10)
        assert out.total_sqrt_convention == pytest.approx(3.0 * (le + tail), rel=1e-12)
        assert out.total_squared_convention == pytest.approx(
            3.0 * (le + tail**2), rel=1e-12
        )


class TestInducedCovariance:
    def test_disjoint_rows_and_columns_exactly_zero(self):
        q_a = gaussian_post(np.ones((3, 2)), np.full((3, 2), 0.5))
        q_b = gaussian_post(np.ones((4, 2)), np.full((4, 2), 0.5))
        assert bd.induced_covariance(q_a, q_b, (0, 0), (1, 1)) == 0.0

    def test_variance_case_closed_form(self):
        # r=1: A ~ N(1, 0.25), B ~ N(2, 0.09) -> Var(W) = 1.25 * 4.09 - 4
        q_a = gaussian_post([[1.0]], [[0.5]])
        q_b = gaussian_post([[2.0]], [[0.3]])
        assert bd.induced_covariance(q_a, q_b, (0, 0), (0, 0)) == pytest.approx(
            1.1125, rel=1e-12
        )

    def test_shared_row_case_closed_form(self):
        # Cov(W_11, W_12) = E[A^2] mu_B1 mu_B2 - mu_A^2 mu_B1 mu_B2 = 0.5
        q_a = gaussian_post([[1.0]], [[0.5]])
        q_b = gaussian_post([[2.0], [1.0]], [[0.3], [0.2]])
        assert bd.induced_covariance(q_a, q_b, (0, 0), (0, 1)) == pytest.approx(
            0.5, rel=1e-12
        )

    def test_mc_oracle_agrees_on_both_derived_cases(self):
        q_a = gaussian_post([[1.0]], [[0.5]])
        q_b = gaussian_post([[2.0], [1.0]], [[0.3], [0.2]])
        pairs = [((0, 0), (0, 0)), ((0, 0), (0, 1))]
        results = bd.covariance_mc_oracle(q_a, q_b, pairs, 1_000_000, stream(50, "cov"))
        for pair, res in zip(pairs, results):
            closed = bd.induced_covariance(q_a, q_b, *pair)
            assert abs(res["cov"] - closed) <= 3 * res["std_error"]

    def test_deterministic_factors_zero_variance(self):
        q_a = gaussian_post(np.ones((2, 2)), np.full((2, 2), 1e-12))
        q_b = gaussian_post(np.ones((2, 2)), np.full((2, 2), 1e-12))
        res = bd.covariance_mc_oracle(
            q_a, q_b, [((0, 0), (0, 0))], 2_000, stream(51, "cov")
        )
        assert abs(res[0]["cov"]) <= 1e-20

    def test_oracle_symmetric_in_pair_order(self):
        q_a = gaussian_post([[1.0], [0.5]], [[0.5], [0.4]])
        q_b = gaussian_post([[2.0], [1.0]], [[0.3], [0.2]])
        fwd = bd.covariance_mc_oracle(
            q_a, q_b, [((0, 0), (1, 1))], 5_000, stream(52, "cov")
        )
        rev = bd.covariance_mc_oracle(
            q_a, q_b, [((1, 1), (0, 0))], 5_000, stream(52, "cov")
        )
        assert fwd[0]["cov"] == pytest.approx(rev[0]["cov"], rel=1e-12)

    @pytest.mark.parametrize("seed", range(6))
    def test_random_configurations_gaussian(self, seed):
        rng = np.random.default_rng(seed)
        m, n, r = rng.integers(2, 7), rng.integers(2, 7), rng.integers(1, 5)
        q_a = gaussian_post(rng.normal(size=(m, r)), rng.uniform(0.1, 0.6, (m, r)))
        q_b = gaussian_post(rng.normal(size=(n, r)), rng.uniform(0.1, 0.6, (n, r)))
        pairs = []
        for _ in range(3):
            pairs.append((
                (int(rng.integers(m)), int(rng.integers(n))),
                (int(rng.integers(m)), int(rng.integers(n))),
            ))
        results = bd.covariance_mc_oracle(
            q_a, q_b, pairs, 200_000, stream(seed, "covcfg")
        )
        for pair, res in zip(pairs, results):
            closed = bd.induced_covariance(q_a, q_b, *pair)
            assert abs(res["cov"] - closed) <= 3 * max(res["std_error"], 1e-12)

    def test_laplace_factors_reuse_moment_form(self):
        mu = np.array([[0.8]])
        b = np.array([[0.3]])
        q_a = LaplacePosterior(mu, np.log(np.expm1(b)), "a")
        q_b = LaplacePosterior(np.array([[1.2]]), np.log(np.expm1(np.array([[0.2]]))), "b")
        closed = bd.induced_covariance(q_a, q_b, (0, 0), (0, 0))
        res = bd.covariance_mc_oracle(
            q_a, q_b, [((0, 0), (0, 0))], 400_000, stream(53, "lap")
        )
        assert abs(res[0]["cov"] - closed) <= 3 * res[0]["std_error"]


class TestMcAllester:
    def test_large_n_kl_zero(self):
        # sqrt(ln(2 sqrt(1e6) / 0.05) / 2e6), mpmath: 0.002301807413001365
        rep = bd.mcallester_bound(0.0, 0.0, 1_000_000, 0.05)
        assert rep.components["complexity"] == pytest.approx(
            0.002301807413001365, rel=1e-10
        )

    def test_kl_100_case(self):
        # sqrt((100 + ln(2 sqrt(1e4) / 0.05)) / 2e4), mpmath: 0.07358466200238404
        rep = bd.mcallester_bound(0.0, 100.0, 10_000, 0.05)
        assert rep.components["complexity"] == pytest.approx(
            0.07358466200238404, rel=1e-10
        )

    def test_vacuous_flag(self):
        rep = bd.mcallester_bound(0.9, 100.0, 100, 0.05)
        assert rep.vacuous
        assert rep.value >= 1.0
        ok = bd.mcallester_bound(0.1, 1.0, 100_000, 0.05)
        assert not ok.vacuous

    def test_monotonicity(self):
        base = bd.mcallester_bound(0.1, 10.0, 10_000, 0.05).value
        assert bd.mcallester_bound(0.1, 20.0, 10_000, 0.05).value > base
        assert bd.mcallester_bound(0.1, 10.0, 40_000, 0.05).value < base

    def test_domain_violations(self):
        with pytest.raises(DomainError):
            bd.mcallester_bound(1.5, 0.0, 100, 0.05)
        with pytest.raises(DomainError):
            bd.mcallester_bound(0.5, -1.0, 100, 0.05)
        with pytest.raises(DomainError):
            bd.mcallester_bound(0.5, 0.0, 0, 0.05)
        with pytest.raises(DomainError):
            bd.mcallester_bound(0.5, 0.0, 100, 1.0)


class TestKLUpper:
    def test_values(self):
        assert bd.kl_upper_factorized(0.0, 100) == 0.0
        assert bd.kl_upper_factorized(0.5, 13610) == 6805.0

    def test_monotone(self):
        assert bd.kl_upper_factorized(0.6, 10) > bd.kl_upper_factorized(0.5, 10)
        assert bd.kl_upper_factorized(0.5, 11) > bd.kl_upper_factorized(0.5, 10)


class TestComplexityRatio:
    def test_boundary_equals_one(self):
        assert bd.complexity_ratio(4, 4, 2) == pytest.approx(1.0, rel=1e-12)

    def test_mimic_layer_shapes(self):
        # sqrt(15 * 172 / 5632), mpmath: 0.6768283319343916
        assert bd.complexity_ratio(44, 128, 15) == pytest.approx(
            0.6768283319343916, rel=1e-10
        )
        # sqrt(15 * 256 / 16384), mpmath: 0.4841229182759271
        assert bd.complexity_ratio(128, 128, 15) == pytest.approx(
            0.4841229182759271, rel=1e-10
        )

    def test_equivalent_form(self):
        for m, n, r in [(44, 128, 15), (30, 50, 7), (128, 128, 15)]:
            assert bd.complexity_ratio(m, n, r) == pytest.approx(
                math.sqrt(r * (1.0 / m + 1.0 / n)), abs=1e-12
            )

    def test_below_one_iff_r_small(self):
        m, n = 40, 60
        thresh = m * n / (m + n)
        assert bd.complexity_ratio(m, n, int(thresh) - 1) < 1.0

    def test_rank_out_of_range(self):
        with pytest.raises(DomainError):
            bd.complexity_ratio(4, 4, 5)


class TestGaussianComplexity:
    def test_two_layer_worked_example(self):
        # (10/100) (2 * 2 * 1 + sqrt(6)), mpmath: 0.6449489742783178
        rep = bd.gaussian_complexity_bound(
            x_frob=10.0, n_points=100, w1_frob=2.0,
            widths=(4, 3), spectral_bounds=(1.0, 1.0), ranks=(2,), c0=1.0,
        )
        assert rep.value == pytest.approx(0.6449489742783178, rel=1e-10)

    def test_scaling_all_c_by_two_quadruples_first_term(self):
        base = bd.gaussian_complexity_bound(
            10.0, 100, 2.0, (4, 3), (1.0, 1.0), (2,), 1.0
        )
        scaled = bd.gaussian_complexity_bound(
            10.0, 100, 2.0, (4, 3), (2.0, 2.0), (2,), 1.0
        )
        assert scaled.components["first_layer_term"] == pytest.approx(
            4.0 * base.components["first_layer_term"], rel=1e-12
        )
        assert scaled.value > 2.0 * base.value  # superlinear growth

    def test_single_layer_empty_sum(self):
        rep = bd.gaussian_complexity_bound(
            5.0, 50, 1.5, (9,), (2.0,), (), 1.1
        )
        assert rep.value == pytest.approx((5.0 / 50) * 1.5 * 3.0 * 1.1 * 2.0, rel=1e-12)
        assert rep.components["rank_terms"] == 0.0

    def test_monotone_in_each_c_and_xfrob(self):
        base = bd.gaussian_complexity_bound(
            10.0, 100, 2.0, (4, 3), (1.0, 1.0), (2,), 1.0
        ).value
        assert bd.gaussian_complexity_bound(
            12.0, 100, 2.0, (4, 3), (1.0, 1.0), (2,), 1.0
        ).value > base
        assert bd.gaussian_complexity_bound(
            10.0, 100, 2.0, (4, 3), (1.4, 1.0), (2,), 1.0
        ).value > base
        assert bd.gaussian_complexity_bound(
            10.0, 100, 2.0, (4, 3), (1.0, 1.4), (2,), 1.0
        ).value > base

    def test_full_generalization_bound(self):
        rep = bd.gaussian_complexity_bound(
            10.0, 100, 2.0, (4, 3), (1.0, 1.0), (2,), 1.0,
            lipschitz=1.0, delta=0.05, emp_risk=0.1,
        )
        expected = (
            0.1
            + math.sqrt(math.pi) * 0.6449489742783178
            + 3.0 * math.sqrt(math.log(40.0) / 200.0)
        )
        assert rep.components["generalization_bound"] == pytest.approx(
            expected, rel=1e-10
        )
        assert rep.vacuous  # 1.65-ish for a [0,1] loss

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            bd.gaussian_complexity_bound(10.0, 100, 2.0, (4,), (1.0, 1.0), (2,), 1.0)
        with pytest.raises(DomainError):
            bd.gaussian_complexity_bound(10.0, 100, 2.0, (4, 3), (1.0, 1.0), (), 1.0)


class TestNumericalRank:
    def test_product_rank(self):
        rng = np.random.default_rng(9)
        a = rng.normal(size=(20, 3))
        b = rng.normal(size=(15, 3))
        assert bd.numerical_rank(a @ b.T) == 3

    def test_zero_matrix(self):
        assert bd.numerical_rank(np.zeros((4, 4))) == 0
