import math

import pytest

from core.asymptotics import (
    convergence_harness,
    copies_at,
    limit_fidelity,
    rate_constants,
    rate_curve_for,
    second_order_L,
    second_order_rate,
)
from core.conversion_engine import max_convertible_M
from core.distributions import FiniteDistribution, entropy, normalize_and_sort, varentropy
from core.exceptions import DomainError
from core.normal_math import phi_quantile
from core.rayleigh_normal import z_cdf, z_quantile

U2 = FiniteDistribution.uniform(2)


def binary(p):
    return normalize_and_sort([p, 1 - p])


class TestRateConstants:
    def test_clone_pair(self):
        P = binary(0.6)
        constants = rate_constants(P, P)
        assert constants.C == pytest.approx(1.0)
        assert constants.D == pytest.approx(entropy(P) / math.sqrt(varentropy(P)))

    def test_uniform_target(self):
        P = binary(0.75)
        constants = rate_constants(P, U2)
        assert constants.C == 0.0
        assert constants.D == pytest.approx(1 / math.sqrt(varentropy(P)))
        assert constants.q_uniform

    def test_uniform_source_has_no_D(self):
        constants = rate_constants(U2, binary(0.9))
        assert constants.D is None
        assert constants.p_uniform

    def test_direct_evaluation(self):
        P, Q = binary(0.75), normalize_and_sort([0.5, 0.3, 0.2])
        constants = rate_constants(P, Q)
        h_p, h_q, v_p, v_q = entropy(P), entropy(Q), varentropy(P), varentropy(Q)
        assert constants.D == pytest.approx(h_q / math.sqrt(v_p))
        assert constants.C == pytest.approx((h_p / v_p) / (h_q / v_q))

    def test_reciprocal(self, random_distribution):
        P, Q = random_distribution(3), random_distribution(4)
        assert rate_constants(P, Q).C * rate_constants(Q, P).C == pytest.approx(1.0)


class TestSecondOrder:
    def test_cloning(self):
        P = binary(0.6)
        n = 10_000
        expected = n + math.sqrt(varentropy(P)) / entropy(P) * math.sqrt(n)
        assert second_order_L(P, P, math.exp(-1 / 8), n) == pytest.approx(expected, rel=1e-12)
        assert second_order_rate(P, P, 0.5).branch == "clone"

    def test_concentration(self):
        P = binary(0.75)
        n = 400
        expected = entropy(P) * n + math.sqrt(varentropy(P)) * phi_quantile(0.75) * math.sqrt(n)
        assert second_order_L(P, U2, 0.5, n) == pytest.approx(expected, rel=1e-10)
        assert second_order_rate(P, U2, 0.5).branch == "concentration"

    def test_dilution(self):
        Q = binary(0.9)
        term = second_order_rate(U2, Q, 0.9)
        h_q, v_q = entropy(Q), varentropy(Q)
        assert term.branch == "dilution"
        assert term.first_order == pytest.approx(1 / h_q)
        assert term.coefficient == pytest.approx(math.sqrt(v_q / h_q**3) * phi_quantile(1 - 0.81))

    def test_uniform_pairs(self):
        assert second_order_L(U2, U2, 0.5, 10) == 10.0
        term = second_order_rate(U2, FiniteDistribution.uniform(4), 0.5)
        assert term.branch == "uniform_first_order"
        assert term.first_order == pytest.approx(0.5)
        assert term.coefficient == 0.0

    def test_general_matches_quantile(self):
        P, Q = binary(0.6), binary(0.8)
        constants = rate_constants(P, Q)
        term = second_order_rate(P, Q, 0.7)
        assert term.branch == "general"
        assert term.coefficient == pytest.approx(z_quantile(1 - 0.49, constants.C) / constants.D)

    @pytest.mark.parametrize("nu", [0.2, 0.5, 0.9])
    def test_swapping_the_pair(self, nu):
        P, Q = binary(0.6), normalize_and_sort([0.5, 0.3, 0.2])
        forward, backward = rate_constants(P, Q), rate_constants(Q, P)
        p = 1 - nu * nu
        lhs = z_quantile(p, forward.C) / forward.D
        rhs = (forward.H_P / forward.H_Q) ** 1.5 * z_quantile(p, backward.C) / backward.D
        assert lhs == pytest.approx(rhs, abs=1e-6)

    def test_general_branch_tends_to_cloning(self):
        P, Q = binary(0.6), binary(0.6 + 2e-5)
        constants = rate_constants(P, Q)
        assert 1e-6 < abs(constants.C - 1) < 1e-3
        general = second_order_rate(P, Q, 0.5).coefficient
        clone = second_order_rate(P, P, 0.5).coefficient
        assert general == pytest.approx(clone, rel=1e-3)

    def test_rate_curve(self):
        P, Q = binary(0.6), binary(0.8)
        curve = rate_curve_for(P, Q, [0.2, 0.5, 0.8])
        assert [nu for nu, _ in curve] == [0.2, 0.5, 0.8]
        rates = [rate for _, rate in curve]
        assert all(b < a for a, b in zip(rates, rates[1:]))

    @pytest.mark.parametrize("nu", [0.0, 1.0])
    def test_accuracy_domain(self, nu):
        with pytest.raises(DomainError):
            second_order_rate(U2, binary(0.7), nu)


class TestLimitFidelity:
    def test_tails(self):
        P, Q = binary(0.6), binary(0.8)
        assert limit_fidelity(P, Q, -50.0) == pytest.approx(1.0, abs=1e-6)
        assert limit_fidelity(P, Q, 50.0) == pytest.approx(0.0, abs=1e-6)

    def test_cloning_value(self):
        P = binary(0.6)
        d = rate_constants(P, P).D
        assert limit_fidelity(P, P, 1 / d) == pytest.approx(math.exp(-1 / 8), abs=1e-10)
        assert limit_fidelity(P, P, 0.0) == 1.0

    def test_decreasing(self):
        P, Q = binary(0.7), normalize_and_sort([0.5, 0.3, 0.2])
        values = [limit_fidelity(P, Q, b / 4) for b in range(-4, 5)]
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_general_formula(self):
        P, Q = binary(0.6), binary(0.8)
        constants = rate_constants(P, Q)
        assert limit_fidelity(P, Q, 0.3) == pytest.approx(math.sqrt(1 - z_cdf(0.3 * constants.D, constants.C)))

    def test_uniform_step(self):
        assert limit_fidelity(U2, U2, -0.1) == 1.0
        assert limit_fidelity(U2, U2, 0.1) == 0.0


class TestConvergence:
    def test_uniform_pair(self):
        rows = convergence_harness(U2, U2, -0.5, [16, 64], max_workers=2)
        assert [row.n for row in rows] == [16, 64]
        assert [row.L_used for row in rows] == [14, 60]
        assert all(row.exact_fidelity == pytest.approx(1.0) for row in rows)
        assert all(row.gap == pytest.approx(0.0, abs=1e-12) for row in rows)

    def test_copies_at(self):
        P = binary(0.6)
        assert copies_at(P, P, 0.5, 100) == 105
        assert copies_at(P, P, -100.0, 4) == 1

    def test_grid_must_be_positive(self):
        with pytest.raises(DomainError):
            convergence_harness(U2, U2, 0.0, [0, 4])

    @pytest.mark.slow
    def test_cloning_gap_shrinks(self):
        P = binary(0.6)
        gaps = [row.gap for row in convergence_harness(P, P, 0.5, [100, 400, 1600, 6400])]
        assert all(later < earlier for earlier, later in zip(gaps, gaps[1:]))
        assert gaps[-1] < 0.005

    @pytest.mark.slow
    def test_cloning_below_rate_converges(self):
        P = binary(0.6)
        rows = convergence_harness(P, P, -0.5, [100, 400, 1600, 6400])
        assert rows[-1].gap < 0.05
        assert rows[-1].gap <= rows[0].gap + 0.01

    @pytest.mark.slow
    def test_concentration_converges(self):
        rows = convergence_harness(binary(0.6), U2, 0.2, [400, 6400])
        assert rows[-1].gap < 0.05

    @pytest.mark.slow
    def test_dilution_gap_shrinks_like_log_n_over_root_n(self):
        n_grid = [100, 400, 1600, 6400]
        gaps = [row.gap for row in convergence_harness(U2, binary(0.6), 0.2, n_grid)]
        assert all(later < earlier for earlier, later in zip(gaps, gaps[1:]))
        assert gaps[-1] < 0.1
        for n, gap in zip(n_grid, gaps):
            assert 0.6 < gap * math.sqrt(n) / math.log(n) < 0.9

    @pytest.mark.slow
    @pytest.mark.parametrize("p,q", [(0.6, 0.8), (0.7, 0.55)])
    def test_first_order_rate(self, p, q):
        P, Q = binary(p), binary(q)
        n, nu = 6400, 0.5
        copies = max_convertible_M(P, Q, n, nu)
        predicted = second_order_L(P, Q, nu, n)
        first_order = entropy(P) / entropy(Q)
        assert copies == pytest.approx(predicted, abs=5 * math.log2(n))
        assert abs(copies / n - first_order) <= abs(predicted / n - first_order) + 0.005
