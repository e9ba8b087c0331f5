import math

import numpy as np
import pytest
from scipy.stats import unitary_group

from core.asymptotics import second_order_L
from core.conversion_engine import concentration_fidelity, dilution_fidelity
from core.distributions import tensor_power_blocks
from core.exceptions import DomainError, InvalidState, ProductStateError
from core.locc import (
    clone_copies,
    empirical_replication_exponent,
    epr,
    locc_fidelity,
    locc_max_copies,
    maximally_entangled,
    replication_rate,
    schmidt,
    state_from_record,
    state_from_schmidt,
)
from core.models import StateFile
from core.normal_math import phi_quantile

PSI = state_from_schmidt([0.75, 0.25])


class TestSchmidt:
    def test_epr(self):
        state = epr()
        assert state.schmidt_sq.probs == pytest.approx((0.5, 0.5))
        assert state.S == pytest.approx(1.0)
        assert state.is_maximal

    def test_diagonal(self):
        state = schmidt(np.diag([math.sqrt(0.75), math.sqrt(0.25)]))
        assert state.schmidt_sq.probs == pytest.approx((0.75, 0.25))
        assert not state.is_maximal

    def test_renormalizes(self):
        assert schmidt([[3.0, 0.0], [0.0, 4.0]]).schmidt_sq.probs == pytest.approx((0.64, 0.36))

    def test_matches_reduced_density_matrix(self, rng):
        matrix = rng.normal(size=(2, 3)) + 1j * rng.normal(size=(2, 3))
        state = schmidt(matrix)
        normalized = matrix / np.linalg.norm(matrix)
        eigenvalues = np.sort(np.linalg.eigvalsh(normalized @ normalized.conj().T))[::-1]
        assert math.fsum(state.schmidt_sq.probs) == pytest.approx(1.0, abs=1e-12)
        assert state.schmidt_sq.probs == pytest.approx(tuple(eigenvalues), abs=1e-12)

    def test_local_unitary_invariance(self, rng):
        matrix = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        u = unitary_group.rvs(3, random_state=rng)
        w = unitary_group.rvs(3, random_state=rng)
        rotated = u @ matrix @ w.T
        assert schmidt(rotated).schmidt_sq.probs == pytest.approx(schmidt(matrix).schmidt_sq.probs, abs=1e-12)

    def test_product_state(self):
        with pytest.raises(ProductStateError):
            schmidt([[1.0, 0.0], [0.0, 0.0]])

    def test_zero_state(self):
        with pytest.raises(InvalidState):
            schmidt(np.zeros((2, 2)))

    def test_record(self):
        record = StateFile(rows=2, cols=2, re=[math.sqrt(0.75), 0, 0, math.sqrt(0.25)])
        assert state_from_record(record).schmidt_sq.probs == pytest.approx((0.75, 0.25))

    def test_maximal_dimension(self):
        assert maximally_entangled(3).schmidt_rank == 3
        with pytest.raises(InvalidState):
            maximally_entangled(1)


class TestLoccFidelity:
    def test_identity(self):
        assert locc_fidelity(PSI, PSI, 5, 5) == pytest.approx(1.0, abs=1e-12)

    def test_epr_cloning(self):
        assert locc_fidelity(epr(), epr(), 10, 12) == pytest.approx(0.5, abs=1e-12)

    def test_concentration_cross_check(self):
        source = tensor_power_blocks(PSI.schmidt_sq, 12).to_finite()
        assert locc_fidelity(PSI, epr(), 12, 8) == pytest.approx(concentration_fidelity(source, 256), abs=1e-10)

    def test_dilution_cross_check(self):
        target = tensor_power_blocks(PSI.schmidt_sq, 10).to_finite()
        assert locc_fidelity(epr(), PSI, 6, 10) == pytest.approx(dilution_fidelity(target, 64), abs=1e-10)


class TestMaxCopies:
    def test_epr(self):
        assert locc_max_copies(epr(), epr(), 0.5, 10) == 12

    def test_asymptotic_concentration(self):
        n, nu = 400, 0.6
        expected = PSI.S * n + math.sqrt(PSI.V) * float(np.sqrt(n)) * phi_quantile(1 - nu**2)
        assert locc_max_copies(PSI, epr(), nu, n, mode="asymptotic") == pytest.approx(expected, rel=1e-10)

    def test_exact_against_expansion(self):
        phi = state_from_schmidt([0.6, 0.3, 0.1])
        n, nu = 400, 0.9
        exact = locc_max_copies(PSI, phi, nu, n)
        asymptotic = second_order_L(PSI.schmidt_sq, phi.schmidt_sq, nu, n)
        assert abs(exact - asymptotic) <= 3 * n**0.45

    def test_monotone(self):
        phi = state_from_schmidt([0.6, 0.4])
        by_n = [locc_max_copies(PSI, phi, 0.7, n) for n in (20, 40, 80)]
        assert by_n == sorted(by_n)
        by_nu = [locc_max_copies(PSI, phi, nu, 40) for nu in (0.3, 0.6, 0.9)]
        assert by_nu == sorted(by_nu, reverse=True)

    def test_unknown_mode(self):
        with pytest.raises(DomainError):
            locc_max_copies(PSI, epr(), 0.5, 10, mode="fast")


class TestCloning:
    @pytest.mark.parametrize("nu", [0.3, 0.5, 0.9])
    @pytest.mark.parametrize("n", [5, 10, 50])
    def test_maximal_state_closed_form(self, nu, n):
        expected = math.floor(n + 2 * math.log2(1 / nu))
        assert clone_copies(epr(), nu, n) == expected
        assert clone_copies(epr(), nu, n, mode="asymptotic") == expected
        assert locc_max_copies(epr(), epr(), nu, n) == expected

    def test_qutrit_closed_form(self):
        assert clone_copies(maximally_entangled(3), 1 / 3, 10) == 12

    def test_asymptotic_clone(self):
        n = 10_000
        expected = n + math.sqrt(PSI.V) / PSI.S * math.sqrt(n)
        assert clone_copies(PSI, math.exp(-1 / 8), n, mode="asymptotic") == pytest.approx(expected, rel=1e-12)

    def test_accuracy_close_to_one(self):
        assert clone_copies(PSI, 1 - 1e-12, 100, mode="asymptotic") == pytest.approx(100, abs=1e-3)

    def test_exact_clone_gains_copies(self):
        copies = clone_copies(PSI, 0.5, 100)
        assert copies > 100

    def test_replication_rate(self):
        assert replication_rate(epr(), 0.5) == 0.0
        assert replication_rate(PSI, 0.5) == 0.5

    def test_regression_needs_growth(self):
        with pytest.raises(DomainError):
            empirical_replication_exponent(epr(), 0.99, [10, 20])

    @pytest.mark.slow
    def test_empirical_exponent(self):
        estimate = empirical_replication_exponent(PSI, 0.5, [100, 400, 1600, 6400])
        assert 0.4 <= estimate.exponent <= 0.6
