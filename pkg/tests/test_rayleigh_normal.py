import math

import numpy as np
import pytest

from core.config import AppConfig
from core.exceptions import DomainError
from core.normal_math import GaussParams, density_ratio, phi_cdf, phi_sf
from core.rayleigh_normal import (
    RNParams,
    alpha_root,
    beta_root,
    candidate_fidelity,
    continuous_fidelity,
    i_term,
    normal_profile,
    optimizer_function,
    rate_curve,
    regime_of,
    variational_fidelity,
    z_cdf,
    z_quantile,
)

FOLDED_PAIRS = [1 / 8, 1 / 3, 1 / 2, 2.0, 3.0, 8.0]


def rayleigh(mu):
    return 1.0 - math.exp(-mu * mu / 4.0) if mu > 0 else 0.0


def random_params(rng, count):
    params = []
    while len(params) < count:
        v = float(math.exp(rng.uniform(math.log(0.1), math.log(10.0))))
        if abs(v - 1.0) > 0.05:
            params.append((float(rng.uniform(-3.0, 3.0)), v))
    return params


class TestITerm:
    def test_values(self):
        assert i_term(0.0, 1.0) == pytest.approx(1.0)
        assert i_term(2.0, 1.0) == pytest.approx(math.exp(-0.5))
        assert i_term(0.0, 1.0, 0.0) == pytest.approx(0.5)

    def test_partial_is_increasing(self):
        xs = np.linspace(-5, 5, 41)
        values = [i_term(0.4, 2.0, x) for x in xs]
        assert all(b >= a for a, b in zip(values, values[1:]))
        assert values[-1] <= i_term(0.4, 2.0)

    def test_needs_positive_variance(self):
        with pytest.raises(DomainError):
            i_term(0.0, 0.0)


class TestRoots:
    @pytest.mark.parametrize("mu,v", [(0.0, 0.5), (1.0, 0.25), (-1.5, 0.8), (2.0, 0.1)])
    def test_beta_solves_its_equation(self, mu, v):
        g = GaussParams(mu=mu, v=v)
        beta = beta_root(mu, v)
        assert beta < mu / (1 - v)
        assert density_ratio(beta, g) == pytest.approx(phi_sf(beta) / phi_sf(beta, g), rel=1e-9)

    @pytest.mark.parametrize("mu,v", [(0.0, 2.0), (1.0, 4.0), (-1.5, 1.25), (2.0, 10.0)])
    def test_alpha_solves_its_equation(self, mu, v):
        g = GaussParams(mu=mu, v=v)
        alpha = alpha_root(mu, v)
        assert alpha > mu / (1 - v)
        assert density_ratio(alpha, g) == pytest.approx(phi_cdf(alpha) / phi_cdf(alpha, g), rel=1e-9)

    @pytest.mark.parametrize("mu,v", [(0.3, 2.0), (-1.0, 3.0), (1.2, 5.0)])
    def test_reflection(self, mu, v):
        reflected = mu - math.sqrt(v) * beta_root(mu / math.sqrt(v), 1 / v)
        assert alpha_root(mu, v) == pytest.approx(reflected, abs=1e-8)

    def test_domains(self):
        with pytest.raises(DomainError):
            beta_root(0.0, 1.5)
        with pytest.raises(DomainError):
            alpha_root(0.0, 0.5)


class TestRNParams:
    def test_regimes(self):
        assert regime_of(0.0) == "normal"
        assert regime_of(0.5) == "below"
        assert regime_of(1.0 + 1e-8) == "rayleigh"
        assert regime_of(2.0) == "above"
        with pytest.raises(DomainError):
            regime_of(-0.1)

    def test_root_is_cached(self):
        params = RNParams.of(0.5, 2.0)
        assert params.cached_root == pytest.approx(alpha_root(0.5, 2.0))
        assert RNParams.of(0.5, 1.0).cached_root is None

    def test_root_side_is_checked(self):
        with pytest.raises(DomainError):
            RNParams(mu=0.0, v=0.5, cached_root=10.0)
        with pytest.raises(DomainError):
            RNParams(mu=0.0, v=2.0, cached_root=-10.0)


class TestZCdf:
    def test_rayleigh_case(self):
        assert z_cdf(2.0, 1.0) == pytest.approx(0.632120558829, abs=1e-12)
        for mu in (-1.0, 0.0, 0.5, 1.0, 2.0, 3.0):
            assert z_cdf(mu, 1.0) == pytest.approx(rayleigh(mu), abs=1e-10)

    def test_normal_case(self):
        assert z_cdf(0.0, 0.0) == 0.5
        assert z_cdf(1.0, 0.0) == pytest.approx(phi_cdf(1.0))

    def test_quadrature_identity(self):
        params = RNParams.of(0.5, 2.0)
        alpha = params.cached_root
        g = params.gauss
        overlap = math.sqrt(phi_cdf(alpha) * phi_cdf(alpha, g)) + i_term(0.5, 2.0) - i_term(0.5, 2.0, alpha)
        assert z_cdf(0.5, 2.0) == pytest.approx(1 - overlap**2, abs=1e-8)

    @pytest.mark.parametrize("v", FOLDED_PAIRS)
    def test_inversion_symmetry(self, v):
        for mu in np.linspace(-4, 4, 81):
            assert abs(z_cdf(float(mu), v) - z_cdf(float(mu) / math.sqrt(v), 1 / v)) < 1e-8

    @pytest.mark.parametrize("v", [1 / 8, 1 / 3, 1.0, 3.0, 8.0])
    def test_cdf_axioms(self, v):
        scale = max(1.0, math.sqrt(v))
        values = [z_cdf(float(mu), v) for mu in np.linspace(-6 * scale, 6 * scale, 121)]
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))
        assert z_cdf(-12 * scale, v) < 1e-6
        assert z_cdf(12 * scale, v) > 1 - 1e-6

    def test_tends_to_normal_for_small_v(self):
        gap = max(abs(z_cdf(float(mu), 1e-4) - phi_cdf(mu)) for mu in np.linspace(-4, 4, 81))
        assert gap < 0.02

    def test_continuous_across_unit_variance(self):
        for mu in (-0.5, 0.5, 1.5):
            assert z_cdf(mu, 1.0 - 1e-4) == pytest.approx(rayleigh(mu), abs=1e-2)
            assert z_cdf(mu, 1.0 + 1e-4) == pytest.approx(rayleigh(mu), abs=1e-2)


class TestZQuantile:
    def test_closed_forms(self):
        assert z_quantile(1 - math.exp(-0.25), 1.0) == pytest.approx(1.0, abs=1e-12)
        assert z_quantile(0.5, 0.0) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("v", [1 / 3, 0.5, 2.0, 6.0])
    @pytest.mark.parametrize("p", [0.05, 0.3, 0.7, 0.95])
    def test_inverts_cdf(self, p, v):
        assert z_cdf(z_quantile(p, v), v) == pytest.approx(p, abs=1e-8)

    @pytest.mark.parametrize("p", [0.0, 1.0])
    def test_domain(self, p):
        with pytest.raises(DomainError):
            z_quantile(p, 0.5)

    def test_reads_config_once(self, monkeypatch):
        calls = []
        from_env = AppConfig.from_env
        monkeypatch.setattr(AppConfig, "from_env", classmethod(lambda cls: calls.append(cls) or from_env()))
        z_quantile(0.3, 0.5)
        z_cdf(0.4, 2.0)
        assert len(calls) == 1

    def test_root_tolerance_is_forwarded(self):
        coarse = beta_root(0.3, 0.5, xtol=1e-3)
        assert coarse == pytest.approx(beta_root(0.3, 0.5), abs=2e-3)


class TestOptimizerFunction:
    def test_unit_variance_positive_mean_is_phi(self):
        A = optimizer_function(RNParams.of(1.0, 1.0))
        for x in np.linspace(-4, 4, 33):
            assert A(x) == pytest.approx(phi_cdf(x), abs=1e-15)

    def test_continuous_at_the_glue_point(self):
        params = RNParams.of(0.5, 2.0)
        A = optimizer_function(params)
        alpha = params.cached_root
        assert A(alpha) == pytest.approx(phi_cdf(alpha), abs=1e-12)
        assert A(alpha - 1e-9) == pytest.approx(A(alpha + 1e-9), abs=1e-8)

    @pytest.mark.parametrize("mu", [-1.0, 0.0, 1.0])
    @pytest.mark.parametrize("v", [0.5, 2.0])
    def test_feasible(self, mu, v):
        A = optimizer_function(RNParams.of(mu, v))
        values = [A(x) for x in np.linspace(-8, 8, 161)]
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))
        for x, value in zip(np.linspace(-8, 8, 161), values):
            assert phi_cdf(x) - 1e-12 <= value <= 1 + 1e-12

    def test_undefined_for_normal_case(self):
        with pytest.raises(DomainError):
            optimizer_function(RNParams.of(0.0, 0.0))


class TestContinuousFidelity:
    def test_matched_profile(self):
        g = GaussParams(mu=0.7, v=2.3)
        assert continuous_fidelity(normal_profile(g), g) == pytest.approx(1.0, abs=1e-8)

    def test_rayleigh_value(self):
        fid = continuous_fidelity(optimizer_function(RNParams.of(2.0, 1.0)), GaussParams(mu=2.0, v=1.0))
        assert fid == pytest.approx(math.exp(-0.5), abs=1e-7)

    def test_attains_z(self):
        params = RNParams.of(0.5, 2.0)
        fid = continuous_fidelity(optimizer_function(params), params.gauss)
        assert 1 - fid**2 == pytest.approx(z_cdf(0.5, 2.0), abs=1e-7)

    def test_attains_z_on_random_parameters(self, rng):
        for mu, v in random_params(rng, 20):
            params = RNParams.of(mu, v)
            fid = continuous_fidelity(optimizer_function(params), params.gauss)
            assert 1 - fid**2 == pytest.approx(z_cdf(mu, v), abs=1e-7)

    @pytest.mark.slow
    def test_attains_z_on_many_random_parameters(self, rng):
        for mu, v in random_params(rng, 50):
            params = RNParams.of(mu, v)
            fid = continuous_fidelity(optimizer_function(params), params.gauss)
            assert 1 - fid**2 == pytest.approx(z_cdf(mu, v), abs=1e-7)


class TestVariationalBound:
    def test_grid_optimum_is_a_lower_bound_that_converges(self, rng):
        for mu, v in random_params(rng, 10):
            sd = math.sqrt(v)
            grid = np.linspace(min(-8.0, mu - 8 * sd), max(8.0, mu + 8 * sd), 4001)
            fid = variational_fidelity(RNParams.of(mu, v), grid)
            z = z_cdf(mu, v)
            assert z <= 1 - fid**2 + 1e-9
            assert 1 - fid**2 - z < 1e-3

    def test_candidates_never_beat_the_optimum(self, rng):
        grid = np.linspace(-6, 6, 61)
        phi = np.array([phi_cdf(x) for x in grid])
        for mu, v in random_params(rng, 10):
            g = GaussParams(mu=mu, v=v)
            bound = math.sqrt(1 - z_cdf(mu, v))
            for _ in range(5):
                lift = np.maximum.accumulate(rng.uniform(0, 1, grid.size))
                values = np.maximum.accumulate(phi + (1 - phi) * lift * rng.uniform())
                assert candidate_fidelity(grid, values, g) <= bound + 1e-6

    def test_sampled_optimizer_is_nearly_optimal(self):
        params = RNParams.of(0.5, 2.0)
        A = optimizer_function(params)
        grid = np.linspace(-10, 10, 2001)
        values = [A(x) for x in grid]
        fid = candidate_fidelity(grid, values, params.gauss)
        assert fid == pytest.approx(math.sqrt(1 - z_cdf(0.5, 2.0)), abs=1e-4)

    def test_infeasible_candidates_are_rejected(self):
        grid = [-1.0, 0.0, 1.0]
        g = GaussParams(mu=0.0, v=2.0)
        with pytest.raises(DomainError):
            candidate_fidelity(grid, [0.9, 0.5, 1.0], g)
        with pytest.raises(DomainError):
            candidate_fidelity(grid, [0.0, 0.1, 0.2], g)
        with pytest.raises(DomainError):
            candidate_fidelity([0.0, 0.0], [0.6, 0.7], g)


def test_rate_curve_normal_case():
    [(nu, rate)] = rate_curve(0.0, 1.0, [0.5])
    assert nu == 0.5
    assert rate == pytest.approx(0.6744897501960817, abs=1e-10)


def test_rate_curve_scales_with_d():
    (_, base), = rate_curve(1 / 3, 1.0, [0.6])
    (_, scaled), = rate_curve(1 / 3, 2.0, [0.6])
    assert scaled == pytest.approx(base / 2)
