"""Second-order expansions of the maximal number of converted copies and the
harness comparing exact finite-n fidelities with their Rayleigh-normal limit."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Literal, Optional, Sequence

from pydantic import BaseModel, ConfigDict

from core.config import AppConfig
from core.conversion_engine import maj_fidelity
from core.distributions import FiniteDistribution, entropy, tensor_power_blocks, varentropy
from core.exceptions import DomainError
from core.normal_math import phi_cdf, phi_quantile
from core.rayleigh_normal import z_cdf, z_quantile

logger = logging.getLogger(__name__)

VARENTROPY_TOL = 1e-12
ENTROPY_TOL = 1e-12

Branch = Literal["general", "clone", "concentration", "dilution", "uniform_equal", "uniform_first_order"]


class RateConstants(BaseModel):
    """H, V of both sides with D_{P,Q} = H(Q)/√V(P) and C_{P,Q} = (H(P)/V(P))/(H(Q)/V(Q)).

    D is None when P is uniform; C is None unless V(P) > 0, and is 0 for a
    uniform target.
    """

    model_config = ConfigDict(frozen=True)

    H_P: float
    H_Q: float
    V_P: float
    V_Q: float
    D: Optional[float]
    C: Optional[float]

    @property
    def p_uniform(self) -> bool:
        return self.V_P <= VARENTROPY_TOL

    @property
    def q_uniform(self) -> bool:
        return self.V_Q <= VARENTROPY_TOL


def rate_constants(P: FiniteDistribution, Q: FiniteDistribution) -> RateConstants:
    h_p, h_q = entropy(P), entropy(Q)
    v_p, v_q = varentropy(P), varentropy(Q)
    d = c = None
    if v_p > VARENTROPY_TOL:
        d = h_q / math.sqrt(v_p)
        c = 0.0 if v_q <= VARENTROPY_TOL else (h_p / v_p) / (h_q / v_q)
    return RateConstants(H_P=h_p, H_Q=h_q, V_P=v_p, V_Q=v_q, D=d, C=c)


class RateTerm(BaseModel):
    """L ≈ first_order·n + coefficient·√n."""

    model_config = ConfigDict(frozen=True)

    first_order: float
    coefficient: float
    branch: Branch


def _same_distribution(P: FiniteDistribution, Q: FiniteDistribution) -> bool:
    return P.size == Q.size and bool(max(abs(a - b) for a, b in zip(P.sorted, Q.sorted)) <= 1e-12)


def _check_nu(nu: float) -> None:
    if not 0.0 < nu < 1.0:
        raise DomainError(f"accuracy nu must lie in (0, 1), got {nu}")


def second_order_rate(P: FiniteDistribution, Q: FiniteDistribution, nu: float) -> RateTerm:
    """First- and second-order coefficients of L_n(P, Q|ν)."""
    _check_nu(nu)
    k = rate_constants(P, Q)
    first = k.H_P / k.H_Q
    level = 1.0 - nu * nu

    if k.p_uniform and k.q_uniform:
        if abs(k.H_P - k.H_Q) <= ENTROPY_TOL:
            return RateTerm(first_order=1.0, coefficient=0.0, branch="uniform_equal")
        logger.warning("both distributions are uniform: only the first-order rate %.6g is meaningful", first)
        return RateTerm(first_order=first, coefficient=0.0, branch="uniform_first_order")
    if k.p_uniform:
        coefficient = math.sqrt(k.H_P * k.V_Q / k.H_Q**3) * phi_quantile(level)
        return RateTerm(first_order=first, coefficient=coefficient, branch="dilution")
    if k.q_uniform:
        return RateTerm(first_order=first, coefficient=phi_quantile(level) / k.D, branch="concentration")
    if _same_distribution(P, Q):
        coefficient = math.sqrt(8.0 * k.V_P * math.log(1.0 / nu)) / k.H_P
        return RateTerm(first_order=1.0, coefficient=coefficient, branch="clone")
    return RateTerm(first_order=first, coefficient=z_quantile(level, k.C) / k.D, branch="general")


def second_order_L(P: FiniteDistribution, Q: FiniteDistribution, nu: float, n: int) -> float:
    """(H(P)/H(Q))·n + Z_{C}^{-1}(1 − ν²)/D·√n, with the uniform special cases."""
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    term = second_order_rate(P, Q, nu)
    if term.branch == "uniform_equal":
        return float(n)
    return term.first_order * n + term.coefficient * math.sqrt(n)


def limit_fidelity(P: FiniteDistribution, Q: FiniteDistribution, b: float) -> float:
    """lim_n F^M(P^n → Q^{(H(P)/H(Q))n + b√n}) = √(1 − Z_C(b·D))."""
    k = rate_constants(P, Q)
    if k.p_uniform and k.q_uniform:
        return 1.0 if b <= 0.0 else 0.0
    if k.p_uniform:
        return math.sqrt(phi_cdf(-math.sqrt(k.H_Q**3 / (k.V_Q * k.H_P)) * b))
    return math.sqrt(max(0.0, 1.0 - z_cdf(b * k.D, k.C)))


def rate_curve_for(P: FiniteDistribution, Q: FiniteDistribution, nus: Sequence[float]) -> list[tuple[float, float]]:
    """(ν, second-order coefficient) pairs for one pair of distributions."""
    return [(float(nu), second_order_rate(P, Q, nu).coefficient) for nu in nus]


class HarnessRow(BaseModel):
    n: int
    L_used: int
    exact_fidelity: float
    limit_fidelity: float
    gap: float


def copies_at(P: FiniteDistribution, Q: FiniteDistribution, b: float, n: int) -> int:
    """⌊(H(P)/H(Q))n + b√n⌋, at least one copy."""
    return max(1, math.floor(entropy(P) / entropy(Q) * n + b * math.sqrt(n)))


def convergence_harness(P: FiniteDistribution, Q: FiniteDistribution, b: float, n_grid: Sequence[int],
                        block_cap: int | None = None, max_workers: int | None = None) -> list[HarnessRow]:
    """Exact F^M(P^n → Q^L) against its limit for every n of the grid."""
    if any(n < 1 for n in n_grid):
        raise DomainError("every n of the grid must be positive")
    if max_workers is None:
        max_workers = AppConfig.from_env().max_workers
    limit = limit_fidelity(P, Q, b)

    def evaluate(n: int) -> HarnessRow:
        copies = copies_at(P, Q, b, n)
        exact, _ = maj_fidelity(tensor_power_blocks(P, n, block_cap), tensor_power_blocks(Q, copies, block_cap))
        row = HarnessRow(n=n, L_used=copies, exact_fidelity=exact, limit_fidelity=limit, gap=abs(exact - limit))
        logger.info("n=%d L=%d exact=%.12g limit=%.12g", n, copies, exact, limit)
        return row

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        rows = list(executor.map(evaluate, n_grid))
    return sorted(rows, key=lambda row: row.n)
