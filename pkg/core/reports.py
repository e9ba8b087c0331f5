"""Tabular results of every calculator, shared by the CLI and the study engine."""

from __future__ import annotations

import csv
import io
import logging
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from core.asymptotics import convergence_harness, rate_constants, second_order_L, second_order_rate
from core.config import AppConfig
from core.converters import get_converter
from core.distributions import FiniteDistribution
from core.exceptions import DomainError
from core.locc import BipartiteState, clone_copies, locc_max_copies
from core.rayleigh_normal import rate_curve, z_cdf, z_quantile

logger = logging.getLogger(__name__)


class Table(BaseModel):
    columns: list[str]
    rows: list[list[Any]] = Field(default_factory=list)

    def to_csv(self, digits: Optional[int] = None) -> str:
        """CSV with a header row; floats carry ``digits`` significant digits."""
        if digits is None:
            digits = AppConfig.from_env().float_digits
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_format_cell(cell, digits) for cell in row])
        return buffer.getvalue()


def _format_cell(cell: Any, digits: int) -> str:
    if cell is None:
        return ""
    if isinstance(cell, (bool, np.bool_)):
        return str(bool(cell)).lower()
    if isinstance(cell, (int, np.integer)):
        return str(int(cell))
    if isinstance(cell, (float, np.floating)):
        return f"{float(cell):.{digits}g}"
    return str(cell)


def nu_grid(steps: int) -> list[float]:
    """``steps`` equally spaced accuracies strictly inside (0, 1)."""
    if steps < 1:
        raise DomainError(f"the number of steps must be positive, got {steps}")
    return [i / (steps + 1) for i in range(1, steps + 1)]


def rn_cdf_table(v: float, mu: float) -> Table:
    return Table(columns=["v", "mu", "Z_v(mu)"], rows=[[v, mu, z_cdf(float(mu), float(v))]])


def rn_quantile_table(v: float, p: float) -> Table:
    return Table(columns=["v", "p", "mu"], rows=[[v, p, z_quantile(float(p), float(v))]])


def rn_curve_table(v: float, mu_min: float = -4.0, mu_max: float = 4.0, steps: int = 81) -> Table:
    """Z_v on an equally spaced μ grid."""
    if steps < 2 or not mu_min < mu_max:
        raise DomainError("a curve needs mu_min < mu_max and at least two steps")
    mus = np.linspace(mu_min, mu_max, steps)
    return Table(columns=["mu", "Z_v(mu)"], rows=[[float(mu), z_cdf(float(mu), float(v))] for mu in mus])


def rate_table(P: FiniteDistribution, Q: FiniteDistribution, nu: float, n: int) -> Table:
    constants = rate_constants(P, Q)
    term = second_order_rate(P, Q, nu)
    return Table(
        columns=["H_P", "H_Q", "V_P", "V_Q", "D", "C", "branch", "first_order", "second_order", "L"],
        rows=[[
            constants.H_P, constants.H_Q, constants.V_P, constants.V_Q, constants.D, constants.C,
            term.branch, term.first_order, term.coefficient, second_order_L(P, Q, nu, n),
        ]],
    )


def rate_curve_table(nu_steps: int = 99, P: Optional[FiniteDistribution] = None,
                     Q: Optional[FiniteDistribution] = None, c: Optional[float] = None, d: float = 1.0) -> Table:
    """Second-order rate against ν, either for a pair (P, Q) or for given constants (C, D)."""
    nus = nu_grid(nu_steps)
    if P is not None and Q is not None:
        rows = [[nu, second_order_rate(P, Q, nu).coefficient] for nu in nus]
    elif c is not None:
        rows = [list(pair) for pair in rate_curve(float(c), float(d), nus)]
    else:
        raise DomainError("a rate curve needs either both distributions or the constant C")
    return Table(columns=["nu", "rate"], rows=rows)


def fidelity_table(P: FiniteDistribution, Q: FiniteDistribution, n: int = 1, L: int = 1, mode: str = "maj",
                   plan_path: Optional[Path] = None) -> Table:
    """F(P^n → Q^L) for one conversion mode; the plan is dumped as JSON when a path is given."""
    converter = get_converter(mode, logging.getLogger(f"{mode}_converter"))
    result = converter.fidelity(P, Q, n, L)
    if plan_path is not None and result.plan is not None:
        Path(plan_path).write_text(result.plan.to_json())
    elif plan_path is not None:
        logger.warning("exhaustive %s search keeps no plan; %s not written", mode, plan_path)
    return Table(columns=["n", "L", "mode", "fidelity", "exact"], rows=[[n, L, mode, result.fidelity, result.exact]])


def converge_table(P: FiniteDistribution, Q: FiniteDistribution, b: float, n_grid: Sequence[int],
                   block_cap: Optional[int] = None) -> Table:
    rows = convergence_harness(P, Q, float(b), [int(n) for n in n_grid], block_cap)
    return Table(
        columns=["n", "L_used", "exact_fidelity", "limit_fidelity", "gap"],
        rows=[[row.n, row.L_used, row.exact_fidelity, row.limit_fidelity, row.gap] for row in rows],
    )


def locc_plan_table(psi: BipartiteState, phi: BipartiteState, nu: float, n: int, mode: str = "exact") -> Table:
    copies = locc_max_copies(psi, phi, float(nu), int(n), mode)
    return Table(columns=["n", "nu", "mode", "S_psi", "S_phi", "L"], rows=[[n, nu, mode, psi.S, phi.S, copies]])


def locc_clone_table(psi: BipartiteState, nu: float, n: int, mode: str = "exact") -> Table:
    return Table(columns=["n", "nu", "mode", "L"], rows=[[n, nu, mode, clone_copies(psi, float(nu), int(n), mode)]])
