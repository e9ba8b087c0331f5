"""Bipartite pure states and their LOCC conversion through Schmidt spectra.

The optimal LOCC fidelity between pure states equals the majorization
fidelity between their squared Schmidt coefficients, so every calculation
here reduces to the conversion engine.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.linalg import svdvals

from core.asymptotics import second_order_L
from core.config import AppConfig
from core.conversion_engine import maj_fidelity, max_convertible_M
from core.distributions import FiniteDistribution, entropy, normalize_and_sort, tensor_power_blocks, varentropy
from core.exceptions import DomainError, InvalidState, ProductStateError
from core.models import StateFile

logger = logging.getLogger(__name__)

SCHMIDT_TOL = 1e-14
NORM_TOL = 1e-10
VARENTROPY_TOL = 1e-12
CLONE_SLACK = 1e-12

Mode = Literal["exact", "asymptotic"]


class BipartiteState(BaseModel):
    """Normalized coefficient matrix of a pure state on A ⊗ B with its Schmidt spectrum."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    coeffs: np.ndarray
    schmidt_sq: FiniteDistribution
    S: float
    V: float

    @property
    def is_maximal(self) -> bool:
        return self.V <= VARENTROPY_TOL

    @property
    def schmidt_rank(self) -> int:
        return self.schmidt_sq.size

    def to_record(self) -> StateFile:
        rows, cols = self.coeffs.shape
        flat = self.coeffs.reshape(-1)
        return StateFile(rows=rows, cols=cols, re=flat.real.tolist(), im=flat.imag.tolist())


def schmidt(coeffs) -> BipartiteState:
    """Builds a state from its d_A × d_B amplitude matrix."""
    matrix = np.asarray(coeffs, dtype=complex)
    if matrix.ndim != 2 or matrix.size == 0:
        raise InvalidState("coefficients must form a nonempty matrix")
    if not np.all(np.isfinite(matrix)):
        raise InvalidState("coefficients must be finite")
    norm = float(np.linalg.norm(matrix))
    if norm == 0.0:
        raise InvalidState("the zero matrix is not a state")
    if abs(norm - 1.0) > NORM_TOL:
        logger.debug("renormalizing state with norm %.12g", norm)
    matrix = matrix / norm

    squares = svdvals(matrix) ** 2
    squares = squares[squares > SCHMIDT_TOL]
    if squares.size < 2:
        raise ProductStateError("product states carry no entanglement")
    spectrum = normalize_and_sort(squares)
    return BipartiteState(coeffs=matrix, schmidt_sq=spectrum, S=entropy(spectrum), V=varentropy(spectrum))


def state_from_record(record: StateFile) -> BipartiteState:
    amplitudes = np.asarray(record.re, dtype=float) + 1j * np.asarray(record.im or [0.0] * len(record.re), dtype=float)
    return schmidt(amplitudes.reshape(record.rows, record.cols))


def state_from_schmidt(probs: Sequence[float]) -> BipartiteState:
    """Σ_i √p_i |i⟩|i⟩."""
    return schmidt(np.diag(np.sqrt(np.asarray(probs, dtype=float))))


def maximally_entangled(m: int) -> BipartiteState:
    if m < 2:
        raise InvalidState(f"a maximally entangled state needs dimension at least 2, got {m}")
    return schmidt(np.eye(m) / math.sqrt(m))


def epr() -> BipartiteState:
    return maximally_entangled(2)


def _check_nu(nu: float) -> None:
    if not 0.0 < nu < 1.0:
        raise DomainError(f"accuracy nu must lie in (0, 1), got {nu}")


def locc_fidelity(psi: BipartiteState, phi: BipartiteState, n: int, L: int, block_cap: int | None = None) -> float:
    """Optimal fidelity of ψ^{⊗n} → φ^{⊗L} by LOCC."""
    source = tensor_power_blocks(psi.schmidt_sq, n, block_cap)
    target = tensor_power_blocks(phi.schmidt_sq, L, block_cap)
    return maj_fidelity(source, target)[0]


def locc_max_copies(psi: BipartiteState, phi: BipartiteState, nu: float, n: int, mode: Mode = "exact",
                    block_cap: int | None = None) -> int | float:
    """L_n(ψ, φ|ν), exactly from the engine or from the second-order expansion."""
    _check_nu(nu)
    if mode == "exact":
        return max_convertible_M(psi.schmidt_sq, phi.schmidt_sq, n, nu, block_cap)
    if mode == "asymptotic":
        return second_order_L(psi.schmidt_sq, phi.schmidt_sq, nu, n)
    raise DomainError(f"unknown mode {mode!r}")


def clone_copies(psi: BipartiteState, nu: float, n: int, mode: Mode = "exact",
                 block_cap: int | None = None) -> int | float:
    """L_n(ψ|ν): copies of ψ obtainable from n copies with fidelity at least ν.

    Maximally entangled inputs use ⌊n + 2 log_m ν^{-1}⌋ in every mode.
    """
    _check_nu(nu)
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    if psi.is_maximal:
        return math.floor(n + 2.0 * math.log(1.0 / nu) / math.log(psi.schmidt_rank) + CLONE_SLACK)
    if mode == "exact":
        return max_convertible_M(psi.schmidt_sq, psi.schmidt_sq, n, nu, block_cap)
    if mode == "asymptotic":
        return n + math.sqrt(8.0 * psi.V * math.log(1.0 / nu)) / psi.S * math.sqrt(n)
    raise DomainError(f"unknown mode {mode!r}")


def replication_rate(psi: BipartiteState, nu: float) -> float:
    """Growth exponent of L_n(ψ|ν) − n: 1/2 for non-maximal states, 0 otherwise."""
    _check_nu(nu)
    return 0.0 if psi.is_maximal else 0.5


class ReplicationEstimate(BaseModel):
    exponent: float
    points: list[tuple[int, int]]


def empirical_replication_exponent(psi: BipartiteState, nu: float, n_grid: Sequence[int],
                                   block_cap: int | None = None,
                                   max_workers: int | None = None) -> ReplicationEstimate:
    """Slope of log(L_n − n) against log n over exact clone counts."""
    _check_nu(nu)
    if max_workers is None:
        max_workers = AppConfig.from_env().max_workers
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        counts = list(executor.map(lambda n: clone_copies(psi, nu, n, "exact", block_cap), n_grid))
    points = [(int(n), int(L)) for n, L in zip(n_grid, counts)]
    usable = [(n, L - n) for n, L in points if L > n]
    if len(usable) < 2:
        raise DomainError("at least two grid points with L_n > n are needed for a regression")
    slope, _ = np.polyfit(np.log([n for n, _ in usable]), np.log([excess for _, excess in usable]), 1)
    logger.info("empirical replication exponent %.6g over %d points", slope, len(usable))
    return ReplicationEstimate(exponent=float(slope), points=points)
