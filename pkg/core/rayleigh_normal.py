"""Rayleigh-normal distribution functions.

Z_v(μ) = 1 − sup_A ℱ(A′, N_{μ,v})², the supremum taken over increasing A with
Φ ≤ A ≤ 1. The optimal A follows Φ where N/N_{μ,v} decreases and the shape of
N_{μ,v} elsewhere; both pieces are glued at a root α_{μ,v} (v > 1) or
β_{μ,v} (v < 1). Z_0 is Φ and Z_1 is the Rayleigh CDF with scale √2.
"""

from __future__ import annotations

import logging
import math
import warnings
from functools import lru_cache
from typing import Callable, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq

from core.config import AppConfig
from core.conversion_engine import pool_adjacent_violators
from core.exceptions import DomainError, QuadratureError, RootBracketError
from core.normal_math import (
    STANDARD,
    GaussParams,
    log_normal_pdf,
    log_phi_cdf,
    log_phi_sf,
    phi_cdf,
    phi_quantile,
    phi_sf,
)

logger = logging.getLogger(__name__)

RAYLEIGH_SWITCH = 1e-6
TAIL_CLAMP = 40.0
MAX_BRACKET_STEPS = 200
FEASIBILITY_TOL = 1e-12
QUAD_ERR_LIMIT = 1e-8
# brentq tolerance when the caller has not read AppConfig
ROOT_XTOL = AppConfig.model_fields["root_xtol"].default

Regime = Literal["normal", "below", "rayleigh", "above"]


def regime_of(v: float) -> Regime:
    if not v >= 0.0:
        raise DomainError(f"the parameter v must be nonnegative, got {v}")
    if v == 0.0:
        return "normal"
    if abs(v - 1.0) < RAYLEIGH_SWITCH:
        return "rayleigh"
    return "below" if v < 1.0 else "above"


def _turning_point(mu: float, v: float) -> float:
    return mu / (1.0 - v)


def _expand_until(accept: Callable[[float], bool], start: float, direction: float) -> float:
    """Walks from ``start`` in ``direction`` with doubling steps until ``accept`` holds."""
    point, step = start, 1.0
    for _ in range(MAX_BRACKET_STEPS):
        if accept(point):
            return point
        point += direction * step
        step *= 2.0
    raise RootBracketError(f"no bracket found from {start} after {MAX_BRACKET_STEPS} expansions")


def beta_root(mu: float, v: float, xtol: Optional[float] = None) -> float:
    """β_{μ,v}: the unique x < μ/(1−v) with N/N_{μ,v} = (1−Φ)/(1−Φ_{μ,v}), for 0 < v < 1."""
    if not 0.0 < v < 1.0:
        raise DomainError(f"beta_root needs 0 < v < 1, got {v}")
    g = GaussParams(mu=mu, v=v)
    upper = _turning_point(mu, v)

    # positive left of the root, negative between the root and the turning point
    def excess(x: float) -> float:
        return log_phi_sf(x, g) - log_phi_sf(x) - log_normal_pdf(x, g) + log_normal_pdf(x)

    if not excess(upper) < 0.0:
        # both sides agree to rounding at the turning point; Z is flat in the glue point there
        logger.debug("beta(mu=%g, v=%g): excess vanishes at the turning point %g", mu, v, upper)
        return math.nextafter(upper, -math.inf)
    lower = _expand_until(lambda x: excess(x) > 0.0, min(upper, mu) - 1.0, -1.0)
    root = brentq(excess, lower, upper, xtol=ROOT_XTOL if xtol is None else xtol)
    logger.debug("beta(mu=%g, v=%g) = %.15g", mu, v, root)
    return float(root)


def alpha_root(mu: float, v: float, xtol: Optional[float] = None) -> float:
    """α_{μ,v}: the unique x > μ/(1−v) with N/N_{μ,v} = Φ/Φ_{μ,v}, for v > 1."""
    if not v > 1.0:
        raise DomainError(f"alpha_root needs v > 1, got {v}")
    g = GaussParams(mu=mu, v=v)
    lower = _turning_point(mu, v)

    # positive between the turning point and the root, negative beyond
    def excess(x: float) -> float:
        return log_normal_pdf(x) - log_normal_pdf(x, g) + log_phi_cdf(x, g) - log_phi_cdf(x)

    if not excess(lower) > 0.0:
        logger.debug("alpha(mu=%g, v=%g): excess vanishes at the turning point %g", mu, v, lower)
        return math.nextafter(lower, math.inf)
    upper = _expand_until(lambda x: excess(x) < 0.0, max(lower, mu) + 1.0, 1.0)
    root = brentq(excess, lower, upper, xtol=ROOT_XTOL if xtol is None else xtol)
    logger.debug("alpha(mu=%g, v=%g) = %.15g", mu, v, root)
    return float(root)


class RNParams(BaseModel):
    """(μ, v) of a Rayleigh-normal function with its glue root cached."""

    model_config = ConfigDict(frozen=True)

    mu: float
    v: float = Field(ge=0.0)
    cached_root: Optional[float] = None

    @model_validator(mode="after")
    def _check_root_side(self) -> "RNParams":
        if self.cached_root is None or self.regime in ("normal", "rayleigh"):
            return self
        turning = _turning_point(self.mu, self.v)
        if self.regime == "below" and not self.cached_root < turning:
            raise DomainError(f"beta root {self.cached_root} must lie below {turning}")
        if self.regime == "above" and not self.cached_root > turning:
            raise DomainError(f"alpha root {self.cached_root} must lie above {turning}")
        return self

    @property
    def regime(self) -> Regime:
        return regime_of(self.v)

    @property
    def gauss(self) -> GaussParams:
        return GaussParams(mu=self.mu, v=self.v)

    @classmethod
    def of(cls, mu: float, v: float, xtol: Optional[float] = None) -> "RNParams":
        regime = regime_of(v)
        root = None
        if regime == "below":
            root = beta_root(mu, v, xtol)
        elif regime == "above":
            root = alpha_root(mu, v, xtol)
        return cls(mu=mu, v=v, cached_root=root)


def _overlap(mu: float, v: float) -> tuple[float, GaussParams]:
    """√(N·N_{μ,v}) = amp · N_{μ/(1+v), 2v/(1+v)}; returns (log amp, that normal)."""
    log_amp = 0.5 * math.log(2.0 * math.sqrt(v) / (1.0 + v)) - mu * mu / (4.0 * (1.0 + v))
    return log_amp, GaussParams(mu=mu / (1.0 + v), v=2.0 * v / (1.0 + v))


def i_term(mu: float, v: float, x: float = math.inf) -> float:
    """I_{μ,v}(x) = ∫_{−∞}^x √(N N_{μ,v}); x = math.inf gives the full overlap."""
    if not v > 0.0:
        raise DomainError(f"i_term needs v > 0, got {v}")
    log_amp, h = _overlap(mu, v)
    if x == math.inf:
        return math.exp(log_amp)
    return math.exp(log_amp) * phi_cdf(x, h)


def _clamped(mu: float, v: float) -> Optional[float]:
    scaled = mu / max(1.0, math.sqrt(v))
    if scaled < -TAIL_CLAMP:
        return 0.0
    if scaled > TAIL_CLAMP:
        return 1.0
    return None


def _z_from_params(params: RNParams) -> float:
    mu, v = params.mu, params.v
    if params.regime == "normal":
        return phi_cdf(mu)
    if params.regime == "rayleigh":
        return -math.expm1(-mu * mu / 4.0) if mu > 0 else 0.0

    g = params.gauss
    root = params.cached_root
    log_amp, h = _overlap(mu, v)
    if params.regime == "below":
        overlap = math.exp(0.5 * (log_phi_sf(root) + log_phi_sf(root, g))) + math.exp(log_amp) * phi_cdf(root, h)
    else:
        overlap = math.exp(0.5 * (log_phi_cdf(root) + log_phi_cdf(root, g))) + math.exp(log_amp) * phi_sf(root, h)
    return min(1.0, max(0.0, 1.0 - overlap * overlap))


@lru_cache(maxsize=8192)
def z_cdf(mu: float, v: float, xtol: Optional[float] = None) -> float:
    """Z_v(μ)."""
    regime_of(v)
    clamped = _clamped(mu, v)
    if clamped is not None:
        return clamped
    return _z_from_params(RNParams.of(mu, v, xtol))


def z_quantile(p: float, v: float) -> float:
    """Z_v^{-1}(p), the smallest μ with Z_v(μ) = p."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile level must lie in (0, 1), got {p}")
    regime = regime_of(v)
    if regime == "normal":
        return phi_quantile(p)
    if regime == "rayleigh":
        return 2.0 * math.sqrt(-math.log1p(-p))
    xtol = AppConfig.from_env().root_xtol

    def shortfall(mu: float) -> float:
        return z_cdf(mu, v, xtol) - p

    scale = max(1.0, math.sqrt(v))
    lower, upper = -scale, scale
    for _ in range(MAX_BRACKET_STEPS):
        if shortfall(lower) <= 0.0:
            break
        lower *= 2.0
    else:
        raise RootBracketError(f"no lower bracket for Z_{v} quantile {p}")
    for _ in range(MAX_BRACKET_STEPS):
        if shortfall(upper) >= 0.0:
            break
        upper *= 2.0
    else:
        raise RootBracketError(f"no upper bracket for Z_{v} quantile {p}")
    return float(brentq(shortfall, lower, upper, xtol=xtol))


class ProfilePiece(BaseModel):
    """A(x) = s·Φ_g(x), or 1 − s·(1 − Φ_g(x)) when anchored at the top, for x ≤ upper."""

    model_config = ConfigDict(frozen=True)

    upper: float = math.inf
    gauss: GaussParams = STANDARD
    log_scale: float = 0.0
    from_top: bool = False

    def value(self, x: float) -> float:
        scale = math.exp(self.log_scale)
        if self.from_top:
            return 1.0 - scale * phi_sf(x, self.gauss)
        return scale * phi_cdf(x, self.gauss)

    def log_derivative(self, x: float) -> float:
        return self.log_scale + log_normal_pdf(x, self.gauss)


class OptimizerFunction(BaseModel):
    """A continuous increasing profile A made of Gaussian CDF pieces."""

    model_config = ConfigDict(frozen=True)

    params: Optional[RNParams] = None
    pieces: tuple[ProfilePiece, ...]

    def _piece(self, x: float) -> ProfilePiece:
        for piece in self.pieces:
            if x <= piece.upper:
                return piece
        return self.pieces[-1]

    def __call__(self, x: float) -> float:
        return self._piece(x).value(x)

    def log_derivative(self, x: float) -> float:
        return self._piece(x).log_derivative(x)

    def derivative(self, x: float) -> float:
        return math.exp(self.log_derivative(x))

    @property
    def breakpoints(self) -> list[float]:
        return [piece.upper for piece in self.pieces[:-1]]


def normal_profile(g: GaussParams) -> OptimizerFunction:
    """A = Φ_{μ,v}, whose derivative is N_{μ,v} itself."""
    return OptimizerFunction(pieces=(ProfilePiece(gauss=g),))


def optimizer_function(params: RNParams) -> OptimizerFunction:
    """The maximizer A_{μ,v} of ℱ(A′, N_{μ,v})."""
    mu, v = params.mu, params.v
    if params.regime == "normal":
        raise DomainError("the optimizer function is defined for v > 0 only")
    if params.regime == "rayleigh":
        piece = ProfilePiece(gauss=GaussParams(mu=mu, v=1.0)) if mu < 0 else ProfilePiece()
        return OptimizerFunction(params=params, pieces=(piece,))

    if params.cached_root is None:
        params = RNParams.of(mu, v)
    g, root = params.gauss, params.cached_root
    if params.regime == "above":
        head = ProfilePiece(upper=root, gauss=g, log_scale=log_phi_cdf(root) - log_phi_cdf(root, g))
        return OptimizerFunction(params=params, pieces=(head, ProfilePiece()))
    tail = ProfilePiece(gauss=g, log_scale=log_phi_sf(root) - log_phi_sf(root, g), from_top=True)
    return OptimizerFunction(params=params, pieces=(ProfilePiece(upper=root), tail))


def _overlap_cuts(A: OptimizerFunction, g: GaussParams) -> list[float]:
    """Center and ±3 sd of each √(A′ N_{μ,v}) bump, where quad needs an edge."""
    cuts = []
    for piece in A.pieces:
        v1, v2 = piece.gauss.v, g.v
        center = (piece.gauss.mu * v2 + g.mu * v1) / (v1 + v2)
        spread = 3.0 * math.sqrt(2.0 * v1 * v2 / (v1 + v2))
        cuts.extend((center - spread, center, center + spread))
    return cuts


def continuous_fidelity(A: OptimizerFunction, g: GaussParams, epsabs: Optional[float] = None) -> float:
    """ℱ(A′, N_{μ,v}) = ∫√(A′ N_{μ,v}) by adaptive quadrature split at the breakpoints of A."""
    if epsabs is None:
        epsabs = AppConfig.from_env().quad_epsabs
    cuts = sorted({*A.breakpoints, g.mu, *_overlap_cuts(A, g)})
    edges = [-math.inf, *cuts, math.inf]

    def integrand(x: float) -> float:
        return math.exp(0.5 * (A.log_derivative(x) + log_normal_pdf(x, g)))

    parts = []
    for lower, upper in zip(edges, edges[1:]):
        if lower == upper:
            continue
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", IntegrationWarning)
            value, abserr = quad(integrand, lower, upper, epsabs=epsabs, epsrel=1e-9, limit=200)
        if caught and abserr > QUAD_ERR_LIMIT:
            raise QuadratureError(f"quadrature on ({lower}, {upper}) did not converge: {caught[0].message}")
        parts.append(value)
    return min(1.0, math.fsum(parts))


def _gauss_mass(lower: float, upper: float, g: GaussParams) -> float:
    if lower >= g.mu:
        return max(0.0, phi_sf(lower, g) - phi_sf(upper, g))
    return max(0.0, phi_cdf(upper, g) - phi_cdf(lower, g))


def _safe_log(x: float) -> float:
    return math.log(x) if x > 0.0 else -math.inf


def _check_grid(grid: Sequence[float]) -> np.ndarray:
    points = np.asarray(grid, dtype=float)
    if points.ndim != 1 or points.size == 0 or not np.all(np.isfinite(points)):
        raise DomainError("grid must be a nonempty list of finite numbers")
    if np.any(np.diff(points) <= 0):
        raise DomainError("grid must be strictly increasing")
    return points


def _cells(points: np.ndarray, mu: float, v: float) -> tuple[list[float], list[float]]:
    """Standard-normal mass and √(N N_{μ,v}) overlap of each grid cell, tails included."""
    log_amp, h = _overlap(mu, v)
    edges = [-math.inf, *points.tolist(), math.inf]
    masses, overlaps = [], []
    for lower, upper in zip(edges, edges[1:]):
        masses.append(_gauss_mass(lower, upper, STANDARD))
        overlaps.append(math.exp(log_amp) * _gauss_mass(lower, upper, h))
    return masses, overlaps


def variational_fidelity(params: RNParams, grid: Sequence[float]) -> float:
    """Exact sup of ℱ(A′, N_{μ,v}) over feasible A that are linear in Φ on each grid cell.

    With cell masses d_i of Φ and overlaps J_i, putting A-mass x_i on cell i
    yields Σ √(x_i · J_i²/d_i) under prefix constraints Σ_{j<i} x_j ≥ Φ(x_i):
    the same concave program as majorization conversion, solved by pooling.
    The result bounds the true supremum from below, so Z_v(μ) ≤ 1 − value².
    """
    if params.regime == "normal":
        raise DomainError("the variational problem is posed for v > 0")
    masses, overlaps = _cells(_check_grid(grid), params.mu, params.v)
    pieces = (
        (i, i + 1, _safe_log(d), _safe_log(j * j / d) if d > 0.0 else _safe_log(j))
        for i, (d, j) in enumerate(zip(masses, overlaps))
    )
    total = [
        math.exp(0.5 * (segment.log_p + segment.log_q))
        for segment in pool_adjacent_violators(pieces)
        if math.isfinite(segment.log_p) and math.isfinite(segment.log_q)
    ]
    return min(1.0, math.fsum(total))


def candidate_fidelity(grid: Sequence[float], values: Sequence[float], g: GaussParams) -> float:
    """ℱ(A′, N_{μ,v}) for the profile through (grid, values), linear in Φ between grid points."""
    points = _check_grid(grid)
    levels = np.asarray(values, dtype=float)
    if levels.shape != points.shape:
        raise DomainError("one value per grid point is required")
    if np.any(np.diff(levels) < -FEASIBILITY_TOL):
        raise DomainError("candidate values must be nondecreasing")
    if np.any(levels > 1.0 + FEASIBILITY_TOL) or np.any(levels < np.array([phi_cdf(x) for x in points]) - FEASIBILITY_TOL):
        raise DomainError("candidate values must satisfy Φ ≤ A ≤ 1")

    masses, overlaps = _cells(points, g.mu, g.v)
    increments = np.clip(np.diff(np.concatenate(([0.0], levels, [1.0]))), 0.0, None)
    terms = [
        math.sqrt(x / d) * j
        for x, d, j in zip(increments, masses, overlaps)
        if d > 0.0 and x > 0.0
    ]
    return min(1.0, math.fsum(terms))


def rate_curve(c: float, d: float, nus: Sequence[float]) -> list[tuple[float, float]]:
    """Second-order rate Z_C^{-1}(1 − ν²)/D over a grid of accuracies ν."""
    if not d > 0.0:
        raise DomainError(f"D must be positive, got {d}")
    return [(float(nu), z_quantile(1.0 - nu * nu, c) / d) for nu in nus]
