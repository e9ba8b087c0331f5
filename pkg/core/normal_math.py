"""Gaussian kernel: densities, CDFs, quantiles and density-ratio monotonicity."""

from __future__ import annotations

import math

from pydantic import BaseModel, ConfigDict, Field
from scipy.special import log_ndtr, ndtr, ndtri

from core.exceptions import DomainError

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class GaussParams(BaseModel):
    """Mean and variance of a normal distribution."""

    model_config = ConfigDict(frozen=True)

    mu: float = 0.0
    v: float = Field(1.0, gt=0.0)

    @property
    def sd(self) -> float:
        return math.sqrt(self.v)


STANDARD = GaussParams()


def _z(x: float, g: GaussParams) -> float:
    return (x - g.mu) / g.sd


def phi_cdf(x: float, g: GaussParams = STANDARD) -> float:
    """Φ_{μ,v}(x)."""
    return float(ndtr(_z(x, g)))


def phi_sf(x: float, g: GaussParams = STANDARD) -> float:
    """1 − Φ_{μ,v}(x) without cancellation in the upper tail."""
    return float(ndtr(-_z(x, g)))


def log_phi_cdf(x: float, g: GaussParams = STANDARD) -> float:
    return float(log_ndtr(_z(x, g)))


def log_phi_sf(x: float, g: GaussParams = STANDARD) -> float:
    return float(log_ndtr(-_z(x, g)))


def phi_quantile(p: float, g: GaussParams = STANDARD) -> float:
    """Φ_{μ,v}^{-1}(p) for 0 < p < 1."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile level must lie in (0, 1), got {p}")
    return g.mu + g.sd * float(ndtri(p))


def log_normal_pdf(x: float, g: GaussParams = STANDARD) -> float:
    z = _z(x, g)
    return -0.5 * z * z - LOG_SQRT_2PI - 0.5 * math.log(g.v)


def normal_pdf(x: float, g: GaussParams = STANDARD) -> float:
    """N_{μ,v}(x)."""
    return math.exp(log_normal_pdf(x, g))


def log_density_ratio(x: float, g: GaussParams) -> float:
    """log N(x) − log N_{μ,v}(x); ±inf far out in the tails, never nan."""
    if g.v == 1.0:
        return g.mu * (0.5 * g.mu - x)
    z = _z(x, g)
    value = 0.5 * (z * z - x * x) + 0.5 * math.log(g.v)
    if math.isnan(value):
        # both squares overflowed: the wider density dominates
        return -math.inf if g.v > 1.0 else math.inf
    return value


def density_ratio(x: float, g: GaussParams) -> float:
    """N(x)/N_{μ,v}(x); returns math.inf when the ratio overflows."""
    try:
        return math.exp(log_density_ratio(x, g))
    except OverflowError:
        return math.inf


class MonotoneRegion(BaseModel):
    """Open interval (lower, upper) on which N/N_{μ,v} strictly decreases."""

    model_config = ConfigDict(frozen=True)

    lower: float
    upper: float
    empty: bool = False

    def contains(self, x: float) -> bool:
        return not self.empty and self.lower < x < self.upper


def monotone_region(g: GaussParams) -> MonotoneRegion:
    """Where N(x)/N_{μ,v}(x) is strictly decreasing.

    ℝ for v = 1 and μ > 0, ∅ for v = 1 and μ ≤ 0, (μ/(1−v), ∞) for v > 1 and
    (−∞, μ/(1−v)) for v < 1.
    """
    if g.v == 1.0:
        if g.mu > 0:
            return MonotoneRegion(lower=-math.inf, upper=math.inf)
        return MonotoneRegion(lower=0.0, upper=0.0, empty=True)
    turning_point = g.mu / (1.0 - g.v)
    if g.v > 1.0:
        return MonotoneRegion(lower=turning_point, upper=math.inf)
    return MonotoneRegion(lower=-math.inf, upper=turning_point)
