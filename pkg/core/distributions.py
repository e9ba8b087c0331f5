"""Finite probability distributions and run-length blocks of their i.i.d. powers.

All block arithmetic is carried out in the natural-log domain. Atom counts of a
block are kept as exact Python integers: multiplicities such as C(6400, 3200)
do not fit any fixed-width type, and prefix boundaries of two different powers
have to be aligned atom by atom.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from functools import lru_cache
from typing import Iterator, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.special import gammaln, logsumexp

from core.config import AppConfig
from core.exceptions import InvalidDistribution, ResourceLimit

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-12
BLOCK_MASS_TOL = 1e-9
TIE_TOL = 1e-12
EXACT_COUNT_COPIES = 20
MAX_EXPANDED_ATOMS = 1_000_000
LN2 = math.log(2.0)


class FiniteDistribution(BaseModel):
    """A probability vector on a finite alphabet with zero atoms removed."""

    model_config = ConfigDict(frozen=True)

    probs: tuple[float, ...]

    @field_validator("probs")
    @classmethod
    def _check_probs(cls, probs: tuple[float, ...]) -> tuple[float, ...]:
        if len(probs) < 2:
            raise InvalidDistribution(f"support size must be at least 2, got {len(probs)}")
        if any(not math.isfinite(p) or p <= 0.0 for p in probs):
            raise InvalidDistribution("atoms must be finite and strictly positive")
        total = math.fsum(probs)
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise InvalidDistribution(f"probabilities sum to {total!r}, expected 1")
        return probs

    @property
    def size(self) -> int:
        return len(self.probs)

    @property
    def sorted(self) -> np.ndarray:
        """P↓, the atoms in decreasing order."""
        return np.sort(np.asarray(self.probs))[::-1]

    @property
    def is_uniform(self) -> bool:
        return max(self.probs) - min(self.probs) <= NORMALIZATION_TOL * max(self.probs)

    @classmethod
    def uniform(cls, m: int) -> "FiniteDistribution":
        return cls(probs=(1.0 / m,) * m)


DistributionLike = Union[FiniteDistribution, Sequence[float], np.ndarray]


def _clean_weights(raw: Sequence[float]) -> np.ndarray:
    weights = np.asarray(raw, dtype=float)
    if weights.ndim != 1:
        raise InvalidDistribution("a distribution must be a flat list of numbers")
    if not np.all(np.isfinite(weights)):
        raise InvalidDistribution("entries must be finite")
    if np.any(weights < 0):
        raise InvalidDistribution("entries must be nonnegative")
    positive = weights[weights > 0]
    if positive.size == 0:
        raise InvalidDistribution("all entries are zero")
    if positive.size < 2:
        raise InvalidDistribution("at least two strictly positive entries are required")
    return positive / math.fsum(positive)


def normalize(raw: Sequence[float]) -> FiniteDistribution:
    """Drops zero atoms and rescales to unit mass, keeping the input order."""
    return FiniteDistribution(probs=tuple(float(p) for p in _clean_weights(raw)))


def normalize_and_sort(raw: Sequence[float]) -> FiniteDistribution:
    """Drops zero atoms, rescales to unit mass and sorts decreasingly."""
    weights = np.sort(_clean_weights(raw))[::-1]
    return FiniteDistribution(probs=tuple(float(p) for p in weights))


def entropy(P: FiniteDistribution) -> float:
    """Shannon entropy H(P) in bits."""
    p = np.asarray(P.probs)
    return float(-np.sum(p * np.log2(p)))


def varentropy(P: FiniteDistribution) -> float:
    """V(P), the variance of the surprisal -log2 P(x), in bits squared."""
    p = np.asarray(P.probs)
    surprisal = -np.log2(p)
    h = float(np.sum(p * surprisal))
    return float(np.sum(p * (surprisal - h) ** 2))


def _as_vector(dist: DistributionLike) -> np.ndarray:
    if isinstance(dist, FiniteDistribution):
        return np.asarray(dist.probs)
    vector = np.asarray(dist, dtype=float)
    if np.any(vector < 0):
        raise InvalidDistribution("fidelity arguments must be nonnegative")
    return vector


def fidelity(Q: DistributionLike, Q_prime: DistributionLike) -> float:
    """Bhattacharyya coefficient Σ_y √(Q(y)Q'(y)) on a common indexed alphabet.

    The shorter vector is padded with zeros.
    """
    q, r = _as_vector(Q), _as_vector(Q_prime)
    size = max(q.size, r.size)
    q = np.pad(q, (0, size - q.size))
    r = np.pad(r, (0, size - r.size))
    return math.fsum(np.sqrt(q * r))


def hellinger_distance(Q: DistributionLike, Q_prime: DistributionLike) -> float:
    return math.sqrt(max(0.0, 1.0 - fidelity(Q, Q_prime)))


def scale_count(count: int, log2_factor: float, rounding: str = "floor") -> int:
    """Integer value of count · 2^log2_factor for arbitrarily large results.

    The real factor is carried with 53 bits of mantissa; the product with the
    exact integer never passes through a float.
    """
    if count == 0:
        return 0
    nearest = round(log2_factor)
    if abs(log2_factor - nearest) <= TIE_TOL * max(1.0, abs(log2_factor)):
        log2_factor = float(nearest)
    whole = math.floor(log2_factor)
    mantissa = int(round(2.0 ** (log2_factor - whole) * 2**52))
    product = count * mantissa
    shift = whole - 52
    if shift >= 0:
        return product << shift
    divisor = 1 << -shift
    if rounding == "floor":
        return product // divisor
    if rounding == "ceil":
        return -(-product // divisor)
    if rounding == "nearest":
        return (product + divisor // 2) // divisor
    raise ValueError(f"unknown rounding mode {rounding!r}")


def level_set_size(P: FiniteDistribution, n: int, x: float) -> int:
    """|S_n^P(x)| = ⌈2^{H(P)n + x√n}⌉."""
    return scale_count(1, entropy(P) * n + x * math.sqrt(n), rounding="ceil")


class BlockDistribution(BaseModel):
    """Sorted run-length view of a distribution: blocks of equal atoms.

    ``log_values[i]`` is the natural log of the common atom value of block i and
    ``counts[i]`` the exact number of atoms in it. Blocks are strictly
    decreasing in value, so a prefix of atoms in block order is the set of the
    largest atoms.
    """

    model_config = ConfigDict(frozen=True)

    log_values: tuple[float, ...]
    counts: tuple[int, ...]
    alphabet_size: int = Field(gt=0)
    copies: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check_blocks(self) -> "BlockDistribution":
        if not self.log_values or len(self.log_values) != len(self.counts):
            raise InvalidDistribution("blocks need one count per value")
        if any(c <= 0 for c in self.counts):
            raise InvalidDistribution("block counts must be positive")
        if any(a <= b for a, b in zip(self.log_values, self.log_values[1:])):
            raise InvalidDistribution("block values must be strictly decreasing")
        log_mass = float(logsumexp(np.asarray(self.log_multiplicities) + np.asarray(self.log_values)))
        if abs(math.expm1(log_mass)) > BLOCK_MASS_TOL:
            raise InvalidDistribution(f"blocks carry total mass {math.exp(log_mass)!r}")
        if self.copies <= EXACT_COUNT_COPIES and sum(self.counts) != self.alphabet_size**self.copies:
            raise InvalidDistribution("block counts do not add up to the size of the power")
        return self

    @property
    def log_multiplicities(self) -> tuple[float, ...]:
        return tuple(math.log(c) for c in self.counts)

    @property
    def num_blocks(self) -> int:
        return len(self.counts)

    @property
    def num_atoms(self) -> int:
        return sum(self.counts)

    def block_log_masses(self) -> np.ndarray:
        return np.asarray(self.log_multiplicities) + np.asarray(self.log_values)

    def to_finite(self, max_atoms: int = MAX_EXPANDED_ATOMS) -> FiniteDistribution:
        """Expands the blocks into an explicit decreasing probability vector."""
        if self.num_atoms > max_atoms:
            raise ResourceLimit(f"{self.num_atoms} atoms exceed the expansion limit of {max_atoms}")
        probs = np.repeat(np.exp(self.log_values), self.counts)
        return FiniteDistribution(probs=tuple(float(p) for p in probs / math.fsum(probs)))

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["log_value", "log_multiplicity"])
        for log_value, log_multiplicity in zip(self.log_values, self.log_multiplicities):
            writer.writerow([f"{log_value:.17g}", f"{log_multiplicity:.17g}"])
        return buffer.getvalue()


def _compositions(n: int, d: int) -> Iterator[tuple[int, ...]]:
    """All (k_1, ..., k_d) of nonnegative integers summing to n."""
    if d == 1:
        yield (n,)
        return
    for k in range(n, -1, -1):
        for rest in _compositions(n - k, d - 1):
            yield (k,) + rest


def _multinomial(ks: Sequence[int]) -> int:
    result, remaining = 1, sum(ks)
    for k in ks:
        result *= math.comb(remaining, k)
        remaining -= k
    return result


def _type_classes(d: int, n: int) -> tuple[np.ndarray, list[int]]:
    """Type vectors of length-n sequences over d letters and their exact sizes."""
    if d == 2:
        first = np.arange(n, -1, -1)
        counts, c = [], 1
        for i in range(n + 1):
            counts.append(c)
            c = c * (n - i) // (i + 1)
        return np.column_stack([first, n - first]), counts
    compositions = list(_compositions(n, d))
    return np.asarray(compositions), [_multinomial(ks) for ks in compositions]


def _merge_sorted(log_values: np.ndarray, counts: Sequence[int]) -> tuple[list[float], list[int]]:
    order = np.argsort(-log_values, kind="stable")
    merged_values: list[float] = []
    merged_counts: list[int] = []
    for idx in order:
        value, count = float(log_values[idx]), counts[idx]
        if merged_values and abs(merged_values[-1] - value) <= TIE_TOL * max(1.0, abs(value)):
            # mass-preserving merge of two type classes with (numerically) equal atoms
            previous = merged_counts[-1]
            total = previous + count
            merged_values[-1] = float(
                np.logaddexp(math.log(previous) + merged_values[-1], math.log(count) + value) - math.log(total)
            )
            merged_counts[-1] = total
        else:
            merged_values.append(value)
            merged_counts.append(count)
    return merged_values, merged_counts


@lru_cache(maxsize=256)
def _tensor_power(P: FiniteDistribution, n: int, block_cap: int) -> BlockDistribution:
    d = P.size
    if P.is_uniform:
        return BlockDistribution(log_values=(-n * math.log(d),), counts=(d**n,), alphabet_size=d, copies=n)

    num_types = math.comb(n + d - 1, d - 1)
    if num_types > block_cap:
        raise ResourceLimit(f"P^{n} over {d} letters has {num_types} type classes, cap is {block_cap}")

    types, counts = _type_classes(d, n)
    log_values = types @ np.log(P.sorted)
    values, merged_counts = _merge_sorted(log_values, counts)
    logger.debug("P^%d: %d type classes merged into %d blocks", n, num_types, len(values))
    return BlockDistribution(log_values=tuple(values), counts=tuple(merged_counts), alphabet_size=d, copies=n)


def tensor_power_blocks(P: FiniteDistribution, n: int, block_cap: int | None = None) -> BlockDistribution:
    """Block representation of P^n, sorted decreasingly."""
    if n < 1:
        raise InvalidDistribution(f"the number of copies must be positive, got {n}")
    if block_cap is None:
        block_cap = AppConfig.from_env().block_cap
    return _tensor_power(P, n, block_cap)


def as_blocks(dist: FiniteDistribution | BlockDistribution) -> BlockDistribution:
    if isinstance(dist, BlockDistribution):
        return dist
    return tensor_power_blocks(dist, 1)


def prefix_mass(B: BlockDistribution, count: int | float) -> float:
    """Mass of the ``count`` largest atoms; fractional counts are rounded up."""
    if count < 0:
        raise InvalidDistribution(f"count must be nonnegative, got {count}")
    if isinstance(count, float):
        if math.isinf(count):
            return 1.0
        count = math.ceil(count)
    if count >= B.num_atoms:
        return 1.0
    terms = []
    remaining = count
    for log_value, block_count in zip(B.log_values, B.counts):
        if remaining == 0:
            break
        taken = min(block_count, remaining)
        terms.append(math.exp(math.log(taken) + log_value))
        remaining -= taken
    return math.fsum(terms)


def product_fidelity(P: FiniteDistribution, Q: FiniteDistribution, n: int) -> float:
    """F(P^n, Q^n) summed over joint type classes of the index-aligned pair."""
    p, q = _as_vector(P), _as_vector(Q)
    size = max(p.size, q.size)
    weights = np.sqrt(np.pad(p, (0, size - p.size)) * np.pad(q, (0, size - q.size)))
    weights = weights[weights > 0]
    if weights.size == 0:
        return 0.0
    types = np.asarray(list(_compositions(n, weights.size)))
    log_sizes = gammaln(n + 1) - np.sum(gammaln(types + 1), axis=1)
    return float(np.exp(logsumexp(log_sizes + types @ np.log(weights))))
