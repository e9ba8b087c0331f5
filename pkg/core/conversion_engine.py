"""Exact finite-size optimal conversion between distributions.

The majorization fidelity F^M(P→Q) = max{F(P', Q) | P ≺ P'} is a concave
program over prefix-sum constraints. Its KKT conditions force P' to be
proportional to Q↓ between consecutive tight constraints with non-increasing
scales, i.e. the partial sums of P' trace the least concave majorant of the
points (Q↓ prefix mass, P↓ prefix mass). The majorant is found by pooling
adjacent violators over pieces on which both P^n and Q^L are constant, so
i.i.d. powers are solved at block level without expanding atoms.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from typing import Callable, Iterable, Iterator, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import minimize

from core.config import AppConfig
from core.distributions import (
    LN2,
    BlockDistribution,
    FiniteDistribution,
    as_blocks,
    entropy,
    normalize,
    scale_count,
    tensor_power_blocks,
)
from core.exceptions import DomainError, ResourceLimit, SolverError

logger = logging.getLogger(__name__)

NEG_INF = -math.inf
MAJORIZATION_TOL = 1e-10
BRUTE_MAJ_SUPPORT = 6
BRUTE_DET_MAPS = 10**7
SCALE_TOL = 1e-12


def _logaddexp(a: float, b: float) -> float:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    top = max(a, b)
    return top + math.log1p(math.exp(-abs(a - b)))


class PlanSegment(BaseModel):
    """Target atoms [start, end) receive P'(i) = scale · Q↓(i)."""

    model_config = ConfigDict(frozen=True)

    start: int = Field(ge=0)
    end: int
    log_scale: float

    @property
    def scale(self) -> float:
        try:
            return math.exp(self.log_scale)
        except OverflowError:
            return math.inf


class ConversionPlan(BaseModel):
    segments: list[PlanSegment]
    achieved_fidelity: float
    mode: Literal["majorization", "deterministic"] = "majorization"

    def reconstruct(self, target: FiniteDistribution) -> np.ndarray:
        """P' aligned with the decreasing view of the (finite) target."""
        q = target.sorted
        p_prime = np.zeros(q.size)
        for segment in self.segments:
            p_prime[segment.start:segment.end] += segment.scale * q[segment.start:segment.end]
        return p_prime

    def to_json(self) -> str:
        return json.dumps(
            {
                "mode": self.mode,
                "segments": [
                    {"start": s.start, "end": s.end, "scale": s.scale, "log_scale": s.log_scale}
                    for s in self.segments
                ],
                "fidelity": self.achieved_fidelity,
            }
        )


def majorizes(dominant: np.ndarray | FiniteDistribution, dominated: np.ndarray | FiniteDistribution,
              tol: float = MAJORIZATION_TOL) -> bool:
    """True when ``dominated ≺ dominant``: every prefix sum of dominant↓ is at least that of dominated↓."""
    a = np.sort(np.asarray(getattr(dominant, "probs", dominant), dtype=float))[::-1]
    b = np.sort(np.asarray(getattr(dominated, "probs", dominated), dtype=float))[::-1]
    size = max(a.size, b.size)
    a_cum = np.cumsum(np.pad(a, (0, size - a.size)))
    b_cum = np.cumsum(np.pad(b, (0, size - b.size)))
    return bool(np.all(a_cum >= b_cum - tol))


class _Segment:
    """Run of consecutive pieces sharing one KKT scale."""

    __slots__ = ("start", "end", "log_p", "log_q")

    def __init__(self, start: int, end: int, log_p: float, log_q: float):
        self.start = start
        self.end = end
        self.log_p = log_p
        self.log_q = log_q

    def log_ratio(self) -> float:
        if self.log_q == NEG_INF:
            return math.inf
        if self.log_p == NEG_INF:
            return NEG_INF
        return self.log_p - self.log_q

    def merge_with_next_segment(self, right: "_Segment") -> None:
        assert self.end == right.start
        self.log_p = _logaddexp(self.log_p, right.log_p)
        self.log_q = _logaddexp(self.log_q, right.log_q)
        self.end = right.end


def pool_adjacent_violators(pieces: Iterable[tuple[int, int, float, float]]) -> list[_Segment]:
    """Least concave majorant of cumulative (q, p) masses.

    ``pieces`` yields (start, end, log p-mass, log q-mass) in constraint order.
    Adjacent pieces are pooled while the p/q ratio increases, which leaves
    segments with non-increasing ratios.
    """
    stack: list[_Segment] = []
    for start, end, log_p, log_q in pieces:
        if log_p == NEG_INF and log_q == NEG_INF:
            continue
        segment = _Segment(start, end, log_p, log_q)
        while stack and stack[-1].log_ratio() < segment.log_ratio():
            previous = stack.pop()
            previous.merge_with_next_segment(segment)
            segment = previous
        stack.append(segment)
    return stack


def _crossing_pieces(source: BlockDistribution, target: BlockDistribution) -> Iterator[tuple[int, int, float, float]]:
    """Common refinement of two block partitions of the atom index line.

    Stops once the source is exhausted: beyond that point every prefix
    constraint already demands full mass.
    """
    i = j = 0
    rest_source, rest_target = source.counts[0], target.counts[0]
    position = 0
    while i < source.num_blocks:
        if j < target.num_blocks:
            taken = min(rest_source, rest_target)
            log_taken = math.log(taken)
            yield position, position + taken, log_taken + source.log_values[i], log_taken + target.log_values[j]
            rest_target -= taken
            if rest_target == 0:
                j += 1
                rest_target = target.counts[j] if j < target.num_blocks else 0
        else:
            taken = rest_source
            yield position, position + taken, math.log(taken) + source.log_values[i], NEG_INF
        position += taken
        rest_source -= taken
        if rest_source == 0:
            i += 1
            rest_source = source.counts[i] if i < source.num_blocks else 0


def maj_fidelity(P: FiniteDistribution | BlockDistribution,
                 Q: FiniteDistribution | BlockDistribution) -> tuple[float, ConversionPlan]:
    """F^M(P→Q) and the optimal P' as scaled segments of Q↓."""
    source, target = as_blocks(P), as_blocks(Q)
    segments = pool_adjacent_violators(_crossing_pieces(source, target))

    target_atoms = target.num_atoms
    terms: list[float] = []
    plan_segments: list[PlanSegment] = []
    for segment in segments:
        if segment.log_p == NEG_INF or segment.log_q == NEG_INF:
            continue
        terms.append(math.exp(0.5 * (segment.log_p + segment.log_q)))
        plan_segments.append(
            PlanSegment(start=segment.start, end=min(segment.end, target_atoms), log_scale=segment.log_p - segment.log_q)
        )

    value = math.fsum(terms)
    if not math.isfinite(value):
        raise SolverError(f"majorization fidelity evaluated to {value!r}")
    for left, right in zip(plan_segments, plan_segments[1:]):
        if right.log_scale > left.log_scale + SCALE_TOL * max(1.0, abs(left.log_scale)):
            raise SolverError("segment scales are not non-increasing")

    value = min(1.0, value)
    return value, ConversionPlan(segments=plan_segments, achieved_fidelity=value, mode="majorization")


def dil_distribution(Q: FiniteDistribution, L: int) -> FiniteDistribution:
    """D_L(Q): Q↓ truncated to its L largest atoms and renormalized."""
    if L < 2:
        raise DomainError(f"D_L(Q) needs L >= 2, got {L}")
    return normalize(Q.sorted[:L])


def dilution_fidelity(Q: FiniteDistribution, L: int) -> float:
    """F^M(U_L→Q) = √(Σ_{i≤L} Q↓(i))."""
    if L < 1:
        raise DomainError(f"L must be positive, got {L}")
    return math.sqrt(min(1.0, math.fsum(Q.sorted[:L])))


def _padded_sorted(P: FiniteDistribution, L: int) -> np.ndarray:
    p = P.sorted
    return np.pad(p, (0, max(0, L - p.size)))


def concentration_index(P: FiniteDistribution, L: int) -> int:
    """J_{P,L}: the largest j ≤ L whose averaged tail stays below P↓(j−1), else 1."""
    p = _padded_sorted(P, L)
    tails = np.cumsum(p[::-1])[::-1]
    index = 1
    for j in range(2, L + 1):
        if tails[j - 1] / (L + 1 - j) < p[j - 2]:
            index = j
    return index


def con_distribution(P: FiniteDistribution, L: int) -> FiniteDistribution:
    """C_L(P): P↓ up to J_{P,L}, then the remaining mass spread evenly up to L."""
    if L < 2:
        raise DomainError(f"C_L(P) needs L >= 2, got {L}")
    p = _padded_sorted(P, L)
    index = concentration_index(P, L)
    tail = math.fsum(p[index - 1:])
    head = list(p[:index - 1])
    return normalize(head + [tail / (L + 1 - index)] * (L + 1 - index))


def concentration_fidelity(P: FiniteDistribution, L: int) -> float:
    """F^M(P→U_L) in closed form."""
    if L < 1:
        raise DomainError(f"L must be positive, got {L}")
    p = _padded_sorted(P, L)
    index = concentration_index(P, L)
    head = math.fsum(np.sqrt(p[:index - 1]))
    tail = math.fsum(p[index - 1:])
    return min(1.0, (head + math.sqrt((L + 1 - index) * tail)) / math.sqrt(L))


def _oracle_inputs(P: FiniteDistribution, Q: FiniteDistribution) -> tuple[np.ndarray, np.ndarray]:
    q = Q.sorted
    p_cum = np.cumsum(_padded_sorted(P, q.size))[:q.size]
    p_cum[-1] = 1.0
    return p_cum, q


def _objective(x: np.ndarray, q: np.ndarray) -> float:
    return float(np.sum(np.sqrt(np.clip(x, 0.0, None) * q)))


def _project_feasible(x: np.ndarray, p_cum: np.ndarray) -> np.ndarray:
    """Nearest point, in prefix sums, that is a distribution majorizing the source exactly."""
    x = np.clip(x, 0.0, None)
    total = x.sum()
    if total <= 0.0:
        return np.diff(np.concatenate(([0.0], p_cum)))
    cum = np.minimum(np.maximum.accumulate(np.maximum(np.cumsum(x / total), p_cum)), 1.0)
    cum[-1] = 1.0
    return np.diff(np.concatenate(([0.0], cum)))


def brute_maj_oracle(P: FiniteDistribution, Q: FiniteDistribution, restarts: int = 100, seed: int = 0) -> float:
    """F^M(P→Q) by exhaustive active-set enumeration.

    For every pattern of tight prefix constraints the optimum on each free
    segment is proportional to Q↓ (Cauchy–Schwarz); the best feasible pattern
    is the global optimum of the concave program. ``restarts`` multi-start
    SLSQP runs are projected back onto the feasible set and only cross-check
    the enumerated value.
    """
    if max(P.size, Q.size) > BRUTE_MAJ_SUPPORT:
        raise ResourceLimit(f"brute-force oracle is limited to support {BRUTE_MAJ_SUPPORT}")
    p_cum, q = _oracle_inputs(P, Q)
    m = q.size
    q_cum = np.cumsum(q)

    best = 0.0
    for pattern in itertools.product((False, True), repeat=m - 1):
        cuts = [k for k, tight in enumerate(pattern, start=1) if tight] + [m]
        x = np.empty(m)
        lower, p_prev, q_prev = 0, 0.0, 0.0
        for cut in cuts:
            scale = (p_cum[cut - 1] - p_prev) / (q_cum[cut - 1] - q_prev)
            x[lower:cut] = scale * q[lower:cut]
            lower, p_prev, q_prev = cut, p_cum[cut - 1], q_cum[cut - 1]
        if np.all(x >= -1e-15) and np.all(np.cumsum(x) >= p_cum - 1e-12):
            best = max(best, _objective(x, q))
    best = min(best, 1.0)

    if restarts > 0:
        numeric = _slsqp_ascent(p_cum, q, restarts, seed)
        if abs(numeric - best) > 1e-6:
            logger.warning("SLSQP ascent disagrees with active-set enumeration: %.12g vs %.12g", numeric, best)
    return best


def _slsqp_ascent(p_cum: np.ndarray, q: np.ndarray, restarts: int, seed: int) -> float:
    m = q.size
    rng = np.random.default_rng(seed)
    base = np.diff(np.concatenate(([0.0], p_cum)))
    point_mass = np.zeros(m)
    point_mass[0] = 1.0
    constraints = [{"type": "eq", "fun": lambda x: np.sum(x) - 1.0}] + [
        {"type": "ineq", "fun": (lambda x, k=k: np.sum(x[:k + 1]) - p_cum[k])} for k in range(m - 1)
    ]
    numeric = 0.0
    for _ in range(restarts):
        t = rng.uniform()
        x0 = (1.0 - t) * base + t * point_mass
        result = minimize(lambda x: -_objective(x, q), x0, method="SLSQP",
                          bounds=[(0.0, 1.0)] * m, constraints=constraints)
        numeric = max(numeric, _objective(_project_feasible(result.x, p_cum), q))
    return numeric


def det_fidelity_brute(P: FiniteDistribution, Q: FiniteDistribution, max_maps: int = BRUTE_DET_MAPS) -> float:
    """F^D(P→Q): exhaustive search over all maps W from P's alphabet to Q's."""
    p, q = np.asarray(P.probs), np.asarray(Q.probs)
    total = q.size ** p.size
    if total > max_maps:
        raise ResourceLimit(f"{total} deterministic maps exceed the limit of {max_maps}")

    best = 0.0
    chunk = 1 << 16
    for first in range(0, total, chunk):
        codes = np.arange(first, min(total, first + chunk), dtype=np.int64)
        rows = np.arange(codes.size)
        images = np.zeros((codes.size, q.size))
        rest = codes.copy()
        for mass in p:
            images[rows, rest % q.size] += mass
            rest //= q.size
        best = max(best, float(np.max(np.sqrt(images * q).sum(axis=1))))
    return min(1.0, best)


class AggregationRun(BaseModel):
    """Source atoms [source_start, source_end) mapped onto target atoms [target_start, target_end)."""

    source_start: int
    source_end: int
    target_start: int
    target_end: int
    log_source_mass: float
    log_target_mass: float


class DeterministicMap(BaseModel):
    runs: list[AggregationRun]
    residual_target: Optional[int] = None

    def as_plan(self, achieved_fidelity: float) -> ConversionPlan:
        segments = [
            PlanSegment(start=run.target_start, end=run.target_end,
                        log_scale=run.log_source_mass - run.log_target_mass)
            for run in self.runs
        ]
        return ConversionPlan(segments=segments, achieved_fidelity=achieved_fidelity, mode="deterministic")


def greedy_det_converter(P: FiniteDistribution | BlockDistribution,
                         Q: FiniteDistribution | BlockDistribution) -> tuple[DeterministicMap, float]:
    """Interval aggregation: consecutive sorted source atoms are grouped so that
    group masses track consecutive sorted target atoms.

    Inside a pair of blocks with atom ratio ρ = w/v each target atom receives
    ⌊jρ⌋ − ⌊(j−1)ρ⌋ source atoms; a target atom straddling a source block
    boundary is filled atom-greedily from the following blocks. Source mass left
    over once the target is exhausted goes to the last target atom. The
    returned fidelity is that of an actual map, hence a lower bound on F^D.
    """
    source, target = as_blocks(P), as_blocks(Q)
    runs: list[AggregationRun] = []
    terms: list[float] = []

    i, rest = 0, source.counts[0]
    source_pos = target_pos = 0
    last: Optional[tuple[float, float, int]] = None  # log mass, log value and index of the last filled target atom

    def next_source_block() -> None:
        nonlocal i, rest
        i += 1
        rest = source.counts[i] if i < source.num_blocks else 0

    for log_w, target_rest in zip(target.log_values, target.counts):
        while target_rest > 0 and i < source.num_blocks:
            log_v = source.log_values[i]
            log2_rho = (log_w - log_v) / LN2
            served = min(target_rest, scale_count(rest, -log2_rho))
            if served > 0:
                consumed = min(rest, scale_count(served, log2_rho))
                per_atom = scale_count(1, log2_rho)
                heavy = min(served, max(0, consumed - served * per_atom))
                light = served - heavy
                if heavy:
                    terms.append(math.exp(math.log(heavy) + 0.5 * (math.log(per_atom + 1) + log_v + log_w)))
                if light and per_atom:
                    terms.append(math.exp(math.log(light) + 0.5 * (math.log(per_atom) + log_v + log_w)))
                last_count = consumed - min(consumed, scale_count(served - 1, log2_rho))
                last = (math.log(last_count) + log_v if last_count else NEG_INF, log_w, target_pos + served - 1)
                runs.append(AggregationRun(
                    source_start=source_pos, source_end=source_pos + consumed,
                    target_start=target_pos, target_end=target_pos + served,
                    log_source_mass=math.log(consumed) + log_v if consumed else NEG_INF,
                    log_target_mass=math.log(served) + log_w,
                ))
                rest -= consumed
                source_pos += consumed
                target_rest -= served
                target_pos += served
                if rest == 0:
                    next_source_block()
                    continue
            if target_rest == 0:
                break

            # one target atom straddles the end of the current source block
            run_start = source_pos
            acc = math.log(rest) + log_v
            source_pos += rest
            next_source_block()
            while i < source.num_blocks and acc < log_w:
                need = log_w + math.log1p(-math.exp(acc - log_w))
                log_v = source.log_values[i]
                block_mass = math.log(rest) + log_v
                if block_mass <= need:
                    acc = _logaddexp(acc, block_mass)
                    source_pos += rest
                    next_source_block()
                    continue
                taken = min(rest, scale_count(1, (need - log_v) / LN2, rounding="nearest"))
                if taken:
                    acc = _logaddexp(acc, math.log(taken) + log_v)
                    source_pos += taken
                    rest -= taken
                    if rest == 0:
                        next_source_block()
                break
            terms.append(math.exp(0.5 * (acc + log_w)))
            runs.append(AggregationRun(
                source_start=run_start, source_end=source_pos,
                target_start=target_pos, target_end=target_pos + 1,
                log_source_mass=acc, log_target_mass=log_w,
            ))
            last = (acc, log_w, target_pos)
            target_rest -= 1
            target_pos += 1
        if i >= source.num_blocks:
            break

    residual_target = None
    if i < source.num_blocks and last is not None:
        leftover = [math.log(rest) + source.log_values[i]]
        leftover += [math.log(c) + v for c, v in zip(source.counts[i + 1:], source.log_values[i + 1:])]
        log_leftover = float(np.logaddexp.reduce(leftover))
        log_mass, log_w, residual_target = last
        merged = _logaddexp(log_mass, log_leftover)
        terms.append(math.exp(0.5 * (merged + log_w)) - math.exp(0.5 * (log_mass + log_w)))
        runs.append(AggregationRun(
            source_start=source_pos, source_end=source.num_atoms,
            target_start=residual_target, target_end=residual_target + 1,
            log_source_mass=log_leftover, log_target_mass=log_w,
        ))

    value = min(1.0, math.fsum(terms))
    return DeterministicMap(runs=runs, residual_target=residual_target), value


def scan_max_copies(fidelity_at: Callable[[int], float], nu: float, start: int = 1,
                    slack: float | None = None) -> tuple[int, dict[int, float]]:
    """Largest L ≥ 0 with fidelity_at(L) ≥ ν, for fidelities non-increasing in L.

    Doubles a step away from ``start`` until the threshold is bracketed, then
    bisects. L = 0 always qualifies (a single point mass is reachable).
    """
    if not 0.0 < nu < 1.0:
        raise DomainError(f"accuracy nu must lie in (0, 1), got {nu}")
    if slack is None:
        slack = AppConfig.from_env().fidelity_slack
    evaluated: dict[int, float] = {}

    def reaches(L: int) -> bool:
        if L == 0:
            return True
        if L not in evaluated:
            evaluated[L] = fidelity_at(L)
            logger.debug("F(L=%d) = %.12g", L, evaluated[L])
        return evaluated[L] >= nu - slack

    start = max(1, start)
    step = 1
    if reaches(start):
        low, high = start, start + step
        while reaches(high):
            low = high
            step *= 2
            high = low + step
    else:
        high = start
        low = max(0, high - step)
        while not reaches(low):
            high = low
            step *= 2
            low = max(0, high - step)
    while high - low > 1:
        middle = (low + high) // 2
        if reaches(middle):
            low = middle
        else:
            high = middle

    scanned = sorted(evaluated.items())
    for (l_a, f_a), (l_b, f_b) in zip(scanned, scanned[1:]):
        if f_b > f_a + 1e-12:
            logger.warning("fidelity increased from L=%d (%.12g) to L=%d (%.12g)", l_a, f_a, l_b, f_b)
    return low, evaluated


def first_order_start(P: FiniteDistribution, Q: FiniteDistribution, n: int) -> int:
    return max(1, math.floor(entropy(P) / entropy(Q) * n))


def max_convertible_M(P: FiniteDistribution, Q: FiniteDistribution, n: int, nu: float,
                      block_cap: int | None = None, start: int | None = None) -> int:
    """L^M_n(P, Q|ν) = max{L | F^M(P^n → Q^L) ≥ ν}."""
    if not 0.0 < nu < 1.0:
        raise DomainError(f"accuracy nu must lie in (0, 1), got {nu}")
    source = tensor_power_blocks(P, n, block_cap)

    def fidelity_at(L: int) -> float:
        return maj_fidelity(source, tensor_power_blocks(Q, L, block_cap))[0]

    copies, evaluated = scan_max_copies(fidelity_at, nu, start or first_order_start(P, Q, n))
    logger.info("L^M_%d = %d after %d fidelity evaluations", n, copies, len(evaluated))
    return copies
