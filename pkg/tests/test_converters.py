import logging
import math

import pytest

from core.converters import get_converter
from core.converters.deterministic import DeterministicConverter
from core.converters.majorization import MajorizationConverter
from core.distributions import FiniteDistribution, normalize_and_sort
from core.exceptions import DomainError

logger = logging.getLogger("test_converters")

U2 = FiniteDistribution.uniform(2)


def test_factory():
    assert isinstance(get_converter("maj", logger), MajorizationConverter)
    assert isinstance(get_converter("DET", logger), DeterministicConverter)
    with pytest.raises(DomainError):
        get_converter("lossy", logger)


def test_majorization_result_carries_a_plan():
    result = get_converter("maj", logger).fidelity(U2, U2, n=10, L=12)
    assert result.fidelity == pytest.approx(0.5, abs=1e-12)
    assert result.exact
    assert result.plan is not None and result.plan.mode == "majorization"


def test_deterministic_small_instances_are_exact():
    result = get_converter("det", logger).fidelity(normalize_and_sort([0.6, 0.4]), U2)
    assert result.exact
    assert result.plan is None
    assert result.fidelity == pytest.approx(math.sqrt(0.3) + math.sqrt(0.2), abs=1e-12)


def test_deterministic_large_instances_fall_back():
    P = normalize_and_sort([0.6, 0.4])
    det = get_converter("det", logger).fidelity(P, normalize_and_sort([0.7, 0.3]), n=12, L=10)
    maj = get_converter("maj", logger).fidelity(P, normalize_and_sort([0.7, 0.3]), n=12, L=10)
    assert not det.exact
    assert det.plan is not None and det.plan.mode == "deterministic"
    assert det.fidelity <= maj.fidelity + 1e-12


def test_max_copies():
    assert get_converter("maj", logger).max_copies(U2, U2, n=10, nu=0.5) == 12
    assert get_converter("det", logger).max_copies(U2, U2, n=3, nu=0.5) <= 5


def test_block_cap_is_forwarded():
    converter = get_converter("maj", logger, block_cap=3)
    assert converter.block_cap == 3
