from abc import ABC, abstractmethod
from typing import Optional

from pydantic import BaseModel

from core.conversion_engine import ConversionPlan, first_order_start, scan_max_copies
from core.distributions import BlockDistribution, FiniteDistribution, tensor_power_blocks
from core.exceptions import ComputationError


class ConversionResult(BaseModel):
    fidelity: float
    plan: Optional[ConversionPlan] = None
    exact: bool = True


class BaseConverter(ABC):
    """
    Abstract Base Class for a conversion back end.
    This class builds the i.i.d. powers and runs the copy-number scan.
    Subclasses implement the fidelity of a single source/target pair for
    their class of allowed operations.
    """

    mode: str = ""

    def __init__(self, logger, block_cap: int | None = None):
        self.logger = logger
        self.block_cap = block_cap

    @abstractmethod
    def _convert(self, source: BlockDistribution, target: BlockDistribution) -> ConversionResult:
        """Best achievable fidelity from source to target."""
        raise NotImplementedError

    def fidelity(self, P: FiniteDistribution, Q: FiniteDistribution, n: int = 1, L: int = 1) -> ConversionResult:
        """Converts P^n into Q^L."""
        self.logger.info(f"Converting P^{n} into Q^{L} ({self.mode})")
        source = tensor_power_blocks(P, n, self.block_cap)
        target = tensor_power_blocks(Q, L, self.block_cap)
        try:
            result = self._convert(source, target)
        except ComputationError as e:
            self.logger.error(f"{self.mode} conversion of P^{n} into Q^{L} failed: {e}")
            raise
        self.logger.debug(f"F(P^{n} -> Q^{L}) = {result.fidelity:.12g} (exact={result.exact})")
        return result

    def max_copies(self, P: FiniteDistribution, Q: FiniteDistribution, n: int, nu: float) -> int:
        """Largest L whose fidelity from P^n reaches nu."""
        source = tensor_power_blocks(P, n, self.block_cap)

        def fidelity_at(L: int) -> float:
            return self._convert(source, tensor_power_blocks(Q, L, self.block_cap)).fidelity

        copies, evaluated = scan_max_copies(fidelity_at, nu, first_order_start(P, Q, n))
        self.logger.info(f"L_{n} = {copies} ({self.mode}, {len(evaluated)} evaluations)")
        return copies
