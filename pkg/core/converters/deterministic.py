import math

from core.conversion_engine import BRUTE_DET_MAPS, det_fidelity_brute, greedy_det_converter
from core.converters.base_converter import BaseConverter, ConversionResult
from core.distributions import BlockDistribution


class DeterministicConverter(BaseConverter):
    """
    Deterministic conversion: P is pushed forward through a map W.
    Small instances are solved exactly by enumerating every map; larger ones
    fall back to interval aggregation, whose fidelity is a lower bound.
    """

    mode = "det"

    def _brute_forceable(self, source: BlockDistribution, target: BlockDistribution) -> bool:
        atoms = source.num_atoms
        return atoms * math.log(target.num_atoms) <= math.log(BRUTE_DET_MAPS)

    def _convert(self, source: BlockDistribution, target: BlockDistribution) -> ConversionResult:
        if self._brute_forceable(source, target):
            value = det_fidelity_brute(source.to_finite(), target.to_finite())
            return ConversionResult(fidelity=value, exact=True)

        self.logger.debug(f"{source.num_atoms} source atoms: using interval aggregation")
        mapping, value = greedy_det_converter(source, target)
        return ConversionResult(fidelity=value, plan=mapping.as_plan(value), exact=False)
