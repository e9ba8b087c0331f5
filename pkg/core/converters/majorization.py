from core.conversion_engine import maj_fidelity
from core.converters.base_converter import BaseConverter, ConversionResult
from core.distributions import BlockDistribution


class MajorizationConverter(BaseConverter):
    """
    Majorization conversion: P may be replaced by any P' with P ≺ P'.
    This is also the optimal LOCC conversion of the corresponding pure states.
    """

    mode = "maj"

    def _convert(self, source: BlockDistribution, target: BlockDistribution) -> ConversionResult:
        value, plan = maj_fidelity(source, target)
        return ConversionResult(fidelity=value, plan=plan, exact=True)
