from core.converters.base_converter import BaseConverter, ConversionResult
from core.converters.deterministic import DeterministicConverter
from core.converters.majorization import MajorizationConverter
from core.exceptions import DomainError

_CONVERTER_MAP = {
    "maj": MajorizationConverter,
    "det": DeterministicConverter,
}


def get_converter(mode: str, logger, block_cap: int | None = None) -> BaseConverter:
    """
    Factory function to get the conversion back end for a mode.

    Args:
        mode (str): 'maj' for majorization or 'det' for deterministic conversion.

    Returns:
        An instance of a BaseConverter subclass.
    """
    converter_class = _CONVERTER_MAP.get(mode.lower())
    if not converter_class:
        raise DomainError(f"Unknown conversion mode '{mode}'. Available: {list(_CONVERTER_MAP.keys())}")
    return converter_class(logger, block_cap)
