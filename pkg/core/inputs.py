"""Loading of distribution and state JSON files."""

from pathlib import Path

from pydantic import ValidationError

from core.distributions import FiniteDistribution, normalize
from core.exceptions import InvalidDistribution, InvalidState
from core.locc import BipartiteState, state_from_record
from core.models import DistributionFile, StateFile


def load_distribution(path: Path) -> FiniteDistribution:
    """Reads {"p": [...]}; zero atoms are dropped and the vector is renormalized."""
    try:
        record = DistributionFile.model_validate_json(Path(path).read_text())
    except ValidationError as e:
        raise InvalidDistribution(f"{path}: {e}") from e
    return normalize(record.p)


def load_state(path: Path) -> BipartiteState:
    try:
        record = StateFile.model_validate_json(Path(path).read_text())
    except ValidationError as e:
        raise InvalidState(f"{path}: {e}") from e
    return state_from_record(record)
