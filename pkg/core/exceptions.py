class RNCError(Exception):
    ...


class InputError(RNCError):
    ...


class InvalidDistribution(InputError):
    ...


class DomainError(InputError):
    ...


class InvalidState(InputError):
    ...


class ProductStateError(InvalidState):
    ...


class ComputationError(RNCError):
    ...


class RootBracketError(ComputationError):
    ...


class QuadratureError(ComputationError):
    ...


class SolverError(ComputationError):
    ...


class ResourceLimit(RNCError):
    ...


class StudyExecutionError(RNCError):
    ...
