"""Exception hierarchy shared across the package."""


class DetectionError(Exception):
    """Base class for all package-specific errors."""


class ModelError(DetectionError):
    """Invalid model, scenario spec, or policy data."""


class ContractError(DetectionError):
    """A runtime precondition that callers must guarantee was violated."""


class ImpossibleObservationError(ContractError):
    """An observed transition has zero likelihood under every active model.

    Signals that the candidate set does not contain the data-generating
    process (model-set misspecification).
    """


class HorizonCapError(DetectionError):
    """An exact-enumeration horizon exceeded its configured cap."""
