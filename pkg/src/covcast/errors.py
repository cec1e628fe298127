"""Exception types shared across the package."""


class CovcastError(Exception):
    """Base class for all errors raised by this package."""


class CorpusFormatError(CovcastError):
    """A corpus or forecast file could not be parsed."""


class ValidationError(CovcastError):
    """A domain object violates one of its invariants."""


class ConfigError(CovcastError):
    """A configuration file or value is invalid."""


class TokenBudgetError(ValidationError):
    """A sample does not fit into the model's token or position budget."""


class CapabilityError(CovcastError):
    """A method was asked to handle an input it cannot support."""


class SolverError(CovcastError):
    """A linear solve failed (e.g. rank-deficient unregularized system)."""


class MetricError(CovcastError):
    """A metric is undefined for the given inputs."""


class NonFiniteError(CovcastError):
    """A non-finite value appeared in a model computation."""


class TrainingDiverged(CovcastError):
    """The training loss became non-finite."""

    def __init__(self, step: int):
        super().__init__(f"non-finite training loss at step {step}")
        self.step = step
