"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class EvaluationError(ArithmeticError):
    """A test function or integrand produced a non-finite value."""


class SingularityError(RuntimeError):
    """The fluid solver hit its numerical floor on the total mass."""


class SimulationAbort(RuntimeError):
    """A simulation exceeded its event budget."""


class UnsupportedOperation(RuntimeError):
    """The requested operation needs data that was not retained."""


class NoSteadyState(ValueError):
    """A steady-state quantity was requested for a non-positive drift."""


class ConfigError(ValueError):
    """An experiment configuration is malformed or violates its invariants."""
