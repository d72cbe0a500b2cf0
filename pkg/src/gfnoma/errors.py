"""Exception and warning types shared across the package."""


class ConfigurationError(ValueError):
    """A scenario, network, or experiment configuration is inconsistent."""


class ShapeMismatchError(ValueError):
    """Array dimensions do not match what an operation requires."""


class ContractViolationError(RuntimeError):
    """An internal precondition was broken (e.g. a stale forward cache)."""


class DegenerateSystemWarning(RuntimeWarning):
    """A refit system was rank deficient and diagonal loading was applied."""
