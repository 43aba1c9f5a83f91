"""Exception taxonomy shared across the package."""


class KpplabError(Exception):
    """Base class for all package errors."""


class ConfigurationError(KpplabError):
    """Invalid parameters: unresolved kernels, bad grids, inconsistent model specs."""


class StepSizeError(KpplabError):
    """Time step violates the monotonicity bound of the explicit scheme."""


class NumericsError(KpplabError):
    """Non-finite values or overflow encountered during a computation."""


class InvariantBreachError(KpplabError):
    """A discrete invariant that the scheme guarantees was violated (scheme bug)."""


class ConvergenceError(KpplabError):
    """An iteration failed to converge within its budget."""


class BracketError(KpplabError):
    """A minimum or root lies on the boundary of the search range."""


class ConstructionError(KpplabError):
    """A sub/super-solution pair or wave construction failed validation."""


class UnsupportedMediumError(KpplabError):
    """The medium lacks structure required by the operation (e.g. periodicity)."""
