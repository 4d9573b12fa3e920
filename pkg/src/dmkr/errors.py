"""Exception types shared across the package.

Exit-code mapping used by the CLI: ConfigError -> 2, numerical guard
aborts (LeakageError, StabilityError, SingularityError) -> 3,
verification failures -> 4.
"""


class DmkrError(Exception):
    """Base class for all package errors."""


class ConfigError(DmkrError, ValueError):
    """Invalid configuration or parameters."""


class DomainError(DmkrError, ValueError):
    """Input outside the mathematical domain of an operation."""


class EmptyDistributionError(DomainError):
    """All-zero weights cannot be normalized into a distribution."""


class GeometryError(DmkrError, ValueError):
    """Two distributions or fields do not share the same grid."""


class UndefinedMeasureError(DmkrError, ValueError):
    """A comparison measure is undefined for these inputs (e.g. 0/0)."""


class BandFitError(ConfigError):
    """The initial momentum band does not fit in the truncated basis."""


class LeakageError(DmkrError, RuntimeError):
    """Edge-of-basis population exceeded the guard threshold."""

    def __init__(self, period: int, population: float, guard: float):
        self.period = period
        self.population = population
        self.guard = guard
        super().__init__(
            f"edge population {population:.3e} exceeded guard {guard:.1e} "
            f"at period {period}; enlarge the basis (increase n_max) or "
            f"reduce the kick strength"
        )


class StabilityError(DmkrError, RuntimeError):
    """A PDE step violated its stability constraint."""


class SingularityError(DmkrError, ValueError):
    """Evaluation at a singular point (e.g. f(|p|) = 0)."""
