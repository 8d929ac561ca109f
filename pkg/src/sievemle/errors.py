"""Exception hierarchy shared by all estimation and diagnostics modules."""


class SieveError(Exception):
    """Base class for all package-specific failures."""


class DomainError(SieveError, ValueError):
    """Evaluation point outside the [0, 1] domain."""


class ShapeError(SieveError, ValueError):
    """Array arguments with incompatible dimensions."""


class RankDeficiencyError(SieveError):
    """Gram or design matrix numerically singular.

    ``index`` points at the basis function whose Cholesky pivot collapsed.
    """

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"rank-deficient at basis index {index}")


class CollinearityError(SieveError):
    """Linear covariate explained by the sieve span; zero efficient information."""


class DegenerateInformationError(SieveError):
    """Efficient information numerically non-positive."""


class SingularInformationError(SieveError):
    """Nuisance information block singular; tilt direction undefined."""


class NoInformationError(SieveError):
    """No observed events, or covariate constant: partial likelihood carries no information."""


class SeparationError(SieveError):
    """Monotone partial likelihood; maximizer diverges."""


class IterationError(SieveError):
    """Newton iterations exhausted without meeting the score tolerance.

    ``trace`` holds the (theta, score) pairs of every iteration taken.
    """

    def __init__(self, trace, message=None):
        self.trace = trace
        super().__init__(message or f"no convergence after {len(trace)} iterations")


class InvalidHazardError(SieveError):
    """Sieve hazard non-positive somewhere on [0, 1]."""


class InvalidPathError(SieveError):
    """Tilted hazard along a one-dimensional submodel path becomes non-positive."""


class EmptyRiskError(SieveError):
    """A sieve cell intersecting the observation window has zero at-risk mass."""


class SupportTruncationError(SieveError):
    """At-risk mass vanishes before the horizon; shrink the horizon."""


class SupportMismatchError(SieveError):
    """Density ratio non-finite on the sampled support."""


class AggregateFailureError(SieveError):
    """Replication failure rate above the experiment budget."""
