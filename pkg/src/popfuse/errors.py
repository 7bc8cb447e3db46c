"""Exception types shared across the package."""


class PopfuseError(Exception):
    """Base class for all popfuse errors."""


class GridMismatch(PopfuseError):
    """Two objects that must share bin edges or category counts do not."""


class NotNormalized(PopfuseError):
    """A mass array is negative, non-finite, or too far from summing to one."""


class DegenerateSelection(PopfuseError):
    """The selection probabilities can never include anyone in the sample."""


class EmptyInput(PopfuseError):
    """No usable values were supplied."""


class FormatError(PopfuseError):
    """An input file does not follow its declared format."""


class Infeasible(PopfuseError):
    """The constraints admit no probability distribution."""


class NotConverged(PopfuseError):
    """The solver hit its iteration cap above tolerance."""


class EmptySample(PopfuseError):
    """Bernoulli thinning selected no individual."""


class InsufficientUsers(PopfuseError):
    """Too few users pass the activity filter to form the polarized tails."""
