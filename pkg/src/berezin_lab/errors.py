"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes, so keep the classes coarse.
"""


class BerezinLabError(Exception):
    """Base class for all library errors."""


class InvalidArgument(BerezinLabError, ValueError):
    """A precondition on an argument was violated."""


class GeometryMismatch(InvalidArgument):
    """Objects built for different geometries were combined."""


class NonAdmissibleError(InvalidArgument):
    """The wavelet has a nonzero mean, or cannot be balanced by scaling."""


class ResourceError(BerezinLabError):
    """A dense object would exceed the configured size cap."""


class StageFailure(BerezinLabError):
    """No candidate translate met the stage bound of the selection loop."""

    def __init__(self, message, stage, best_bound):
        super().__init__(message)
        self.stage = stage
        self.best_bound = best_bound
