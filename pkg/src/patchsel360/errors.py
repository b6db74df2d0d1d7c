"""Exception hierarchy shared by all patchsel360 modules."""


class PatchSelError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(PatchSelError):
    """Input dimensions are incompatible with the requested operation."""


class DefinitenessError(PatchSelError):
    """A matrix required to be positive definite is not.

    ``pivot`` is the (0-based) index of the first leading minor whose
    Cholesky factorization fails, when known.
    """

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class SpectrumError(PatchSelError):
    """Too few usable eigenvalues for the requested target rank.

    ``available`` carries the number of non-negative eigenvalues found.
    """

    def __init__(self, message, available=None):
        super().__init__(message)
        self.available = available


class DegenerateInputError(PatchSelError):
    """Input is formally valid but leaves a required quantity undefined."""


class InputError(PatchSelError):
    """Invalid user-supplied value (ranges, counts, coordinates)."""


class ConstraintError(PatchSelError):
    """A parameter fails one or more structural constraints.

    ``failures`` lists one human-readable reason per violated condition.
    """

    def __init__(self, message, failures=()):
        super().__init__(message)
        self.failures = list(failures)


class DivergenceError(PatchSelError):
    """An iterative procedure produced a non-finite value.

    ``step`` is the iteration or training-step index at which the
    divergence was detected.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class FitError(PatchSelError):
    """Nonlinear fit failed to converge. ``params`` holds the best point found."""

    def __init__(self, message, params=None):
        super().__init__(message)
        self.params = params


class FormatError(PatchSelError):
    """A file does not conform to its documented binary/text layout.

    ``offset`` is the byte offset of the first offending field, when known.
    """

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class JoinError(PatchSelError):
    """Records from two inputs could not be matched by id.

    ``ids`` lists the identifiers that had no counterpart.
    """

    def __init__(self, message, ids=()):
        super().__init__(message)
        self.ids = list(ids)
