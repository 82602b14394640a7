"""Exception types shared across modules."""


class NcIndexError(Exception):
    """Base class for all library errors."""


class NotAGroup(NcIndexError):
    pass


class ParentMismatch(NcIndexError):
    pass


class Singular(NcIndexError):
    pass


class NotIdempotent(NcIndexError):
    pass


class DegreeUnsupported(NcIndexError):
    pass


class ParityMismatch(NcIndexError):
    pass


class SummabilityViolation(NcIndexError):
    pass


class IllConditioned(NcIndexError):
    pass


class ZeroMode(NcIndexError):
    pass


class BackendUnsupported(NcIndexError):
    pass


class DerivativeCapExceeded(NcIndexError):
    pass


class NonSummable(NcIndexError):
    pass


class PathMissing(NcIndexError):
    pass


class RootConditioning(NcIndexError):
    pass


class OrderMismatch(NcIndexError):
    pass


class SupportViolation(NcIndexError):
    pass


class QuadratureNonConvergence(NcIndexError):
    pass


class UnsupportedFixedManifold(NcIndexError):
    pass


class ConfigInvalid(NcIndexError):
    pass


class SchemaMismatch(NcIndexError):
    pass


class WindowTooSmall(NcIndexError):
    """A Fourier window cannot hold the products needed for an exact trace."""


class TruncationLoss(UserWarning):
    """Raised as a warning when a degree-raising operator drops the top degree."""
