"""Exception hierarchy shared by every module."""


class MambaLabError(Exception):
    """Base class for all library errors."""


class InvariantViolation(MambaLabError, ValueError):
    """A constructor guard rejected inconsistent fields."""


class ShapeError(MambaLabError, ValueError):
    pass


class InvalidDimensionError(MambaLabError, ValueError):
    pass


class TensorFormatError(MambaLabError):
    """Base for STNS tensor file decoding failures."""


class BadMagicError(TensorFormatError):
    pass


class UnsupportedFormatError(TensorFormatError):
    """Unknown version or dtype byte."""


class DimsOverflowError(TensorFormatError):
    pass


class TruncatedPayloadError(TensorFormatError):
    pass


class PgmFormatError(MambaLabError):
    pass


class SingularMatrixError(MambaLabError, ArithmeticError):
    def __init__(self, method: str, detail: str = ""):
        self.method = method
        msg = f"singular matrix in {method} discretization"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class NumericRangeError(MambaLabError, ArithmeticError):
    pass


class DegenerateMapError(MambaLabError):
    """All contributions are non-positive, so no ERF image can be normalized."""
