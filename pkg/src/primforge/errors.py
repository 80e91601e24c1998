"""Exception and warning types shared across the package."""


class PrimforgeError(Exception):
    """Base class for all package errors."""


class FormatError(PrimforgeError):
    """A file or byte stream could not be decoded."""


class BadMagic(FormatError):
    pass


class VersionUnsupported(FormatError):
    pass


class TruncatedFile(FormatError):
    pass


class InvalidClassTag(FormatError):
    pass


class ParseError(FormatError):
    """Malformed text input; ``lineno`` is 1-based."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class InvalidModel(PrimforgeError):
    pass


class EmptyViews(PrimforgeError):
    pass


class BadPose(PrimforgeError):
    pass


class DegenerateMesh(PrimforgeError):
    pass


class NoInterior(PrimforgeError):
    """The grid holds no negative (inside) voxel."""


class EmptySet(PrimforgeError):
    pass


class NonUnitNormal(PrimforgeError):
    pass


class NonPositiveEpsilon(PrimforgeError):
    pass


class SignAmbiguityWarning(UserWarning):
    """Axis parity votes disagreed on many near-surface voxels."""
