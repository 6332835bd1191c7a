"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: FormatError -> 2, SemanticError -> 3,
SpecValidation -> 4.
"""


class EvtrackError(Exception):
    """Base class for every toolkit error."""


class FormatError(EvtrackError):
    """Malformed input bytes or text: bad headers, bad records, bad CSV."""


class BadMagic(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class TruncatedFile(FormatError):
    pass


class OutOfBoundsEvent(FormatError):
    pass


class NonMonotonicTimestamp(FormatError):
    pass


class BadPolarity(FormatError):
    pass


class SemanticError(EvtrackError):
    """Inputs are well formed but inconsistent with each other or a flag."""


class ZeroWindow(SemanticError):
    pass


class DimensionMismatch(SemanticError):
    pass


class BadBins(SemanticError):
    pass


class ShapeMismatch(SemanticError):
    pass


class DegenerateBox(SemanticError):
    pass


class FrameMisalignment(SemanticError):
    pass


class MissingVisibility(SemanticError):
    pass


class OutOfOrderFrame(SemanticError):
    pass


class SpecValidation(EvtrackError):
    """A scene specification failed validation; message carries the field path."""
