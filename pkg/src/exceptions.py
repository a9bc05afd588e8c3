# src/exceptions.py
"""
Error types raised by the library.

Each error carries the exit code the CLI returns for it:
- 2 = bad input (unreadable file, malformed header, invalid parameters)
- 3 = inputs that parse but disagree (dimensions, label ranges, coverage)
"""


class PanofuseError(Exception):
    """Base class for all panofuse errors"""

    exit_code: int = 1


class InputError(PanofuseError):
    """Input file or parameter could not be used"""

    exit_code = 2


class FormatError(InputError):
    """Bad magic, bad header or malformed JSON"""


class TruncationError(InputError):
    """Payload shorter than the header declares"""


class ValidationError(InputError):
    """Payload parsed but holds invalid values (NaN, non-binary bits, bad config)"""


class WindowSizeError(InputError):
    """Window does not fit inside the image"""


class MissingInputError(InputError):
    """A required input file does not exist"""


class ConsistencyError(PanofuseError):
    """Inputs are individually valid but do not agree with each other"""

    exit_code = 3


class DimensionMismatchError(ConsistencyError):
    """Two maps that must share dimensions do not"""


class LabelRangeError(ConsistencyError):
    """A label is >= num_classes and is not the ignore label"""


class CoverageError(ConsistencyError):
    """Stitching left pixels without a covering window"""


class UndefinedMetricError(ConsistencyError):
    """A metric has no defined value for the given inputs"""


def require_same_dims(*shapes, what: str = "maps") -> None:
    """Raise DimensionMismatchError unless all (H, W) shapes are equal"""
    first = tuple(shapes[0])
    for shape in shapes[1:]:
        if tuple(shape) != first:
            raise DimensionMismatchError(
                f"{what} disagree on dimensions: {first} vs {tuple(shape)}"
            )
