"""Exception and warning types shared across the package."""


class XBMError(Exception):
    """Base class for package errors."""


class ParameterError(XBMError, ValueError):
    """Invalid argument values or shapes."""


class UnsupportedSizeError(ParameterError):
    """Layer sizes outside the range the topology generator handles."""


class ConstructionError(XBMError):
    """A degree sequence pair could not be realised as a simple graph."""


class FormatError(XBMError, ValueError):
    """Malformed input file."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TrainingDivergence(XBMError, FloatingPointError):
    """Parameters became non-finite during training."""


class TopologyWarning(UserWarning):
    """Generation finished without meeting its acceptance condition, or a
    metric was evaluated on a degenerate graph."""
