"""Exception types shared across the package."""


class HQFNNError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(HQFNNError, ValueError):
    pass


class WrongCircuitKind(InvalidArgument):
    pass


class InvalidInput(InvalidArgument):
    pass


class StateError(HQFNNError, RuntimeError):
    """An operation needed cached state (e.g. a forward pass) that is missing."""


class FormatError(HQFNNError, ValueError):
    pass


class ConsistencyError(HQFNNError, ValueError):
    pass


class ParseError(FormatError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedVersion(ParseError):
    pass


class NumericFailure(HQFNNError, ArithmeticError):
    def __init__(self, message, epoch=None):
        if epoch is not None:
            message = f"{message} (epoch {epoch})"
        super().__init__(message)
        self.epoch = epoch
