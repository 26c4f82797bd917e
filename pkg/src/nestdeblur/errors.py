"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class NestDeblurError(Exception):
    exit_code = 1


class ConfigError(NestDeblurError, ValueError):
    exit_code = 2


class ContractError(NestDeblurError, ValueError):
    """A caller broke an operation's precondition (shapes, presence of inputs)."""

    exit_code = 2


class ShapeError(ContractError):
    pass


class DataError(NestDeblurError):
    exit_code = 3


class FormatError(DataError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedFormatError(FormatError):
    pass


class DecodeError(FormatError):
    pass


class CorruptionError(DataError):
    pass


class VersionError(DataError):
    pass


class NumericError(NestDeblurError, ArithmeticError):
    exit_code = 4
