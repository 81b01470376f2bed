"""Exception hierarchy shared by all ispmeta modules.

Each exception carries the CLI exit code it maps to.
"""

from __future__ import annotations

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_IO = 4


class IspMetaError(Exception):
    exit_code = EXIT_DATA


# -- configuration problems (exit 2) ----------------------------------------

class ConfigError(IspMetaError):
    exit_code = EXIT_CONFIG


class RangeError(ConfigError, ValueError):
    """A numeric argument is outside its allowed range."""


class CapacityError(ConfigError):
    """Data does not fit the configured device."""


# -- data problems (exit 3) ---------------------------------------------------

class DataError(IspMetaError):
    exit_code = EXIT_DATA


class EncodingError(DataError, ValueError):
    """A sequence contains a character outside {A,C,G,T}."""


class ParseError(DataError):
    def __init__(self, message: str, record: int | None = None):
        if record is not None:
            message = f"record {record}: {message}"
        super().__init__(message)
        self.record = record


class PlanError(DataError):
    pass


class BuildError(DataError):
    pass


class OrderError(DataError):
    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"position {position}: {message}"
        super().__init__(message)
        self.position = position


# -- I/O (exit 4) -------------------------------------------------------------

class IoError(IspMetaError, OSError):
    exit_code = EXIT_IO
