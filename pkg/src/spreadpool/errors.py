"""Exception taxonomy shared by the library and the CLI exit codes."""


class SpreadPoolError(Exception):
    """Base class for all spreadpool errors."""


class ConfigError(SpreadPoolError):
    """Invalid configuration: bad grid spec, camera matrices, CLI flags. Exit code 2."""


class DatasetIOError(SpreadPoolError):
    """Unreadable/unwritable dataset or report files, bad magic or version. Exit code 3."""


class DomainError(SpreadPoolError):
    """Input outside an operation's domain (non-positive depth, bad shapes). Exit code 4."""


class NumericError(SpreadPoolError):
    """Non-finite values or numerically invalid data detected at runtime. Exit code 4."""


class DegenerateGeometryError(NumericError):
    """Collinear or otherwise degenerate geometry that has no unique solution."""


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (DatasetIOError, OSError)):
        return EXIT_IO
    if isinstance(exc, (DomainError, NumericError)):
        return EXIT_NUMERIC
    return 1
