"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class TimatchError(Exception):
    pass


class ConfigError(TimatchError):
    pass


class DataError(TimatchError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f" in {path}"
        if line is not None:
            where += f" at line {line}"
        super().__init__(message + where)


class NumericError(TimatchError):
    """Raised when a loss or score turns non-finite; names the offending term."""

    def __init__(self, term: str, value: float):
        self.term = term
        self.value = value
        super().__init__(f"non-finite value in {term}: {value!r}")


class CheckpointVersionError(TimatchError):
    pass


class CheckpointCorruptError(TimatchError):
    pass
