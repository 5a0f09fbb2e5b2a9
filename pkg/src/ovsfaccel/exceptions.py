"""Exception hierarchy shared by every module of the package."""


class OvsfAccelError(Exception):
    """Base class for all package errors."""


class ConfigurationError(OvsfAccelError, ValueError):
    """An argument or configuration value is outside its legal range."""


class ValidationError(OvsfAccelError, ValueError):
    """Input data does not satisfy a structural contract."""


class NumericalError(OvsfAccelError, ArithmeticError):
    """A numerical routine could not produce a trustworthy result."""


class AccumulatorOverflowError(NumericalError):
    """A fixed-point accumulator left its signed range."""


class NotMappableError(OvsfAccelError):
    """A compressed layer cannot be executed by the weights generator."""


class ParseError(OvsfAccelError, ValueError):
    """A text spec file is malformed.

    ``line`` and ``field`` point at the offending location when known.
    """

    def __init__(self, message, line=None, field=None, path=None):
        self.line = line
        self.field = field
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ContainerError(OvsfAccelError):
    """The binary weights container is unreadable."""


class ChecksumError(ContainerError):
    """The container payload does not match its stored CRC."""


class InfeasibleDesignError(OvsfAccelError):
    """No design point in the search space satisfies the resource budget."""

    def __init__(self, message, constraint=None):
        self.constraint = constraint
        super().__init__(message)


class InvariantError(OvsfAccelError, AssertionError):
    """A simulator cross-check failed."""
