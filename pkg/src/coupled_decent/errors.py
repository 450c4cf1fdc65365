"""Exception types raised across the package."""


class CoupledError(Exception):
    """Base class for all package errors."""


class InvalidParam(CoupledError, ValueError):
    pass


class UnconnectableGraph(CoupledError):
    pass


class NotConnected(CoupledError):
    pass


class DegenerateConstraints(CoupledError):
    pass


class InfeasibleInstance(CoupledError):
    pass


class BoundViolated(CoupledError):
    def __init__(self, name, value, bound):
        super().__init__(f"{name}: value {value!r} violates bound {bound!r}")
        self.name = name
        self.value = value
        self.bound = bound


class SplitMismatch(CoupledError, ValueError):
    pass


class ParseError(CoupledError, ValueError):
    def __init__(self, line, column, reason):
        super().__init__(f"line {line}, column {column}: {reason}")
        self.line = line
        self.column = column
        self.reason = reason


class LocalityViolation(CoupledError):
    pass


class ShapeMismatch(CoupledError, ValueError):
    pass


class InvariantViolation(CoupledError):
    pass


class NonFiniteIterate(CoupledError, FloatingPointError):
    pass


class SingularKKT(CoupledError):
    pass


class DimensionTooLarge(CoupledError):
    pass
