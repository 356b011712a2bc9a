"""Exception and warning types raised across the harness."""


class TstbenchError(Exception):
    """Base class for all harness errors."""


class DimensionMismatch(TstbenchError, ValueError):
    pass


class UnequalSizes(TstbenchError, ValueError):
    pass


class TooFewPoints(TstbenchError, ValueError):
    pass


class FactorizationFailure(TstbenchError, ArithmeticError):
    pass


class NotInvertible(TstbenchError):
    """The deformation has no closed-form inverse or density."""


class SingularPoint(TstbenchError, ArithmeticError):
    """A power deformation Jacobian was evaluated at a zero coordinate."""


class DomainError(TstbenchError, ValueError):
    pass


class ParseError(TstbenchError, ValueError):
    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class NonFiniteValue(ParseError):
    pass


class ConstantFeature(TstbenchError, ValueError):
    def __init__(self, index):
        super().__init__(f"feature {index} is constant and cannot be standardized")
        self.index = index


class ConfigError(TstbenchError, ValueError):
    pass


class MissingCache(TstbenchError, FileNotFoundError):
    pass


class InsufficientTailWarning(UserWarning):
    """Too few null values beyond the requested threshold."""


class NonMonotoneWarning(UserWarning):
    """Alternative-hypothesis means are not monotone in epsilon."""


class NarrowFeatureWarning(UserWarning):
    """A feature is nearly delta-distributed relative to its range."""
