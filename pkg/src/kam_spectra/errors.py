"""Exception hierarchy.

Every error raised by the library derives from :class:`KamError`, so callers
(the CLI in particular) can map whole families onto exit codes.
"""


class KamError(Exception):
    """Base class for all library errors."""


class InvalidWindowError(KamError, ValueError):
    pass


class DegenerateSpectrumError(KamError, ArithmeticError):
    """Two eigenvalues (or a gap denominator) collapse below the working floor."""


class NearDegeneracyError(DegenerateSpectrumError):
    pass


class EmptyShiftError(KamError, ValueError):
    pass


class EmptyProductError(KamError, ValueError):
    pass


class InvalidOffsetError(KamError, ValueError):
    pass


class InvalidLossError(KamError, ValueError):
    pass


class NeumannPreconditionError(KamError, ArithmeticError):
    pass


class DivergenceError(KamError, ArithmeticError):
    pass


class PoleError(KamError, ArithmeticError):
    pass


class FlatFunctionError(KamError, ArithmeticError):
    pass


class ResonanceError(KamError, ArithmeticError):
    pass


class ProfileError(KamError, ValueError):
    pass


class DomainError(KamError, ValueError):
    pass


class ConstantOverflowError(KamError, OverflowError):
    pass


class RigorViolationError(KamError):
    """A condition of the convergence proof failed while running in rigorous mode."""

    def __init__(self, message, ledger=None):
        super().__init__(message)
        self.ledger = list(ledger or [])


class DegenerateColumnError(KamError, ArithmeticError):
    pass


class SymmetryError(KamError, ValueError):
    pass


class OracleFailureError(KamError, ArithmeticError):
    pass


class PairingError(KamError):
    def __init__(self, message, witnesses=()):
        super().__init__(message)
        self.witnesses = list(witnesses)


class SizeError(KamError, ValueError):
    pass


class ConfigError(KamError, ValueError):
    pass
