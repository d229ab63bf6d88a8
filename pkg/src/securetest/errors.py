"""Exception hierarchy shared across the package."""


class SecureTestError(Exception):
    """Base class for all package errors."""


class RangeError(SecureTestError, ValueError):
    """A value does not fit the fixed-point encoding or an allowed interval."""


class DimensionError(SecureTestError, ValueError):
    """Operand widths or vector lengths do not match."""


class StructureError(SecureTestError, ValueError):
    """A model or circuit is structurally invalid."""


class ModelFormatError(StructureError):
    """A model or dataset file does not follow its schema."""


class InvalidParameter(SecureTestError, ValueError):
    pass


class NoSolution(SecureTestError):
    """The parameter solver could not bracket a root."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class PreconditionError(SecureTestError, ValueError):
    pass


class BudgetExhausted(SecureTestError):
    """The threshold mechanism has answered all of its allotted queries."""


class ConcurrentUseError(SecureTestError):
    pass


class ProtocolError(SecureTestError):
    """An MPC session deviated from the expected message flow."""


class DesyncError(ProtocolError):
    pass


class ReconstructionError(ProtocolError):
    """Duplicated share components disagree during reconstruction."""


class HandshakeError(ProtocolError):
    pass


class TransportError(SecureTestError):
    """A link failed, timed out or was closed."""
