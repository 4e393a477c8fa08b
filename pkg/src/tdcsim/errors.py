"""Exception hierarchy shared by all simulator modules."""


class TdcError(Exception):
    """Base class for simulator errors."""


class CodeRangeError(TdcError, ValueError):
    """An integer code lies outside its representable range."""


class DomainError(TdcError, ValueError):
    """A model was evaluated outside the domain where it is defined."""


class HorizonError(TdcError):
    """A hit falls beyond the last generated clock edge."""


class LockError(TdcError):
    """The master DLL servo has no fixed point in the control range."""


class ResidueError(TdcError):
    """Residue extraction failed (underflow or not enough margin taps)."""


class InsufficientStatisticsError(TdcError, ValueError):
    pass


class InconsistentMatrixError(TdcError, ValueError):
    """A pairwise variance matrix implies a negative channel variance."""

    def __init__(self, index, value):
        super().__init__(f"channel {index}: solved variance {value:.6g} ps^2 is negative")
        self.index = index
        self.value = value


class CalibrationError(TdcError):
    """A correction level was requested that the table does not provide."""


class ConfigError(TdcError, ValueError):
    """Invalid scenario configuration; ``diagnostics`` lists every problem."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(self.diagnostics))
