"""Exception hierarchy shared by every module of the toolkit."""


class G2PError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(G2PError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(G2PError, RuntimeError):
    """A function was called outside its documented preconditions."""


class ConfigError(G2PError, ValueError):
    pass


class InputError(G2PError, ValueError):
    pass


class VocabularyError(G2PError, KeyError):
    """A symbol or id is not covered by the vocabulary."""

    def __init__(self, message, symbols=()):
        super().__init__(message)
        self.message = message
        self.symbols = tuple(symbols)

    def __str__(self):
        return self.message


class LexiconParseError(G2PError, ValueError):
    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class NumericalError(G2PError, FloatingPointError):
    """NaN or Inf encountered while anomaly detection is enabled."""


class EnsembleError(G2PError, ValueError):
    pass


class CheckpointError(G2PError, ValueError):
    pass
