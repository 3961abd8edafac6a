"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: bad loss key, out-of-range hyperparameter, misuse of an option."""


class ParseError(ValueError):
    """Malformed input file; the message carries a byte offset or line number."""


class SolverError(RuntimeError):
    """Root finding failed."""


class BracketError(SolverError):
    """Requested target lies outside the achievable range of the search bracket."""


class PrecisionError(SolverError):
    """Monte-Carlo noise is too large for the requested tolerance at the given sample count."""


class NumericError(RuntimeError):
    """An iterative numeric routine failed to converge within its budget."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss; the message records the offending epoch and batch."""
