"""Exception types shared across the package.

The command-line layer maps these onto exit codes: configuration problems
(ConfigError, InvalidParameterError) exit 2, numerical failures
(NumericalError) exit 3, and verification-suite violations
(CheckViolationError) exit 4.
"""


class InvalidParameterError(ValueError):
    """A physical or numerical parameter is outside its admissible range."""


class ConfigError(ValueError):
    """A configuration file or CLI flag could not be interpreted."""


class NumericalError(RuntimeError):
    """The computation produced unusable numbers (NaN/Inf, no convergence).

    ``context`` may carry diagnostic objects (e.g. the offending ensemble)
    for post-mortem inspection.
    """

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context


class CheckViolationError(RuntimeError):
    """A verification suite reported at least one violated inequality."""
