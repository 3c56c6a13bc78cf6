"""Exception taxonomy shared across the package.

ConfigurationError and DataFormatError map to CLI exit status 2 (bad inputs);
everything else that escapes a run maps to exit status 1 (runtime failure).
"""


class PseudoreplayError(Exception):
    pass


class ConfigurationError(PseudoreplayError, ValueError):
    """Invalid parameter or config value."""


class DataFormatError(PseudoreplayError, ValueError):
    """Malformed or inconsistent input data."""


class TrainingError(PseudoreplayError, RuntimeError):
    """Training diverged or could not proceed."""
