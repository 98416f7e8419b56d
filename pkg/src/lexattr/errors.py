"""Shared exception types, mapped to CLI exit codes."""


class InputError(ValueError):
    """Invalid input data, file format, or configuration (exit code 2)."""


class NumericalError(RuntimeError):
    """Non-finite objective or parameters during training (exit code 3)."""
