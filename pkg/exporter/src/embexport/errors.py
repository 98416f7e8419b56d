"""Exception types for export jobs."""


class ExportError(ValueError):
    """Invalid job configuration or corpus content (exit code 2)."""


class EncoderUnavailable(ExportError):
    """The requested encoder cannot be constructed on this machine."""
