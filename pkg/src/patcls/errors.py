"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: ValidationError and TrainingError
exit 1, FileFormatError and OSError exit 2.
"""


class ValidationError(Exception):
    """Bad content in a text input or a violated semantic constraint."""


class FileFormatError(Exception):
    """Corrupt or structurally invalid binary file (PEMB / PMLP)."""


class TrainingError(Exception):
    """Numeric failure during a training run (non-finite loss/gradients)."""
