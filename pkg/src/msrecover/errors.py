"""Shared exception types."""


class AlignmentError(ValueError):
    """Requested geometry does not line up with the fine grid."""


class SolverError(RuntimeError):
    """An iterative solve failed to reach its tolerance."""


class ConfigError(ValueError):
    """An experiment configuration is inconsistent or incomplete."""
