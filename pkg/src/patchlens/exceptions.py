"""Exception hierarchy shared by every module.

Each class maps onto one CLI exit code (see :mod:`patchlens.cli`).
"""


class PatchLensError(Exception):
    exit_code = 2


class ConfigError(PatchLensError, ValueError):
    """Invalid parameters or configuration."""

    exit_code = 1


class DimensionError(PatchLensError, ValueError):
    """Array shapes that do not agree with the requested operation."""

    exit_code = 2


class DataError(PatchLensError):
    """Malformed or inconsistent input files."""

    exit_code = 2


class NumericError(PatchLensError, ArithmeticError):
    """Singular inversions, divergence, or broken symmetry assumptions."""

    exit_code = 3
