"""Exception types shared across the package."""


class FlowSplatError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(FlowSplatError):
    """Invalid configuration value, unknown key or inconsistent mode/data pairing."""


class DataError(FlowSplatError):
    """Malformed or missing input data (dataset files, tensor files)."""


class CapacityError(FlowSplatError):
    """A fixed-size buffer overflowed."""


class NumericalError(FlowSplatError):
    """Non-finite values encountered during optimization or rendering."""


class SolverFailure(FlowSplatError):
    """Linear system could not be solved even at maximum damping."""


class CalibrationDegenerateError(FlowSplatError):
    """Self-calibration attempted on a degenerate (e.g. rotation-only) sequence."""
