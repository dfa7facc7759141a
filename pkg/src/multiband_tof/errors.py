class DegenerateGeometryError(ValueError):
    """Transmitter and receiver (or reflector) positions coincide."""


class InsufficientDataError(ValueError):
    """Too few samples, subcarriers or distances to proceed."""


class CalibrationError(ValueError):
    """Reciprocity constant or calibration record is unusable."""


class InconsistentInputError(ValueError):
    """Inputs that must agree (band, exponent, antenna) do not."""


class NoPeakError(ValueError):
    """The multipath profile has no nonzero entry."""


class LocalizationFailedError(RuntimeError):
    """No least-squares start converged."""


class ScenarioError(ValueError):
    """A scenario file failed to parse or validate."""
