"""Sub-nanosecond time of flight from commodity Wi-Fi by stitching many bands."""

from .band_plan import Band, BandPlan, default_band_plan, unambiguous_range
from .calibration import CalibrationRecord, calibrate
from .channel import ImpairmentConfig, PathComponent, Scene, synthesize_paths_sweep, synthesize_sweep
from .csi import BandChannel, zero_subcarrier_channels
from .errors import (
    CalibrationError,
    DegenerateGeometryError,
    InconsistentInputError,
    InsufficientDataError,
    LocalizationFailedError,
    NoPeakError,
    ScenarioError,
)
from .follow import TrackerConfig, simulate_follow
from .hopping import ProtocolConfig, run_sweep
from .localization import DistanceSet, Position2D, distances_from_tofs, localize
from .solver import DelayGrid, MultipathProfile, SolverConfig, ToFEstimate, crt_estimate, estimate_tof, invert_ndft

__version__ = "0.1.0"
