"""rfsense: 5G reference-signal positioning and OFDM/FMCW radar sensing.

Subpackages cover pilot generation (waveforms), six-port vector-antenna
steering (antenna), multipath channel synthesis (channel), joint
angle/delay estimation (estimators), geometric position fixing
(positioning), OFDM range/velocity imaging (sar_imaging), FMCW radar
processing (fmcw) and the config-driven batch runner (experiments).
"""

from .antenna import (
    ArrayGeometry,
    IdealVectorAntenna,
    PolarizationState,
    ScalarElement,
    TabulatedPattern,
    WaveDirection,
    ideal_dipole_matrix,
    steering_matrix,
    steering_vector,
)
from .channel import ChannelConfig, PathParams, PortSnapshots, synthesize_received
from .estimators import (
    Estimate,
    MusicEstimator,
    SageEstimator,
    SearchGrid,
    music_spectrum,
    sage_estimate,
)
from .fmcw import ChirpConfig, RadarCube, RadarTarget, dbscan, synthesize_cube
from .positioning import StationPose, multi_station_average, single_station_fix
from .sar_imaging import RangeDopplerImage, Scatterer, detect_peaks, form_image
from .waveforms import CombConfig, ResourceGrid, generate_zadoff_chu, pilot_sequence

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry",
    "ChannelConfig",
    "ChirpConfig",
    "CombConfig",
    "Estimate",
    "IdealVectorAntenna",
    "MusicEstimator",
    "PathParams",
    "PolarizationState",
    "PortSnapshots",
    "RadarCube",
    "RadarTarget",
    "RangeDopplerImage",
    "ResourceGrid",
    "SageEstimator",
    "ScalarElement",
    "Scatterer",
    "SearchGrid",
    "StationPose",
    "TabulatedPattern",
    "WaveDirection",
    "__version__",
    "dbscan",
    "detect_peaks",
    "form_image",
    "generate_zadoff_chu",
    "ideal_dipole_matrix",
    "multi_station_average",
    "music_spectrum",
    "pilot_sequence",
    "sage_estimate",
    "single_station_fix",
    "steering_matrix",
    "steering_vector",
    "synthesize_cube",
    "synthesize_received",
]
