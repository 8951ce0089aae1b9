"""Noise-robust monophonic pitch tracking with harmonic summation over NAMDF likelihoods."""
from .config import TrackerConfig
from .errors import ParameterError
from .evaluation import EvalReport, ReferenceTrack, compute_gpe, compute_vde, evaluate
from .preprocess import AudioBuffer
from .tracker import PitchTracker, track
from .voicing import PitchTrack

__all__ = [
    "AudioBuffer", "EvalReport", "ParameterError", "PitchTrack", "PitchTracker",
    "ReferenceTrack", "TrackerConfig", "compute_gpe", "compute_vde", "evaluate", "track",
]
__version__ = "0.1.0"
