"""Minimum-time pulse sequences for chiral resolution of enantiomer pairs."""

from .errors import BracketError, DomainError, NormalizationError, PhaseSearchError
from .spin import (
    BlochVector,
    Chirality,
    PulseSchedule,
    PulseSegment,
    ThreeLevelState,
    TwoLevelState,
    axis_angle_propagator,
    bloch_from_amplitudes,
    propagate_schedule,
    propagate_schedule_3lv,
    resolution_objective,
    schedule_objective,
    segment_propagator_2lv,
    segment_propagator_3lv,
)

__version__ = "0.1.0"
