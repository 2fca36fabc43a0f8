"""Numerical laboratory for slow, stored and stationary EIT polaritons."""

from .core import (
    ControlSchedule,
    FieldState,
    Grid,
    MixingAngles,
    PhysicalParams,
    ProbePulse,
    Segment,
    SpinwaveRecord,
    effective_sw_decay,
    group_velocity,
    mixing_angles,
    motional_decay_rate,
    polariton_compose,
    velocity_consistency_check,
    xi_from_density,
)
from .kernels import BACKEND

__version__ = "0.1.0"
