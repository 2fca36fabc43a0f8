"""Presets for every experiment class: slow light, storage, retrieval,
quasi-stationary and stationary light, bichromatic controls, reflection
and the group-velocity sweep.

All timings scale with the single-control transit time ``1 / v0`` where
``v0 = Gamma * tan2_theta``, so changing ``tan2_theta`` rescales a preset
without changing its shape.  Presets choose ``dt`` so that
``dt * max|v| <= 0.5 / n_xi``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

from .core import TWO_PI, ControlSchedule, Grid, PhysicalParams, ProbePulse, Segment
from .mb_solver import SolverOptions, max_velocity

BICHROMATIC_DETUNING = TWO_PI * 4.0  # rad/us


@dataclass(frozen=True)
class Scenario:
    name: str
    params: PhysicalParams
    schedule: ControlSchedule
    probe: ProbePulse
    grid: Grid
    options: SolverOptions = SolverOptions()
    description: str = ""
    # named instants (us) used by analysis windows, e.g. "hold_start"
    marks: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.schedule.t_end + 1e-9 < self.grid.t_max:
            raise ValueError(
                f"schedule ends at {self.schedule.t_end} us but grid runs to {self.grid.t_max} us"
            )

    def replace(self, **changes) -> "Scenario":
        return replace(self, **changes)


def _nice_dt(limit: float, strobe: float) -> float:
    """Largest dt <= limit that divides ``strobe`` into a whole number of steps."""
    k = max(1, math.ceil(strobe / limit - 1e-9))
    return strobe / k


def _grid(params: PhysicalParams, schedule: ControlSchedule, t_max: float, n_xi: int,
          strobe: float, dt_max: float = 0.01) -> Grid:
    vmax = max_velocity(params, schedule, 0.0, t_max)
    limit = dt_max if vmax == 0 else min(dt_max, 0.5 / (n_xi * vmax))
    return Grid(n_xi=n_xi, dt=_nice_dt(limit, strobe), t_max=t_max, strobe_interval=strobe)


class _Timing:
    """Write-in timing shared by the presets."""

    def __init__(self, params: PhysicalParams, tan2_theta: float, pulse_width: float):
        self.omega = params.rabi_for(tan2_theta)
        self.v0 = params.gamma_e * tan2_theta
        self.tau = 1.0 / self.v0
        self.fwhm = pulse_width * self.tau
        self.t_probe = 1.5 * self.fwhm
        # time for the pulse centre to reach xi = x
        self.reach = lambda x: self.t_probe + x * self.tau

    def probe(self, direction="forward") -> ProbePulse:
        return ProbePulse(peak_amplitude=1.0, center_time=self.t_probe, fwhm=self.fwhm, direction=direction)


def _split(omega_total: float, ratio: float) -> tuple[float, float]:
    """Forward/backward amplitudes with |O+|/|O-| = ratio and fixed total power."""
    if math.isinf(ratio):
        return omega_total, 0.0
    if ratio < 0:
        raise ValueError("ratio must be >= 0")
    frac_minus = 1.0 / (1.0 + ratio * ratio)
    return omega_total * math.sqrt(1.0 - frac_minus), omega_total * math.sqrt(frac_minus)


def forward_slow_light_storage(params: PhysicalParams | None = None, tan2_theta: float = 0.01,
                               pulse_width: float = 0.15, stop_at: float = 0.35,
                               storage_time: float | None = None, n_xi: int = 400,
                               strobe: float | None = None) -> Scenario:
    """Forward control on, off for a storage gap, then on again for forward retrieval."""
    params = params or PhysicalParams()
    tm = _Timing(params, tan2_theta, pulse_width)
    storage_time = tm.tau * 0.5 if storage_time is None else storage_time
    t_off = tm.reach(stop_at)
    t_on = t_off + storage_time
    t_end = t_on + 1.2 * tm.tau
    sched = ControlSchedule((
        Segment(0.0, t_off, tm.omega, 0.0),
        Segment(t_on, t_end, tm.omega, 0.0),
    ))
    strobe = strobe or _default_strobe(tm.tau)
    return Scenario(
        name="forward_slow_light_storage",
        params=params,
        schedule=sched,
        probe=tm.probe(),
        grid=_grid(params, sched, t_end, n_xi, strobe),
        description="forward slow light, storage, forward retrieval",
        marks={"store": t_off, "retrieve": t_on, "probe_center": tm.t_probe, "tau": tm.tau,
               "fit_start": t_on + 0.1 * tm.tau, "fit_end": t_on + 0.45 * tm.tau,
               "decay_start": t_off + sched.ramp_time, "decay_end": t_on - sched.ramp_time},
    )


def backward_retrieval(params: PhysicalParams | None = None, tan2_theta: float = 0.01,
                       pulse_width: float = 0.15, stop_at: float = 0.5,
                       storage_time: float | None = None, n_xi: int = 400,
                       strobe: float | None = None) -> Scenario:
    """Forward write-in, storage, then backward control only."""
    params = params or PhysicalParams()
    tm = _Timing(params, tan2_theta, pulse_width)
    storage_time = tm.tau * 0.5 if storage_time is None else storage_time
    t_off = tm.reach(stop_at)
    t_on = t_off + storage_time
    t_end = t_on + 1.2 * tm.tau
    sched = ControlSchedule((
        Segment(0.0, t_off, tm.omega, 0.0),
        Segment(t_on, t_end, 0.0, tm.omega),
    ))
    strobe = strobe or _default_strobe(tm.tau)
    return Scenario(
        name="backward_retrieval",
        params=params,
        schedule=sched,
        probe=tm.probe(),
        grid=_grid(params, sched, t_end, n_xi, strobe),
        description="forward write-in, storage, backward retrieval",
        marks={"store": t_off, "retrieve": t_on, "probe_center": tm.t_probe, "tau": tm.tau,
               "fit_start": t_on + 0.1 * tm.tau, "fit_end": t_on + 0.35 * tm.tau,
               "decay_start": t_off + sched.ramp_time, "decay_end": t_on - sched.ramp_time},
    )


def quasi_stationary(ratio: float, params: PhysicalParams | None = None, tan2_theta: float = 0.01,
                     pulse_width: float = 0.15, stop_at: float = 0.5, storage_time: float | None = None,
                     hold_time: float | None = None, n_xi: int = 400,
                     strobe: float | None = None) -> Scenario:
    """Forward write-in, storage, then both controls with |O+|/|O-| = ``ratio``.

    The total control power during the hold equals the write-in power, so
    tan^2(theta) is unchanged and only phi varies.
    """
    params = params or PhysicalParams()
    tm = _Timing(params, tan2_theta, pulse_width)
    storage_time = 0.2 * tm.tau if storage_time is None else storage_time
    hold_time = 0.4 * tm.tau if hold_time is None else hold_time
    t_off = tm.reach(stop_at)
    t_on = t_off + storage_time
    t_end = t_on + hold_time
    op, om = _split(tm.omega, ratio)
    sched = ControlSchedule((
        Segment(0.0, t_off, tm.omega, 0.0),
        Segment(t_on, t_end, op, om),
    ))
    strobe = strobe or _default_strobe(tm.tau)
    return Scenario(
        name="quasi_stationary",
        params=params,
        schedule=sched,
        probe=tm.probe(),
        grid=_grid(params, sched, t_end, n_xi, strobe),
        description=f"quasi-stationary light, |O+|/|O-| = {ratio:g}",
        marks={"store": t_off, "hold_start": t_on, "hold_end": t_end, "ratio": ratio,
               "fit_start": t_on + 0.07 * tm.tau, "fit_end": t_on + 0.3 * tm.tau,
               "probe_center": tm.t_probe, "tau": tm.tau},
    )


def stationary_from_slow(params: PhysicalParams | None = None, tan2_theta: float = 0.01,
                         pulse_width: float = 0.15, stop_at: float = 0.5,
                         hold_time: float = 10.0, n_xi: int = 400,
                         strobe: float | None = None) -> Scenario:
    """Forward slow light, then the backward control switched on at equal amplitude."""
    params = params or PhysicalParams()
    tm = _Timing(params, tan2_theta, pulse_width)
    t_sw = tm.reach(stop_at)
    t_end = t_sw + hold_time
    sched = ControlSchedule((
        Segment(0.0, t_sw, tm.omega, 0.0),
        Segment(t_sw, t_end, tm.omega, tm.omega),
    ))
    strobe = strobe or _default_strobe(tm.tau)
    return Scenario(
        name="stationary_from_slow",
        params=params,
        schedule=sched,
        probe=tm.probe(),
        grid=_grid(params, sched, t_end, n_xi, strobe),
        description="stationary light formed directly from slow light",
        marks={"hold_start": t_sw, "hold_end": t_end, "hold_omega": tm.omega,
               "probe_center": tm.t_probe, "tau": tm.tau},
    )


def stationary_from_stopped(params: PhysicalParams | None = None, tan2_theta: float = 0.01,
                            pulse_width: float = 0.15, stop_at: float = 0.5,
                            storage_time: float | None = None, hold_time: float = 10.0,
                            amplitude_factor: float = 0.5, n_xi: int = 400,
                            strobe: float | None = None) -> Scenario:
    """Forward slow light, storage, then both controls at ``amplitude_factor`` of the write-in amplitude."""
    params = params or PhysicalParams()
    tm = _Timing(params, tan2_theta, pulse_width)
    storage_time = 0.2 * tm.tau if storage_time is None else storage_time
    t_off = tm.reach(stop_at)
    t_on = t_off + storage_time
    t_end = t_on + hold_time
    amp = amplitude_factor * tm.omega
    sched = ControlSchedule((
        Segment(0.0, t_off, tm.omega, 0.0),
        Segment(t_on, t_end, amp, amp),
    ))
    strobe = strobe or _default_strobe(tm.tau)
    return Scenario(
        name="stationary_from_stopped",
        params=params,
        schedule=sched,
        probe=tm.probe(),
        grid=_grid(params, sched, t_end, n_xi, strobe),
        description="stored light released as stationary light at reduced amplitude",
        marks={"store": t_off, "hold_start": t_on, "hold_end": t_end, "hold_omega": amp,
               "probe_center": tm.t_probe, "tau": tm.tau},
    )


def bichromatic_pair(base: Scenario, detuning: float = BICHROMATIC_DETUNING) -> tuple[Scenario, Scenario]:
    """Monochromatic and symmetrically detuned (explicit phase) copies of ``base``."""
    sched = replace(base.schedule, detuning=detuning)
    mono = replace(base, name=base.name + "_mono", schedule=sched,
                   options=replace(base.options, bichromatic_mode="off"))
    bi = replace(base, name=base.name + "_bichromatic", schedule=sched,
                 options=replace(base.options, bichromatic_mode="explicit_phase"))
    return mono, bi


def reflection(ratio: float, params: PhysicalParams | None = None, tan2_theta: float = 0.01,
               pulse_width: float = 0.15, hold: float = 0.5, readout_time: float | None = None,
               n_xi: int = 400, strobe: float | None = None) -> Scenario:
    """Both controls on when the probe arrives, ``|O+|/|O-| = ratio``.

    After ``hold`` transit times past the probe centre the forward control is
    switched off and the backward control takes the full write-in power, so
    whatever entered the ensemble is re-emitted backward at the write-in speed.
    """
    params = params or PhysicalParams()
    tm = _Timing(params, tan2_theta, pulse_width)
    op, om = _split(tm.omega, ratio)
    t_sw = tm.t_probe + hold * tm.tau
    readout_time = 1.5 * tm.tau if readout_time is None else readout_time
    t_end = t_sw + readout_time
    sched = ControlSchedule((
        Segment(0.0, t_sw, op, om),
        Segment(t_sw, t_end, 0.0, tm.omega),
    ))
    strobe = strobe or _default_strobe(tm.tau)
    return Scenario(
        name="reflection",
        params=params,
        schedule=sched,
        probe=tm.probe(),
        grid=_grid(params, sched, t_end, n_xi, strobe),
        description=f"both controls on at probe arrival, |O+|/|O-| = {ratio:g}",
        marks={"switch": t_sw, "probe_center": tm.t_probe, "ratio": ratio, "tau": tm.tau,
               "input_fwhm": tm.fwhm},
    )


def group_velocity_sweep(ratios, **kwargs) -> list[Scenario]:
    """One quasi-stationary preset per ratio at fixed total control power."""
    return [replace(quasi_stationary(r, **kwargs), name=f"sweep_{i:02d}") for i, r in enumerate(ratios)]


def ratio_for_cos2phi(c: float) -> float:
    """|O+|/|O-| that gives cos(2 phi) = c."""
    if c >= 1.0:
        return math.inf
    if c <= -1.0:
        return 0.0
    return math.sqrt((1.0 + c) / (1.0 - c))


def _default_strobe(tau: float) -> float:
    # ~40 frames per transit, rounded to a decimal-friendly cadence
    raw = tau / 40.0
    for step in (0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0):
        if raw <= step:
            return step
    return 1.0


PRESETS = {
    "forward_slow_light_storage": forward_slow_light_storage,
    "backward_retrieval": backward_retrieval,
    "quasi_stationary": quasi_stationary,
    "stationary_from_slow": stationary_from_slow,
    "stationary_from_stopped": stationary_from_stopped,
    "reflection": reflection,
}


def build(name: str, **kwargs) -> Scenario:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; available: {', '.join(sorted(PRESETS))}") from None
    if name in ("quasi_stationary", "reflection"):
        kwargs.setdefault("ratio", 1.0)
    return factory(**kwargs)


def to_dict(scenario: Scenario) -> dict:
    return asdict(scenario)
