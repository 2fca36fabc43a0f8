"""Time-domain solver for the counter-propagating Maxwell-Bloch system.

The probe envelopes carry no time derivative (the light transit time is
negligible), so at every instant E+ and E- are slaved to the spin
coherences through a pair of linear boundary-value sweeps:

    dE+/dxi = -d E+ - sqrt(d) (Omega+ S0 + Omega- S+) / Gamma,   from xi = 0
   -dE-/dxi = -d E- - sqrt(d) (Omega- S0 + Omega+ S-) / Gamma,   from xi = 1

The spin coherences S0, S+ and S- are then advanced in time by a
method-of-lines integrator whose right-hand side re-solves the fields at
every stage.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import kernels
from .core import (
    ControlSchedule,
    FieldState,
    Grid,
    PhysicalParams,
    ProbePulse,
    SpinwaveRecord,
    effective_sw_decay,
    group_velocity,
    mixing_angles,
)

log = logging.getLogger(__name__)

BichromaticMode = Literal["off", "explicit_phase", "effective_decay"]


class SolverInstability(RuntimeError):
    def __init__(self, time: float, max_field: float):
        super().__init__(f"solver became unstable at t={time:.4f} us (max |S| = {max_field:.3g})")
        self.time = time
        self.max_field = max_field


class StabilityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SolverOptions:
    include_standing_wave: bool = True
    bichromatic_mode: BichromaticMode = "off"
    spin_integrator: Literal["rk4", "semi_implicit"] = "rk4"
    picard_iterations: int = 2
    backend: str | None = None  # None: whichever kernels.BACKEND selected

    def __post_init__(self):
        if self.picard_iterations < 1:
            raise ValueError("picard_iterations must be >= 1")
        if self.bichromatic_mode not in ("off", "explicit_phase", "effective_decay"):
            raise ValueError(f"unknown bichromatic_mode {self.bichromatic_mode!r}")
        if self.spin_integrator not in ("rk4", "semi_implicit"):
            raise ValueError(f"unknown spin_integrator {self.spin_integrator!r}")


def compute_excited_coherence(e_plus, e_minus, s0, s_plus, s_minus, omega_plus, omega_minus,
                              params: PhysicalParams, include_standing_wave: bool = True):
    """Adiabatically eliminated optical coherences (P+, P-)."""
    sd = math.sqrt(params.od)
    g = params.gamma_e
    pp = 1j * sd * np.asarray(e_plus) + 1j * (omega_plus / g) * np.asarray(s0)
    pm = 1j * sd * np.asarray(e_minus) + 1j * (omega_minus / g) * np.asarray(s0)
    if include_standing_wave:
        pp = pp + 1j * (omega_minus / g) * np.asarray(s_plus)
        pm = pm + 1j * (omega_plus / g) * np.asarray(s_minus)
    return pp, pm


def solve_spatial_fields(s0, s_plus, s_minus, omega_plus, omega_minus, e_in_forward,
                         e_in_backward, params: PhysicalParams, include_standing_wave=True,
                         backend=None):
    """Probe envelopes (E+, E-) on a uniform xi grid spanning [0, 1]."""
    s0 = np.ascontiguousarray(s0, dtype=complex)
    n = s0.shape[0]
    sp = np.ascontiguousarray(s_plus if s_plus is not None else np.zeros(n), dtype=complex)
    sm = np.ascontiguousarray(s_minus if s_minus is not None else np.zeros(n), dtype=complex)
    h = 1.0 / (n - 1)
    w = kernels.cell_weights(params.od, h)
    ep, em, _, _ = kernels.get_backend(backend).sweep_fields(
        s0, sp, sm, complex(omega_plus), complex(omega_minus), complex(e_in_forward),
        complex(e_in_backward), math.sqrt(params.od), params.gamma_e, *w, bool(include_standing_wave))
    return ep, em


class _System:
    """Right-hand side of the spin equations with decay split off."""

    def __init__(self, params, schedule, probe, n_xi, options):
        self.params = params
        self.schedule = schedule
        self.probe = probe
        self.options = options
        self.impl = kernels.get_backend(options.backend)
        self.include_sw = bool(options.include_standing_wave)
        self.sqrt_d = math.sqrt(params.od)
        self.weights = kernels.cell_weights(params.od, 1.0 / (n_xi - 1))
        self.explicit_phase = options.bichromatic_mode == "explicit_phase" and schedule.detuning > 0
        gsw = params.gamma_sw
        if options.bichromatic_mode == "effective_decay":
            gsw = effective_sw_decay(gsw, schedule.detuning)
        self.gamma_s = params.gamma_s
        self.gamma_sw = gsw

    def controls(self, t):
        return self.schedule.evaluate(t, bichromatic=self.explicit_phase)

    def inputs(self, t):
        if self.probe is None:
            return 0j, 0j
        amp = complex(self.probe.envelope(t))
        if self.probe.direction == "forward":
            # probe stays two-photon resonant with its co-propagating control
            if self.explicit_phase:
                amp *= np.exp(-1j * self.schedule.detuning * t)
            return amp, 0j
        if self.explicit_phase:
            amp *= np.exp(1j * self.schedule.detuning * t)
        return 0j, amp

    def coupling(self, s0, sp, sm, t):
        """Non-decay part of dS/dt, plus the fields at this stage."""
        op, om = self.controls(t)
        ip, im = self.inputs(t)
        return self.impl.mb_rhs(s0, sp, sm, op, om, ip, im, self.sqrt_d, self.params.gamma_e,
                                0.0, 0.0, *self.weights, self.include_sw)


def _lawson_rk4(sys: _System, s, t, dt):
    """Integrating-factor RK4: decays exact, couplings fourth order."""
    s0, sp, sm = s
    e0 = math.exp(-0.5 * sys.gamma_s * dt)
    e1 = math.exp(-0.5 * sys.gamma_sw * dt)
    h2 = 0.5 * dt
    a0, ap, am, ep, em = sys.coupling(s0, sp, sm, t)
    b0, bp, bm, _, _ = sys.coupling(e0 * (s0 + h2 * a0), e1 * (sp + h2 * ap), e1 * (sm + h2 * am), t + h2)
    c0, cp, cm, _, _ = sys.coupling(e0 * s0 + h2 * b0, e1 * sp + h2 * bp, e1 * sm + h2 * bm, t + h2)
    d0, dp, dm, _, _ = sys.coupling(e0 * (e0 * s0 + dt * c0), e1 * (e1 * sp + dt * cp),
                                    e1 * (e1 * sm + dt * cm), t + dt)
    new0 = e0 * e0 * s0 + dt / 6.0 * (e0 * e0 * a0 + 2.0 * e0 * (b0 + c0) + d0)
    if sys.include_sw:
        newp = e1 * e1 * sp + dt / 6.0 * (e1 * e1 * ap + 2.0 * e1 * (bp + cp) + dp)
        newm = e1 * e1 * sm + dt / 6.0 * (e1 * e1 * am + 2.0 * e1 * (bm + cm) + dm)
    else:
        newp, newm = sp, sm
    return (new0, newp, newm), (ep, em)


def _semi_implicit(sys: _System, s, t, dt):
    """Exponential trapezoid rule closed by Picard iteration on the fields."""
    s0, sp, sm = s
    f0 = math.exp(-sys.gamma_s * dt)
    f1 = math.exp(-sys.gamma_sw * dt)
    a0, ap, am, ep, em = sys.coupling(s0, sp, sm, t)
    base0 = f0 * (s0 + 0.5 * dt * a0)
    basep = f1 * (sp + 0.5 * dt * ap)
    basem = f1 * (sm + 0.5 * dt * am)
    n0, npl, nm = f0 * (s0 + dt * a0), f1 * (sp + dt * ap), f1 * (sm + dt * am)
    for _ in range(sys.options.picard_iterations):
        b0, bp, bm, _, _ = sys.coupling(n0, npl, nm, t + dt)
        n0 = base0 + 0.5 * dt * b0
        npl = basep + 0.5 * dt * bp
        nm = basem + 0.5 * dt * bm
    if not sys.include_sw:
        npl, nm = sp, sm
    return (n0, npl, nm), (ep, em)


def step_spin(state: FieldState, t: float, dt: float, params: PhysicalParams,
              schedule: ControlSchedule, probe: ProbePulse | None = None,
              options: SolverOptions | None = None) -> FieldState:
    """Advance (S0, S+, S-) by one step of ``dt`` and return the new state.

    Fields in the returned state are re-solved at ``t + dt``.
    """
    options = options or SolverOptions()
    sys = _System(params, schedule, probe, len(state.s0), options)
    stepper = _lawson_rk4 if options.spin_integrator == "rk4" else _semi_implicit
    s = tuple(np.ascontiguousarray(a, dtype=complex) for a in (state.s0, state.s_plus, state.s_minus))
    (s0, sp, sm), _ = stepper(sys, s, t, dt)
    _check_finite(s0, sp, sm, t + dt)
    return _state_at(sys, s0, sp, sm, t + dt)


def _state_at(sys: _System, s0, sp, sm, t) -> FieldState:
    op, om = sys.controls(t)
    ip, im = sys.inputs(t)
    ep, em, pp, pm = sys.impl.sweep_fields(s0, sp, sm, op, om, ip, im, sys.sqrt_d, sys.params.gamma_e,
                                           *sys.weights, sys.include_sw)
    return FieldState(ep, em, pp, pm, s0, sp, sm)


def _check_finite(s0, sp, sm, t, limit=1e8):
    m = max(np.max(np.abs(s0)), np.max(np.abs(sp)), np.max(np.abs(sm)))
    if not np.isfinite(m) or m > limit:
        raise SolverInstability(t, float(m))


def max_velocity(params: PhysicalParams, schedule: ControlSchedule, t0: float, t1: float, n=2001) -> float:
    ts = np.linspace(t0, t1, n)
    op, om = schedule.evaluate(ts)
    total = np.abs(op) ** 2 + np.abs(om) ** 2
    return float(np.max(total)) / (params.od * params.gamma_e)


def stability_ok(params: PhysicalParams, schedule: ControlSchedule, grid: Grid, t0: float = 0.0) -> bool:
    """Recommended resolution check ``dt * max|v| <= 0.5 / n_xi``."""
    vmax = max_velocity(params, schedule, t0, t0 + grid.t_max)
    return grid.dt * vmax <= 0.5 / grid.n_xi * (1 + 1e-9)


def run(params: PhysicalParams, schedule: ControlSchedule, probe: ProbePulse | None, grid: Grid,
        options: SolverOptions | None = None, initial_state: FieldState | None = None,
        t0: float = 0.0) -> SpinwaveRecord:
    """Integrate from ``t0`` to ``t0 + grid.t_max`` and return a normalised record.

    Detector traces are sampled every ``dt``; |S0| frames every
    ``strobe_interval``.  Raises :class:`SolverInstability` on overflow.
    """
    options = options or SolverOptions()
    n = grid.n_xi
    if not stability_ok(params, schedule, grid, t0):
        warnings.warn(
            f"dt*max|v| exceeds 0.5/n_xi (dt={grid.dt}, n_xi={n}); consider a smaller dt",
            StabilityWarning,
            stacklevel=2,
        )
    sys = _System(params, schedule, probe, n, options)
    stepper = _lawson_rk4 if options.spin_integrator == "rk4" else _semi_implicit

    if initial_state is None:
        s = (np.zeros(n, complex), np.zeros(n, complex), np.zeros(n, complex))
    else:
        if len(initial_state.s0) != n:
            raise ValueError("initial_state does not match grid.n_xi")
        s = tuple(np.array(a, dtype=complex) for a in (initial_state.s0, initial_state.s_plus, initial_state.s_minus))

    n_steps = grid.n_steps
    every = grid.strobe_every
    n_frames = n_steps // every + 1
    frames = np.empty((n_frames, n), dtype=complex)
    frame_times = np.empty(n_frames)
    out_f = np.empty(n_steps + 1, dtype=complex)
    out_b = np.empty(n_steps + 1, dtype=complex)
    det_t = t0 + grid.dt * np.arange(n_steps + 1)

    k_frame = 0
    for k in range(n_steps):
        t = det_t[k]
        if k % every == 0:
            frames[k_frame] = s[0]
            frame_times[k_frame] = t
            k_frame += 1
        s, (ep, em) = stepper(sys, s, t, grid.dt)
        out_f[k] = ep[-1]
        out_b[k] = em[0]
        _check_finite(*s, t + grid.dt)
    final = _state_at(sys, *s, det_t[-1])
    out_f[-1] = final.e_plus[-1]
    out_b[-1] = final.e_minus[0]
    if n_steps % every == 0:
        frames[k_frame] = s[0]
        frame_times[k_frame] = det_t[-1]
        k_frame += 1
    frames = frames[:k_frame]
    frame_times = frame_times[:k_frame]

    mag = np.abs(frames)
    peak = float(mag.max()) if mag.size else 0.0
    s_mag = mag / peak if peak > 0 else mag
    diagnostics = {
        "backend": getattr(sys.impl, "__name__", "?").rsplit(".", 1)[-1],
        "n_steps": n_steps,
        "integrator": options.spin_integrator,
        "zero_record": peak == 0,
        "final_state": final,
    }
    log.debug("run finished: %d steps, peak |S0| %.3g", n_steps, peak)
    return SpinwaveRecord(
        s_mag=s_mag,
        times=frame_times,
        xi=grid.xi,
        out_forward=out_f,
        out_backward=out_b,
        detector_times=det_t,
        normalization=peak,
        s0=frames,
        diagnostics=diagnostics,
    )


def analytic_velocity(params: PhysicalParams, omega_plus: complex, omega_minus: complex) -> float:
    return group_velocity(mixing_angles(omega_plus, omega_minus, params), params)
