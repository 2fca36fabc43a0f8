"""Domain types, unit conventions and closed-form relations.

Internal units: time in microseconds, every rate and Rabi frequency in
rad/us, position along the ensemble in the density-scaled coordinate
``xi`` in [0, 1].  A frequency quoted in MHz converts with ``TWO_PI * f``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi
K_B = 1.380649e-23  # J/K
C_LIGHT = 299.792458  # m/us
RB87_MASS = 1.443160648e-25  # kg
RB87_D1_WAVELENGTH = 794.978851e-9  # m

# Rb-87 D1 natural linewidth; a default, overridable per run.
GAMMA_E_DEFAULT = TWO_PI * 5.75
# ~500 Hz ground-state decoherence
GAMMA_S_DEFAULT = TWO_PI * 500e-6

Ramp = Literal["step", "linear", "smooth"]
Direction = Literal["forward", "backward"]


def motional_decay_rate(temperature: float, atom_mass: float, wavelength: float) -> float:
    """Decay rate of the standing-wave coherences from thermal motion.

    Returns ``4*pi*sqrt(k_B T / m) / lambda`` in rad/us.
    """
    if temperature < 0 or atom_mass <= 0 or wavelength <= 0:
        raise ValueError("temperature, atom_mass and wavelength must be positive")
    v_thermal = math.sqrt(K_B * temperature / atom_mass)  # m/s
    return 2.0 * TWO_PI * v_thermal / wavelength * 1e-6


def effective_sw_decay(gamma_sw: float, detuning: float) -> float:
    """Standing-wave decay rate with symmetrically detuned (bichromatic) controls.

    The two controls sit at +/- ``detuning``, so the grating they write
    rotates at twice the detuning.
    """
    if gamma_sw < 0 or detuning < 0:
        raise ValueError("gamma_sw and detuning must be non-negative")
    return gamma_sw + 2.0 * detuning


@dataclass(frozen=True)
class PhysicalParams:
    """Atomic and optical constants of one ensemble.

    ``gamma_sw`` defaults to the motional rate at ``temperature``.
    """

    gamma_e: float = GAMMA_E_DEFAULT
    gamma_s: float = GAMMA_S_DEFAULT
    gamma_sw: float | None = None
    od: float = 190.0
    length: float = 0.04  # m
    wavelength: float = RB87_D1_WAVELENGTH
    temperature: float = 100e-6  # K
    atom_mass: float = RB87_MASS

    def __post_init__(self):
        if self.gamma_sw is None:
            object.__setattr__(
                self,
                "gamma_sw",
                motional_decay_rate(self.temperature, self.atom_mass, self.wavelength),
            )
        if not self.gamma_e > 0:
            raise ValueError("gamma_e must be > 0")
        if not self.od > 0:
            raise ValueError("od must be > 0")
        if self.gamma_s < 0 or self.gamma_sw < 0:
            raise ValueError("decay rates must be >= 0")
        if not self.length > 0:
            raise ValueError("length must be > 0")

    def with_(self, **changes) -> "PhysicalParams":
        return replace(self, **changes)

    def rabi_for(self, tan2_theta: float) -> float:
        """Total control Rabi frequency |Omega| giving ``tan2_theta``."""
        return math.sqrt(tan2_theta * self.od) * self.gamma_e


def _smooth_step(x: np.ndarray | float, width: float, kind: str):
    """Step from 0 to 1 centred on x=0, spanning ``width``."""
    if kind == "step" or width <= 1e-12:
        return np.where(np.asarray(x) >= 0.0, 1.0, 0.0)
    u = np.clip(np.asarray(x, dtype=float) / width + 0.5, 0.0, 1.0)
    if kind == "linear":
        return u
    if kind == "smooth":
        return 0.5 - 0.5 * np.cos(np.pi * u)
    raise ValueError(f"unknown ramp kind {kind!r}")


@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    omega_plus: complex = 0.0
    omega_minus: complex = 0.0
    ramp: Ramp = "smooth"

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError(f"segment must have t_end > t_start, got {self.t_start}..{self.t_end}")
        if not (np.isfinite(self.omega_plus) and np.isfinite(self.omega_minus)):
            raise ValueError("Rabi frequencies must be finite")
        if self.ramp not in ("step", "linear", "smooth"):
            raise ValueError(f"unknown ramp kind {self.ramp!r}")


@dataclass(frozen=True)
class ControlSchedule:
    """Piecewise control envelopes Omega_+(t), Omega_-(t).

    Each segment is a smoothed indicator whose edges are centred on its
    start and end times and span ``ramp_time``.  Adjacent segments with
    the same ramp kind form a partition of unity, so values interpolate
    across shared boundaries.  Outside every segment (and its half-ramp)
    both fields are zero.
    """

    segments: tuple[Segment, ...] = ()
    detuning: float = 0.0
    ramp_time: float = 0.2

    def __post_init__(self):
        segs = tuple(s if isinstance(s, Segment) else Segment(*s) for s in self.segments)
        object.__setattr__(self, "segments", segs)
        for a, b in zip(segs, segs[1:]):
            if b.t_start < a.t_end - 1e-12:
                raise ValueError("segments must be time-ordered and non-overlapping")
        if self.detuning < 0 or self.ramp_time < 0:
            raise ValueError("detuning and ramp_time must be non-negative")

    @property
    def t_end(self) -> float:
        return self.segments[-1].t_end if self.segments else 0.0

    def evaluate(self, t, bichromatic: bool = False):
        """Return ``(omega_plus, omega_minus)`` at time(s) ``t``.

        With ``bichromatic`` the forward and backward controls carry the
        phases exp(-i delta t) and exp(+i delta t).
        """
        t_arr = np.asarray(t, dtype=float)
        op = np.zeros(t_arr.shape, dtype=complex)
        om = np.zeros(t_arr.shape, dtype=complex)
        w = self.ramp_time
        for s in self.segments:
            weight = _smooth_step(t_arr - s.t_start, w, s.ramp) - _smooth_step(t_arr - s.t_end, w, s.ramp)
            op = op + s.omega_plus * weight
            om = om + s.omega_minus * weight
        if bichromatic and self.detuning:
            phase = np.exp(-1j * self.detuning * t_arr)
            op = op * phase
            om = om * np.conj(phase)
        if t_arr.ndim == 0:
            return complex(op), complex(om)
        return op, om

    def switch_times(self) -> list[float]:
        times = set()
        for s in self.segments:
            times.update((s.t_start, s.t_end))
        return sorted(times)


@dataclass(frozen=True)
class ProbePulse:
    """Gaussian probe envelope entering one face of the ensemble.

    ``fwhm`` is the full width at half maximum of the field amplitude.
    """

    peak_amplitude: float = 1.0
    center_time: float = 1.0
    fwhm: float = 0.5
    direction: Direction = "forward"
    shape: Literal["gaussian"] = "gaussian"

    def __post_init__(self):
        if not self.fwhm > 0:
            raise ValueError("fwhm must be > 0")
        if self.peak_amplitude < 0:
            raise ValueError("peak_amplitude must be >= 0")
        if self.direction not in ("forward", "backward"):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.shape != "gaussian":
            raise ValueError(f"unsupported pulse shape {self.shape!r}")

    def envelope(self, t):
        x = (np.asarray(t, dtype=float) - self.center_time) / self.fwhm
        return self.peak_amplitude * np.exp(-4.0 * math.log(2.0) * x * x)


@dataclass(frozen=True)
class Grid:
    n_xi: int = 400
    dt: float = 0.01
    t_max: float = 30.0
    strobe_interval: float = 1.0

    def __post_init__(self):
        if self.n_xi < 16:
            raise ValueError("n_xi must be >= 16")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not self.t_max > 0:
            raise ValueError("t_max must be > 0")
        if self.strobe_interval < self.dt * (1 - 1e-9):
            raise ValueError("strobe_interval must be >= dt")

    @property
    def xi(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_xi)

    @property
    def dxi(self) -> float:
        return 1.0 / (self.n_xi - 1)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    @property
    def strobe_every(self) -> int:
        return max(1, int(round(self.strobe_interval / self.dt)))


@dataclass(frozen=True)
class FieldState:
    """Envelopes on the xi grid at one instant."""

    e_plus: np.ndarray
    e_minus: np.ndarray
    p_plus: np.ndarray
    p_minus: np.ndarray
    s0: np.ndarray
    s_plus: np.ndarray
    s_minus: np.ndarray

    def __post_init__(self):
        n = len(self.s0)
        for name in ("e_plus", "e_minus", "p_plus", "p_minus", "s_plus", "s_minus"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, expected {n}")

    @classmethod
    def zeros(cls, n: int) -> "FieldState":
        z = lambda: np.zeros(n, dtype=complex)  # noqa: E731
        return cls(z(), z(), z(), z(), z(), z(), z())


@dataclass(frozen=True)
class SpinwaveRecord:
    """Strobed |S0|(t, xi) plus the two boundary detector traces.

    ``s_mag`` is divided by ``normalization``; the raw magnitude is
    ``s_mag * normalization``.  ``normalization == 0`` marks an all-zero
    record.
    """

    s_mag: np.ndarray
    times: np.ndarray
    xi: np.ndarray
    out_forward: np.ndarray
    out_backward: np.ndarray
    detector_times: np.ndarray
    normalization: float = 1.0
    s0: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def raw(self) -> np.ndarray:
        return self.s_mag * self.normalization

    def frame_at(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))


@dataclass(frozen=True)
class MixingAngles:
    """tan^2(theta), tan^2(phi) and total control intensity.

    ``tan2_phi`` is ``inf`` when only the backward control is on and
    ``nan`` (with ``phi_defined`` False) when both are off.
    """

    tan2_theta: float
    tan2_phi: float
    omega_total_sq: float
    omega_plus_sq: float
    omega_minus_sq: float

    @property
    def phi_defined(self) -> bool:
        return self.omega_total_sq > 0

    @property
    def cos_2phi(self) -> float:
        # from the intensity ratio, not via an angle
        if self.omega_total_sq == 0:
            return 0.0
        return (self.omega_plus_sq - self.omega_minus_sq) / self.omega_total_sq


def mixing_angles(omega_plus: complex, omega_minus: complex, params: PhysicalParams) -> MixingAngles:
    ip = abs(omega_plus) ** 2
    im = abs(omega_minus) ** 2
    total = ip + im
    if ip > 0:
        t2phi = im / ip
    elif im > 0:
        t2phi = math.inf
    else:
        t2phi = math.nan
    return MixingAngles(
        tan2_theta=total / (params.od * params.gamma_e**2),
        tan2_phi=t2phi,
        omega_total_sq=total,
        omega_plus_sq=ip,
        omega_minus_sq=im,
    )


def group_velocity(angles: MixingAngles, params: PhysicalParams) -> float:
    """Polariton velocity in xi per microsecond."""
    return params.gamma_e * angles.tan2_theta * angles.cos_2phi


def diffusion_coefficient(angles: MixingAngles, params: PhysicalParams) -> float:
    """Finite-optical-depth diffusion constant in xi^2 per microsecond."""
    return params.gamma_e * angles.tan2_theta / params.od


def polariton_compose(state: FieldState, angles: MixingAngles) -> np.ndarray:
    """psi = sin(theta) (E+ cos(phi) + E- sin(phi)) - S0 cos(theta)."""
    theta = math.atan(math.sqrt(angles.tan2_theta))
    if angles.phi_defined:
        cphi = math.sqrt(angles.omega_plus_sq / angles.omega_total_sq)
        sphi = math.sqrt(angles.omega_minus_sq / angles.omega_total_sq)
    else:
        cphi, sphi = 1.0, 0.0
    return math.sin(theta) * (state.e_plus * cphi + state.e_minus * sphi) - state.s0 * math.cos(theta)


def velocity_consistency_check(params: PhysicalParams, omega: complex) -> float:
    """Relative gap between the single-control lab-frame and compact velocities.

    The lab-frame form uses tan(theta) = Omega / (g sqrt(N)) with
    g^2 N = d Gamma c / L, and velocity (c/L) tan^2(theta).  Both must agree.
    """
    g2n = params.od * params.gamma_e * C_LIGHT / params.length
    v_lab = (C_LIGHT / params.length) * abs(omega) ** 2 / g2n
    v_compact = group_velocity(mixing_angles(omega, 0.0, params), params)
    if v_compact == 0:
        return 0.0 if v_lab == 0 else math.inf
    return abs(v_lab - v_compact) / abs(v_compact)


def xi_from_density(density: Sequence[float], z: Sequence[float]) -> np.ndarray:
    """Map positions ``z`` to the density-scaled coordinate xi.

    xi is the cumulative (trapezoid) integral of the density normalised to
    end at 1.
    """
    eta = np.asarray(density, dtype=float)
    z = np.asarray(z, dtype=float)
    if eta.shape != z.shape:
        raise ValueError("density and z must have the same shape")
    if np.any(eta < 0) or not np.all(np.isfinite(eta)):
        raise ValueError("density must be finite and non-negative")
    if np.any(np.diff(z) <= 0):
        raise ValueError("z must be strictly increasing")
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (eta[1:] + eta[:-1]) * np.diff(z))))
    if cum[-1] <= 0:
        raise ValueError("empty ensemble: density integrates to zero")
    xi = cum / cum[-1]
    xi[-1] = 1.0
    return np.maximum.accumulate(xi)

