"""From images or spinwave records to velocities, widths and decay times."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize, signal, stats

from .core import SpinwaveRecord

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
RATIO_FLOOR = 1e-6


@dataclass(frozen=True)
class FitResult:
    kind: str
    params: dict
    errors: dict
    residual_norm: float
    converged: bool
    flags: tuple = ()
    message: str = ""

    def __getitem__(self, key):
        return self.params[key]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": {k: float(v) for k, v in self.params.items()},
            "errors": {k: float(v) for k, v in self.errors.items()},
            "residual_norm": float(self.residual_norm),
            "converged": bool(self.converged),
            "flags": list(self.flags),
            "message": self.message,
        }


# --- images ---------------------------------------------------------------

@dataclass(frozen=True)
class OpticalDepthImage:
    d_image: np.ndarray
    saturated: np.ndarray  # True where I_out/I_0 hit the floor or I_0 <= 0


def optical_depth_image(i_out, i_0, floor: float = RATIO_FLOOR) -> OpticalDepthImage:
    """Amplitude optical depth ``-ln(I_out / I_0) / 2`` per pixel.

    Ratios below ``floor`` are clamped to it and flagged as saturated, as
    are pixels with no reference light.
    """
    i_out = np.asarray(i_out, dtype=float)
    i_0 = np.asarray(i_0, dtype=float)
    if i_out.shape != i_0.shape:
        raise ValueError(f"image shapes differ: {i_out.shape} vs {i_0.shape}")
    if np.any(i_out < 0) or np.any(i_0 < 0):
        raise ValueError("intensities must be non-negative")
    if not np.any(i_0 > 0):
        raise ValueError("reference image I_0 is all zero")
    lit = i_0 > 0
    ratio = np.ones_like(i_out)
    np.divide(i_out, i_0, out=ratio, where=lit)
    saturated = (ratio < floor) | ~lit
    ratio = np.where(saturated, floor, ratio)
    return OpticalDepthImage(-0.5 * np.log(ratio), saturated)


@dataclass(frozen=True)
class Binning:
    """Pixel partition into bins of roughly equal integrated density.

    ``edges`` are pixel indices: bin k covers pixels ``edges[k]:edges[k+1]``.
    """

    edges: np.ndarray

    @property
    def n_bins(self) -> int:
        return len(self.edges) - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def apply(self, image) -> np.ndarray:
        """Sum pixel columns (last axis) within each bin."""
        image = np.asarray(image, dtype=float)
        if image.shape[-1] != self.edges[-1]:
            raise ValueError(f"image has {image.shape[-1]} columns, binning expects {self.edges[-1]}")
        return np.add.reduceat(image, self.edges[:-1], axis=-1)

    def centers(self, n_pixels_profile) -> np.ndarray:
        """xi at the middle of each bin, given the density profile used to build it."""
        cum = np.concatenate(([0.0], np.cumsum(np.asarray(n_pixels_profile, dtype=float))))
        cum /= cum[-1]
        return 0.5 * (cum[self.edges[:-1]] + cum[self.edges[1:]])


def equal_atom_binning(profile, n_bins: int) -> Binning:
    """Bin edges so every bin holds about the same integrated density.

    Edges fall on pixel boundaries, so each bin's content matches the ideal
    share to within one pixel.  Every bin holds at least one pixel.
    """
    rho = np.asarray(profile, dtype=float)
    if rho.ndim != 1:
        raise ValueError("profile must be one-dimensional")
    n = rho.size
    if not 1 <= n_bins <= n:
        raise ValueError(f"n_bins must be in [1, {n}]")
    if np.any(rho < 0) or not np.all(np.isfinite(rho)):
        raise ValueError("profile must be finite and non-negative")
    cum = np.concatenate(([0.0], np.cumsum(rho)))
    if cum[-1] <= 0:
        raise ValueError("degenerate density: profile sums to zero")
    targets = cum[-1] * np.arange(1, n_bins) / n_bins
    # nearest pixel boundary to each target
    right = np.searchsorted(cum, targets, side="left")
    left = np.maximum(right - 1, 0)
    pick = np.where(np.abs(cum[left] - targets) <= np.abs(cum[right] - targets), left, right)
    edges = np.concatenate(([0], pick, [n])).astype(int)
    # keep every bin non-empty: edge k must leave room for k bins on the left
    # and n_bins - k on the right
    k = np.arange(n_bins + 1)
    edges = np.clip(edges, k, n - (n_bins - k))
    for k in range(1, n_bins):
        edges[k] = max(edges[k], edges[k - 1] + 1)
    for k in range(n_bins - 1, 0, -1):
        edges[k] = min(edges[k], edges[k + 1] - 1)
    return Binning(edges)


def integrate_rows(image, rows: tuple[int, int] | None = None) -> np.ndarray:
    """Sum the transverse rows ``rows[0]:rows[1]`` into a 1-D profile."""
    image = np.asarray(image, dtype=float)
    if image.ndim == 1:
        return image
    r0, r1 = rows if rows is not None else (0, image.shape[0])
    if not 0 <= r0 < r1 <= image.shape[0]:
        raise ValueError(f"row range {rows} outside image with {image.shape[0]} rows")
    return image[r0:r1].sum(axis=0)


# --- records --------------------------------------------------------------

def normalize_record(record: SpinwaveRecord) -> SpinwaveRecord:
    """Rescale so the largest |S| is 1; all-zero records pass through flagged."""
    peak = float(record.s_mag.max()) if record.s_mag.size else 0.0
    diag = dict(record.diagnostics)
    if peak == 0:
        diag["zero_record"] = True
        return replace(record, diagnostics=diag)
    diag["zero_record"] = False
    return replace(record, s_mag=record.s_mag / peak, normalization=record.normalization * peak,
                   diagnostics=diag)


@dataclass(frozen=True)
class CentroidTrack:
    times: np.ndarray
    centroids: np.ndarray
    valid: np.ndarray
    totals: np.ndarray


def centroid_track(record: SpinwaveRecord, threshold: float = 0.05) -> CentroidTrack:
    """First moment of |S| per frame.

    Frames whose summed signal is below ``threshold`` times the largest
    frame sum are marked invalid (centroid NaN).
    """
    s = np.asarray(record.s_mag, dtype=float)
    totals = s.sum(axis=1)
    top = totals.max() if totals.size else 0.0
    valid = totals > threshold * top if top > 0 else np.zeros(len(totals), bool)
    cen = np.full(len(totals), np.nan)
    cen[valid] = (s[valid] @ record.xi) / totals[valid]
    return CentroidTrack(np.asarray(record.times), cen, valid, totals)


def _window(times, window):
    times = np.asarray(times, dtype=float)
    if window is None:
        return np.ones(times.shape, bool)
    t0, t1 = window
    return (times >= t0 - 1e-9) & (times <= t1 + 1e-9)


def group_velocity_fit(times, centroids, window: tuple[float, float] | None = None) -> FitResult:
    """Least-squares slope of centroid against time."""
    times = np.asarray(times, dtype=float)
    centroids = np.asarray(centroids, dtype=float)
    m = _window(times, window) & np.isfinite(centroids)
    if m.sum() < 3:
        raise ValueError(f"need at least 3 valid frames in the window, got {int(m.sum())}")
    t, c = times[m], centroids[m]
    res = stats.linregress(t, c)
    resid = c - (res.intercept + res.slope * t)
    return FitResult(
        kind="linear",
        params={"velocity": res.slope, "intercept": res.intercept},
        errors={"velocity": res.stderr, "intercept": res.intercept_stderr},
        residual_norm=float(np.linalg.norm(resid)),
        converged=True,
    )


def _gauss(x, a, c, s):
    return a * np.exp(-0.5 * ((x - c) / s) ** 2)


def gaussian_profile_fit(xi, frame, max_nfev: int = 2000) -> FitResult:
    """Fit ``a * exp(-(x-c)^2 / (2 s^2))`` to one spatial profile.

    Starts from moments of the positive part of the frame.  A frame with
    no resolvable peak, or a fit that does not converge, gives
    ``converged=False``.
    """
    x = np.asarray(xi, dtype=float)
    y = np.asarray(frame, dtype=float)
    nan = {"amplitude": math.nan, "center": math.nan, "fwhm": math.nan}
    span = x[-1] - x[0]
    ymax = y.max() if y.size else 0.0
    if y.size < 4 or ymax <= 0 or np.ptp(y) <= 1e-9 * abs(ymax):
        return FitResult("gaussian", nan, dict(nan), math.nan, False, ("degenerate",), "no peak in frame")

    w = np.clip(y, 0.0, None)
    c0 = float(np.sum(w * x) / np.sum(w))
    s0 = float(np.sqrt(np.sum(w * (x - c0) ** 2) / np.sum(w)))
    s0 = max(s0, 2 * abs(x[1] - x[0]))
    flags = []
    peaks, _ = signal.find_peaks(y, prominence=0.3 * ymax)
    if len(peaks) > 1:
        flags.append("multi_peak")
    try:
        popt, pcov = optimize.curve_fit(_gauss, x, y, p0=[ymax, c0, s0], maxfev=max_nfev)
    except (RuntimeError, optimize.OptimizeWarning) as exc:
        return FitResult("gaussian", nan, dict(nan), math.nan, False, tuple(flags), str(exc))
    a, c, s = popt
    s = abs(s)
    perr = np.sqrt(np.abs(np.diag(pcov))) if np.all(np.isfinite(pcov)) else np.full(3, math.inf)
    resid = y - _gauss(x, a, c, s)
    ok = bool(np.all(np.isfinite(popt)) and s < 2 * span and a > 0)
    if not ok:
        flags.append("unresolved")
    return FitResult(
        kind="gaussian",
        params={"amplitude": a, "center": c, "fwhm": FWHM_PER_SIGMA * s},
        errors={"amplitude": perr[0], "center": perr[1], "fwhm": FWHM_PER_SIGMA * perr[2]},
        residual_norm=float(np.linalg.norm(resid)),
        converged=ok,
        flags=tuple(flags),
    )


def decay_fit(times, amplitudes, window: tuple[float, float] | None = None) -> FitResult:
    """Exponential time constant from a weighted fit of ln A against t.

    Weights are proportional to A (so each log-residual counts as the
    corresponding absolute residual).  A non-decaying series gives
    ``tau = inf`` and ``converged=False``.
    """
    t = np.asarray(times, dtype=float)
    a = np.asarray(amplitudes, dtype=float)
    m = _window(t, window)
    t, a = t[m], a[m]
    if t.size < 3:
        raise ValueError("need at least 3 points for a decay fit")
    if np.any(a <= 0):
        raise ValueError("amplitudes must be positive in the fitted window")
    y = np.log(a)
    coef, cov = np.polyfit(t, y, 1, w=a / a.max(), cov="unscaled")
    slope, icpt = coef
    resid = y - (slope * t + icpt)
    wr = resid * a / a.max()
    dof = t.size - 2
    chi2 = float(np.sum(wr * wr))
    cov = cov * (chi2 / dof if dof > 0 else 0.0)
    s_slope = math.sqrt(max(cov[0, 0], 0.0))
    amp0 = math.exp(icpt)
    if slope >= 0:
        return FitResult("exponential", {"tau": math.inf, "amplitude": amp0},
                         {"tau": math.inf, "amplitude": amp0 * math.sqrt(max(cov[1, 1], 0.0))},
                         float(np.linalg.norm(wr)), False, ("no_decay",), "amplitude does not decay")
    tau = -1.0 / slope
    return FitResult(
        kind="exponential",
        params={"tau": tau, "amplitude": amp0, "rate": -slope},
        errors={"tau": s_slope / slope**2, "amplitude": amp0 * math.sqrt(max(cov[1, 1], 0.0)),
                "rate": s_slope},
        residual_norm=float(np.linalg.norm(wr)),
        converged=True,
    )


@dataclass(frozen=True)
class WidthSeries:
    times: np.ndarray
    fwhm: np.ndarray
    fwhm_err: np.ndarray
    amplitude: np.ndarray
    center: np.ndarray

    def __len__(self):
        return len(self.times)


def fwhm_series(record: SpinwaveRecord, window: tuple[float, float] | None = None,
                threshold: float = 0.05) -> WidthSeries:
    """Gaussian FWHM of every strobe frame; invalid or unconverged frames are dropped."""
    track = centroid_track(record, threshold)
    keep = _window(record.times, window) & track.valid
    rows = []
    for k in np.flatnonzero(keep):
        fit = gaussian_profile_fit(record.xi, record.s_mag[k])
        if fit.converged:
            rows.append((record.times[k], fit["fwhm"], fit.errors["fwhm"], fit["amplitude"], fit["center"]))
    if not rows:
        empty = np.empty(0)
        return WidthSeries(empty, empty, empty, empty, empty)
    arr = np.array(rows, dtype=float)
    return WidthSeries(*arr.T)


def first_split_time(record: SpinwaveRecord, window: tuple[float, float] | None = None,
                     prominence: float = 0.3) -> float:
    """Time of the first frame in ``window`` with more than one prominent peak (inf if none).

    A FWHM is only meaningful before a profile breaks up, so width growth
    comparisons should stop here.
    """
    m = _window(record.times, window)
    for k in np.flatnonzero(m):
        frame = np.asarray(record.s_mag[k], dtype=float)
        if frame.max() <= 0:
            continue
        peaks, _ = signal.find_peaks(frame, prominence=prominence * frame.max())
        if len(peaks) > 1:
            return float(record.times[k])
    return math.inf


def diffusion_from_widths(series: WidthSeries) -> FitResult:
    """Diffusion constant from the FWHM^2 slope (FWHM^2 grows at 16 ln2 D)."""
    if len(series) < 3:
        raise ValueError("need at least 3 width points")
    res = stats.linregress(series.times, series.fwhm**2)
    scale = 16.0 * math.log(2.0)
    resid = series.fwhm**2 - (res.intercept + res.slope * series.times)
    return FitResult(
        kind="linear",
        params={"fwhm2_slope": res.slope, "diffusion": res.slope / scale, "intercept": res.intercept},
        errors={"fwhm2_slope": res.stderr, "diffusion": res.stderr / scale,
                "intercept": res.intercept_stderr},
        residual_norm=float(np.linalg.norm(resid)),
        converged=True,
    )


# --- record comparison ----------------------------------------------------

@dataclass
class RecordDifference:
    rms: float
    max_abs: float
    times: np.ndarray
    per_frame_rms: np.ndarray
    notes: list = field(default_factory=list)


def _common_frames(a: SpinwaveRecord, b: SpinwaveRecord, tol=1e-6):
    ta, tb = np.asarray(a.times), np.asarray(b.times)
    ia, ib = [], []
    j = 0
    for i, t in enumerate(ta):
        while j < len(tb) and tb[j] < t - tol:
            j += 1
        if j < len(tb) and abs(tb[j] - t) <= tol:
            ia.append(i)
            ib.append(j)
    return np.array(ia, int), np.array(ib, int)


def compare_records(a: SpinwaveRecord, b: SpinwaveRecord,
                    window: tuple[float, float] | None = None) -> RecordDifference:
    """RMS difference of |S| after aligning frames and normalising each to max 1.

    Frames are matched on equal timestamps, which resamples a record whose
    strobe cadence is an integer multiple of the other's.
    """
    if len(a.xi) != len(b.xi) or not np.allclose(a.xi, b.xi):
        raise ValueError(f"incompatible xi grids ({len(a.xi)} vs {len(b.xi)} points)")
    ia, ib = _common_frames(a, b)
    if window is not None:
        keep = _window(np.asarray(a.times)[ia], window)
        ia, ib = ia[keep], ib[keep]
    if ia.size == 0:
        raise ValueError("records share no strobe times")
    sa = np.asarray(a.s_mag)[ia] * a.normalization
    sb = np.asarray(b.s_mag)[ib] * b.normalization
    notes = []
    for name, s in (("a", sa), ("b", sb)):
        if s.max() <= 0:
            notes.append(f"record {name} is all zero in the compared window")
    sa = sa / sa.max() if sa.max() > 0 else sa
    sb = sb / sb.max() if sb.max() > 0 else sb
    diff = sa - sb
    return RecordDifference(
        rms=float(np.sqrt(np.mean(diff**2))),
        max_abs=float(np.max(np.abs(diff))),
        times=np.asarray(a.times)[ia],
        per_frame_rms=np.sqrt(np.mean(diff**2, axis=1)),
        notes=notes,
    )


def summarize_record(record: SpinwaveRecord, velocity_window=None, width_window=None,
                     decay_window=None) -> dict:
    """Fitted velocity, decay time and width series for one record."""
    out: dict = {"normalization": float(record.normalization),
                 "n_frames": int(len(record.times))}
    track = centroid_track(record)
    try:
        out["velocity"] = group_velocity_fit(track.times, track.centroids, velocity_window).to_dict()
    except ValueError as exc:
        out["velocity"] = {"error": str(exc)}
    widths = fwhm_series(record, width_window)
    out["fwhm_series"] = {"times": widths.times.tolist(), "fwhm": widths.fwhm.tolist(),
                          "fwhm_err": widths.fwhm_err.tolist()}
    areas = track.totals
    m = _window(track.times, decay_window) & track.valid & (areas > 0)
    try:
        out["decay"] = decay_fit(track.times[m], areas[m]).to_dict()
    except ValueError as exc:
        out["decay"] = {"error": str(exc)}
    return out
