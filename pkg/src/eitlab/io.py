"""Config files, scenario (de)serialisation and record/image file formats.

Config files are TOML.  Every dimensional key names its unit
(``dt_us``, ``gamma_e_rad_per_us``, ``length_m``), and complex Rabi
frequencies are written either as a number or as ``[re, im]``.
"""

from __future__ import annotations

import copy
import csv
import json
import math
import struct
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from . import scenarios
from .core import ControlSchedule, Grid, PhysicalParams, ProbePulse, Segment, SpinwaveRecord
from .mb_solver import SolverOptions


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = []
        if field:
            where.append(f"field '{field}'")
        if line:
            where.append(f"line {line}")
        super().__init__(f"{message}" + (f" ({', '.join(where)})" if where else ""))
        self.field = field
        self.line = line


# attribute name -> config key, per section
PARAM_KEYS = {
    "gamma_e": "gamma_e_rad_per_us",
    "gamma_s": "gamma_s_rad_per_us",
    "gamma_sw": "gamma_sw_rad_per_us",
    "od": "od",
    "length": "length_m",
    "wavelength": "wavelength_m",
    "temperature": "temperature_k",
    "atom_mass": "atom_mass_kg",
}
GRID_KEYS = {"n_xi": "n_xi", "dt": "dt_us", "t_max": "t_max_us", "strobe_interval": "strobe_interval_us"}
PROBE_KEYS = {
    "peak_amplitude": "peak_amplitude",
    "center_time": "center_time_us",
    "fwhm": "fwhm_us",
    "direction": "direction",
    "shape": "shape",
}
SCHEDULE_KEYS = {"detuning": "detuning_rad_per_us", "ramp_time": "ramp_time_us"}
SEGMENT_KEYS = {
    "t_start": "t_start_us",
    "t_end": "t_end_us",
    "omega_plus": "omega_plus_rad_per_us",
    "omega_minus": "omega_minus_rad_per_us",
    "ramp": "ramp",
}
OPTION_KEYS = {f.name: f.name for f in fields(SolverOptions)}


def _encode_complex(z: complex):
    z = complex(z)
    return float(z.real) if z.imag == 0 else [float(z.real), float(z.imag)]


def _decode_complex(value, field_name):
    if isinstance(value, bool):
        raise ConfigError("expected a number or [re, im]", field_name)
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, list) and len(value) == 2 and all(isinstance(v, (int, float)) for v in value):
        return complex(value[0], value[1])
    raise ConfigError("expected a number or [re, im]", field_name)


def scenario_to_dict(sc: scenarios.Scenario) -> dict:
    p = {PARAM_KEYS[k]: float(getattr(sc.params, k)) for k in PARAM_KEYS}
    g = {GRID_KEYS[k]: getattr(sc.grid, k) for k in GRID_KEYS}
    pr = {PROBE_KEYS[k]: getattr(sc.probe, k) for k in PROBE_KEYS}
    sched = {SCHEDULE_KEYS[k]: float(getattr(sc.schedule, k)) for k in SCHEDULE_KEYS}
    sched["segments"] = [
        {
            "t_start_us": float(s.t_start),
            "t_end_us": float(s.t_end),
            "omega_plus_rad_per_us": _encode_complex(s.omega_plus),
            "omega_minus_rad_per_us": _encode_complex(s.omega_minus),
            "ramp": s.ramp,
        }
        for s in sc.schedule.segments
    ]
    opts = {k: getattr(sc.options, k) for k in OPTION_KEYS if getattr(sc.options, k) is not None}
    marks = {k: (float(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else v)
             for k, v in sc.marks.items()}
    return {
        "name": sc.name,
        "description": sc.description,
        "params": p,
        "grid": g,
        "probe": pr,
        "schedule": sched,
        "options": opts,
        "marks": marks,
    }


def _typed(table: dict, keymap: dict, section: str, cls, base=None):
    inverse = {v: k for k, v in keymap.items()}
    kwargs = {}
    for key, value in table.items():
        if key not in inverse:
            raise ConfigError(f"unknown key; expected one of {sorted(inverse)}", f"{section}.{key}")
        kwargs[inverse[key]] = value
    if base is not None:
        for f in fields(cls):
            if f.name not in kwargs and f.name in keymap:
                kwargs[f.name] = getattr(base, f.name)
    for f in fields(cls):
        if f.name not in kwargs:
            continue
        v = kwargs[f.name]
        expected = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", "")
        if "float" in expected or "int" in expected:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                if not (v is None and "None" in expected):
                    raise ConfigError(f"expected a number, got {type(v).__name__}", f"{section}.{keymap[f.name]}")
            if expected.startswith("int") and not isinstance(v, int):
                raise ConfigError("expected an integer", f"{section}.{keymap[f.name]}")
        elif expected == "bool" and not isinstance(v, bool):
            raise ConfigError("expected true/false", f"{section}.{keymap[f.name]}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), section) from None


def scenario_from_dict(d: dict) -> scenarios.Scenario:
    known = {"name", "description", "params", "grid", "probe", "schedule", "options", "marks"}
    for key in d:
        if key not in known:
            raise ConfigError("unknown scenario key", key)
    for section in ("params", "grid", "probe", "schedule"):
        if section not in d:
            raise ConfigError("missing section", section)
    params = _typed(d["params"], PARAM_KEYS, "params", PhysicalParams)
    grid = _typed(d["grid"], GRID_KEYS, "grid", Grid)
    probe = _typed(d["probe"], PROBE_KEYS, "probe", ProbePulse)
    sched_tab = dict(d["schedule"])
    segs_raw = sched_tab.pop("segments", [])
    if not isinstance(segs_raw, list):
        raise ConfigError("expected an array of tables", "schedule.segments")
    segs = []
    for i, seg in enumerate(segs_raw):
        where = f"schedule.segments[{i}]"
        seg = dict(seg)
        for k in ("omega_plus_rad_per_us", "omega_minus_rad_per_us"):
            if k in seg:
                seg[k] = _decode_complex(seg[k], f"{where}.{k}")
        for k in ("t_start_us", "t_end_us"):
            if k not in seg:
                raise ConfigError("missing key", f"{where}.{k}")
        segs.append(_typed(seg, SEGMENT_KEYS, where, Segment))
    sched = _typed(sched_tab, SCHEDULE_KEYS, "schedule", ControlSchedule)
    try:
        sched = ControlSchedule(tuple(segs), sched.detuning, sched.ramp_time)
    except ValueError as exc:
        raise ConfigError(str(exc), "schedule.segments") from None
    options = _typed(d.get("options", {}), OPTION_KEYS, "options", SolverOptions)
    try:
        return scenarios.Scenario(
            name=d.get("name", "inline"),
            params=params,
            schedule=sched,
            probe=probe,
            grid=grid,
            options=options,
            description=d.get("description", ""),
            marks=dict(d.get("marks", {})),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), "grid.t_max_us") from None


def dumps_scenario(sc: scenarios.Scenario) -> str:
    return tomli_w.dumps(scenario_to_dict(sc))


def loads_scenario(text: str) -> scenarios.Scenario:
    return scenario_from_dict(parse_toml(text))


def parse_toml(text: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = None
        msg = str(exc)
        if "line " in msg:
            try:
                line = int(msg.split("line ")[1].split(",")[0].split(")")[0])
            except (IndexError, ValueError):
                line = None
        raise ConfigError(f"TOML syntax error: {msg}", line=line) from None


def parse_override(text: str) -> tuple[list[str], object]:
    """``a.b.c=value`` with value parsed as a TOML literal (bare words as strings)."""
    if "=" not in text:
        raise ConfigError("override must look like key=value", text)
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError("empty override key", text)
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key.split("."), value


def set_dotted(d: dict, path: list[str], value) -> None:
    node = d
    for part in path[:-1]:
        if isinstance(node, list):
            try:
                node = node[int(part)]
            except (ValueError, IndexError):
                raise ConfigError("bad list index", ".".join(path)) from None
            continue
        node = node.setdefault(part, {})
        if not isinstance(node, (dict, list)):
            raise ConfigError("cannot descend into a scalar", ".".join(path))
    last = path[-1]
    if isinstance(node, list):
        try:
            node[int(last)] = value
        except (ValueError, IndexError):
            raise ConfigError("bad list index", ".".join(path)) from None
    else:
        node[last] = value


def deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


RUN_CONFIG_KEYS = {"scenario", "scenario_args", "params", "grid", "probe", "schedule", "options",
                   "output", "analysis", "sweep", "name", "description", "marks"}
# applied to the expanded preset rather than the raw config
SCENARIO_SECTIONS = {"grid", "probe", "schedule", "options", "name", "description", "marks"}
OUTPUT_FLAGS = {"record_matrix": True, "detectors": True, "analysis_summary": True, "plot_data": True,
                "binary": False}


def resolve_config(cfg: dict, overrides: list[str] = ()) -> tuple[scenarios.Scenario, dict]:
    """Build the scenario a run config describes.

    Preset keyword overrides (``scenario_args.*``) and ``params.*`` are applied
    before the preset is built; everything else is applied to the built
    scenario field by field.  Returns ``(scenario, settings)`` where settings
    holds the ``output``, ``analysis`` and ``sweep`` tables.
    """
    cfg = copy.deepcopy(cfg)
    late = []
    for item in overrides:
        path, value = parse_override(item)
        if path[0] in SCENARIO_SECTIONS and cfg.get("scenario") is not None:
            late.append((path, value))
        else:
            set_dotted(cfg, path, value)
    for key in cfg:
        if key not in RUN_CONFIG_KEYS:
            raise ConfigError("unknown top-level key", key)
    settings = {
        "output": {**OUTPUT_FLAGS, **cfg.get("output", {})},
        "analysis": dict(cfg.get("analysis", {})),
        "sweep": dict(cfg.get("sweep", {})),
    }
    for k in settings["output"]:
        if k not in OUTPUT_FLAGS and k != "dir":
            raise ConfigError("unknown output key", f"output.{k}")

    name = cfg.get("scenario")
    if name is not None:
        if not isinstance(name, str) or name not in scenarios.PRESETS:
            raise ConfigError(f"unknown scenario; available: {', '.join(sorted(scenarios.PRESETS))}",
                              "scenario")
        kwargs = dict(cfg.get("scenario_args", {}))
        if "params" in cfg:
            kwargs["params"] = _typed(cfg["params"], PARAM_KEYS, "params", PhysicalParams)
        try:
            built = scenarios.build(name, **kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc), "scenario_args") from None
        except ValueError as exc:
            raise ConfigError(str(exc), "scenario_args") from None
        base = scenario_to_dict(built)
    else:
        base = {}
    inline = {k: cfg[k] for k in ("name", "description", "grid", "probe", "schedule", "options", "marks")
              if k in cfg}
    if name is None and "params" in cfg:
        inline["params"] = cfg["params"]
    if "schedule" in inline and "segments" in inline["schedule"] and "schedule" in base:
        base["schedule"]["segments"] = []
    merged = deep_merge(base, inline)
    for path, value in late:
        set_dotted(merged, path, value)
    return scenario_from_dict(merged), settings


def load_run_config(path, overrides: list[str] = ()) -> tuple[scenarios.Scenario, dict]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config {path}: {exc}") from exc
    return resolve_config(parse_toml(text), overrides)


# --- record files -----------------------------------------------------------

def write_record_csv(record: SpinwaveRecord, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_us\\xi"] + [repr(float(x)) for x in record.xi])
        for t, row in zip(record.times, record.s_mag):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def read_record_csv(path, normalization: float = 1.0) -> SpinwaveRecord:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: record CSV needs a header and at least one frame")
    xi = np.array([float(v) for v in rows[0][1:]])
    data = np.array([[float(v) for v in r] for r in rows[1:] if r])
    empty = np.empty(0)
    return SpinwaveRecord(s_mag=data[:, 1:], times=data[:, 0], xi=xi, out_forward=empty,
                          out_backward=empty, detector_times=empty, normalization=normalization)


def write_detectors_csv(record: SpinwaveRecord, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_us", "forward_re", "forward_im", "forward_abs", "backward_re", "backward_im",
                    "backward_abs"])
        for t, f, b in zip(record.detector_times, record.out_forward, record.out_backward):
            vals = (t, f.real, f.imag, abs(f), b.real, b.imag, abs(b))
            w.writerow([repr(float(v)) for v in vals])


BINARY_MAGIC = b"EITREC01"


def write_record_binary(record: SpinwaveRecord, path) -> None:
    """Little-endian: magic, int64 rows, int64 cols, float64 times, xi, matrix."""
    nt, nx = record.s_mag.shape
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<qq", nt, nx))
        fh.write(np.asarray(record.times, dtype="<f8").tobytes())
        fh.write(np.asarray(record.xi, dtype="<f8").tobytes())
        fh.write(np.asarray(record.s_mag, dtype="<f8").tobytes())


def read_record_binary(path, normalization: float = 1.0) -> SpinwaveRecord:
    raw = Path(path).read_bytes()
    if raw[:8] != BINARY_MAGIC:
        raise ValueError(f"{path}: not a binary record file")
    nt, nx = struct.unpack("<qq", raw[8:24])
    arr = np.frombuffer(raw, dtype="<f8", offset=24)
    if arr.size != nt + nx + nt * nx:
        raise ValueError(f"{path}: truncated binary record")
    empty = np.empty(0)
    return SpinwaveRecord(s_mag=arr[nt + nx:].reshape(nt, nx).copy(), times=arr[:nt].copy(),
                          xi=arr[nt:nt + nx].copy(), out_forward=empty, out_backward=empty,
                          detector_times=empty, normalization=normalization)


def read_record(path) -> SpinwaveRecord:
    """Load a record from a run directory, a CSV matrix or a binary record file."""
    p = Path(path)
    norm = 1.0
    if p.is_dir():
        summary = p / "summary.json"
        if summary.exists():
            norm = json.loads(summary.read_text()).get("normalization", 1.0)
        p = p / "record.csv" if (p / "record.csv").exists() else p / "record.bin"
    if not p.exists():
        raise FileNotFoundError(f"record file not found: {p}")
    with open(p, "rb") as fh:
        head = fh.read(8)
    if head == BINARY_MAGIC:
        return read_record_binary(p, norm)
    return read_record_csv(p, norm)


def write_plot_data(record: SpinwaveRecord, out_dir: Path, title: str) -> None:
    """gnuplot nonuniform-matrix data plus a script rendering |S|(t, xi) and the detectors."""
    out_dir = Path(out_dir)
    with open(out_dir / "record_plot.dat", "w") as fh:
        fh.write(" ".join([str(len(record.xi))] + [f"{x:.8g}" for x in record.xi]) + "\n")
        for t, row in zip(record.times, record.s_mag):
            fh.write(" ".join([f"{t:.8g}"] + [f"{v:.8g}" for v in row]) + "\n")
    script = f"""# gnuplot script: |S|(t, xi) and detector traces for {title}
set terminal pngcairo size 900,700
set output 'record.png'
set multiplot layout 2,1 title '{title}'
set xlabel 'xi'
set ylabel 't (us)'
set cblabel '|S| (scaled)'
plot 'record_plot.dat' nonuniform matrix with image notitle
set xlabel 't (us)'
set ylabel '|E|'
set datafile separator ','
plot 'detectors.csv' using 1:4 with lines title 'E+ (xi=1)', \\
     'detectors.csv' using 1:7 with lines title 'E- (xi=0)'
unset multiplot
"""
    (out_dir / "plot.gp").write_text(script)


# --- images -----------------------------------------------------------------

def read_image(path) -> np.ndarray:
    """Plain-text matrix or 8/16-bit portable graymap (P2 or P5)."""
    p = Path(path)
    data = p.read_bytes()
    if data[:2] in (b"P5", b"P2"):
        return _read_pgm(data, p)
    try:
        return np.loadtxt(p, ndmin=2, delimiter="," if b"," in data[:4096] else None)
    except ValueError as exc:
        raise ValueError(f"{p}: not a PGM or numeric text matrix ({exc})") from None


def _read_pgm(data: bytes, p: Path) -> np.ndarray:
    magic = data[:2]
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{p}: truncated PGM header")
        tokens.append(int(data[start:pos]))
    width, height, maxval = tokens
    if magic == b"P2":
        vals = np.array(data[pos:].split(), dtype=float)
        if vals.size != width * height:
            raise ValueError(f"{p}: expected {width * height} pixels, got {vals.size}")
        return vals.reshape(height, width)
    pos += 1  # single whitespace after maxval
    dtype = ">u2" if maxval > 255 else "u1"
    arr = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos)
    return arr.reshape(height, width).astype(float)


def write_pgm16(image, path) -> None:
    img = np.asarray(image)
    if img.min() < 0 or img.max() > 65535:
        raise ValueError("PGM pixels must lie in [0, 65535]")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode())
        fh.write(np.round(img).astype(">u2").tobytes())


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj
