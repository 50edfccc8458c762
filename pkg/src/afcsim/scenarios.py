"""Scenario configs, named presets and the runners that turn them into files.

A config is a JSON object::

    {"schema_version": 1, "kind": "afc", "seed": 0,
     "output_dir": "out/afc", "parameters": {...}}

``parameters`` is merged over the per-kind defaults below; unknown keys are
rejected. All quantities are SI (Hz, s, T).
"""

import copy
import hashlib
import json
import os
import platform
import shutil
import tempfile
from pathlib import Path

import numpy as np
import scipy

from afcsim import __version__
from afcsim import io as _io
from afcsim.analysis import DecayTrace, fit_double_exp, fit_lines, fit_single_exp
from afcsim.comb import (
    CombSpec,
    analytic_efficiency,
    comb_profile,
    comb_pump_sequence,
    efficiency_law,
    estimate_comb_period,
    optimal_fineness,
)
from afcsim.errors import AfcSimError
from afcsim.prop import Pulse, comb_grid, detect_echo, efficiency_vs_storage_time, propagate, trace_to_csv
from afcsim.pump import (
    LevelScheme,
    PumpSequence,
    evolve_populations,
    hole_decay_trace,
    hole_feature_offsets,
    relax,
    spin_polarization,
    tailored_profile,
)
from afcsim.spectrum import AbsorptionProfile, FieldModel, FrequencyGrid, build_absorption, natural_nd_lines

SCHEMA_VERSION = 1
KINDS = ("spectrum", "holeburn", "afc", "sweep", "optimize", "fit")
OUTPUT_ENV = "AFCSIM_OUTPUT_DIR"


class ConfigError(AfcSimError, ValueError):
    """The scenario config is malformed or inconsistent."""


_FIELD_MODEL = {
    "zeeman_slope_hz_per_t": 16.45e9,
    "width_at_zero_hz": 180e6,
    "narrowing": 0.5,
    "narrowing_field_t": 2.0,
}

_SCHEME = {
    "ground_splitting_hz_per_t": 25e6,
    "excited_splitting_hz_per_t": 10e6,
    "branching_ratio": 0.5,
    "excited_lifetime_s": 100e-6,
    "relax_weights": [0.5, 0.5],
    "relax_constants_s": [4.9e-3, 34.7e-3],
    "transition_strengths": [1.0, 1.0, 1.0, 1.0],
}

_COMB = {
    "delta_hz": 7e6,
    "fineness": None,
    "peak_depth": 5.5,
    "background_depth": 0.05,
    "tooth_shape": "gaussian",
    "band_span_hz": 60e6,
}

DEFAULTS = {
    "spectrum": {
        "field_t": 0.0,
        "peak_depth": 2.6,
        "shift_per_amu_hz": 110e6,
        "include_odd": False,
        "field_model": _FIELD_MODEL,
        "grid": {"center_offset_hz": None, "span_hz": 3e9, "n_points": 3001},
        "fit_lines": 0,
    },
    "holeburn": {
        "field_t": 6.6,
        "base_depth": 5.0,
        "scheme": _SCHEME,
        "pump": {
            "sweep_span_hz": None,
            "sweep_duration_s": 240e-6,
            "step_resolution_hz": 0.5e6,
            "total_duration_s": 10e-3,
            "peak_rate_per_s": 2e4,
            "homogeneous_fwhm_hz": 0.5e6,
            "center_hz": 0.0,
            "mask": None,
        },
        "comb": None,
        "grid": {"half_span_hz": 40e6, "step_hz": 0.05e6},
        "probe_delay_s": 0.2e-3,
        "hole_window_hz": 0.5e6,
        "decay_delays_s": None,
        "decay_noise": 0.0,
    },
    "afc": {
        "comb": _COMB,
        "pulse_fwhm_s": 60e-9,
        "baseline_depth": 0.0,
    },
    "sweep": {
        "comb": _COMB,
        "storage_times_s": [100e-9, 143e-9, 200e-9, 300e-9, 400e-9, 600e-9],
        "pump_probe_delays_s": [0.2e-3, 1.0e-3],
        "initial_depth": 2.6,
        "pulse_fwhm_s": 60e-9,
        "baseline_depth": 0.0,
        "scheme": _SCHEME,
    },
    "optimize": {
        "peak_depth": 5.5,
        "background_depth": 0.05,
        "bounds": [1.01, 100.0],
        "scan_step": 1e-3,
    },
    "fit": {
        "input": None,
        "model": "double_exp",
        "n_lines": 5,
    },
}

# keys whose value is a free-form sub-map (no default structure to validate against)
_OPEN_KEYS = {("holeburn", "comb")}


def _merge(defaults, given, where, kind):
    if not isinstance(given, dict):
        raise ConfigError(f"{where} must be an object")
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if key not in defaults:
            raise ConfigError(f"unknown key {where}.{key}")
        sub = defaults[key]
        if isinstance(sub, dict) and value is not None:
            out[key] = _merge(sub, value, f"{where}.{key}", kind)
        elif (kind, key) in _OPEN_KEYS and value is not None:
            out[key] = _merge(_COMB, value, f"{where}.{key}", kind)
        else:
            out[key] = value
    return out


def load_config(path):
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    cfg = validate_config(raw)
    cfg["_base_dir"] = str(Path(path).resolve().parent)
    return cfg


def validate_config(raw):
    """Check the envelope and merge parameters over the kind defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - {"schema_version", "kind", "seed", "output_dir", "parameters", "name"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    out_dir = raw.get("output_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("output_dir must be a string")
    params = _merge(DEFAULTS[kind], raw.get("parameters", {}), "parameters", kind)
    cfg = {"schema_version": SCHEMA_VERSION, "kind": kind, "seed": seed,
           "output_dir": out_dir, "parameters": params}
    if "name" in raw:
        cfg["name"] = str(raw["name"])
    _check_numbers(params, "parameters")
    try:
        BUILDERS_CHECK[kind](params)
    except AfcSimError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid {kind} parameters: {exc}") from None
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid {kind} parameters: {exc}") from None
    return cfg


def _check_numbers(obj, where):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_numbers(v, f"{where}.{k}")
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _check_numbers(v, f"{where}[{i}]")
    elif isinstance(obj, float) and not np.isfinite(obj):
        raise ConfigError(f"{where} is not finite")


# ---------------------------------------------------------------- builders

def _field_model(p):
    return FieldModel(p["zeeman_slope_hz_per_t"], p["width_at_zero_hz"], p["narrowing"],
                      p["narrowing_field_t"])


def _scheme(p):
    return LevelScheme(p["ground_splitting_hz_per_t"], p["excited_splitting_hz_per_t"],
                       p["branching_ratio"], p["excited_lifetime_s"], tuple(p["relax_weights"]),
                       tuple(p["relax_constants_s"]), tuple(p["transition_strengths"]))


def _comb_spec(p, fineness=None):
    F = p["fineness"] if fineness is None else fineness
    if F is None:
        F, _ = optimal_fineness(p["peak_depth"], p["background_depth"])
    return CombSpec(float(p["delta_hz"]), float(F), float(p["peak_depth"]),
                    float(p["background_depth"]), p["tooth_shape"], float(p["band_span_hz"]))


def _fields(value):
    return [float(b) for b in (value if isinstance(value, list) else [value])]


def _delays(value):
    if value is None:
        return None
    if isinstance(value, dict):
        return np.linspace(float(value["start"]), float(value["stop"]), int(value["n"]))
    return np.asarray(value, dtype=float)


def _pump_sequence(p, comb):
    pump = p["pump"]
    res = float(pump["step_resolution_hz"])
    span = pump["sweep_span_hz"]
    if comb is None and span is None and pump["mask"] is None:
        return PumpSequence.single_frequency(pump["total_duration_s"], pump["peak_rate_per_s"],
                                             pump["homogeneous_fwhm_hz"], pump["center_hz"], res)
    span = float(span if span is not None else (comb.band_span if comb else res))
    n = int(round(span / res))
    mask = np.ones(n) if pump["mask"] is None else np.asarray(pump["mask"], dtype=float)
    seq = PumpSequence(span, pump["sweep_duration_s"], res, mask, pump["total_duration_s"],
                       pump["peak_rate_per_s"], pump["homogeneous_fwhm_hz"], pump["center_hz"])
    return comb_pump_sequence(comb, seq) if comb is not None else seq


def _check_spectrum(p):
    _field_model(p["field_model"])
    natural_nd_lines(p["shift_per_amu_hz"])
    if int(p["fit_lines"]) < 0:
        raise ConfigError("fit_lines must be >= 0")
    for b in _fields(p["field_t"]):
        if b < 0:
            raise ConfigError("field_t must be nonnegative")


def _check_holeburn(p):
    _scheme(p["scheme"])
    comb = _comb_spec(p["comb"]) if p["comb"] is not None else None
    _pump_sequence(p, comb)
    for b in _fields(p["field_t"]):
        if b < 0:
            raise ConfigError("field_t must be nonnegative")
    if p["base_depth"] <= 0:
        raise ConfigError("base_depth must be positive")
    _delays(p["decay_delays_s"])


def _check_afc(p):
    _comb_spec(p["comb"])
    if p["pulse_fwhm_s"] <= 0:
        raise ConfigError("pulse_fwhm_s must be positive")


def _check_sweep(p):
    _check_afc(p)
    _scheme(p["scheme"])
    if not p["storage_times_s"]:
        raise ConfigError("storage_times_s is empty")


def _check_optimize(p):
    if p["peak_depth"] <= 0:
        raise ConfigError("peak_depth must be positive")
    lo, hi = p["bounds"]
    if not 0 < lo < hi:
        raise ConfigError("bounds must satisfy 0 < low < high")


def _check_fit(p):
    if not isinstance(p["input"], str):
        raise ConfigError("fit.input must name a CSV file")
    if p["model"] not in ("single_exp", "double_exp", "lines"):
        raise ConfigError("fit.model must be single_exp, double_exp or lines")


BUILDERS_CHECK = {
    "spectrum": _check_spectrum,
    "holeburn": _check_holeburn,
    "afc": _check_afc,
    "sweep": _check_sweep,
    "optimize": _check_optimize,
    "fit": _check_fit,
}


# ----------------------------------------------------------------- runners

def _suffix(b, many):
    return "" if not many else "_B" + (f"{b:g}".replace(".", "p")) + "T"


def run_spectrum(p, out, rng):
    model = _field_model(p["field_model"])
    lines = natural_nd_lines(p["shift_per_amu_hz"], model.width_at_zero, p["include_odd"])
    fields = _fields(p["field_t"])
    summary = {}
    for b in fields:
        g = p["grid"]
        center = g["center_offset_hz"]
        if center is None:
            center = 4 * p["shift_per_amu_hz"] + model.zeeman_slope * b
        grid = FrequencyGrid(center, g["span_hz"], g["n_points"])
        profile = build_absorption(lines, b, p["peak_depth"], model, grid)
        sfx = _suffix(b, len(fields) > 1)
        profile.to_csv(out / f"profile{sfx}.csv")
        entry = {"field_t": b, "argmax_hz": float(grid.points[np.argmax(profile.depth)]),
                 "zeeman_shift_hz": model.zeeman_slope * b}
        n = int(p["fit_lines"])
        if n:
            fits = fit_lines(profile, n)
            centers = np.array([f.center for f in fits])
            entry["lines"] = [{"center_hz": f.center, "fwhm_hz": f.fwhm, "weight": f.weight} for f in fits]
            if n > 1:
                entry["mean_spacing_hz"] = float(np.mean(np.diff(centers)))
                entry["shift_per_amu_hz"] = float(np.mean(np.diff(centers)) / 2)
        summary[f"{b:g}"] = entry
    _io.write_json(out / "spectrum.json", summary)


def run_holeburn(p, out, rng):
    scheme = _scheme(p["scheme"])
    comb = _comb_spec(p["comb"]) if p["comb"] is not None else None
    seq = _pump_sequence(p, comb)
    g = p["grid"]
    half = max(g["half_span_hz"], seq.sweep_span / 2)
    grid = FrequencyGrid.from_step(0.0, g["step_hz"], half)
    base = AbsorptionProfile(grid, np.full(grid.n_points, float(p["base_depth"])))
    fields = _fields(p["field_t"])
    many = len(fields) > 1
    summary = {}
    if comb is not None:
        base.to_csv(out / "initial_profile.csv")
    for b in fields:
        sfx = _suffix(b, many)
        state = evolve_populations(base, scheme, seq, b)
        probed = relax(state, scheme, p["probe_delay_s"])
        profile = tailored_profile(probed, base, scheme, b)
        # with a comb, profile.csv is the design target and the pumped result sits beside it
        profile.to_csv(out / (f"pumped_profile{sfx}.csv" if comb is not None else f"profile{sfx}.csv"))
        probed.to_csv(out / f"populations{sfx}.csv")
        _io.write_csv(out / f"transmission{sfx}.csv", ["frequency_hz", "transmission"],
                      [grid.points, profile.transmission()])
        side, anti = hole_feature_offsets(scheme, b)
        w = p["hole_window_hz"] / 2
        entry = {
            "field_t": b,
            "side_holes_hz": side,
            "anti_holes_hz": anti,
            "min_depth": float(profile.depth.min()),
            "max_depth": float(profile.depth.max()),
            "spin_polarization": spin_polarization(state, (seq.center - w, seq.center + w)),
            "residual_population": 1 - spin_polarization(state, (seq.center - w, seq.center + w)),
        }
        if comb is not None:
            band = (comb.center - comb.band_span / 2, comb.center + comb.band_span / 2)
            inside = (grid.points >= band[0]) & (grid.points <= band[1])
            entry["comb_period_hz"] = estimate_comb_period(profile, band)
            entry["band_max_depth"] = float(profile.depth[inside].max())
            entry["band_min_depth"] = float(profile.depth[inside].min())
            target = comb_profile(comb, FrequencyGrid.from_step(0.0, min(g["step_hz"], comb.tooth_width / 8), half),
                                  float(p["base_depth"]))
            target.to_csv(out / f"profile{sfx}.csv")
            entry["target_max_depth"] = float(target.depth.max())
            entry["target_comb"] = {"delta_hz": comb.delta, "fineness": comb.fineness,
                                    "peak_depth": comb.peak_depth,
                                    "background_depth": comb.background_depth}
        delays = _delays(p["decay_delays_s"])
        if delays is not None:
            trace = hole_decay_trace(state, base, scheme, delays, seq.center)
            if p["decay_noise"] > 0:
                trace = DecayTrace(trace.delays,
                                   trace.transmissions + rng.normal(0, p["decay_noise"], len(trace)))
            trace.to_csv(out / f"decay{sfx}.csv")
            fit = fit_double_exp(trace)
            _io.write_json(out / f"decay_fit{sfx}.json", fit.to_record())
            entry["decay_fit"] = {"tau1_s": fit["tau1"], "tau2_s": fit["tau2"]}
        summary[f"{b:g}"] = entry
    _io.write_json(out / "holeburn.json", summary)


def run_afc(p, out, rng):
    spec = _comb_spec(p["comb"])
    pulse = Pulse.gaussian(p["pulse_fwhm_s"], min_window=8 / spec.delta)
    grid = comb_grid(spec, pulse)
    profile = comb_profile(spec, grid, float(p["baseline_depth"]))
    trace = propagate(pulse, profile)
    result = detect_echo(trace, pulse, spec.delta)
    profile.to_csv(out / "profile.csv")
    trace_to_csv(out / "trace.csv", trace, pulse.sample_period)
    trace_to_csv(out / "input.csv", pulse.samples, pulse.sample_period)
    result.to_json(out / "echo.json", storage_time_s=spec.storage_time,
                   analytic_efficiency=analytic_efficiency(spec), fineness=spec.fineness,
                   sample_period_s=pulse.sample_period)


def run_sweep(p, out, rng):
    scheme = _scheme(p["scheme"])
    base = _comb_spec(p["comb"])
    taus = np.asarray(p["storage_times_s"], dtype=float)
    specs = [CombSpec(1 / t, base.fineness, base.peak_depth, base.background_depth, base.tooth_shape,
                      max(base.band_span, 2 / t)) for t in taus]
    pulse = Pulse.gaussian(p["pulse_fwhm_s"], min_window=8 * taus.max())
    cols = {"t_d_s": [], "storage_time_s": [], "efficiency": [], "analytic_efficiency": []}
    for T in p["pump_probe_delays_s"]:
        table = efficiency_vs_storage_time(pulse, specs, float(p["baseline_depth"]), scheme, float(T),
                                           float(p["initial_depth"]))
        cols["t_d_s"] += [float(T)] * len(table)
        cols["storage_time_s"] += table[:, 0].tolist()
        cols["efficiency"] += table[:, 1].tolist()
        cols["analytic_efficiency"] += table[:, 2].tolist()
    _io.write_csv(out / "efficiency.csv", list(cols), list(cols.values()))


def run_optimize(p, out, rng):
    d, d0 = p["peak_depth"], p["background_depth"]
    F, eta = optimal_fineness(d, d0, tuple(p["bounds"]))
    scan = np.arange(p["bounds"][0], p["bounds"][1], p["scan_step"])
    curve = efficiency_law(d, d0, scan)
    _io.write_csv(out / "efficiency_curve.csv", ["fineness", "efficiency"], [scan, curve])
    _io.write_json(out / "optimum.json", {
        "peak_depth": d, "background_depth": d0, "fineness": F, "efficiency": eta,
        "scan_fineness": float(scan[np.argmax(curve)]), "scan_efficiency": float(curve.max()),
    })


def run_fit(p, out, rng, base_dir="."):
    path = Path(p["input"])
    if not path.is_absolute():
        path = Path(base_dir) / path
    if p["model"] == "lines":
        profile = AbsorptionProfile.from_csv(path)
        lines = fit_lines(profile, int(p["n_lines"]))
        record = {"model": "lines",
                  "lines": [{"center_hz": l.center, "fwhm_hz": l.fwhm, "weight": l.weight} for l in lines]}
    else:
        trace = DecayTrace.from_csv(path)
        fit = fit_single_exp(trace) if p["model"] == "single_exp" else fit_double_exp(trace)
        record = fit.to_record()
    _io.write_json(out / "fit.json", record)


RUNNERS = {
    "spectrum": run_spectrum,
    "holeburn": run_holeburn,
    "afc": run_afc,
    "sweep": run_sweep,
    "optimize": run_optimize,
    "fit": run_fit,
}


# ----------------------------------------------------------------- presets

PRESETS = {
    "fig1a": {"kind": "spectrum", "parameters": {"field_t": 0.0, "fit_lines": 5}},
    "fig1b": {"kind": "spectrum", "parameters": {"field_t": 6.6, "fit_lines": 5}},
    "fig2a": {"kind": "holeburn", "parameters": {
        "field_t": [0.6, 1.5, 6.6], "base_depth": 2.6,
        "grid": {"half_span_hz": 60e6, "step_hz": 0.05e6},
        "pump": {"peak_rate_per_s": 3e3, "homogeneous_fwhm_hz": 0.3e6}}},
    "fig2b": {"kind": "holeburn", "parameters": {
        "field_t": 6.6, "decay_delays_s": {"start": 0.0, "stop": 80e-3, "n": 41}}},
    "fig3a": {"kind": "afc", "parameters": {}},
    "fig3b": {"kind": "sweep", "parameters": {}},
    "fig4": {"kind": "holeburn", "parameters": {
        "field_t": 6.6, "base_depth": 2.6,
        "comb": {"delta_hz": 7e6, "fineness": 3.5},
        "pump": {"sweep_span_hz": 60e6, "peak_rate_per_s": 5e4, "homogeneous_fwhm_hz": 0.5e6},
        "grid": {"half_span_hz": 40e6, "step_hz": 0.05e6}}},
}


def preset_names():
    return sorted(PRESETS)


def preset_config(name):
    """Full config for a named preset."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    raw = {"schema_version": SCHEMA_VERSION, "seed": 0, "name": name}
    raw.update(copy.deepcopy(PRESETS[name]))
    return validate_config(raw)


# ------------------------------------------------------------------ runner

def default_output_dir(name):
    return Path(os.environ.get(OUTPUT_ENV, "afcsim-out")) / name


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions():
    return {"afcsim": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def execute(cfg, output_dir):
    """Run a validated config; files appear in ``output_dir`` only on success.

    Outputs are written to a staging directory, moved into place, and
    ``manifest.json`` is written last.
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg["seed"])
    stage = Path(tempfile.mkdtemp(prefix=".stage-", dir=output_dir))
    try:
        runner = RUNNERS[cfg["kind"]]
        if cfg["kind"] == "fit":
            runner(cfg["parameters"], stage, rng, cfg.get("_base_dir", "."))
        else:
            runner(cfg["parameters"], stage, rng)
        outputs = []
        for f in sorted(stage.iterdir()):
            outputs.append({"path": f.name, "sha256": _sha256(f), "bytes": f.stat().st_size})
        for f in sorted(stage.iterdir()):
            os.replace(f, output_dir / f.name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    echo = {k: v for k, v in cfg.items() if not k.startswith("_") and k != "output_dir"}
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "kind": cfg["kind"],
        "seed": cfg["seed"],
        "config": echo,
        "versions": versions(),
        "outputs": outputs,
    }
    _io.write_json(output_dir / "manifest.json", manifest)
    return manifest
