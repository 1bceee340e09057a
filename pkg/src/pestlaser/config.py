"""Sectioned key = value configuration: schema, parser, canonical printer.

Format:

    # comment
    [section]            or  [species.<name>]
    key = value          # floats, ints, bools, comma lists

Unknown sections or keys are rejected with their line/column; constraint
violations raise ValidationError naming the offending key. The canonical
printer and the parser are exact inverses, so print -> parse -> reprint is
a fixpoint.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

from .errors import ParseError, ValidationError

# (type, default) per section.key. Types: float, int, bool, floatlist, autofloat
# (either a float or the literal "auto").
SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "sim": {
        "seed": ("int", 0),
        "duration_s": ("float", 60.0),
        "timestep_s": ("float", 0.001),
        "heading_resample_s": ("float", 5.0),
        "trials": ("int", 1),
    },
    "arena": {
        "width_m": ("autofloat", "auto"),
        "height_m": ("autofloat", "auto"),
        "crop_distance_m": ("float", 1.0),
        "fov_margin": ("float", 0.95),
    },
    "rig": {
        "focal_px": ("float", 500.0),
        "baseline_m": ("float", 0.1),
        "image_w": ("int", 400),
        "image_h": ("int", 400),
        "cx": ("float", 200.0),
        "cy": ("float", 200.0),
    },
    "galvo": {
        "angle_max_rad": ("float", 0.35),
        "dac_bits": ("int", 12),
        "min_command_period_s": ("float", 5e-05),
        "mirror_separation_m": ("float", 0.02),
        "mirror_radius_m": ("float", 0.01),
        "calibration_offset1_rad": ("float", 0.0),
        "calibration_offset2_rad": ("float", 0.0),
    },
    "laser": {
        "power_w": ("float", 5.0),
        "wavelength_nm": ("float", 450.0),
        "spot_diameter_mm": ("float", 2.0),
        "max_safe_power_w": ("float", 15.0),
        "kill_ref_mass_g": ("float", 2.0),
        "kill_ref_time_ms": ("float", 25.0),
        "kill_ref_power_w": ("float", 5.0),
        "fire_latency_ms": ("float", 30.0),
        "pest_radius_mm": ("float", 2.0),
    },
    "perception": {
        "z_ref_m": ("float", 1.0),
        "falloff_lambda_per_m": ("float", 0.25),
        "throughput_cap_per_s": ("float", 10.0),
        "revisit_rate_hz": ("float", 3.0),
        "lost_after_periods": ("float", 3.0),
        "gate_radius_mm": ("float", 10.0),
    },
    "engage": {
        "starvation_age_s": ("float", 2.0),
    },
    "rail": {
        "speed_mm_s": ("float", 0.0),
        "spacing_m": ("float", 0.3),
    },
    "species.cabbage_caterpillar": {
        "count": ("int", 100),
        "mass_g": ("float", 2.0),
        "speed_mm_s": ("float", 3.0),
        "detect_latency_ms": ("float", 300.0),
        "p_detect_ref": ("float", 0.8),
        "fp_per_100": ("float", 10.0),
        "dwell_ms": ("float", 50.0),
        "jump_rate_per_s": ("float", 0.0),
        "jump_dist_mm": ("float", 0.0),
    },
    "species.aphid": {
        "count": ("int", 0),
        "mass_g": ("float", 0.01),
        "speed_mm_s": ("float", 0.5),
        "detect_latency_ms": ("float", 350.0),
        "p_detect_ref": ("float", 0.375),
        "fp_per_100": ("float", 33.3),
        "dwell_ms": ("float", 50.0),
        "jump_rate_per_s": ("float", 0.0),
        "jump_dist_mm": ("float", 0.0),
    },
    "species.grasshopper": {
        "count": ("int", 0),
        "mass_g": ("float", 0.8),
        "speed_mm_s": ("float", 10.0),
        "detect_latency_ms": ("float", 250.0),
        "p_detect_ref": ("float", 0.25),
        "fp_per_100": ("float", 0.0),
        "dwell_ms": ("float", 60.0),
        "jump_rate_per_s": ("float", 0.2),
        "jump_dist_mm": ("float", 50.0),
    },
    "sweep": {
        "distances_m": ("floatlist", [0.5, 1.0, 1.5, 2.0, 3.0, 5.0, 10.0]),
        "distance_trials": ("int", 25),
        "speeds_mm_s": ("floatlist", [0.0, 50.0, 100.0, 200.0, 400.0]),
        "speed_trials": ("int", 30),
        "speed_duration_s": ("float", 10.0),
        "speed_pest_count": ("int", 400),
        "static_pests": ("bool", True),
    },
}

SPECIES_SECTIONS = [s for s in SCHEMA if s.startswith("species.")]


@dataclass
class SimConfig:
    """Validated configuration; values[section][key]."""

    values: dict[str, dict[str, object]]

    def get(self, section: str, key: str):
        return self.values[section][key]

    def with_overrides(self, overrides: dict[tuple[str, str], object]) -> "SimConfig":
        vals = copy.deepcopy(self.values)
        for (sec, key), v in overrides.items():
            if sec not in vals or key not in vals[sec]:
                raise ValidationError(f"{sec}.{key}", "unknown override")
            vals[sec][key] = v
        cfg = SimConfig(vals)
        validate(cfg)
        return cfg


def default_values() -> dict[str, dict[str, object]]:
    return {sec: {k: copy.deepcopy(d) for k, (_t, d) in keys.items()}
            for sec, keys in SCHEMA.items()}


def default_config() -> SimConfig:
    return SimConfig(default_values())


def _fmt(typ: str, value) -> str:
    if typ == "bool":
        return "true" if value else "false"
    if typ == "floatlist":
        return ", ".join(repr(float(v)) for v in value)
    if typ == "autofloat" and value == "auto":
        return "auto"
    if typ in ("float", "autofloat"):
        return repr(float(value))
    return str(value)


def format_config(cfg: SimConfig) -> str:
    lines = ["# pestlaser configuration (canonical form)"]
    for sec, keys in SCHEMA.items():
        lines.append("")
        lines.append(f"[{sec}]")
        for k, (typ, _d) in keys.items():
            lines.append(f"{k} = {_fmt(typ, cfg.values[sec][k])}")
    return "\n".join(lines) + "\n"


def default_config_text() -> str:
    return format_config(default_config())


def _parse_value(typ: str, raw: str, line_no: int, col: int):
    raw = raw.strip()
    try:
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        if typ == "autofloat":
            return "auto" if raw == "auto" else float(raw)
        if typ == "bool":
            if raw.lower() in ("true", "yes", "1"):
                return True
            if raw.lower() in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        if typ == "floatlist":
            if not raw:
                return []
            return [float(p.strip()) for p in raw.split(",")]
    except ValueError:
        raise ParseError(f"bad {typ} value {raw!r}", line_no, col) from None
    raise ParseError(f"unknown value type {typ}", line_no, col)


def parse_config(text: str) -> SimConfig:
    values = default_values()
    section = None
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        col = len(line) - len(line.lstrip()) + 1
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ParseError("unterminated section header", line_no, col)
            name = stripped[1:-1].strip()
            if name not in SCHEMA:
                raise ParseError(f"unknown section [{name}]", line_no, col)
            section = name
            continue
        if "=" not in stripped:
            raise ParseError(f"expected 'key = value', got {stripped!r}", line_no, col)
        if section is None:
            raise ParseError("key before any [section]", line_no, col)
        key, _eq, rawval = stripped.partition("=")
        key = key.strip()
        if key not in SCHEMA[section]:
            raise ParseError(f"unknown key {key!r} in [{section}]", line_no, col)
        typ = SCHEMA[section][key][0]
        vcol = col + len(line.strip().split("=", 1)[0]) + 1
        values[section][key] = _parse_value(typ, rawval, line_no, vcol)
    cfg = SimConfig(values)
    validate(cfg)
    return cfg


def _require(cond: bool, key: str, msg: str):
    if not cond:
        raise ValidationError(key, msg)


def validate(cfg: SimConfig):
    g = cfg.get
    _require(g("sim", "duration_s") > 0, "sim.duration_s", "must be positive")
    _require(g("sim", "timestep_s") > 0, "sim.timestep_s", "must be positive")
    _require(g("sim", "trials") >= 1, "sim.trials", "must be >= 1")
    for k in ("width_m", "height_m"):
        v = g("arena", k)
        _require(v == "auto" or v > 0, f"arena.{k}", "must be positive or auto")
    _require(g("arena", "crop_distance_m") > 0, "arena.crop_distance_m", "must be positive")
    _require(0 < g("arena", "fov_margin") <= 1, "arena.fov_margin", "must be in (0, 1]")
    _require(g("rig", "focal_px") > 0, "rig.focal_px", "must be positive")
    _require(g("rig", "baseline_m") > 0, "rig.baseline_m", "must be positive")
    _require(g("rig", "image_w") > 0 and g("rig", "image_h") > 0,
             "rig.image_w", "image size must be positive")
    _require(0 <= g("rig", "cx") <= g("rig", "image_w"), "rig.cx", "outside sensor")
    _require(0 <= g("rig", "cy") <= g("rig", "image_h"), "rig.cy", "outside sensor")
    _require(8 <= g("galvo", "dac_bits") <= 16, "galvo.dac_bits", "must be in [8, 16]")
    _require(g("galvo", "min_command_period_s") > 0,
             "galvo.min_command_period_s", "must be positive")
    _require(g("galvo", "angle_max_rad") > 0, "galvo.angle_max_rad", "must be positive")
    _require(g("laser", "power_w") > 0, "laser.power_w", "must be positive")
    _require(
        g("laser", "power_w") < g("laser", "max_safe_power_w"),
        "laser.power_w",
        f"must stay below the crop-damage bound of "
        f"{g('laser', 'max_safe_power_w')} W (exclusive)")
    _require(g("laser", "spot_diameter_mm") > 0, "laser.spot_diameter_mm", "must be positive")
    _require(g("perception", "throughput_cap_per_s") > 0,
             "perception.throughput_cap_per_s", "must be positive")
    _require(g("perception", "revisit_rate_hz") > 0,
             "perception.revisit_rate_hz", "must be positive")
    _require(g("rail", "speed_mm_s") >= 0, "rail.speed_mm_s", "must be >= 0")
    _require(g("rail", "spacing_m") > 0, "rail.spacing_m", "must be positive")
    for sec in SPECIES_SECTIONS:
        _require(g(sec, "count") >= 0, f"{sec}.count", "must be >= 0")
        _require(g(sec, "mass_g") > 0, f"{sec}.mass_g", "must be positive")
        _require(g(sec, "speed_mm_s") >= 0, f"{sec}.speed_mm_s", "must be >= 0")
        _require(0 <= g(sec, "p_detect_ref") <= 1,
                 f"{sec}.p_detect_ref", "must be in [0, 1]")
        _require(g(sec, "dwell_ms") > 0, f"{sec}.dwell_ms", "must be positive")
    _require(len(g("sweep", "distances_m")) > 0, "sweep.distances_m", "must be nonempty")
    _require(len(g("sweep", "speeds_mm_s")) > 0, "sweep.speeds_mm_s", "must be nonempty")
    _require(g("sweep", "distance_trials") >= 1, "sweep.distance_trials", "must be >= 1")
    _require(g("sweep", "speed_trials") >= 1, "sweep.speed_trials", "must be >= 1")
    _require(g("sweep", "speed_duration_s") > 0, "sweep.speed_duration_s", "must be positive")
