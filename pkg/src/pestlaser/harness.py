"""Experiment runner: single trials, the distance and platform-speed sweeps,
summary statistics, CSV and chart emission.

Sweeps replicate the bench protocol: pests ("imitation figures", static by
default) scattered at random per trial, N trials per sweep point, results
averaged. Trials are deterministic per (config, seed) and may run across a
process pool; rows are merged in sorted (point, trial) order so the CSV is
byte-identical regardless of worker count.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import SPECIES_SECTIONS, SimConfig
from .engage import LaserSpec, engagement_loop
from .errors import EmptyResults, EmptyScenario, InvalidConfig, IoError
from .galvo import GalvoRig, GalvoState, MirrorPlane, Ray
from .geometry import StereoRig, point3
from .perception import PerceptionParams
from .world import PlatformRail, Species, WorldConfig, spawn_scenario

CSV_HEADER = ("point,trial,seed,n_pests,detected_true,detected_false,"
              "neutralized,efficiency,neutralized_per_s")


@dataclass
class TrialResult:
    point: float
    trial: int
    seed: int
    n_pests: int
    detected_true: int
    detected_false: int
    neutralized: int
    efficiency: float
    neutralized_per_s: float
    wall_runtime_s: float = 0.0
    event_log: list = field(default_factory=list, repr=False)


def derive_seed(base_seed: int, point_index: int, trial_index: int) -> int:
    """Stable per-trial seed; independent of execution order and worker count."""
    ss = np.random.SeedSequence([int(base_seed), point_index, trial_index])
    return int(ss.generate_state(1, np.uint64)[0])


# -- config -> domain objects -------------------------------------------------

def build_rig(cfg: SimConfig) -> StereoRig:
    g = cfg.get
    return StereoRig(
        focal_px=g("rig", "focal_px"),
        baseline_m=g("rig", "baseline_m"),
        image_w=g("rig", "image_w"),
        image_h=g("rig", "image_h"),
        principal_point=(g("rig", "cx"), g("rig", "cy")),
    )


def build_species(cfg: SimConfig) -> list[tuple[Species, int]]:
    out = []
    for sec in SPECIES_SECTIONS:
        g = lambda k: cfg.get(sec, k)
        sp = Species(
            name=sec.split(".", 1)[1],
            mass_g=g("mass_g"),
            speed_mm_s=g("speed_mm_s"),
            detect_latency_ms=g("detect_latency_ms"),
            p_detect_ref=g("p_detect_ref"),
            dwell_ms=g("dwell_ms"),
            fp_per_100=g("fp_per_100"),
            jump_rate_per_s=g("jump_rate_per_s"),
            jump_dist_mm=g("jump_dist_mm"),
        )
        out.append((sp, g("count")))
    return [(sp, c) for sp, c in out if c > 0]


def build_world_config(cfg: SimConfig) -> WorldConfig:
    g = cfg.get
    rail = PlatformRail(speed_mm_s=g("rail", "speed_mm_s"),
                        spacing_m=g("rail", "spacing_m"))
    d = g("arena", "crop_distance_m")
    rig = build_rig(cfg)
    moving = rail.speed_mm_s > 0
    span = rail.length_m if moving else 0.0
    # "auto" arena: the camera's footprint on the crop plane (with margin),
    # widened along the rail by the platform's travel when it moves.
    w = g("arena", "width_m")
    if w == "auto":
        w = g("arena", "fov_margin") * (rig.image_w / rig.focal_px) * d + span
    h = g("arena", "height_m")
    if h == "auto":
        h = g("arena", "fov_margin") * (rig.image_h / rig.focal_px) * d
    return WorldConfig(
        species_counts=build_species(cfg),
        arena_w_m=w,
        arena_h_m=h,
        arena_cx_m=span / 2.0,
        arena_cy_m=0.0,
        crop_distance_m=d,
        heading_resample_s=g("sim", "heading_resample_s"),
        timestep_s=g("sim", "timestep_s"),
        rail=rail,
    )


def build_galvo(cfg: SimConfig) -> tuple[GalvoRig, GalvoState]:
    g = cfg.get
    amax = g("galvo", "angle_max_rad")
    sq2 = math.sqrt(0.5)
    grig = GalvoRig(
        mirror1=MirrorPlane(
            pivot=point3(0.0, 0.0, 0.0),
            rotation_axis=point3(0.0, 0.0, 1.0),
            rest_normal=point3(sq2, -sq2, 0.0),
            angle_range=(-amax, amax),
        ),
        mirror2=MirrorPlane(
            pivot=point3(g("galvo", "mirror_separation_m"), 0.0, 0.0),
            rotation_axis=point3(0.0, 1.0, 0.0),
            rest_normal=point3(-sq2, 0.0, sq2),
            angle_range=(-amax, amax),
        ),
        source=Ray(origin=point3(0.0, -0.05, 0.0), dir=point3(0.0, 1.0, 0.0)),
        mirror_radius_m=g("galvo", "mirror_radius_m"),
    )
    gstate = GalvoState(
        min_command_period=g("galvo", "min_command_period_s"),
        dac_bits=g("galvo", "dac_bits"),
        calibration_offset=(g("galvo", "calibration_offset1_rad"),
                            g("galvo", "calibration_offset2_rad")),
    )
    return grig, gstate


def build_laser(cfg: SimConfig) -> LaserSpec:
    g = cfg.get
    return LaserSpec(
        power_w=g("laser", "power_w"),
        wavelength_nm=g("laser", "wavelength_nm"),
        spot_diameter_mm=g("laser", "spot_diameter_mm"),
        kill_ref_mass_g=g("laser", "kill_ref_mass_g"),
        kill_ref_time_ms=g("laser", "kill_ref_time_ms"),
        kill_ref_power_w=g("laser", "kill_ref_power_w"),
        max_safe_power_w=g("laser", "max_safe_power_w"),
        fire_latency_ms=g("laser", "fire_latency_ms"),
        pest_radius_mm=g("laser", "pest_radius_mm"),
    )


def build_perception(cfg: SimConfig) -> PerceptionParams:
    g = cfg.get
    duration = g("sim", "duration_s")
    fp_rate = sum(
        cfg.get(sec, "fp_per_100") / 100.0 * cfg.get(sec, "count")
        for sec in SPECIES_SECTIONS) / duration
    return PerceptionParams(
        z_ref_m=g("perception", "z_ref_m"),
        falloff_lambda_per_m=g("perception", "falloff_lambda_per_m"),
        throughput_cap_per_s=g("perception", "throughput_cap_per_s"),
        revisit_period_s=1.0 / g("perception", "revisit_rate_hz"),
        gate_radius_m=g("perception", "gate_radius_mm") * 1e-3,
        lost_after_periods=g("perception", "lost_after_periods"),
        fp_rate_per_s=fp_rate,
    )


# -- trials -------------------------------------------------------------------

def run_trial(cfg: SimConfig, seed: int, point: float | None = None,
              trial: int = 0, keep_log: bool = False) -> TrialResult:
    """One deterministic trial: spawn, run the engagement loop, score."""
    t_wall = time.perf_counter()
    wcfg = build_world_config(cfg)
    if not wcfg.species_counts:
        raise EmptyScenario("no pests configured; efficiency undefined")
    duration = cfg.get("sim", "duration_s")
    world = spawn_scenario(wcfg, seed)
    grig, gstate = build_galvo(cfg)
    engagement_loop(
        world, build_rig(cfg), build_perception(cfg), gstate, grig,
        build_laser(cfg), duration,
        starvation_age_s=cfg.get("engage", "starvation_age_s"))
    detected_true = {e["pest"] for e in world.event_log
                     if e["kind"] == "detection" and e["pest"] is not None}
    detected_false = sum(1 for e in world.event_log
                         if e["kind"] == "detection" and e["pest"] is None)
    neutralized = world.n_neutralized
    return TrialResult(
        point=point if point is not None else wcfg.crop_distance_m,
        trial=trial,
        seed=seed,
        n_pests=world.n,
        detected_true=len(detected_true),
        detected_false=detected_false,
        neutralized=neutralized,
        efficiency=neutralized / world.n,
        neutralized_per_s=neutralized / duration,
        wall_runtime_s=time.perf_counter() - t_wall,
        event_log=world.event_log if keep_log else [],
    )


def _trial_worker(args) -> TrialResult:
    values, seed, point, trial = args
    return run_trial(SimConfig(values), seed, point=point, trial=trial)


def _run_grid(jobs_list, jobs: int) -> list[TrialResult]:
    if jobs <= 1:
        results = [_trial_worker(a) for a in jobs_list]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_trial_worker, jobs_list, chunksize=4))
    return sorted(results, key=lambda r: (r.point, r.trial))


def _static_overrides(cfg: SimConfig) -> dict:
    if not cfg.get("sweep", "static_pests"):
        return {}
    return {(sec, "speed_mm_s"): 0.0 for sec in SPECIES_SECTIONS} | \
           {(sec, "jump_rate_per_s"): 0.0 for sec in SPECIES_SECTIONS}


def sweep_distance(cfg: SimConfig, jobs: int = 1) -> list[TrialResult]:
    """Efficiency vs camera-crop distance; N trials per distance."""
    distances = cfg.get("sweep", "distances_m")
    if not distances:
        raise InvalidConfig("empty distance list")
    trials = cfg.get("sweep", "distance_trials")
    base_seed = cfg.get("sim", "seed")
    work = []
    for pi, d in enumerate(distances):
        point_cfg = cfg.with_overrides(
            {("arena", "crop_distance_m"): float(d)} | _static_overrides(cfg))
        for ti in range(trials):
            work.append((point_cfg.values, derive_seed(base_seed, pi, ti),
                         float(d), ti))
    return _run_grid(work, jobs)


def sweep_speed(cfg: SimConfig, jobs: int = 1) -> list[TrialResult]:
    """Neutralization rate and efficiency vs platform speed at fixed distance.

    Uses a shorter trial and a saturating pest supply so the steady-state
    rate, not the pest budget, limits throughput.
    """
    speeds = cfg.get("sweep", "speeds_mm_s")
    if not speeds:
        raise InvalidConfig("empty speed list")
    trials = cfg.get("sweep", "speed_trials")
    base_seed = cfg.get("sim", "seed")
    work = []
    for pi, s in enumerate(speeds):
        point_cfg = cfg.with_overrides({
            ("rail", "speed_mm_s"): float(s),
            ("sim", "duration_s"): cfg.get("sweep", "speed_duration_s"),
            ("species.cabbage_caterpillar", "count"):
                cfg.get("sweep", "speed_pest_count"),
        } | _static_overrides(cfg))
        for ti in range(trials):
            # Offset the point index so distance/speed sweeps never share seeds.
            work.append((point_cfg.values, derive_seed(base_seed, 1000 + pi, ti),
                         float(s), ti))
    return _run_grid(work, jobs)


# -- aggregation & output -----------------------------------------------------

def summarize(results: list[TrialResult], value=lambda r: r.efficiency) -> list[dict]:
    """Per-point mean, sample sd, min, max and 95% normal CI."""
    if not results:
        raise EmptyResults("no results to summarize")
    points = sorted({r.point for r in results})
    out = []
    for p in points:
        vals = np.array([value(r) for r in results if r.point == p])
        mean = float(np.mean(vals))
        sd = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        half = 1.96 * sd / math.sqrt(len(vals))
        out.append({
            "point": p, "n": len(vals), "mean": mean, "sd": sd,
            "min": float(np.min(vals)), "max": float(np.max(vals)),
            "ci95_lo": mean - half, "ci95_hi": mean + half,
        })
    return out


def format_csv(results: list[TrialResult]) -> str:
    if not results:
        raise EmptyResults("no results to write")
    lines = [CSV_HEADER]
    for r in sorted(results, key=lambda r: (r.point, r.trial)):
        lines.append(",".join([
            repr(float(r.point)), str(r.trial), str(r.seed), str(r.n_pests),
            str(r.detected_true), str(r.detected_false), str(r.neutralized),
            repr(float(r.efficiency)), repr(float(r.neutralized_per_s)),
        ]))
    return "\n".join(lines) + "\n"


def emit_csv(results: list[TrialResult], destination) -> None:
    text = format_csv(results)
    try:
        if hasattr(destination, "write"):
            destination.write(text)
        else:
            with open(destination, "w") as fh:
                fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {destination}: {exc}") from exc


def emit_chart(summary: list[dict], destination, xlabel: str,
               ylabel: str = "neutralization efficiency (0-1)",
               title: str = "") -> None:
    """Mean +/- sd vs sweep point as a self-contained SVG."""
    if not summary:
        raise EmptyResults("no summary rows to plot")
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs = [row["point"] for row in summary]
    ys = [row["mean"] for row in summary]
    es = [row["sd"] for row in summary]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(xs, ys, yerr=es, marker="o", capsize=3)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    try:
        fig.savefig(destination, format="svg")
    except OSError as exc:
        raise IoError(f"cannot write {destination}: {exc}") from exc
    finally:
        plt.close(fig)


def dump_event_log(result: TrialResult, destination) -> None:
    """Newline-delimited JSON: one meta record, then one record per event."""
    try:
        with open(destination, "w") as fh:
            meta = {"kind": "meta", "n_pests": result.n_pests,
                    "seed": result.seed, "point": result.point}
            fh.write(json.dumps(meta) + "\n")
            for e in result.event_log:
                fh.write(json.dumps(e) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {destination}: {exc}") from exc


def score_event_log(path) -> dict:
    """Recompute Table-style counts from a saved event log."""
    n_pests = None
    detected_true = set()
    detected_false = 0
    neutralized = 0
    engagements = 0
    try:
        with open(path) as fh:
            for line in fh:
                e = json.loads(line)
                k = e.get("kind")
                if k == "meta":
                    n_pests = e.get("n_pests")
                elif k == "detection":
                    if e.get("pest") is None:
                        detected_false += 1
                    else:
                        detected_true.add(e["pest"])
                elif k == "neutralized":
                    neutralized += 1
                elif k == "engagement":
                    engagements += 1
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    out = {
        "n_pests": n_pests,
        "detected_true": len(detected_true),
        "detected_false": detected_false,
        "engagements": engagements,
        "neutralized": neutralized,
    }
    if n_pests:
        out["efficiency"] = neutralized / n_pests
    return out
