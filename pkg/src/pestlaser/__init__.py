"""Desk-scale simulator of a galvo-steered laser pest-neutralization device."""

from .config import SimConfig, default_config, default_config_text, parse_config
from .engage import LaserSpec, engagement_loop, fire, kill_energy_j, kill_time_ms, select_target
from .galvo import (
    GalvoRig,
    GalvoState,
    MirrorPlane,
    Ray,
    command_mirrors,
    dac_decode,
    dac_encode,
    plane_intersect,
    reflect,
    solve_angles,
    trace_beam,
)
from .geometry import PixelObservation, Point3, StereoRig, back_project, point3, project, stereo_depth
from .harness import (
    TrialResult,
    emit_chart,
    emit_csv,
    run_trial,
    summarize,
    sweep_distance,
    sweep_speed,
)
from .perception import Detection, PerceptionParams, PerceptionState, Track, sense, track_update
from .world import (
    PlatformRail,
    Species,
    WorldConfig,
    WorldState,
    advance,
    platform_position,
    spawn_scenario,
    step,
)

__version__ = "0.1.0"
