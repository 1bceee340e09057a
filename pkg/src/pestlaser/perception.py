"""Stochastic detector stand-in plus track maintenance.

Replaces the neural detector with a per-species accuracy/latency model:
each pest carries a persistent appearance draw, and is reported whenever
that draw is below p_detect_ref * exp(-lambda * max(0, z - z_ref)). False
positives appear at a configured rate with uniform random positions.
Emission is throttled to throughput_cap detections in any sliding 1 s
window. Tracks are gated nearest-neighbour on the estimated 3-D position
and revisited at 3 Hz.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput
from .geometry import PixelObservation, Point3, StereoRig, point3
from .world import WorldState, platform_position


@dataclass(frozen=True)
class PerceptionParams:
    z_ref_m: float = 1.0
    falloff_lambda_per_m: float = 0.25
    throughput_cap_per_s: float = 10.0
    revisit_period_s: float = 1.0 / 3.0
    gate_radius_m: float = 0.010
    lost_after_periods: float = 3.0
    fp_rate_per_s: float = 0.0

    def __post_init__(self):
        if self.throughput_cap_per_s <= 0 or self.revisit_period_s <= 0:
            raise InvalidInput("throughput cap and revisit period must be positive")


@dataclass
class Detection:
    t_captured_s: float
    t_available_s: float
    obs: PixelObservation
    species_label: str
    truth_link: int | None  # pest id; None = false positive
    est_position_cam: Point3
    est_position_world: Point3


@dataclass
class Track:
    id: int
    state: str  # pending -> engaged -> {neutralized, lost}; pending -> lost
    species_label: str
    truth_link: int | None
    est_world: Point3
    t_created: float
    t_last_seen: float
    last_detection: Detection


@dataclass
class PerceptionState:
    tracks: dict[int, Track] = field(default_factory=dict)
    next_track_id: int = 0
    inflight: list[Detection] = field(default_factory=list)
    emit_times: deque = field(default_factory=deque)

    def pending_tracks(self):
        return [tr for tr in self.tracks.values() if tr.state == "pending"]


def detect_probability(params: PerceptionParams, p_ref, z_m):
    """p_ref * exp(-lambda * max(0, z - z_ref)); nonincreasing in z."""
    excess = np.maximum(0.0, np.asarray(z_m, dtype=np.float64) - params.z_ref_m)
    return np.asarray(p_ref) * np.exp(-params.falloff_lambda_per_m * excess)


def _make_detection(world, rig, t, u, v, disp, label, truth):
    # Estimated position goes through the same pixel round trip the device
    # would use, so est == back_project(obs, stereo_depth(disparity)).
    z_est = rig.focal_px * rig.baseline_m / disp
    cx, cy = rig.principal_point
    est_cam = point3((u - cx) * z_est / rig.focal_px,
                     (v - cy) * z_est / rig.focal_px, z_est)
    latency = world.species[world.species_idx[truth]].detect_latency_ms * 1e-3 \
        if truth is not None else world.species[0].detect_latency_ms * 1e-3
    est_world = est_cam + platform_position(t, world.cfg.rail)
    return Detection(
        t_captured_s=t,
        t_available_s=t + latency,
        obs=PixelObservation(u=float(u), v=float(v), disparity_px=float(disp)),
        species_label=label,
        truth_link=truth,
        est_position_cam=est_cam,
        est_position_world=est_world,
    )


def sense(world: WorldState, rig: StereoRig, params: PerceptionParams,
          t: float) -> list[Detection]:
    """One perception tick: emit capped, latency-tagged detections.

    Emission order is pest id, then false positives; excess beyond the
    sliding-window budget is dropped newest-first and logged.
    """
    cam = world.pos - platform_position(t, world.cfg.rail)[None, :]
    z = cam[:, 2]
    cx, cy = rig.principal_point
    f = rig.focal_px
    with np.errstate(divide="ignore", invalid="ignore"):
        u = cx + f * cam[:, 0] / z
        v = cy + f * cam[:, 1] / z
    visible = world.alive & (z > 1e-6) & (u >= 0) & (u < rig.image_w) \
        & (v >= 0) & (v < rig.image_h)
    p_ref = np.array([world.species[i].p_detect_ref for i in world.species_idx])
    p = detect_probability(params, p_ref, z)
    hit = visible & (world.detectability < p)
    candidates = []
    for i in np.nonzero(hit)[0]:
        sp = world.species[world.species_idx[i]]
        disp = f * rig.baseline_m / z[i]
        candidates.append(_make_detection(world, rig, t, u[i], v[i], disp,
                                          sp.name, int(i)))
    # False positives: uniform positions in the arena at crop depth.
    if params.fp_rate_per_s > 0:
        n_fp = world.rng.poisson(params.fp_rate_per_s * params.revisit_period_s)
        for _ in range(n_fp):
            wcfg = world.cfg
            fx = wcfg.arena_cx_m + world.rng.uniform(-0.5, 0.5) * wcfg.arena_w_m
            fy = wcfg.arena_cy_m + world.rng.uniform(-0.5, 0.5) * wcfg.arena_h_m
            pc = point3(fx, fy, wcfg.crop_distance_m) - platform_position(t, wcfg.rail)
            if pc[2] <= 1e-6:
                continue
            fu = cx + f * pc[0] / pc[2]
            fv = cy + f * pc[1] / pc[2]
            if not (0 <= fu < rig.image_w and 0 <= fv < rig.image_h):
                continue
            disp = f * rig.baseline_m / pc[2]
            label = world.species[0].name if world.species else "unknown"
            candidates.append(_make_detection(world, rig, t, fu, fv, disp,
                                              label, None))
    return candidates


def throttle(pstate: PerceptionState, params: PerceptionParams,
             detections: list[Detection], t: float,
             event_log: list | None = None) -> list[Detection]:
    """Enforce the sliding 1 s emission budget; drop the newest extras."""
    while pstate.emit_times and pstate.emit_times[0] <= t - 1.0 + 1e-9:
        pstate.emit_times.popleft()
    budget = int(params.throughput_cap_per_s + 1e-9) - len(pstate.emit_times)
    budget = max(budget, 0)
    kept = detections[:budget]
    dropped = detections[budget:]
    for _ in kept:
        pstate.emit_times.append(t)
    if dropped and event_log is not None:
        event_log.append({"t": t, "kind": "detections_dropped", "n": len(dropped)})
    return kept


def track_update(pstate: PerceptionState, params: PerceptionParams,
                 detections: list[Detection], t: float) -> None:
    """Gate detections onto tracks; open, refresh, and expire as needed."""
    active = [tr for tr in pstate.tracks.values()
              if tr.state in ("pending", "engaged")]
    # Greedy one-to-one nearest-neighbour assignment within the gate.
    pairs = []
    for di, det in enumerate(detections):
        for tr in active:
            d = float(np.linalg.norm(det.est_position_world - tr.est_world))
            if d <= params.gate_radius_m:
                pairs.append((d, di, tr.id))
    pairs.sort()
    used_det: set[int] = set()
    used_trk: set[int] = set()
    for d, di, tid in pairs:
        if di in used_det or tid in used_trk:
            continue
        used_det.add(di)
        used_trk.add(tid)
        tr = pstate.tracks[tid]
        tr.est_world = detections[di].est_position_world
        tr.t_last_seen = t
        tr.last_detection = detections[di]
    for di, det in enumerate(detections):
        if di not in used_det:
            tr = Track(
                id=pstate.next_track_id,
                state="pending",
                species_label=det.species_label,
                truth_link=det.truth_link,
                est_world=det.est_position_world,
                t_created=t,
                t_last_seen=t,
                last_detection=det,
            )
            pstate.next_track_id += 1
            pstate.tracks[tr.id] = tr
            active.append(tr)
    horizon = params.lost_after_periods * params.revisit_period_s
    for tr in pstate.tracks.values():
        if tr.state == "pending" and t - tr.t_last_seen > horizon + 1e-9:
            tr.state = "lost"
