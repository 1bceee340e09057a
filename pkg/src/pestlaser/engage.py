"""Engagement pipeline: pick a track, aim, dwell, deposit energy, score.

One laser, strictly sequential: sense at 3 Hz -> update tracks -> select the
cheapest slew (starved tracks first) -> wait the fire latency -> hold the
beam for the species dwell. Energy lands on the pest whenever its centre is
within spot radius + pest radius of the beam axis at the crop plane; a pest
dies once absorbed energy reaches the mass-proportional kill threshold
anchored at 2 g / 5 W / 25 ms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BeamParallelToMirror,
    CropDamageRisk,
    InvalidInput,
    InvalidPower,
    MissedMirror,
    NoConvergence,
    NoForwardIntersection,
    OutOfWorkspace,
)
from .galvo import GalvoRig, GalvoState, command_mirrors, solve_angles, trace_beam
from .geometry import Point3, StereoRig
from .perception import PerceptionParams, PerceptionState, Track, sense, throttle, track_update
from .world import WorldState, advance, platform_position


@dataclass(frozen=True)
class LaserSpec:
    power_w: float = 5.0
    wavelength_nm: float = 450.0
    spot_diameter_mm: float = 2.0
    kill_ref_mass_g: float = 2.0
    kill_ref_time_ms: float = 25.0
    kill_ref_power_w: float = 5.0
    max_safe_power_w: float = 15.0  # exclusive: at/above this the crop burns
    fire_latency_ms: float = 30.0
    pest_radius_mm: float = 2.0

    def __post_init__(self):
        if self.power_w <= 0:
            raise InvalidPower(f"power {self.power_w} W")
        if self.power_w >= self.max_safe_power_w:
            raise CropDamageRisk(
                f"{self.power_w} W >= {self.max_safe_power_w} W burns the plant")
        if self.spot_diameter_mm <= 0:
            raise InvalidInput("spot diameter must be positive")

    @property
    def hit_radius_m(self) -> float:
        return (self.spot_diameter_mm / 2.0 + self.pest_radius_mm) * 1e-3


def kill_energy_j(mass_g: float, spec: LaserSpec) -> float:
    """Energy threshold, linear in mass, anchored at (2 g, 5 W, 25 ms)."""
    if mass_g <= 0:
        raise InvalidInput(f"mass {mass_g} g")
    return spec.kill_ref_power_w * (spec.kill_ref_time_ms * 1e-3) \
        * mass_g / spec.kill_ref_mass_g


def kill_time_ms(mass_g: float, power_w: float, spec: LaserSpec) -> float:
    """Milliseconds of continuous on-target dwell needed at power_w."""
    if power_w <= 0:
        raise InvalidPower(f"power {power_w} W")
    if power_w >= spec.max_safe_power_w:
        raise CropDamageRisk(
            f"{power_w} W >= {spec.max_safe_power_w} W burns the plant")
    return kill_energy_j(mass_g, spec) / power_w * 1e3


@dataclass
class EngagementRecord:
    track_id: int
    truth_link: int | None
    t_selected: float
    t_aimed: float
    t_fire_start: float
    t_fire_end: float
    aim_point_world: Point3
    hit: bool
    outcome: str  # neutralized | survived | missed
    deposited_j: float
    wasted_j: float


def select_target(pstate: PerceptionState, gstate: GalvoState, rig: GalvoRig,
                  platform_pos: np.ndarray, t: float,
                  starvation_age_s: float = 2.0) -> Track | None:
    """Cheapest-slew pending track; starved tracks (oldest first) pre-empt."""
    pending = pstate.pending_tracks()
    if not pending:
        return None
    starved = [tr for tr in pending if t - tr.t_created > starvation_age_s]
    if starved:
        return min(starved, key=lambda tr: (tr.t_created, tr.id))
    out = trace_beam(gstate, rig)

    def slew(tr: Track) -> float:
        to_target = tr.est_world - platform_pos - out.origin
        norm = float(np.linalg.norm(to_target))
        if norm <= 0:
            return 0.0
        c = float(np.dot(to_target / norm, out.dir))
        return math.acos(min(1.0, max(-1.0, c)))

    return min(pending, key=lambda tr: (slew(tr), tr.id))


def _dwell_deposit(world: WorldState, pest_id: int, spot_dev_xy, laser: LaserSpec,
                   t_fire_start: float, dwell_s: float, dt_s: float):
    """Stepwise energy bookkeeping over the dwell.

    The beam is fixed in the device frame, so its crop-plane footprint moves
    with the platform; the pest keeps walking underneath it. Returns
    (deposited_j, hit_at_start, t_kill_or_None).
    """
    n = max(1, round(dwell_s / dt_s))
    tk = t_fire_start + dt_s * np.arange(n)
    plat = platform_position(tk, world.cfg.rail)
    beam_xy = spot_dev_xy[None, :] + plat[:, :2]
    p0 = world.pos[pest_id, :2]
    vel = world.heading[pest_id] * world.speed_m_s[pest_id]
    pest_xy = p0[None, :] + vel[None, :] * (tk - t_fire_start)[:, None]
    dist = np.linalg.norm(beam_xy - pest_xy, axis=1)
    within = dist < laser.hit_radius_m
    n_in = int(np.count_nonzero(within))
    deposited = laser.power_w * dt_s * n_in
    t_kill = None
    if n_in > 0:
        need = kill_energy_j(world.mass_g[pest_id], laser) - world.absorbed_j[pest_id]
        k_need = max(1, math.ceil(need / (laser.power_w * dt_s) - 1e-9))
        if n_in >= k_need:
            idx = np.nonzero(within)[0][k_need - 1]
            t_kill = float(tk[idx]) + dt_s
    return deposited, bool(within[0]), t_kill


def fire(track: Track, world: WorldState, gstate: GalvoState, grig: GalvoRig,
         laser: LaserSpec, t_selected: float, dwell_ms: float,
         dt_s: float) -> EngagementRecord:
    """Aim at the track's last estimated position and hold the dwell."""
    fire_latency = laser.fire_latency_ms * 1e-3
    dwell_s = dwell_ms * 1e-3
    t_fire_start = t_selected + fire_latency
    advance(world, t_fire_start)
    target_dev = track.est_world - platform_position(t_fire_start, world.cfg.rail)
    deposited = 0.0
    wasted = 0.0
    hit = False
    t_aimed = t_fire_start
    try:
        angles = solve_angles(target_dev, grig, gstate)
        t_aimed = command_mirrors(gstate, grig, angles, t_fire_start)
        t_fire_start = max(t_fire_start, t_aimed)
        beam = trace_beam(gstate, grig)
        if beam.dir[2] <= 1e-9:
            raise OutOfWorkspace("beam not toward the crop plane")
        s = (world.cfg.crop_distance_m - beam.origin[2]) / beam.dir[2]
        spot_dev_xy = (beam.origin + beam.dir * s)[:2]
        aimable = True
    except (OutOfWorkspace, NoConvergence, MissedMirror, BeamParallelToMirror,
            NoForwardIntersection) as exc:
        world.event_log.append({"t": t_selected, "kind": "aim_failed",
                                "track": track.id, "reason": str(exc)})
        aimable = False
    t_fire_end = t_fire_start + dwell_s
    if aimable and track.truth_link is not None and world.alive[track.truth_link]:
        deposited, hit, t_kill = _dwell_deposit(
            world, track.truth_link, spot_dev_xy, laser, t_fire_start, dwell_s, dt_s)
        world.absorbed_j[track.truth_link] += deposited
        wasted = laser.power_w * dwell_s - deposited
        need = kill_energy_j(world.mass_g[track.truth_link], laser)
        if world.absorbed_j[track.truth_link] >= need - 1e-12:
            world.neutralize(track.truth_link, t_kill if t_kill else t_fire_end)
            outcome = "neutralized"
            track.state = "neutralized"
        else:
            outcome = "survived" if deposited > 0 else "missed"
            track.state = "lost"
    else:
        # False positive or unaimable: the whole dwell goes into foliage.
        wasted = laser.power_w * dwell_s if aimable else 0.0
        outcome = "missed"
        track.state = "lost"
    advance(world, t_fire_end)
    rec = EngagementRecord(
        track_id=track.id,
        truth_link=track.truth_link,
        t_selected=t_selected,
        t_aimed=t_aimed,
        t_fire_start=t_fire_start,
        t_fire_end=t_fire_end,
        aim_point_world=track.est_world.copy(),
        hit=hit,
        outcome=outcome,
        deposited_j=deposited,
        wasted_j=wasted,
    )
    world.event_log.append({
        "t": t_selected, "kind": "engagement", "track": track.id,
        "pest": track.truth_link, "t_aimed": t_aimed,
        "t_fire_start": t_fire_start, "t_fire_end": t_fire_end,
        "hit": hit, "outcome": outcome,
        "deposited_j": deposited, "wasted_j": wasted,
    })
    return rec


def engagement_loop(world: WorldState, rig: StereoRig, params: PerceptionParams,
                    gstate: GalvoState, grig: GalvoRig, laser: LaserSpec,
                    duration_s: float, starvation_age_s: float = 2.0,
                    pstate: PerceptionState | None = None) -> PerceptionState:
    """Run the full sense -> track -> select -> fire cycle until sim end."""
    if pstate is None:
        pstate = PerceptionState()
    dt = world.cfg.timestep_s
    dwell_by_species = {sp.name: sp.dwell_ms for sp in world.species}
    default_dwell = world.species[0].dwell_ms if world.species else 50.0
    rev = params.revisit_period_s
    n_ticks = int(math.floor(duration_s / rev + 1e-9))
    laser_free = 0.0
    for k in range(n_ticks):
        t = k * rev
        advance(world, t)
        cands = sense(world, rig, params, t)
        emitted = throttle(pstate, params, cands, t, world.event_log)
        for det in emitted:
            world.event_log.append({
                "t": t, "kind": "detection", "pest": det.truth_link,
                "species": det.species_label,
                "t_available": det.t_available_s,
            })
        pstate.inflight.extend(emitted)
        ready = [d for d in pstate.inflight if d.t_available_s <= t + 1e-12]
        pstate.inflight = [d for d in pstate.inflight if d.t_available_s > t + 1e-12]
        track_update(pstate, params, ready, t)
        next_tick = (k + 1) * rev
        t_cursor = max(t, laser_free)
        while t_cursor < min(next_tick, duration_s) - 1e-12:
            advance(world, t_cursor)
            track = select_target(pstate, gstate, grig,
                                  platform_position(t_cursor, world.cfg.rail),
                                  t_cursor, starvation_age_s)
            if track is None:
                break
            if track.truth_link is not None and not world.alive[track.truth_link]:
                track.state = "lost"  # pest died under another track
                continue
            track.state = "engaged"
            dwell = dwell_by_species.get(track.species_label, default_dwell)
            rec = fire(track, world, gstate, grig, laser, t_cursor, dwell, dt)
            laser_free = rec.t_fire_end
            t_cursor = laser_free
    advance(world, duration_s)
    return pstate
