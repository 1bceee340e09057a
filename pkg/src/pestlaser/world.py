"""Fixed-timestep world: pest population, platform rail, global clock.

Pests do a constant-speed random-heading walk in the crop plane (headings
re-sampled on a fixed interval); jumping species additionally teleport by a
fixed hop at Poisson times. The laser platform ping-pongs along a 3-waypoint
rail. Everything is driven by one seeded generator, so a (config, seed)
pair reproduces the trajectory bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfig, InvalidInput, InvalidStep
from .geometry import Point3, point3


@dataclass(frozen=True)
class Species:
    name: str
    mass_g: float
    speed_mm_s: float
    detect_latency_ms: float
    p_detect_ref: float
    dwell_ms: float
    fp_per_100: float = 0.0
    jump_rate_per_s: float = 0.0
    jump_dist_mm: float = 0.0

    def __post_init__(self):
        if self.mass_g <= 0:
            raise InvalidInput(f"{self.name}: mass_g must be positive")
        if self.speed_mm_s < 0:
            raise InvalidInput(f"{self.name}: speed_mm_s must be >= 0")
        if not 0.0 <= self.p_detect_ref <= 1.0:
            raise InvalidInput(f"{self.name}: p_detect_ref outside [0, 1]")


@dataclass(frozen=True)
class PlatformRail:
    """3 waypoints spaced 300 mm; platform ping-pongs between the ends."""

    speed_mm_s: float = 0.0
    spacing_m: float = 0.300
    n_waypoints: int = 3
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    direction: tuple[float, float, float] = (1.0, 0.0, 0.0)

    def __post_init__(self):
        if self.speed_mm_s < 0:
            raise InvalidInput("rail speed must be >= 0")
        if self.spacing_m <= 0:
            raise InvalidInput("waypoint spacing must be positive")

    @property
    def length_m(self) -> float:
        return self.spacing_m * (self.n_waypoints - 1)


def platform_position(t_s, rail: PlatformRail):
    """Closed-form ping-pong position at time t (scalar or array)."""
    L = rail.length_m
    v = rail.speed_mm_s * 1e-3
    s = np.asarray(t_s, dtype=np.float64) * v
    folded = np.mod(s, 2.0 * L) if v > 0 else np.zeros_like(s)
    folded = np.where(folded > L, 2.0 * L - folded, folded)
    o = np.asarray(rail.origin)
    d = np.asarray(rail.direction)
    if np.ndim(t_s) == 0:
        return o + d * float(folded)
    return o[None, :] + d[None, :] * folded[..., None]


@dataclass
class WorldConfig:
    species_counts: list[tuple[Species, int]]
    arena_w_m: float
    arena_h_m: float
    arena_cx_m: float = 0.0
    arena_cy_m: float = 0.0
    crop_distance_m: float = 1.0
    heading_resample_s: float = 5.0
    timestep_s: float = 0.001
    rail: PlatformRail = field(default_factory=PlatformRail)


class WorldState:
    """Array-of-columns pest state plus the platform pose and clock."""

    def __init__(self, cfg: WorldConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.clock_s = 0.0
        self.event_log: list[dict] = []
        n = sum(c for _s, c in cfg.species_counts)
        self.n = n
        self.species: list[Species] = []
        sp_idx = []
        for i, (sp, count) in enumerate(cfg.species_counts):
            self.species.append(sp)
            sp_idx.extend([i] * count)
        self.species_idx = np.array(sp_idx, dtype=np.int64)
        self.speed_m_s = np.array(
            [self.species[i].speed_mm_s * 1e-3 for i in sp_idx])
        self.mass_g = np.array([self.species[i].mass_g for i in sp_idx])
        self.pos = np.zeros((n, 3))
        self.heading = np.zeros((n, 2))
        self.alive = np.ones(n, dtype=bool)
        self.absorbed_j = np.zeros(n)
        # Per-pest appearance draw: pest i is recognisable at detection
        # probability p iff detectability[i] < p. Persistent per trial, so a
        # hard-to-see pest stays missed instead of being re-rolled each tick.
        self.detectability = np.zeros(n)
        self.next_jump_s = np.full(n, np.inf)
        self.neutralized_at_s = np.full(n, np.nan)

    @property
    def n_alive(self) -> int:
        return int(np.count_nonzero(self.alive))

    @property
    def n_neutralized(self) -> int:
        return self.n - self.n_alive

    @property
    def platform_pos(self) -> Point3:
        return platform_position(self.clock_s, self.cfg.rail)

    def neutralize(self, pest_id: int, t_s: float):
        if self.alive[pest_id]:
            self.alive[pest_id] = False
            self.neutralized_at_s[pest_id] = t_s
            self.event_log.append(
                {"t": t_s, "kind": "neutralized", "pest": int(pest_id)})


def spawn_scenario(cfg: WorldConfig, seed) -> WorldState:
    """Place pests uniformly at random in the crop plane; deterministic per seed."""
    if cfg.arena_w_m <= 0 or cfg.arena_h_m <= 0:
        raise InvalidConfig("arena dimensions must be positive")
    if cfg.crop_distance_m <= 0:
        raise InvalidConfig("crop distance must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    w = WorldState(cfg, rng)
    n = w.n
    w.pos[:, 0] = cfg.arena_cx_m + rng.uniform(-0.5, 0.5, n) * cfg.arena_w_m
    w.pos[:, 1] = cfg.arena_cy_m + rng.uniform(-0.5, 0.5, n) * cfg.arena_h_m
    w.pos[:, 2] = cfg.crop_distance_m
    ang = rng.uniform(0.0, 2.0 * math.pi, n)
    w.heading[:, 0] = np.cos(ang)
    w.heading[:, 1] = np.sin(ang)
    w.detectability = rng.uniform(0.0, 1.0, n)
    for i in range(n):
        sp = w.species[w.species_idx[i]]
        if sp.jump_rate_per_s > 0:
            w.next_jump_s[i] = rng.exponential(1.0 / sp.jump_rate_per_s)
    return w


def _resample_headings(w: WorldState):
    alive = w.alive
    k = int(np.count_nonzero(alive))
    if k == 0:
        return
    ang = w.rng.uniform(0.0, 2.0 * math.pi, k)
    w.heading[alive, 0] = np.cos(ang)
    w.heading[alive, 1] = np.sin(ang)


def step(w: WorldState, dt_s: float | None = None):
    """Advance the world by one timestep (default from config).

    Alive pests move speed * dt along their heading; due jumps fire; the
    clock advances by exactly dt. Dead pests are frozen.
    """
    if dt_s is None:
        dt_s = w.cfg.timestep_s
    if dt_s <= 0:
        raise InvalidStep(f"dt = {dt_s}")
    t0 = w.clock_s
    t1 = t0 + dt_s
    alive = w.alive
    w.pos[alive, 0] += w.heading[alive, 0] * w.speed_m_s[alive] * dt_s
    w.pos[alive, 1] += w.heading[alive, 1] * w.speed_m_s[alive] * dt_s
    due = np.nonzero(alive & (w.next_jump_s <= t1))[0]
    for i in due:
        sp = w.species[w.species_idx[i]]
        ang = w.rng.uniform(0.0, 2.0 * math.pi)
        d = sp.jump_dist_mm * 1e-3
        w.pos[i, 0] += d * math.cos(ang)
        w.pos[i, 1] += d * math.sin(ang)
        w.next_jump_s[i] = t1 + w.rng.exponential(1.0 / sp.jump_rate_per_s)
    T = w.cfg.heading_resample_s
    if T > 0 and math.floor(t1 / T) > math.floor(t0 / T + 1e-12):
        _resample_headings(w)
    w.clock_s = t1


def advance(w: WorldState, t_target_s: float):
    """Advance to an absolute time, splitting at heading/jump boundaries.

    Pest motion is piecewise linear, so chunked advancement matches 1 ms
    stepping up to float associativity.
    """
    T = w.cfg.heading_resample_s
    while w.clock_s < t_target_s - 1e-12:
        nxt = t_target_s
        if T > 0:
            boundary = (math.floor(w.clock_s / T + 1e-12) + 1) * T
            nxt = min(nxt, boundary)
        jumps = w.next_jump_s[w.alive]
        if jumps.size and np.min(jumps) < nxt:
            nxt = max(float(np.min(jumps)), w.clock_s + 1e-9)
        step(w, nxt - w.clock_s)
