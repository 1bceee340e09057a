"""Two-mirror galvanometer model.

Forward path: source beam -> mirror 1 -> mirror 2 -> outgoing ray, each
mirror's normal rotated about its axis by the commanded angle (plus a fixed
calibration offset). The inverse (target point -> mirror angles) is a damped
2-D Newton solve on the miss vector at the target's depth plane.

Command timing follows the 20 kpps galvo limit: consecutive effective
command times are spaced >= min_command_period (default 50 us). Commands
pass through the DAC signal chain (digital code -> 0-5 V -> +/-5 V), so
applied angles are quantised to the DAC grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import (
    SOLVE_NO_CONVERGENCE,
    SOLVE_OK,
    TRACE_BACKWARD,
    TRACE_OK,
    TRACE_PARALLEL,
    solve_kernel,
    trace_kernel,
)
from .errors import (
    BeamParallelToMirror,
    InvalidInput,
    MissedMirror,
    NoConvergence,
    NoForwardIntersection,
    OutOfWorkspace,
)
from .geometry import Point3, point3

_SQ2 = math.sqrt(0.5)


@dataclass(frozen=True)
class Ray:
    origin: Point3
    dir: Point3

    def __post_init__(self):
        n = float(np.linalg.norm(self.dir))
        if abs(n - 1.0) > 1e-12:
            raise InvalidInput(f"ray direction norm {n}")


@dataclass
class MirrorPlane:
    """One galvo mirror: pivot point, rotation axis and rest normal."""

    pivot: Point3
    rotation_axis: Point3
    rest_normal: Point3
    angle: float = 0.0
    angle_range: tuple[float, float] = (-0.35, 0.35)

    def __post_init__(self):
        for name, v in (("rotation_axis", self.rotation_axis), ("rest_normal", self.rest_normal)):
            if abs(float(np.linalg.norm(v)) - 1.0) > 1e-12:
                raise InvalidInput(f"{name} must be unit length")
        if abs(float(np.dot(self.rotation_axis, self.rest_normal))) > 1e-9:
            raise InvalidInput("rotation_axis must be perpendicular to rest_normal")
        lo, hi = self.angle_range
        if not lo <= self.angle <= hi:
            raise InvalidInput(f"angle {self.angle} outside {self.angle_range}")

    def normal(self, angle: float | None = None) -> Point3:
        """Rest normal rotated about the axis by the (current) angle."""
        t = self.angle if angle is None else angle
        a = self.rotation_axis
        n = self.rest_normal
        return (
            n * math.cos(t)
            + np.cross(a, n) * math.sin(t)
            + a * float(np.dot(a, n)) * (1.0 - math.cos(t))
        )


@dataclass
class GalvoRig:
    """Mirror pair plus the fixed laser source ray, all in the device frame.

    Defaults are a conventional X-Y galvo: source beam travels +y into
    mirror 1 at the origin (axis z), exits +x into mirror 2 20 mm away
    (axis y), boresight +z. Mirror 1 steers y, mirror 2 steers x.
    """

    mirror1: MirrorPlane = field(default_factory=lambda: MirrorPlane(
        pivot=point3(0.0, 0.0, 0.0),
        rotation_axis=point3(0.0, 0.0, 1.0),
        rest_normal=point3(_SQ2, -_SQ2, 0.0),
    ))
    mirror2: MirrorPlane = field(default_factory=lambda: MirrorPlane(
        pivot=point3(0.02, 0.0, 0.0),
        rotation_axis=point3(0.0, 1.0, 0.0),
        rest_normal=point3(-_SQ2, 0.0, _SQ2),
    ))
    source: Ray = field(default_factory=lambda: Ray(
        origin=point3(0.0, -0.05, 0.0), dir=point3(0.0, 1.0, 0.0)))
    mirror_radius_m: float = 0.01

    def __post_init__(self):
        self._geom = np.concatenate([
            self.mirror1.pivot, self.mirror1.rotation_axis, self.mirror1.rest_normal,
            self.mirror2.pivot, self.mirror2.rotation_axis, self.mirror2.rest_normal,
            self.source.origin, self.source.dir,
        ]).astype(np.float64)

    @property
    def geom(self) -> np.ndarray:
        return self._geom


@dataclass
class GalvoState:
    """Single-owner mutable command state; one engagement loop owns it."""

    angles: tuple[float, float] = (0.0, 0.0)
    last_command_time: float | None = None
    min_command_period: float = 1.0 / 20000.0  # 20 kpps
    dac_bits: int = 12
    calibration_offset: tuple[float, float] = (0.0, 0.0)
    command_log: list = field(default_factory=list)

    def __post_init__(self):
        if self.min_command_period <= 0:
            raise InvalidInput("min_command_period must be positive")
        if not 8 <= self.dac_bits <= 16:
            raise InvalidInput("dac_bits must be in [8, 16]")


def plane_intersect(ray: Ray, mirror: MirrorPlane) -> Point3:
    """Point P where the beam meets the mirror plane:

    P = origin + d * (n . (C - origin)) / (n . d)
    """
    n = mirror.normal()
    denom = float(np.dot(n, ray.dir))
    if abs(denom) <= 1e-12:
        raise BeamParallelToMirror()
    t = float(np.dot(n, mirror.pivot - ray.origin)) / denom
    if t < 0.0:
        raise NoForwardIntersection(f"t = {t}")
    return ray.origin + ray.dir * t


def reflect(dir: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Specular reflection d - 2 (d . n) n; inputs must be unit length."""
    for v in (dir, normal):
        if abs(float(np.linalg.norm(v)) - 1.0) > 1e-9:
            raise InvalidInput("reflect expects unit vectors")
    return dir - 2.0 * float(np.dot(dir, normal)) * normal


def _effective_angles(state: GalvoState, angles: tuple[float, float]) -> tuple[float, float]:
    return (angles[0] + state.calibration_offset[0],
            angles[1] + state.calibration_offset[1])


def trace_beam(state: GalvoState, rig: GalvoRig,
               angles: tuple[float, float] | None = None) -> Ray:
    """Outgoing ray for the given (default: current) command angles."""
    th1, th2 = _effective_angles(state, state.angles if angles is None else angles)
    st, px, py, pz, dx, dy, dz, off1, off2 = trace_kernel(th1, th2, rig.geom)
    if st == TRACE_PARALLEL:
        raise BeamParallelToMirror()
    if st == TRACE_BACKWARD:
        raise NoForwardIntersection()
    if max(off1, off2) > rig.mirror_radius_m:
        raise MissedMirror(f"beam {max(off1, off2) * 1e3:.1f} mm off pivot")
    return Ray(origin=point3(px, py, pz), dir=point3(dx, dy, dz))


def boresight(state: GalvoState, rig: GalvoRig) -> Ray:
    """Outgoing ray at calibration-zero command angles."""
    return trace_beam(state, rig, angles=(0.0, 0.0))


def solve_angles(target: Point3, rig: GalvoRig, state: GalvoState,
                 eps_aim_m: float = 1e-4, max_iter: int = 50) -> tuple[float, float]:
    """Command angles whose traced beam passes within eps_aim of the target.

    Newton-initialised at the current command angles. Raises OutOfWorkspace
    when the target sits behind the device or the solution exceeds the
    mechanical angle range; NoConvergence when the solver stalls.
    """
    tz = float(target[2])
    exit_z = float(rig.mirror2.pivot[2])
    if tz <= exit_z + 1e-6:
        raise OutOfWorkspace(f"target z = {tz} m behind the exit aperture")
    th1_0, th2_0 = _effective_angles(state, state.angles)
    st, th1, th2, res = solve_kernel(
        float(target[0]), float(target[1]), tz, rig.geom,
        th1_0, th2_0, tol=min(1e-6, eps_aim_m / 10.0), max_iter=max_iter)
    if st == SOLVE_NO_CONVERGENCE:
        raise NoConvergence(res)
    if st != SOLVE_OK:
        raise OutOfWorkspace(f"no beam path to target, residual {res:.3e} m")
    cmd = (th1 - state.calibration_offset[0], th2 - state.calibration_offset[1])
    for c, m in zip(cmd, (rig.mirror1, rig.mirror2)):
        lo, hi = m.angle_range
        if not lo <= c <= hi:
            raise OutOfWorkspace(f"solution angle {c:.4f} rad outside [{lo}, {hi}]")
    return cmd


def dac_encode(angle: float, angle_range: tuple[float, float],
               dac_bits: int) -> tuple[int, float]:
    """Angle -> (DAC code, amplifier output volts on the +/-5 V rail).

    Out-of-range angles clamp to the rails.
    """
    lo, hi = angle_range
    full = (1 << dac_bits) - 1
    code = round((angle - lo) / (hi - lo) * full)
    code = min(max(code, 0), full)
    volts = code / full * 10.0 - 5.0
    return code, volts


def dac_decode(code: int, angle_range: tuple[float, float], dac_bits: int) -> float:
    lo, hi = angle_range
    full = (1 << dac_bits) - 1
    return lo + code / full * (hi - lo)


def command_mirrors(state: GalvoState, rig: GalvoRig,
                    target_angles: tuple[float, float], t_request: float) -> float:
    """Apply a (theta1, theta2) command, honouring the 20 kpps spacing.

    Late requests are delayed to last_command_time + min_command_period;
    out-of-range angles clamp to the range and are flagged in the log.
    Applied angles are the DAC-quantised values. Returns t_effective.
    """
    if state.last_command_time is not None and t_request < state.last_command_time:
        raise InvalidInput("t_request before last command time")
    clamped = False
    codes = []
    applied = []
    for th, m in zip(target_angles, (rig.mirror1, rig.mirror2)):
        lo, hi = m.angle_range
        if not lo <= th <= hi:
            clamped = True
            th = min(max(th, lo), hi)
        code, _volts = dac_encode(th, m.angle_range, state.dac_bits)
        codes.append(code)
        applied.append(dac_decode(code, m.angle_range, state.dac_bits))
    if state.last_command_time is None:
        t_effective = t_request
    else:
        t_effective = max(t_request, state.last_command_time + state.min_command_period)
    state.angles = (applied[0], applied[1])
    state.last_command_time = t_effective
    state.command_log.append(
        (t_effective, applied[0], applied[1], codes[0], codes[1], clamped))
    return t_effective
