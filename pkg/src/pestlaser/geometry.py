# geometry.py — pinhole camera model + stereo depth
#
#   Forward projection (3-D -> pixel):
#     u = cx + f * x/z
#     v = cy + f * y/z
#
#   Back-projection (pixel + depth -> 3-D):
#     x = (u - cx) * Z / f
#     y = (v - cy) * Z / f
#
#   Stereo depth (disparity -> Z):
#     Z = f * T / d        [T = baseline in metres, d = disparity in px]
#
# Rectified, distortion-free pair; camera-centred right-handed frame with
# z along the optical axis.

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BehindCamera,
    DegenerateDisparity,
    InvalidDepth,
    InvalidInput,
    OutOfFrame,
)

# A Point3 is a plain float64 ndarray of shape (3,), metres.
Point3 = np.ndarray


def point3(x: float, y: float, z: float) -> Point3:
    return np.array([x, y, z], dtype=np.float64)


@dataclass(frozen=True)
class StereoRig:
    """Rectified stereo pair: focal length in px, baseline in metres."""

    focal_px: float = 500.0
    baseline_m: float = 0.10
    image_w: int = 400
    image_h: int = 400
    principal_point: tuple[float, float] = (200.0, 200.0)

    def __post_init__(self):
        if not (self.focal_px > 0 and self.baseline_m > 0):
            raise InvalidInput("focal_px and baseline_m must be positive")
        if not (self.image_w > 0 and self.image_h > 0):
            raise InvalidInput("image size must be positive")
        cx, cy = self.principal_point
        if not (0 <= cx <= self.image_w and 0 <= cy <= self.image_h):
            raise InvalidInput("principal point outside the sensor")


@dataclass(frozen=True)
class PixelObservation:
    """Pixel in the left image plus horizontal disparity to the right image."""

    u: float
    v: float
    disparity_px: float


def stereo_depth(rig: StereoRig, disparity_px):
    """Depth Z = f * T / d from horizontal disparity.

    Accepts a scalar or an ndarray of disparities; raises DegenerateDisparity
    for any d <= 0 (parallel rays, infinite depth).
    """
    d = np.asarray(disparity_px, dtype=np.float64)
    if not np.all(np.isfinite(d)):
        raise InvalidInput("disparity must be finite")
    if np.any(d <= 0.0):
        raise DegenerateDisparity("disparity must be > 0")
    z = rig.focal_px * rig.baseline_m / d
    return float(z) if np.isscalar(disparity_px) or d.ndim == 0 else z


def back_project(rig: StereoRig, obs: PixelObservation, depth_m: float) -> Point3:
    """Pixel + depth -> camera-frame 3-D point (similar triangles)."""
    if not math.isfinite(depth_m):
        raise InvalidInput("depth must be finite")
    if depth_m <= 0.0:
        raise InvalidDepth(f"depth {depth_m} m")
    cx, cy = rig.principal_point
    f = rig.focal_px
    return point3(
        (obs.u - cx) * depth_m / f,
        (obs.v - cy) * depth_m / f,
        depth_m,
    )


def project(rig: StereoRig, p: Point3) -> PixelObservation:
    """3-D camera-frame point -> left-image pixel with synthetic disparity.

    Exact inverse of back_project combined with stereo_depth.
    """
    x, y, z = float(p[0]), float(p[1]), float(p[2])
    if not all(math.isfinite(c) for c in (x, y, z)):
        raise InvalidInput("point components must be finite")
    if z <= 0.0:
        raise BehindCamera(f"z = {z} m")
    cx, cy = rig.principal_point
    f = rig.focal_px
    u = cx + f * x / z
    v = cy + f * y / z
    if not (0.0 <= u < rig.image_w and 0.0 <= v < rig.image_h):
        raise OutOfFrame(f"pixel ({u:.1f}, {v:.1f}) outside {rig.image_w}x{rig.image_h}")
    return PixelObservation(u=u, v=v, disparity_px=f * rig.baseline_m / z)


def in_frustum(rig: StereoRig, xyz: np.ndarray) -> np.ndarray:
    """Vectorised visibility test for an (N, 3) array of camera-frame points."""
    cx, cy = rig.principal_point
    f = rig.focal_px
    z = xyz[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = cx + f * xyz[:, 0] / z
        v = cy + f * xyz[:, 1] / z
    return (z > 0) & (u >= 0) & (u < rig.image_w) & (v >= 0) & (v < rig.image_h)
