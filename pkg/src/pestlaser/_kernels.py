"""Hot numeric kernels for beam tracing and the 2-D aim solve.

Compiled with numba @njit when available; set PESTLASER_NO_NUMBA=1 to force
the pure Python/NumPy fallback. Both paths run the same source in the same
arithmetic order; results agree to the last bit except for occasional 1-ulp
differences in sin/cos between the compiled and interpreter math libraries.

Mirror-pair geometry is packed into a flat float64[24] array:

    [ 0: 3]  mirror-1 pivot          [ 9:12]  mirror-2 pivot
    [ 3: 6]  mirror-1 rotation axis  [12:15]  mirror-2 rotation axis
    [ 6: 9]  mirror-1 rest normal    [15:18]  mirror-2 rest normal
    [18:21]  source-ray origin       [21:24]  source-ray direction
"""

from __future__ import annotations

import math
import os

import numpy as np

USE_NUMBA = os.environ.get("PESTLASER_NO_NUMBA", "0").lower() not in ("1", "true", "yes")
if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

if not USE_NUMBA:
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


# Trace/solve status codes.
TRACE_OK = 0
TRACE_PARALLEL = 1
TRACE_BACKWARD = 2
SOLVE_OK = 0
SOLVE_NO_CONVERGENCE = 1
SOLVE_TRACE_FAIL = 2


@njit(cache=True)
def _trace(theta1, theta2, g):
    """Source ray -> mirror 1 -> mirror 2 -> outgoing ray.

    Returns (status, px, py, pz, dx, dy, dz, off1, off2) where off_i is the
    distance of the beam footprint from mirror i's pivot.
    """
    px, py, pz = g[18], g[19], g[20]
    dx, dy, dz = g[21], g[22], g[23]
    off1 = 0.0
    off2 = 0.0
    for i in range(2):
        base = 0 if i == 0 else 9
        theta = theta1 if i == 0 else theta2
        cx_, cy_, cz_ = g[base], g[base + 1], g[base + 2]
        ax, ay, az = g[base + 3], g[base + 4], g[base + 5]
        n0x, n0y, n0z = g[base + 6], g[base + 7], g[base + 8]
        # Rodrigues rotation of the rest normal about the mirror axis.
        c = math.cos(theta)
        s = math.sin(theta)
        crx = ay * n0z - az * n0y
        cry = az * n0x - ax * n0z
        crz = ax * n0y - ay * n0x
        adn = ax * n0x + ay * n0y + az * n0z
        nx = n0x * c + crx * s + ax * adn * (1.0 - c)
        ny = n0y * c + cry * s + ay * adn * (1.0 - c)
        nz = n0z * c + crz * s + az * adn * (1.0 - c)
        denom = nx * dx + ny * dy + nz * dz
        if abs(denom) <= 1e-12:
            return TRACE_PARALLEL, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0
        t = (nx * (cx_ - px) + ny * (cy_ - py) + nz * (cz_ - pz)) / denom
        if t < 0.0:
            return TRACE_BACKWARD, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0
        px = px + dx * t
        py = py + dy * t
        pz = pz + dz * t
        off = math.sqrt((px - cx_) ** 2 + (py - cy_) ** 2 + (pz - cz_) ** 2)
        if i == 0:
            off1 = off
        else:
            off2 = off
        k = 2.0 * (dx * nx + dy * ny + dz * nz)
        dx = dx - k * nx
        dy = dy - k * ny
        dz = dz - k * nz
    return TRACE_OK, px, py, pz, dx, dy, dz, off1, off2


@njit(cache=True)
def _residual(theta1, theta2, g, tx, ty, tz):
    """Miss vector at the target's z-plane; huge residual on trace failure."""
    st, px, py, pz, dx, dy, dz, _o1, _o2 = _trace(theta1, theta2, g)
    if st != TRACE_OK or dz <= 1e-9:
        return False, 1e9, 1e9
    s = (tz - pz) / dz
    return True, px + dx * s - tx, py + dy * s - ty


@njit(cache=True)
def _solve(tx, ty, tz, g, th1_0, th2_0, tol, max_iter):
    """Damped 2-D Newton on the target-plane miss vector.

    Returns (status, theta1, theta2, residual_m).
    """
    th1 = th1_0
    th2 = th2_0
    h = 1e-7
    for _ in range(max_iter):
        ok, rx, ry = _residual(th1, th2, g, tx, ty, tz)
        if not ok:
            # Retreat toward boresight where the trace is well defined.
            th1 *= 0.5
            th2 *= 0.5
            continue
        res = math.sqrt(rx * rx + ry * ry)
        if res <= tol:
            return SOLVE_OK, th1, th2, res
        ok1, rx1, ry1 = _residual(th1 + h, th2, g, tx, ty, tz)
        ok2, rx2, ry2 = _residual(th1, th2 + h, g, tx, ty, tz)
        if not (ok1 and ok2):
            return SOLVE_TRACE_FAIL, th1, th2, res
        j11 = (rx1 - rx) / h
        j21 = (ry1 - ry) / h
        j12 = (rx2 - rx) / h
        j22 = (ry2 - ry) / h
        det = j11 * j22 - j12 * j21
        if abs(det) < 1e-18:
            return SOLVE_TRACE_FAIL, th1, th2, res
        s1 = -(j22 * rx - j12 * ry) / det
        s2 = -(-j21 * rx + j11 * ry) / det
        step = math.sqrt(s1 * s1 + s2 * s2)
        if step > 0.1:  # damp large Newton steps, radians
            s1 *= 0.1 / step
            s2 *= 0.1 / step
        th1 = min(max(th1 + s1, -0.6), 0.6)
        th2 = min(max(th2 + s2, -0.6), 0.6)
    ok, rx, ry = _residual(th1, th2, g, tx, ty, tz)
    res = math.sqrt(rx * rx + ry * ry) if ok else 1e9
    if res <= tol:
        return SOLVE_OK, th1, th2, res
    return SOLVE_NO_CONVERGENCE, th1, th2, res


def trace_kernel(theta1: float, theta2: float, geom: np.ndarray):
    return _trace(theta1, theta2, geom)


def solve_kernel(tx, ty, tz, geom, th1_0, th2_0, tol=1e-6, max_iter=50):
    return _solve(tx, ty, tz, geom, th1_0, th2_0, tol, max_iter)


def warmup():
    """Trigger JIT compilation so timing-sensitive callers pay it up front."""
    g = np.zeros(24)
    g[6] = 1.0
    g[15] = 1.0
    g[23] = 1.0
    g[4] = 1.0
    g[13] = 1.0
    _trace(0.0, 0.0, g)
    _solve(0.0, 0.0, 1.0, g, 0.0, 0.0, 1e-6, 1)
