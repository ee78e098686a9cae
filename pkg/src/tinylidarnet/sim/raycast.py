"""Grid raycasting for a 2D LiDAR (Amanatides-Woo traversal)."""

from __future__ import annotations

import math

import numba
import numpy as np

from ..scan import MAX_RANGE, beam_angles

_ANGLES = beam_angles()


@numba.njit(cache=True, nogil=True)
def _cast(grid, fx, fy, angles, max_cells):
    """Distances in cell units from (fx, fy) along each angle; cells off the grid are free."""
    h, w = grid.shape
    out = np.empty(angles.shape[0])
    ix0 = int(math.floor(fx))
    iy0 = int(math.floor(fy))
    for k in range(angles.shape[0]):
        dx = math.cos(angles[k])
        dy = math.sin(angles[k])
        ix = ix0
        iy = iy0
        if dx > 0:
            step_x = 1
            t_max_x = (ix + 1 - fx) / dx
            t_dx = 1.0 / dx
        elif dx < 0:
            step_x = -1
            t_max_x = (fx - ix) / -dx
            t_dx = -1.0 / dx
        else:
            step_x = 0
            t_max_x = np.inf
            t_dx = np.inf
        if dy > 0:
            step_y = 1
            t_max_y = (iy + 1 - fy) / dy
            t_dy = 1.0 / dy
        elif dy < 0:
            step_y = -1
            t_max_y = (fy - iy) / -dy
            t_dy = -1.0 / dy
        else:
            step_y = 0
            t_max_y = np.inf
            t_dy = np.inf
        t = 0.0
        hit = max_cells
        while t <= max_cells:
            if 0 <= ix < w and 0 <= iy < h and grid[iy, ix]:
                hit = t
                break
            if t_max_x < t_max_y:
                t = t_max_x
                t_max_x += t_dx
                ix += step_x
            else:
                t = t_max_y
                t_max_y += t_dy
                iy += step_y
        out[k] = min(hit, max_cells)
    return out


def raycast(track, x: float, y: float, theta: float, angles=None) -> np.ndarray:
    """Range in meters to the first occupied cell for every beam, capped at 10 m.

    Beam k points at ``theta + angles[k]``; the default angles are the
    1081-beam, 270 degree sweep.
    """
    if angles is None:
        angles = _ANGLES
    fx = (x - track.origin[0]) / track.resolution
    fy = (y - track.origin[1]) / track.resolution
    cells = _cast(track.grid, fx, fy, np.asarray(angles, dtype=np.float64) + theta,
                  MAX_RANGE / track.resolution)
    return np.minimum(cells * track.resolution, MAX_RANGE)


def march(track, x: float, y: float, theta: float, angles=None, step: float | None = None) -> np.ndarray:
    """Brute-force fixed-step ray marching; slow reference for :func:`raycast`."""
    if angles is None:
        angles = _ANGLES
    if step is None:
        step = track.resolution / 20
    ts = np.arange(0.0, MAX_RANGE + step, step)
    out = np.full(len(angles), MAX_RANGE)
    for k, a in enumerate(np.asarray(angles) + theta):
        occ = track.occupied(x + ts * math.cos(a), y + ts * math.sin(a))
        hits = np.flatnonzero(occ)
        if hits.size:
            out[k] = min(ts[hits[0]], MAX_RANGE)
    return out
