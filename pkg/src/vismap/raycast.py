"""Line-of-sight rasterization and concealment on the obstruction grid.

Sight lines are rasterized with an integer Bresenham walk. Collision
detection optionally thickens the ray perpendicular to its major axis so
that obstruction staircases touching only at corners still register a hit;
extinction averaging elsewhere always uses the thin single-cell path.
"""

import numpy as np

from .errors import ComputeError


def _round_half_down(p, n):
    """floor-style round of p/n to the nearest integer, ties toward smaller."""
    return -((n - 2 * p) // (2 * n))


def _path_arrays(src, dst):
    i0, j0 = src
    i1, j1 = dst
    di, dj = i1 - i0, j1 - j0
    n = max(abs(di), abs(dj))
    if n == 0:
        return np.array([i0]), np.array([j0])
    t = np.arange(n + 1)
    return (
        i0 + _round_half_down(t * di, n),
        j0 + _round_half_down(t * dj, n),
    )


def bresenham(src, dst):
    """Rasterized cell path from src to dst, inclusive, as (i, j) tuples."""
    xs, ys = _path_arrays(src, dst)
    return list(zip(xs.tolist(), ys.tolist()))


def _minor_axis(src, dst):
    """1 if the major axis is x (offsets go in j), else 0."""
    return 1 if abs(dst[0] - src[0]) >= abs(dst[1] - src[1]) else 0


def thick_line(src, dst, thickness=3):
    """Cell set of a thickened ray; superset of the Bresenham path.

    Cells are added at perpendicular offsets of up to (thickness-1)//2 along
    the minor axis, keeping every cell within thickness/2 cells of the ideal
    segment. The result is not clipped to any grid.
    """
    if thickness < 1:
        raise ComputeError(f"ray thickness must be >= 1, got {thickness}")
    xs, ys = _path_arrays(src, dst)
    half = (thickness - 1) // 2
    cells = set()
    axis = _minor_axis(src, dst)
    for off in range(-half, half + 1):
        if axis == 1:
            cells.update(zip(xs.tolist(), (ys + off).tolist()))
        else:
            cells.update(zip((xs + off).tolist(), ys.tolist()))
    return cells


def first_collision(cells, mask):
    """First cell of an ordered traversal with mask True, or None."""
    for cell in cells:
        if mask[cell]:
            return cell
    return None


def _cast_ray(U, O, src, dst, half, limit=None):
    """Mark unconcealed cells along one thick ray, stopping at a collision.

    ``limit`` optionally caps the number of steps walked (radius clipping).
    """
    nx, ny = O.shape
    xs, ys = _path_arrays(src, dst)
    if limit is not None and xs.size > limit + 1:
        xs, ys = xs[: limit + 1], ys[: limit + 1]
    axis = _minor_axis(src, dst)
    blocked = np.zeros(xs.size, dtype=bool)
    offsets = range(-half, half + 1)
    groups = []
    for off in offsets:
        if axis == 1:
            xo, yo = xs, ys + off
        else:
            xo, yo = xs + off, ys
        ok = (xo >= 0) & (xo < nx) & (yo >= 0) & (yo < ny)
        groups.append((xo, yo, ok))
        hit = np.zeros(xs.size, dtype=bool)
        hit[ok] = O[xo[ok], yo[ok]]
        blocked |= hit
    stop = int(np.argmax(blocked)) if blocked.any() else xs.size
    for xo, yo, ok in groups:
        sel = ok[:stop]
        U[xo[:stop][sel], yo[:stop][sel]] = True


def compute_unconcealed(scene, waypoint_cell, radius, thickness=3,
                        targets="edges", active=None):
    """Unconcealed mask U for rays cast from a waypoint cell.

    Rays target the edge cells of the bounding box of the active region
    (cells within ``radius`` meters of the waypoint cell center), or every
    active cell with ``targets='all'``. Cells covered by no ray stay
    concealed, as do obstructed cells and cells outside the radius.
    """
    O = scene.obstruction
    nx, ny = O.shape
    wi, wj = waypoint_cell
    if not (0 <= wi < nx and 0 <= wj < ny):
        raise ComputeError(f"waypoint cell {waypoint_cell} outside grid")
    if O[wi, wj]:
        raise ComputeError(f"waypoint cell {waypoint_cell} is obstructed")

    if active is None:
        ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        dist = np.hypot(ii - wi, jj - wj) * scene.dx
        active = dist <= radius
        active &= ~O | ((ii == wi) & (jj == wj))
    else:
        active = np.asarray(active, dtype=bool)
    radius_cells = int(np.ceil(radius / scene.dx)) + 1

    U = np.zeros((nx, ny), dtype=bool)
    half = (thickness - 1) // 2
    if targets == "all":
        target_cells = [tuple(c) for c in np.argwhere(active)]
    elif targets == "edges":
        idx = np.argwhere(active)
        if idx.size == 0:
            target_cells = []
        else:
            i0, j0 = idx.min(axis=0)
            i1, j1 = idx.max(axis=0)
            target_cells = []
            for i in range(i0, i1 + 1):
                target_cells.append((i, j0))
                if j1 != j0:
                    target_cells.append((i, j1))
            for j in range(j0 + 1, j1):
                target_cells.append((i0, j))
                if i1 != i0:
                    target_cells.append((i1, j))
    else:
        raise ComputeError(f"unknown target mode {targets!r}")

    for cell in target_cells:
        _cast_ray(U, O, (wi, wj), cell, half, limit=radius_cells)
    U &= active
    U[O] = False
    if active[wi, wj]:
        U[wi, wj] = True  # zero-length ray: the sign's own cell
    return U
