"""Visibility mathematics: distance, view angle, path-averaged extinction,
per-waypoint maps, OR/AND combination, and ASET maps.

Available visibility at a cell is min(U * A * C / sigma_bar, vmax) where
sigma_bar is the arithmetic mean of the extinction coefficient over the
rasterized sight line, A the cosine view-angle factor and U the concealment
mask. A cell passes when that value reaches the Euclidean distance to the
sign.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ComputeError, ConfigError
from .grid import VisMapResult, Waypoint, WaypointFields
from .raycast import _round_half_down, bresenham, compute_unconcealed

ASET_NEVER = np.inf

DEFAULT_VMAX = 30.0
DEFAULT_THICKNESS = 3


@dataclass(frozen=True)
class VisParams:
    vmax: float = DEFAULT_VMAX  # m, empirical upper bound on visibility
    zero_sigma_epsilon: float = 1e-9  # 1/m, below this clean air is assumed
    thickness: int = DEFAULT_THICKNESS  # cells, collision rays only

    def __post_init__(self):
        if self.vmax <= 0:
            raise ConfigError("vmax must be positive")
        if self.zero_sigma_epsilon <= 0:
            raise ConfigError("zero_sigma_epsilon must be positive")


def distance_matrix(scene, waypoint):
    """Euclidean distance (m) from every cell center to the waypoint."""
    dxs = scene.x_centers() - waypoint.x
    dys = scene.y_centers() - waypoint.y
    return np.hypot(dxs[:, None], dys[None, :])


def view_angle_matrix(scene, waypoint, distance=None):
    """Cosine view-angle factor A in [0, 1]; 1 at the waypoint's own cell.

    A waypoint with ``alpha=None`` is treated as visible from all
    directions (A identically 1).
    """
    if waypoint.alpha is None:
        return np.ones(scene.shape)
    if distance is None:
        distance = distance_matrix(scene, waypoint)
    a = np.deg2rad(waypoint.alpha)
    dxs = scene.x_centers() - waypoint.x
    dys = scene.y_centers() - waypoint.y
    proj = np.sin(a) * dxs[:, None] + np.cos(a) * dys[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        A = np.where(distance > 0, proj / np.where(distance > 0, distance, 1.0), 1.0)
    A = np.clip(A, 0.0, 1.0)
    if scene.contains(waypoint.x, waypoint.y):
        A[scene.cell_of(waypoint.x, waypoint.y)] = 1.0  # observer at the sign
    return A


def mean_extinction(frame, src_cell, dst_cell):
    """Arithmetic mean of the field over the thin Bresenham path (1/m)."""
    path = bresenham(src_cell, dst_cell)
    return float(sum(frame[c] for c in path) / len(path))


class PathAverager:
    """Vectorized per-cell path means of a field from one waypoint cell.

    The gather indices of every Bresenham path step are precomputed once for
    all active cells, so evaluating a new frame is a single fancy-indexed
    sum. Index layout: step t of the path to active cell c lives at
    ``idx[t, c]``; steps past the cell's path length point at a zero pad.
    """

    def __init__(self, scene, waypoint_cell, active):
        nx, ny = scene.shape
        wi, wj = waypoint_cell
        cells = np.argwhere(active)
        di = cells[:, 0] - wi
        dj = cells[:, 1] - wj
        n = np.maximum(np.abs(di), np.abs(dj))
        nmax = int(n.max()) if n.size else 0
        pad = nx * ny
        idx = np.full((nmax + 1, cells.shape[0]), pad, dtype=np.int64)
        for t in range(nmax + 1):
            on = n >= t
            nn = np.maximum(n[on], 1)  # n == 0 has di == dj == 0
            xi = wi + _round_half_down(t * di[on], nn)
            yi = wj + _round_half_down(t * dj[on], nn)
            idx[t, on] = xi * ny + yi
        self.shape = (nx, ny)
        self.cells = cells
        self.path_lengths = n + 1
        self._idx = idx

    def mean_field(self, frame):
        """Raster of path-mean values; zero outside the active cells."""
        if frame.shape != self.shape:
            raise ComputeError(
                f"frame shape {frame.shape} does not match grid {self.shape}"
            )
        flat = np.concatenate([np.asarray(frame, dtype=float).ravel(), [0.0]])
        sums = flat[self._idx].sum(axis=0)
        out = np.zeros(self.shape)
        out[self.cells[:, 0], self.cells[:, 1]] = sums / self.path_lengths
        return out


def visibility_matrix(sigma_bar, unconcealed, view_factor, c, params):
    """Available visibility V (m), clamped to vmax.

    Where the path-mean extinction is below the epsilon floor, clean air is
    assumed: V is vmax wherever the cell is unconcealed with a positive view
    factor, zero otherwise.
    """
    ua = unconcealed * view_factor
    sigma = np.asarray(sigma_bar, dtype=float)
    with np.errstate(divide="ignore"):
        v = np.where(
            sigma < params.zero_sigma_epsilon,
            np.where(ua > 0, params.vmax, 0.0),
            np.minimum(ua * c / np.where(sigma > 0, sigma, 1.0), params.vmax),
        )
    return v


def waypoint_map(v, distance, obstruction=None):
    """Boolean pass map: available visibility covers the distance."""
    m = v >= distance
    if obstruction is not None:
        m &= ~obstruction
    return m


def combine_waypoints(maps):
    """Elementwise OR over the per-waypoint maps."""
    maps = list(maps)
    if not maps:
        raise ConfigError("combine_waypoints needs at least one map")
    out = maps[0].copy()
    for m in maps[1:]:
        out |= m
    return out


def aggregate_time(maps):
    """Elementwise AND over the per-time maps."""
    maps = list(maps)
    if not maps:
        raise ConfigError("aggregate_time needs at least one time point")
    out = maps[0].copy()
    for m in maps[1:]:
        out &= m
    return out


def aset_map(maps, times):
    """First time each cell fails the criterion; +inf where it never does."""
    maps = np.asarray(maps, dtype=bool)
    times = np.asarray(times, dtype=float)
    if maps.shape[0] != times.size:
        raise ComputeError(
            f"{maps.shape[0]} maps do not align with {times.size} times"
        )
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise ComputeError("times must be sorted ascending")
    failed = ~maps
    ever = failed.any(axis=0)
    first = np.argmax(failed, axis=0)
    return np.where(ever, times[first], ASET_NEVER)


def select_frames(field, times, tolerance=1e-6):
    """Nearest frame index per requested time, ties toward the earlier frame.

    Requested times beyond the covered range by more than ``tolerance``
    raise :class:`ConfigError`.
    """
    ft = field.times
    times = np.asarray(times, dtype=float)
    if ft.size == 0:
        raise ConfigError("field has no frames")
    out = np.empty(times.size, dtype=int)
    for n, t in enumerate(times):
        if t < ft[0] - tolerance or t > ft[-1] + tolerance:
            raise ConfigError(
                f"requested time {t} s outside field range "
                f"[{ft[0]}, {ft[-1]}] s"
            )
        k = int(np.searchsorted(ft, t))
        if k == 0:
            out[n] = 0
        elif k == ft.size:
            out[n] = ft.size - 1
        else:
            # strict '<' keeps ties on the earlier frame
            out[n] = k - 1 if t - ft[k - 1] <= ft[k] - t else k
    return out


class VisibilityEngine:
    """Per-waypoint geometry cache plus the (k, t) evaluation loop."""

    def __init__(self, scene, waypoints, params=None):
        self.scene = scene
        self.waypoints = list(waypoints)
        self.params = params or VisParams()
        if not self.waypoints:
            raise ConfigError("at least one waypoint is required")
        for wp in self.waypoints:
            if not scene.contains(wp.x, wp.y):
                raise ConfigError(
                    f"waypoint {wp.id} at ({wp.x}, {wp.y}) outside the domain"
                )
            if scene.obstruction[scene.cell_of(wp.x, wp.y)]:
                raise ConfigError(
                    f"waypoint {wp.id} at ({wp.x}, {wp.y}) sits on an "
                    "obstructed cell"
                )
        self._geometry = {}
        self._averagers = {}
        self.geometry_compute_count = {wp.id: 0 for wp in self.waypoints}

    def geometry(self, k):
        """Distance, view-angle and concealment rasters for waypoint k."""
        if k not in self._geometry:
            wp = self.waypoints[k]
            scene = self.scene
            L = distance_matrix(scene, wp)
            A = view_angle_matrix(scene, wp, distance=L)
            active = L <= self.params.vmax
            U = compute_unconcealed(
                scene,
                scene.cell_of(wp.x, wp.y),
                self.params.vmax,
                thickness=self.params.thickness,
                active=active,
            )
            self._geometry[k] = WaypointFields(L, A, U, active)
            self._averagers[k] = PathAverager(
                scene, scene.cell_of(wp.x, wp.y), active & ~scene.obstruction
            )
            self.geometry_compute_count[wp.id] += 1
        return self._geometry[k]

    def waypoint_visibility(self, k, frame):
        """Available-visibility raster V for waypoint k on one frame."""
        geom = self.geometry(k)
        sigma_bar = self._averagers[k].mean_field(frame)
        return visibility_matrix(
            sigma_bar, geom.unconcealed, geom.view_factor,
            self.waypoints[k].c, self.params,
        )

    def evaluate(self, field, times=None, store_v=False):
        """Run the full (k, t) lattice and build all maps."""
        scene = self.scene
        if field.grid_shape != scene.shape:
            raise ComputeError(
                f"field grid {field.grid_shape} does not match scene "
                f"{scene.shape}"
            )
        if times is None:
            requested = field.times.copy()
            indices = np.arange(field.times.size)
        else:
            requested = np.asarray(times, dtype=float)
            if requested.size == 0:
                raise ConfigError("at least one evaluation time is required")
            indices = select_frames(field, requested)
        matched = field.times[indices]

        nk = len(self.waypoints)
        nt = indices.size
        wmaps = np.zeros((nt, nk) + scene.shape, dtype=bool)
        vfields = np.zeros((nt, nk) + scene.shape, dtype=np.float32) if store_v else None
        for ti, fi in enumerate(indices):
            frame = field.frames[fi]
            for k in range(nk):
                geom = self.geometry(k)
                v = self.waypoint_visibility(k, frame)
                wmaps[ti, k] = waypoint_map(v, geom.distance, scene.obstruction)
                if store_v:
                    vfields[ti, k] = v
        tmaps = wmaps.any(axis=1)
        aggregate = tmaps.all(axis=0)
        # the ASET scan runs over the requested time set T
        order = np.argsort(requested, kind="stable")
        aset = aset_map(tmaps[order], _dedup_times(requested[order]))
        return VisMapResult(
            times=matched,
            requested_times=requested,
            frame_indices=indices,
            waypoint_maps=wmaps,
            time_maps=tmaps,
            aggregate=aggregate,
            aset=aset,
            vmax=self.params.vmax,
            v_fields=vfields,
        )


def _dedup_times(times):
    """Make a sorted time vector strictly increasing by a tiny nudge.

    Duplicate frame selections are allowed; the ASET scan only needs strict
    ordering, so repeated values are separated by the smallest representable
    step.
    """
    out = np.asarray(times, dtype=float).copy()
    for n in range(1, out.size):
        if out[n] <= out[n - 1]:
            out[n] = np.nextafter(out[n - 1], np.inf)
    return out
