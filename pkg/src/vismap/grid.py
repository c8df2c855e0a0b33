"""Global scene raster, smoke field series and waypoint definitions.

All rasters are numpy arrays indexed ``[i, j]`` where ``i`` runs along x and
``j`` along y, i.e. shape ``(nx, ny)``. Physical coordinates of a cell center
are ``x0 + (i + 0.5) * dx`` and ``y0 + (j + 0.5) * dy``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ComputeError, ConfigError

DEFAULT_EVAL_HEIGHT = 2.0
DEFAULT_MASS_EXTINCTION = 8700.0  # m2/kg, flaming combustion soot at 633 nm


@dataclass(frozen=True)
class SceneDescription:
    """Uniform 2D floor grid with an obstruction mask at the evaluation height."""

    origin: tuple  # (x0, y0) in m
    cell_size: tuple  # (dx, dy) in m
    shape: tuple  # (nx, ny) cells
    obstruction: np.ndarray  # bool, shape (nx, ny)
    eval_height: float = DEFAULT_EVAL_HEIGHT

    def __post_init__(self):
        nx, ny = self.shape
        dx, dy = self.cell_size
        if nx < 1 or ny < 1:
            raise ConfigError(f"grid shape must be at least 1x1, got {nx}x{ny}")
        if not np.isclose(dx, dy, rtol=1e-9):
            raise ConfigError(f"cells must be square, got dx={dx} dy={dy}")
        mask = np.asarray(self.obstruction, dtype=bool)
        if mask.shape != (nx, ny):
            raise ConfigError(
                f"obstruction mask shape {mask.shape} does not match grid {self.shape}"
            )
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "obstruction", mask)

    @property
    def nx(self):
        return self.shape[0]

    @property
    def ny(self):
        return self.shape[1]

    @property
    def dx(self):
        return self.cell_size[0]

    def x_centers(self):
        x0 = self.origin[0]
        return x0 + (np.arange(self.nx) + 0.5) * self.cell_size[0]

    def y_centers(self):
        y0 = self.origin[1]
        return y0 + (np.arange(self.ny) + 0.5) * self.cell_size[1]

    def cell_of(self, x, y):
        """Grid indices of the cell containing physical point (x, y)."""
        i = int(np.floor((x - self.origin[0]) / self.cell_size[0]))
        j = int(np.floor((y - self.origin[1]) / self.cell_size[1]))
        return i, j

    def contains(self, x, y):
        i, j = self.cell_of(x, y)
        return 0 <= i < self.nx and 0 <= j < self.ny

    def cell_center(self, i, j):
        return (
            self.origin[0] + (i + 0.5) * self.cell_size[0],
            self.origin[1] + (j + 0.5) * self.cell_size[1],
        )


@dataclass(frozen=True)
class FieldSeries:
    """Time series of extinction-coefficient rasters at the evaluation height."""

    times: np.ndarray  # s, strictly increasing
    frames: np.ndarray  # 1/m, shape (nt, nx, ny)
    mass_extinction: float = DEFAULT_MASS_EXTINCTION

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        frames = np.asarray(self.frames)
        if frames.ndim != 3 or frames.shape[0] != times.size:
            raise ComputeError(
                f"frames shape {frames.shape} does not match {times.size} time points"
            )
        if times.size and np.any(np.diff(times) <= 0):
            raise ComputeError("frame times must be strictly increasing")
        if frames.size and frames.min() < 0:
            raise ComputeError("extinction coefficients must be non-negative")
        times.setflags(write=False)
        frames = frames.copy()
        frames.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "frames", frames)

    @property
    def grid_shape(self):
        return self.frames.shape[1:]


@dataclass(frozen=True)
class Waypoint:
    """Exit sign modeled as a point target.

    ``alpha`` is the rotation of the sign's observation normal in degrees in
    the global z-plane; ``None`` models a sign visible from all directions
    (no view-angle attenuation).
    """

    id: int
    x: float
    y: float
    c: float = 3.0  # visibility factor, ~3 reflecting / ~8 light emitting
    alpha: float | None = 0.0

    def __post_init__(self):
        if self.c <= 0:
            raise ConfigError(f"waypoint {self.id}: visibility factor must be > 0")


@dataclass
class WaypointFields:
    """Time-independent per-waypoint geometry rasters."""

    distance: np.ndarray  # m
    view_factor: np.ndarray  # in [0, 1]
    unconcealed: np.ndarray  # bool
    active: np.ndarray  # bool, cells with distance <= vmax


@dataclass
class VisMapResult:
    """Maps produced by one evaluation run."""

    times: np.ndarray  # evaluated times (frame times after matching)
    requested_times: np.ndarray
    frame_indices: np.ndarray
    waypoint_maps: np.ndarray  # bool, (nt, nk, nx, ny)
    time_maps: np.ndarray  # bool, (nt, nx, ny), OR over waypoints
    aggregate: np.ndarray  # bool, (nx, ny), AND over times
    aset: np.ndarray  # s, +inf where the criterion always holds
    vmax: float
    v_fields: np.ndarray | None = None  # (nt, nk, nx, ny), optional


def assemble_scene(smv, eval_height=DEFAULT_EVAL_HEIGHT):
    """Build the global floor grid from a parsed Smokeview scene.

    All meshes must share the cell size in x and y. Cells not covered by any
    mesh are marked obstructed, as are cells whose center lies inside an
    obstruction box whose z extent contains the evaluation height.
    """
    if not smv.meshes:
        raise ComputeError("scene has no meshes")
    dxs = [m.dx for m in smv.meshes] + [m.dy for m in smv.meshes]
    dx = dxs[0]
    if not np.allclose(dxs, dx, rtol=1e-6):
        raise ComputeError(
            "unsupported layout: meshes have differing cell sizes "
            + str(sorted(set(round(d, 9) for d in dxs)))
        )
    if not any(m.z[0] <= eval_height <= m.z[-1] for m in smv.meshes):
        raise ConfigError(
            f"evaluation height {eval_height} m outside all mesh z-ranges"
        )

    x0 = min(m.x[0] for m in smv.meshes)
    y0 = min(m.y[0] for m in smv.meshes)
    x1 = max(m.x[-1] for m in smv.meshes)
    y1 = max(m.y[-1] for m in smv.meshes)
    nx = int(round((x1 - x0) / dx))
    ny = int(round((y1 - y0) / dx))

    mask = np.ones((nx, ny), dtype=bool)  # uncovered cells stay obstructed
    for m in smv.meshes:
        i0 = int(round((m.x[0] - x0) / dx))
        j0 = int(round((m.y[0] - y0) / dx))
        mask[i0 : i0 + m.nx, j0 : j0 + m.ny] = False

    for box in smv.obstructions:
        bx0, bx1, by0, by1, bz0, bz1 = box.bounds
        if not (bz0 <= eval_height <= bz1):
            continue
        # cell-center membership: the box must cover the center to obstruct
        i0 = int(np.ceil((bx0 - x0) / dx - 0.5))
        i1 = int(np.floor((bx1 - x0) / dx - 0.5))
        j0 = int(np.ceil((by0 - y0) / dx - 0.5))
        j1 = int(np.floor((by1 - y0) / dx - 0.5))
        i0, j0 = max(i0, 0), max(j0, 0)
        i1, j1 = min(i1, nx - 1), min(j1, ny - 1)
        if i0 <= i1 and j0 <= j1:
            mask[i0 : i1 + 1, j0 : j1 + 1] = True

    return SceneDescription(
        origin=(x0, y0),
        cell_size=(dx, dx),
        shape=(nx, ny),
        obstruction=mask,
        eval_height=eval_height,
    )


def stitch_field(scene, pieces, time_tolerance=1e-6,
                 mass_extinction=DEFAULT_MASS_EXTINCTION):
    """Merge per-mesh slice data into one global FieldSeries.

    ``pieces`` is a list of ``(mesh_origin_xy, times, frames)`` tuples where
    ``frames`` has shape (nt, mesh_nx, mesh_ny) with cell-centered values.
    Every stitched value is copied verbatim from its owning mesh.
    """
    if not pieces:
        raise ComputeError("no slice data to stitch")
    ref_times = np.asarray(pieces[0][1], dtype=float)
    for origin, times, _ in pieces[1:]:
        times = np.asarray(times, dtype=float)
        if times.shape != ref_times.shape or np.any(
            np.abs(times - ref_times) > time_tolerance
        ):
            raise ComputeError(
                f"slice time vectors differ beyond {time_tolerance} s "
                f"for mesh at {origin}"
            )
    nt = ref_times.size
    out = np.zeros((nt, scene.nx, scene.ny), dtype=np.float32)
    dx = scene.dx
    for (mx0, my0), _, frames in pieces:
        frames = np.asarray(frames)
        i0 = int(round((mx0 - scene.origin[0]) / dx))
        j0 = int(round((my0 - scene.origin[1]) / dx))
        _, mnx, mny = frames.shape
        if i0 < 0 or j0 < 0 or i0 + mnx > scene.nx or j0 + mny > scene.ny:
            raise ComputeError(
                f"mesh at ({mx0}, {my0}) does not fit into the global grid"
            )
        out[:, i0 : i0 + mnx, j0 : j0 + mny] = frames
    return FieldSeries(ref_times, out, mass_extinction=mass_extinction)


def sigma_from_density(density, mass_extinction=DEFAULT_MASS_EXTINCTION):
    """Extinction coefficient (1/m) from soot mass density (kg/m3)."""
    density = np.asarray(density)
    if density.size and density.min() < 0:
        raise ComputeError("smoke density must be non-negative")
    return density * mass_extinction
