"""Waypoint-based visibility and ASET maps for fire-simulation data."""

from .core import (
    ASET_NEVER,
    PathAverager,
    VisibilityEngine,
    VisParams,
    aggregate_time,
    aset_map,
    combine_waypoints,
    distance_matrix,
    mean_extinction,
    select_frames,
    view_angle_matrix,
    visibility_matrix,
    waypoint_map,
)
from .errors import (
    ComputeError,
    ConfigError,
    FormatError,
    OutputError,
    ParseError,
    VismapError,
)
from .grid import (
    FieldSeries,
    SceneDescription,
    VisMapResult,
    Waypoint,
    WaypointFields,
    assemble_scene,
    sigma_from_density,
    stitch_field,
)
from .raycast import bresenham, compute_unconcealed, first_collision, thick_line

__version__ = "0.1.0"

__all__ = [
    "ASET_NEVER",
    "ComputeError",
    "ConfigError",
    "FieldSeries",
    "FormatError",
    "OutputError",
    "ParseError",
    "PathAverager",
    "SceneDescription",
    "VisMapResult",
    "VisParams",
    "VisibilityEngine",
    "VismapError",
    "Waypoint",
    "WaypointFields",
    "aggregate_time",
    "aset_map",
    "assemble_scene",
    "bresenham",
    "combine_waypoints",
    "compute_unconcealed",
    "distance_matrix",
    "first_collision",
    "mean_extinction",
    "select_frames",
    "sigma_from_density",
    "stitch_field",
    "thick_line",
    "view_angle_matrix",
    "visibility_matrix",
    "waypoint_map",
]
