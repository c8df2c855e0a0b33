"""Serialization of result rasters: PGM/PNG images, CSV tables and
matplotlib report figures.

Images are one pixel per cell with the minimum-(x, y) cell at the
bottom-left; output bytes are deterministic for identical input.
"""

from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib import colors as mcolors  # noqa: E402
import numpy as np  # noqa: E402

from .errors import ConfigError, OutputError  # noqa: E402

FAIL, PASS, OBSTRUCTED = 0, 1, 2
ASET_SENTINEL_TOKEN = "never"


@dataclass(frozen=True)
class RenderStyle:
    pass_color: tuple = (40, 170, 40)
    fail_color: tuple = (200, 40, 40)
    obstructed_color: tuple = (70, 70, 70)
    colormap: str = "viridis"
    sentinel_color: tuple = (40, 60, 150)

    def gray_levels(self):
        """Luma per tri-state value for PGM output, index FAIL/PASS/OBSTRUCTED."""
        levels = [_luma(self.fail_color), _luma(self.pass_color),
                  _luma(self.obstructed_color)]
        if len(set(levels)) != 3:
            raise ConfigError("render style colors collapse to equal gray levels")
        return np.array(levels, dtype=np.uint8)

    def rgb_table(self):
        return (
            np.array(
                [self.fail_color, self.pass_color, self.obstructed_color],
                dtype=np.uint8,
            )
        )


DEFAULT_STYLE = RenderStyle()


def _luma(rgb):
    r, g, b = rgb
    return int(round(0.299 * r + 0.587 * g + 0.114 * b))


def tri_state(passed, obstruction):
    """Tri-state raster from a boolean map and the obstruction mask."""
    out = np.where(passed, PASS, FAIL).astype(np.int8)
    out[obstruction] = OBSTRUCTED
    return out


def _to_image_rows(raster):
    """(nx, ny) cell raster -> image rows, top row at maximum y."""
    return np.asarray(raster).T[::-1]


def write_map_image(raster, style, path, png=False):
    """Write a boolean or tri-state raster as binary PGM (and optional PNG).

    The PGM encodes the style colors as distinct gray levels; the optional
    PNG sibling carries the full colors.
    """
    raster = np.asarray(raster)
    if raster.dtype == bool:
        raster = raster.astype(np.int8)
    if raster.min() < 0 or raster.max() > OBSTRUCTED:
        raise OutputError("map raster values must be tri-state (0, 1, 2)")
    img = _to_image_rows(raster)
    gray = style.gray_levels()[img]
    header = f"P5\n{gray.shape[1]} {gray.shape[0]}\n255\n".encode("ascii")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(gray, dtype=np.uint8).tobytes())
        if png:
            rgb = style.rgb_table()[img]
            plt.imsave(str(path) + ".png" if not str(path).endswith(".pgm")
                       else str(path)[:-4] + ".png", rgb)
    except OSError as exc:
        raise OutputError(f"cannot write image {path}: {exc}")


def _format_value(v):
    if np.isinf(v):
        return ASET_SENTINEL_TOKEN
    return f"{v:.6g}"


def write_field_csv(scene, raster, path):
    """Write a scalar raster as `x,y,value` rows at cell centers."""
    raster = np.asarray(raster)
    if raster.shape != scene.shape:
        raise OutputError(
            f"raster shape {raster.shape} does not match scene {scene.shape}"
        )
    xs = scene.x_centers()
    ys = scene.y_centers()
    lines = ["x,y,value"]
    for j in range(scene.ny):
        for i in range(scene.nx):
            lines.append(
                f"{xs[i]:.6g},{ys[j]:.6g},{_format_value(raster[i, j])}"
            )
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write table {path}: {exc}")


def write_aset(scene, aset, path):
    """ASET raster as CSV; the never-fails sentinel becomes `never`."""
    write_field_csv(scene, aset, path)


def read_field_csv(path):
    """Parse a written field CSV back into (x, y, value) float arrays."""
    xs, ys, vs = [], [], []
    with open(path) as fh:
        next(fh)
        for line in fh:
            x, y, v = line.strip().split(",")
            xs.append(float(x))
            ys.append(float(y))
            vs.append(np.inf if v == ASET_SENTINEL_TOKEN else float(v))
    return np.array(xs), np.array(ys), np.array(vs)


# ---------------------------------------------------------------------------
# matplotlib report figures
# ---------------------------------------------------------------------------

def _extent(scene):
    x0, y0 = scene.origin
    return (x0, x0 + scene.nx * scene.cell_size[0],
            y0, y0 + scene.ny * scene.cell_size[1])


def _save(fig, path):
    try:
        fig.savefig(path, dpi=120)
    except OSError as exc:
        raise OutputError(f"cannot write figure {path}: {exc}")
    finally:
        plt.close(fig)


def plot_map_figure(scene, tri, path, style=DEFAULT_STYLE, title=None):
    """Render a tri-state map as a colored floor-plan figure."""
    cmap = mcolors.ListedColormap(np.array(style.rgb_table()) / 255.0)
    fig, ax = plt.subplots(figsize=(7, 7 * scene.ny / scene.nx))
    ax.imshow(
        _to_image_rows(tri), cmap=cmap, vmin=0, vmax=2,
        extent=_extent(scene), interpolation="nearest",
    )
    ax.set_xlabel("x / m")
    ax.set_ylabel("y / m")
    if title:
        ax.set_title(title)
    _save(fig, path)


def plot_field_figure(scene, raster, path, style=DEFAULT_STYLE, label=None,
                      title=None, vmax=None):
    """Render a continuous raster (visibility, extinction) as a figure."""
    fig, ax = plt.subplots(figsize=(7, 7 * scene.ny / scene.nx))
    im = ax.imshow(
        _to_image_rows(raster), cmap=style.colormap, vmin=0, vmax=vmax,
        extent=_extent(scene), interpolation="nearest",
    )
    fig.colorbar(im, ax=ax, label=label)
    ax.set_xlabel("x / m")
    ax.set_ylabel("y / m")
    if title:
        ax.set_title(title)
    _save(fig, path)


def plot_aset_figure(scene, aset, path, style=DEFAULT_STYLE, title=None):
    """ASET raster figure; never-failing cells use the sentinel color."""
    finite = np.isfinite(aset)
    shown = np.where(finite, aset, np.nan)
    cmap = plt.get_cmap(style.colormap).copy()
    cmap.set_bad(np.array(style.sentinel_color) / 255.0)
    fig, ax = plt.subplots(figsize=(7, 7 * scene.ny / scene.nx))
    im = ax.imshow(
        _to_image_rows(shown), cmap=cmap,
        extent=_extent(scene), interpolation="nearest",
    )
    fig.colorbar(im, ax=ax, label="ASET / s")
    ax.set_xlabel("x / m")
    ax.set_ylabel("y / m")
    if title:
        ax.set_title(title)
    _save(fig, path)
