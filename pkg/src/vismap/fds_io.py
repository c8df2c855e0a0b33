"""Readers for Smokeview/FDS output and the portable fallback format.

Supported subset of the ``.smv`` index file: GRID, TRNX/TRNY/TRNZ, OBST and
SLCF/SLCC blocks. ``.sf`` slice files are Fortran unformatted sequential
streams; byte order is auto-detected per file from the first record marker.

The portable format carries the same information without any FDS tooling:

* scene (text): header line ``grid nx ny x0 y0 dx dy`` followed by
  ``obst i j`` lines, one per obstructed cell;
* field (binary): ASCII first line ``frames n t0 t1 ...`` followed by
  n rasters of nx*ny little-endian float32, row-major with j as the
  outer index.
"""

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ComputeError, ConfigError, FormatError, ParseError
from .grid import (
    DEFAULT_EVAL_HEIGHT,
    FieldSeries,
    SceneDescription,
    assemble_scene,
    stitch_field,
)

LABEL_LEN = 30


# ---------------------------------------------------------------------------
# .smv geometry index
# ---------------------------------------------------------------------------

@dataclass
class MeshInfo:
    name: str
    x: np.ndarray  # node coordinates, length nx + 1
    y: np.ndarray
    z: np.ndarray

    @property
    def nx(self):
        return len(self.x) - 1

    @property
    def ny(self):
        return len(self.y) - 1

    @property
    def nz(self):
        return len(self.z) - 1

    @property
    def dx(self):
        return float((self.x[-1] - self.x[0]) / self.nx)

    @property
    def dy(self):
        return float((self.y[-1] - self.y[0]) / self.ny)


@dataclass
class ObstBox:
    bounds: tuple  # x0, x1, y0, y1, z0, z1 in m
    index_bounds: tuple  # i0, i1, j0, j1, k0, k1 cell indices, upper exclusive
    mesh: int


@dataclass
class SliceRef:
    filename: str
    mesh: int
    quantity: str
    short_name: str
    units: str
    bounds: tuple  # i1, i2, j1, j2, k1, k2 node indices


@dataclass
class SmvScene:
    meshes: list = field(default_factory=list)
    obstructions: list = field(default_factory=list)
    slice_refs: list = field(default_factory=list)


def _cell_range(nodes, lo, hi):
    """Cell-index interval [i0, i1) covered by the physical interval [lo, hi]."""
    n = len(nodes) - 1
    i0 = int(np.clip(np.searchsorted(nodes, lo, side="right") - 1, 0, n))
    i1 = int(np.clip(np.searchsorted(nodes, hi, side="left"), 0, n))
    return i0, max(i1, i0)


def _read_trn(lines, pos, expected, label):
    """Parse one TRN block: a count of CC lines to skip, then node table."""
    start = pos
    if pos >= len(lines):
        raise ParseError(f"unexpected end of file in {label} block", line=start)
    try:
        skip = int(lines[pos].split()[0])
    except (ValueError, IndexError):
        raise ParseError(f"bad {label} header", line=pos + 1)
    pos += 1 + skip
    values = []
    for n in range(expected + 1):
        if pos >= len(lines):
            raise ParseError(f"truncated {label} table", line=pos)
        parts = lines[pos].split()
        if len(parts) < 2:
            raise ParseError(f"bad {label} table entry", line=pos + 1)
        values.append(float(parts[1]))
        pos += 1
    values = np.asarray(values)
    if np.any(np.diff(values) <= 0):
        raise ParseError(f"{label} coordinates not strictly increasing", line=start)
    return values, pos


def parse_smv(text):
    """Parse a Smokeview index file into meshes, obstructions and slice refs.

    Unrecognized blocks are skipped. Obstruction grid-index bounds are
    derived from the mesh coordinate tables by binary search.
    """
    lines = text.splitlines()
    scene = SmvScene()
    dims = []  # (nx, ny, nz) per mesh, filled from GRID, consumed by TRN
    trn_done = []
    pos = 0
    while pos < len(lines):
        parts = lines[pos].split()
        key = parts[0] if parts else ""
        if key == "GRID":
            name = parts[1] if len(parts) > 1 else f"mesh{len(scene.meshes)}"
            if pos + 1 >= len(lines):
                raise ParseError("truncated GRID block", line=pos + 1)
            d = lines[pos + 1].split()
            if len(d) < 3:
                raise ParseError("bad GRID dimensions", line=pos + 2)
            dims.append(tuple(int(v) for v in d[:3]))
            scene.meshes.append(MeshInfo(name, None, None, None))
            trn_done.append(set())
            pos += 2
        elif key in ("TRNX", "TRNY", "TRNZ"):
            if not scene.meshes:
                raise ParseError("missing GRID block before " + key, line=pos + 1)
            axis = "xyz"[("TRNX", "TRNY", "TRNZ").index(key)]
            mesh = scene.meshes[-1]
            expected = dims[-1]["xyz".index(axis)]
            values, pos = _read_trn(lines, pos + 1, expected, key)
            setattr(mesh, axis, values)
            trn_done[-1].add(axis)
        elif key == "OBST":
            if not scene.meshes or trn_done[-1] != {"x", "y", "z"}:
                raise ParseError(
                    "missing GRID block before OBST", line=pos + 1
                )
            mesh = scene.meshes[-1]
            if pos + 1 >= len(lines):
                raise ParseError("truncated OBST block", line=pos + 1)
            try:
                count = int(lines[pos + 1].split()[0])
            except (ValueError, IndexError):
                raise ParseError("bad OBST count", line=pos + 2)
            pos += 2
            for n in range(count):
                if pos >= len(lines):
                    raise ParseError(
                        f"OBST count mismatch: expected {count} boxes, "
                        f"found {n}", line=pos
                    )
                parts = lines[pos].split()
                try:
                    b = tuple(float(v) for v in parts[:6])
                except ValueError:
                    b = ()
                if len(b) < 6:
                    raise ParseError(
                        f"OBST count mismatch: expected {count} boxes, "
                        f"found {n}", line=pos + 1
                    )
                i0, i1 = _cell_range(mesh.x, b[0], b[1])
                j0, j1 = _cell_range(mesh.y, b[2], b[3])
                k0, k1 = _cell_range(mesh.z, b[4], b[5])
                scene.obstructions.append(
                    ObstBox(b, (i0, i1, j0, j1, k0, k1),
                            mesh=len(scene.meshes) - 1)
                )
                pos += 1
        elif key in ("SLCF", "SLCC"):
            header = parts[1:]
            mesh_no = None
            for tok in header:
                try:
                    mesh_no = int(tok)
                    break
                except ValueError:
                    continue
            if mesh_no is None or not 1 <= mesh_no <= len(scene.meshes):
                raise ParseError(f"bad {key} mesh number", line=pos + 1)
            bounds = None
            if "&" in header:
                tail = header[header.index("&") + 1 :]
                if len(tail) >= 6:
                    bounds = tuple(int(v) for v in tail[:6])
            if bounds is None:
                raise ParseError(f"{key} line lacks slice bounds", line=pos + 1)
            if pos + 4 >= len(lines):
                raise ParseError(f"truncated {key} block", line=pos + 1)
            scene.slice_refs.append(
                SliceRef(
                    filename=lines[pos + 1].strip(),
                    mesh=mesh_no - 1,
                    quantity=lines[pos + 2].strip(),
                    short_name=lines[pos + 3].strip(),
                    units=lines[pos + 4].strip(),
                    bounds=bounds,
                )
            )
            if not scene.slice_refs[-1].quantity:
                raise ParseError(f"{key} block has empty quantity", line=pos + 3)
            pos += 5
        else:
            pos += 1

    if not scene.meshes:
        raise ParseError("missing GRID block", line=1)
    for m, done in zip(scene.meshes, trn_done):
        if done != {"x", "y", "z"}:
            raise ParseError(f"mesh {m.name} lacks TRN coordinate tables")
    return scene


# ---------------------------------------------------------------------------
# .sf binary slice files
# ---------------------------------------------------------------------------

@dataclass
class SliceHeader:
    quantity: str
    short_name: str
    units: str
    index_bounds: tuple  # i1, i2, j1, j2, k1, k2

    @property
    def n_values(self):
        i1, i2, j1, j2, k1, k2 = self.index_bounds
        return (i2 - i1 + 1) * (j2 - j1 + 1) * (k2 - k1 + 1)


@dataclass
class RawFrame:
    time: float
    values: np.ndarray  # flat float32, Fortran order (first index fastest)


@dataclass
class SliceData:
    header: SliceHeader
    frames: list
    dropped_frames: int = 0  # truncated trailing frames discarded on read
    byte_order: str = "<"


class _Truncated(Exception):
    pass


class _RecordStream:
    """Fortran sequential records: 4-byte length marker on both sides."""

    def __init__(self, data, order):
        self.data = data
        self.order = order
        self.pos = 0

    def at_end(self):
        return self.pos >= len(self.data)

    def next(self):
        data, pos = self.data, self.pos
        if len(data) - pos < 4:
            raise _Truncated
        (n,) = struct.unpack_from(self.order + "i", data, pos)
        if n < 0:
            raise FormatError(f"negative record length {n}", offset=pos)
        if len(data) - pos < 8 + n:
            raise _Truncated
        (trailer,) = struct.unpack_from(self.order + "i", data, pos + 4 + n)
        if trailer != n:
            raise FormatError(
                f"record markers disagree ({n} != {trailer})", offset=pos + 4 + n
            )
        self.pos = pos + 8 + n
        return data[pos + 4 : pos + 4 + n]


def detect_endianness(data):
    """Byte-order tag ('<' or '>') from the first record marker (must be 30)."""
    if len(data) < 4:
        raise FormatError("file too short for a record marker", offset=0)
    le = struct.unpack_from("<i", data, 0)[0]
    if le == LABEL_LEN:
        return "<"
    be = struct.unpack_from(">i", data, 0)[0]
    if be == LABEL_LEN:
        return ">"
    raise FormatError(
        f"first record marker is {le} (LE) / {be} (BE), expected {LABEL_LEN}",
        offset=0,
    )


def _label(raw):
    return raw.decode("ascii", errors="replace").rstrip()


def read_slice(data):
    """Parse a binary slice file into a header and its complete frames.

    A truncated trailing frame is dropped and counted in
    ``SliceData.dropped_frames``; marker mismatches raise :class:`FormatError`
    with the byte offset.
    """
    order = detect_endianness(data)
    stream = _RecordStream(data, order)
    labels = []
    try:
        for _ in range(3):
            rec = stream.next()
            if len(rec) != LABEL_LEN:
                raise FormatError(
                    f"label record of {len(rec)} bytes, expected {LABEL_LEN}",
                    offset=stream.pos,
                )
            labels.append(_label(rec))
        rec = stream.next()
    except _Truncated:
        raise FormatError("truncated header", offset=stream.pos)
    if len(rec) != 24:
        raise FormatError(
            f"bounds record of {len(rec)} bytes, expected 24", offset=stream.pos
        )
    bounds = struct.unpack(order + "6i", rec)
    header = SliceHeader(labels[0], labels[1], labels[2], bounds)
    i1, i2, j1, j2, k1, k2 = bounds
    if i1 > i2 or j1 > j2 or k1 > k2:
        raise FormatError(f"inverted slice bounds {bounds}")
    n = header.n_values

    frames = []
    dropped = 0
    while not stream.at_end():
        try:
            trec = stream.next()
            if len(trec) != 4:
                raise FormatError(
                    f"time record of {len(trec)} bytes, expected 4",
                    offset=stream.pos,
                )
            t = struct.unpack(order + "f", trec)[0]
            drec = stream.next()
        except _Truncated:
            dropped += 1
            break
        if len(drec) != 4 * n:
            raise FormatError(
                f"data record of {len(drec)} bytes, expected {4 * n}",
                offset=stream.pos,
            )
        values = np.frombuffer(drec, dtype=np.dtype(order + "f4")).astype(
            np.float32
        )
        frames.append(RawFrame(float(t), values))

    times = [f.time for f in frames]
    if any(b >= a for a, b in zip(times[1:], times)):
        raise FormatError("frame times not strictly increasing")
    return SliceData(header, frames, dropped_frames=dropped, byte_order=order)


def slice_to_cells(mesh, header, frames):
    """Cell-centered (nt, nx, ny) rasters from a horizontal slice of a mesh.

    Node-dimensioned data (nx+1, ny+1) follows the FDS convention of a
    duplicated leading slab; cell-dimensioned data (SLCC) is taken verbatim.
    """
    i1, i2, j1, j2, k1, k2 = header.index_bounds
    if k1 != k2:
        raise ComputeError("slice is not horizontal (k1 != k2)")
    ni, nj = i2 - i1 + 1, j2 - j1 + 1
    stack = np.stack(
        [f.values.reshape((ni, nj), order="F") for f in frames]
    ) if frames else np.zeros((0, ni, nj), dtype=np.float32)
    if (ni, nj) == (mesh.nx + 1, mesh.ny + 1):
        return stack[:, 1:, 1:]
    if (ni, nj) == (mesh.nx, mesh.ny):
        return stack
    raise ComputeError(
        f"slice dimensions {ni}x{nj} do not match mesh "
        f"{mesh.nx}x{mesh.ny} (nodes or cells)"
    )


# ---------------------------------------------------------------------------
# whole-case loading
# ---------------------------------------------------------------------------

def _match_quantity(a, b):
    return a.strip().lower() == b.strip().lower()


def load_fds_case(path, quantity="EXTINCTION COEFFICIENT",
                  eval_height=DEFAULT_EVAL_HEIGHT):
    """Load an FDS case directory (or .smv path) into (scene, field).

    For every mesh exactly one horizontal slice with the requested quantity
    at the plane closest to ``eval_height`` is read and stitched.
    """
    path = Path(path)
    if path.is_dir():
        candidates = sorted(path.glob("*.smv"))
        if len(candidates) != 1:
            raise ConfigError(
                f"expected exactly one .smv file in {path}, "
                f"found {len(candidates)}"
            )
        smv_path = candidates[0]
    else:
        smv_path = path
    smv = parse_smv(smv_path.read_text())
    scene = assemble_scene(smv, eval_height=eval_height)

    chosen = {}
    for ref in smv.slice_refs:
        if not _match_quantity(ref.quantity, quantity):
            continue
        k1, k2 = ref.bounds[4], ref.bounds[5]
        if k1 != k2:
            continue
        mesh = smv.meshes[ref.mesh]
        z = float(mesh.z[min(k1, mesh.nz)])
        dist = abs(z - eval_height)
        if ref.mesh not in chosen or dist < chosen[ref.mesh][0]:
            chosen[ref.mesh] = (dist, ref)
    missing = [m.name for i, m in enumerate(smv.meshes) if i not in chosen]
    if missing:
        raise ComputeError(
            "missing slice coverage for quantity "
            f"{quantity!r} on meshes: {', '.join(missing)}"
        )

    pieces = []
    for mesh_idx, (_, ref) in sorted(chosen.items()):
        mesh = smv.meshes[mesh_idx]
        data = read_slice((smv_path.parent / ref.filename).read_bytes())
        frames = slice_to_cells(mesh, data.header, data.frames)
        times = np.array([f.time for f in data.frames])
        pieces.append(((float(mesh.x[0]), float(mesh.y[0])), times, frames))
    field_series = stitch_field(scene, pieces)
    return scene, field_series


# ---------------------------------------------------------------------------
# portable fallback format
# ---------------------------------------------------------------------------

def parse_portable_scene(text, eval_height=DEFAULT_EVAL_HEIGHT):
    """Parse the portable text scene format into a SceneDescription."""
    header = None
    obst = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "grid":
            if len(parts) != 7:
                raise ParseError("grid header needs 6 values", line=lineno)
            nx, ny = int(parts[1]), int(parts[2])
            x0, y0, dx, dy = (float(v) for v in parts[3:])
            header = (nx, ny, x0, y0, dx, dy)
        elif parts[0] == "obst":
            if header is None:
                raise ParseError("obst line before grid header", line=lineno)
            if len(parts) != 3:
                raise ParseError("obst line needs two indices", line=lineno)
            i, j = int(parts[1]), int(parts[2])
            if not (0 <= i < header[0] and 0 <= j < header[1]):
                raise ParseError(
                    f"obst cell ({i}, {j}) outside grid", line=lineno
                )
            obst.append((i, j))
        else:
            raise ParseError(f"unknown directive {parts[0]!r}", line=lineno)
    if header is None:
        raise ParseError("missing grid header", line=1)
    nx, ny, x0, y0, dx, dy = header
    mask = np.zeros((nx, ny), dtype=bool)
    for i, j in obst:
        mask[i, j] = True
    return SceneDescription(
        origin=(x0, y0),
        cell_size=(dx, dy),
        shape=(nx, ny),
        obstruction=mask,
        eval_height=eval_height,
    )


def dump_portable_scene(scene):
    x0, y0 = scene.origin
    dx, dy = scene.cell_size
    lines = [f"grid {scene.nx} {scene.ny} {x0:.9g} {y0:.9g} {dx:.9g} {dy:.9g}"]
    for i, j in np.argwhere(scene.obstruction):
        lines.append(f"obst {i} {j}")
    return "\n".join(lines) + "\n"


def parse_portable_field(data, shape, mass_extinction=None):
    """Parse the portable binary field format for a grid of ``shape``."""
    nl = data.find(b"\n")
    if nl < 0:
        raise FormatError("portable field lacks a header line", offset=0)
    try:
        parts = data[:nl].decode("ascii").split()
    except UnicodeDecodeError:
        raise FormatError("portable field header is not ASCII", offset=0)
    if not parts or parts[0] != "frames":
        raise ParseError("portable field header must start with 'frames'", line=1)
    try:
        n = int(parts[1])
        times = [float(v) for v in parts[2 : 2 + n]]
    except (IndexError, ValueError):
        raise ParseError("bad portable field header", line=1)
    if len(times) != n:
        raise ParseError(
            f"portable field header lists {len(times)} times, expected {n}",
            line=1,
        )
    nx, ny = shape
    payload = data[nl + 1 :]
    expected = n * nx * ny * 4
    if len(payload) != expected:
        raise FormatError(
            f"portable field payload of {len(payload)} bytes does not match "
            f"{n} frames of {nx}x{ny} cells ({expected} bytes)",
            offset=nl + 1,
        )
    flat = np.frombuffer(payload, dtype="<f4")
    frames = flat.reshape((n, ny, nx)).transpose(0, 2, 1)  # j is outer
    kwargs = {}
    if mass_extinction is not None:
        kwargs["mass_extinction"] = mass_extinction
    return FieldSeries(np.asarray(times), frames, **kwargs)


def dump_portable_field(field_series):
    times = " ".join(f"{t:.9g}" for t in field_series.times)
    header = f"frames {field_series.times.size} {times}".rstrip() + "\n"
    frames = np.ascontiguousarray(
        field_series.frames.transpose(0, 2, 1), dtype="<f4"
    )
    return header.encode("ascii") + frames.tobytes()
