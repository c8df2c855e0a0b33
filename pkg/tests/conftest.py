"""Shared fixture writers and independent oracles for the test suite.

The binary/text writers here are deliberately separate implementations from
the package parsers: round-trip tests treat them as the format oracle.
"""

import struct

import numpy as np
import pytest

from vismap import SceneDescription

LABEL = 30


# ---------------------------------------------------------------------------
# .sf writer (Fortran sequential records)
# ---------------------------------------------------------------------------

def record(payload, order="<"):
    marker = struct.pack(order + "i", len(payload))
    return marker + payload + marker


def sf_bytes(frames, bounds=(0, 0, 0, 0, 0, 0), quantity="EXTINCTION COEFFICIENT",
             short="ext_coef", units="1/m", order="<"):
    """Serialize a slice file; frames is a list of (time, values) pairs."""
    out = b""
    for label in (quantity, short, units):
        out += record(label.ljust(LABEL).encode("ascii"), order)
    out += record(struct.pack(order + "6i", *bounds), order)
    for t, values in frames:
        out += record(struct.pack(order + "f", t), order)
        values = np.asarray(values, dtype=np.float32)
        out += record(values.astype(np.dtype(order + "f4")).tobytes(), order)
    return out


# ---------------------------------------------------------------------------
# .smv writer
# ---------------------------------------------------------------------------

def trn_block(label, origin, n, d):
    lines = [label, " 0"]
    for k in range(n + 1):
        lines.append(f" {k} {origin + k * d:.6f}")
    return lines


def smv_text(meshes, obstructions=None, slices=None):
    """Serialize the supported .smv subset.

    meshes: list of dicts with keys name, origin (x0,y0,z0), shape
    (nx,ny,nz), cell (dx,dy,dz). obstructions: dict mesh_index -> list of
    6-tuples (physical bounds). slices: list of dicts with keys mesh (1-based),
    filename, quantity, short, units, bounds (6 ints).
    """
    obstructions = obstructions or {}
    slices = slices or []
    lines = ["SMV fixture", ""]
    for mi, m in enumerate(meshes):
        nx, ny, nz = m["shape"]
        x0, y0, z0 = m["origin"]
        dx, dy, dz = m["cell"]
        lines += [f"GRID {m['name']}", f" {nx} {ny} {nz} 0", ""]
        lines += trn_block("TRNX", x0, nx, dx) + [""]
        lines += trn_block("TRNY", y0, ny, dy) + [""]
        lines += trn_block("TRNZ", z0, nz, dz) + [""]
        boxes = obstructions.get(mi, [])
        lines += ["OBST", f" {len(boxes)}"]
        for b in boxes:
            lines.append(" " + " ".join(f"{v:.6f}" for v in b) + " 1")
        lines.append("")
    for s in slices:
        b = " ".join(str(v) for v in s["bounds"])
        lines += [
            f"SLCF {s['mesh']} # STRUCTURED & {b}",
            f" {s['filename']}",
            f" {s['quantity']}",
            f" {s.get('short', 'q')}",
            f" {s.get('units', '1/m')}",
            "",
        ]
    return "\n".join(lines) + "\n"


def simple_mesh(name="m0", origin=(0.0, 0.0, 0.0), shape=(10, 10, 5),
                cell=(0.1, 0.1, 1.0)):
    return {"name": name, "origin": origin, "shape": shape, "cell": cell}


# ---------------------------------------------------------------------------
# scenes and fields
# ---------------------------------------------------------------------------

def make_scene(nx, ny, dx=1.0, obst=(), origin=(0.0, 0.0), eval_height=2.0):
    mask = np.zeros((nx, ny), dtype=bool)
    for i, j in obst:
        mask[i, j] = True
    return SceneDescription(
        origin=origin, cell_size=(dx, dx), shape=(nx, ny),
        obstruction=mask, eval_height=eval_height,
    )


# ---------------------------------------------------------------------------
# exact segment-rectangle occlusion oracle
# ---------------------------------------------------------------------------

def segment_hits_box(p0, p1, lo, hi, shrink=1e-9):
    """True if the open segment p0-p1 passes through the box interior."""
    lo = (lo[0] + shrink, lo[1] + shrink)
    hi = (hi[0] - shrink, hi[1] - shrink)
    t0, t1 = 0.0, 1.0
    for ax in (0, 1):
        d = p1[ax] - p0[ax]
        if abs(d) < 1e-15:
            if p0[ax] <= lo[ax] or p0[ax] >= hi[ax]:
                return False
            continue
        ta = (lo[ax] - p0[ax]) / d
        tb = (hi[ax] - p0[ax]) / d
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 >= t1:
            return False
    return True


def exact_unconcealed(scene, waypoint_cell, radius=np.inf):
    """Per-cell brute-force concealment via segment-rectangle intersection."""
    O = scene.obstruction
    nx, ny = O.shape
    dx = scene.dx
    x0, y0 = scene.origin
    src = scene.cell_center(*waypoint_cell)
    walls = [
        (
            (x0 + i * dx, y0 + j * dx),
            (x0 + (i + 1) * dx, y0 + (j + 1) * dx),
        )
        for i, j in np.argwhere(O)
    ]
    U = np.zeros((nx, ny), dtype=bool)
    for i in range(nx):
        for j in range(ny):
            if O[i, j]:
                continue
            dst = scene.cell_center(i, j)
            if np.hypot(dst[0] - src[0], dst[1] - src[1]) > radius:
                continue
            U[i, j] = not any(
                segment_hits_box(src, dst, lo, hi) for lo, hi in walls
            )
    U[waypoint_cell] = not O[waypoint_cell]
    return U


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
