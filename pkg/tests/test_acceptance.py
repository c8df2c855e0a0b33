"""Acceptance suite: one test per top-level requirement.

Every test collects its checks and finishes by printing a single PASS/FAIL
summary line (shown with ``pytest -s``, and always part of the failure
message) before asserting the verdict.
"""

import time

import numpy as np

from vismap import (
    FieldSeries,
    VisibilityEngine,
    Waypoint,
    compute_unconcealed,
    distance_matrix,
    view_angle_matrix,
)
from vismap.core import mean_extinction, waypoint_map
from vismap.errors import FormatError
from vismap.fds_io import parse_smv, read_slice

from conftest import exact_unconcealed, make_scene, sf_bytes, smv_text

SEED = 20240824


def _verdict(label, failures, detail=""):
    ok = not failures
    extra = detail if ok else "; ".join(failures)
    line = f"{'PASS' if ok else 'FAIL'}: {label}" + (f" ({extra})" if extra else "")
    print(line, flush=True)
    assert ok, line


def test_homogeneous_smoke_pass_disc_and_runtime():
    # uniform extinction 0.3 1/m with a reflecting sign (C = 3) visible from
    # all directions: the pass region is the disc of radius C/sigma = 10 m,
    # up to cells within one cell diagonal of the boundary
    failures = []
    scene = make_scene(200, 200, dx=0.1)
    wp = Waypoint(0, 10.0, 10.0, c=3.0, alpha=None)
    field = FieldSeries(
        np.array([0.0]), np.full((1, 200, 200), 0.3, dtype=np.float32)
    )
    start = time.perf_counter()
    engine = VisibilityEngine(scene, [wp])
    result = engine.evaluate(field)
    elapsed = time.perf_counter() - start

    L = distance_matrix(scene, wp)
    expected = L <= 10.0
    mismatch = result.aggregate != expected
    diagonal = scene.dx * np.sqrt(2.0)
    outside_band = mismatch & (np.abs(L - 10.0) > diagonal)
    if outside_band.any():
        failures.append(
            f"{int(outside_band.sum())} cells misclassified beyond one cell "
            "diagonal of the disc boundary"
        )
    if elapsed >= 5.0:
        failures.append(f"runtime {elapsed:.2f} s, limit 5 s")
    _verdict(
        "homogeneous-smoke pass disc (200x200 at 10 cm)",
        failures,
        f"runtime {elapsed:.2f} s",
    )


def test_visibility_clamp_exact():
    # thin smoke with a light-emitting sign (C = 8): raw visibility 160 m is
    # clamped to exactly 30 m on every unconcealed cell
    failures = []
    scene = make_scene(40, 40, dx=0.5, obst=[(20, j) for j in range(8, 32)])
    wp = Waypoint(0, 5.25, 10.25, c=8.0, alpha=None)
    engine = VisibilityEngine(scene, [wp])
    geom = engine.geometry(0)
    v = engine.waypoint_visibility(0, np.full(scene.shape, 0.05))
    if not np.all(v[geom.unconcealed] == 30.0):
        failures.append("visibility is not exactly 30 m on an unconcealed cell")
    if not np.all(v[~geom.unconcealed] == 0.0):
        failures.append("a concealed or obstructed cell carries nonzero visibility")
    _verdict("visibility clamp at 30 m is exact", failures)


def _segment_mean(func, p0, p1, samples=1025):
    """Mean of an analytic field along the segment p0-p1 (trapezoid rule)."""
    t = np.linspace(0.0, 1.0, samples)
    xs = p0[0] + (p1[0] - p0[0]) * t
    ys = p0[1] + (p1[1] - p0[1]) * t
    return float(np.trapezoid(func(xs, ys), t))


def test_path_mean_matches_line_integral():
    # the arithmetic mean over the rasterized sight line approximates the
    # exact line-integral mean: < 2% relative error for paths of >= 20
    # cells, < 5% down to 5 cells; 1000 random pairs per field
    failures = []
    scene = make_scene(100, 100, dx=0.1)
    fields = {
        "linear": lambda x, y: 0.1 + 0.04 * x + 0.02 * y,
        "gaussian": lambda x, y: 0.1
        + 0.3 * np.exp(-((x - 5.0) ** 2 + (y - 3.5) ** 2) / (2 * 2.5**2)),
    }
    rng = np.random.default_rng(SEED)
    xc, yc = scene.x_centers(), scene.y_centers()
    worst = 0.0
    for name, func in fields.items():
        raster = func(xc[:, None], yc[None, :])
        checked = 0
        while checked < 1000:
            src = tuple(int(v) for v in rng.integers(0, 100, 2))
            dst = tuple(int(v) for v in rng.integers(0, 100, 2))
            n_cells = max(abs(dst[0] - src[0]), abs(dst[1] - src[1])) + 1
            if n_cells < 5:
                continue
            approx = mean_extinction(raster, src, dst)
            exact = _segment_mean(
                func, scene.cell_center(*src), scene.cell_center(*dst)
            )
            rel = abs(approx - exact) / abs(exact)
            limit = 0.02 if n_cells >= 20 else 0.05
            if rel > limit:
                failures.append(
                    f"{name} field, pair {src}->{dst} ({n_cells} cells): "
                    f"relative error {rel:.4f} > {limit}"
                )
                if len(failures) >= 5:
                    break
            worst = max(worst, rel)
            checked += 1
        if len(failures) >= 5:
            break
    _verdict(
        "path-mean extinction vs exact line integral",
        failures,
        f"worst relative error {worst:.4f} over 2x1000 pairs",
    )


def test_occlusion_matches_exact_oracle():
    # thick-ray concealment agrees with exact segment-rectangle intersection
    # on >= 98% of cells for random wall layouts, and the corner-connected
    # diagonal wall leaks for a thin ray but not for a 3-cell-thick one
    failures = []
    rng = np.random.default_rng(SEED)
    radius = 12.0  # the sight radius the pipeline actually uses (vmax)
    worst = 1.0
    for _ in range(25):
        nx = int(rng.integers(20, 41))
        ny = int(rng.integers(20, 41))
        mask = np.zeros((nx, ny), dtype=bool)
        for _ in range(int(rng.integers(2, 5))):
            length = int(rng.integers(4, 11))
            if rng.random() < 0.5:
                i = int(rng.integers(0, nx))
                j = int(rng.integers(0, max(1, ny - length)))
                mask[i, j : j + length] = True
            else:
                i = int(rng.integers(0, max(1, nx - length)))
                j = int(rng.integers(0, ny))
                mask[i : i + length, j] = True
        # the sign goes on a free cell clear of the walls by at least the
        # collision half-thickness
        ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        ok = ~mask
        for ci, cj in np.argwhere(mask):
            ok &= np.maximum(np.abs(ii - ci), np.abs(jj - cj)) >= 3
        free = np.argwhere(ok)
        if len(free) == 0:
            continue
        wp = tuple(int(v) for v in free[rng.integers(len(free))])
        scene = make_scene(
            nx, ny, dx=1.0, obst=[tuple(c) for c in np.argwhere(mask)]
        )
        U = compute_unconcealed(scene, wp, radius, thickness=3, targets="all")
        exact = exact_unconcealed(scene, wp, radius=radius)
        agree = float((U == exact).mean())
        worst = min(worst, agree)
        if agree < 0.98:
            failures.append(f"{nx}x{ny} layout: agreement {agree:.3f} < 0.98")

    scene = make_scene(12, 12, dx=1.0, obst=[(i, i) for i in range(1, 11)])
    thin = compute_unconcealed(scene, (8, 0), 100.0, thickness=1, targets="all")
    thick = compute_unconcealed(scene, (8, 0), 100.0, thickness=3, targets="all")
    if not thin[0, 7]:
        failures.append("thin ray does not leak through the staircase gap")
    if thick[0, 7]:
        failures.append("3-cell-thick ray still leaks through the staircase gap")
    ii, jj = np.meshgrid(np.arange(12), np.arange(12), indexing="ij")
    if (thick & (jj > ii + 1)).any():
        failures.append("thick rays reach cells beyond the diagonal barrier")
    _verdict(
        "occlusion vs exact segment-rectangle oracle",
        failures,
        f"worst layout agreement {worst:.3f}",
    )


def test_view_angle_factor():
    # cosine view-angle factor: 1 head-on, 0 at 90 degrees, cos(45) at 45
    # degrees, and non-increasing in the offset angle along a fixed radius
    failures = []
    scene = make_scene(41, 41, dx=1.0)
    wp = Waypoint(0, 20.5, 20.5, alpha=0.0)  # facing +y
    A = view_angle_matrix(scene, wp)
    if A[20, 30] != 1.0:
        failures.append(f"head-on factor is {A[20, 30]!r}, expected exactly 1")
    if A[30, 20] != 0.0:
        failures.append(f"90-degree factor is {A[30, 20]!r}, expected exactly 0")
    if abs(A[28, 28] - np.sqrt(0.5)) > 1e-6:
        failures.append(
            f"45-degree factor is {A[28, 28]:.8f}, expected cos(45 deg)"
        )

    L = distance_matrix(scene, wp)
    dy = (scene.y_centers() - wp.y)[None, :]
    with np.errstate(invalid="ignore"):
        theta = np.arccos(np.clip(np.where(L > 0, dy / np.where(L > 0, L, 1.0), 1.0), -1, 1))
    ring = (np.abs(L - 10.0) <= 0.75) & (L > 0)
    order = np.argsort(theta[ring], kind="stable")
    a_sorted = A[ring][order]
    if np.any(np.diff(a_sorted) > 1e-12):
        failures.append("factor increases with the offset angle along the arc")
    _verdict("view-angle factor values and monotonicity", failures)


def test_temporal_consistency():
    # a cell passes the aggregated map exactly when its failure time is the
    # "never" sentinel; denser smoke never passes more cells
    failures = []
    rng = np.random.default_rng(SEED)
    scene = make_scene(30, 30, dx=0.5, obst=[(15, j) for j in range(5, 25)])
    wps = [
        Waypoint(0, 3.25, 3.25, alpha=None),
        Waypoint(1, 12.25, 12.25, c=8.0, alpha=45.0),
    ]
    frames = (0.05 + 0.5 * rng.random((6, 30, 30))).astype(np.float32)
    field = FieldSeries(np.arange(6.0) * 10.0, frames)
    result = VisibilityEngine(scene, wps).evaluate(field)
    if not np.array_equal(np.isinf(result.aset), result.aggregate):
        failures.append(
            "never-failing cells disagree with the aggregated pass map"
        )

    engine = VisibilityEngine(scene, [wps[0]])
    geom = engine.geometry(0)
    violations = 0
    for _ in range(100):
        lo = 0.05 + 0.6 * rng.random(scene.shape)
        hi = lo + 0.6 * rng.random(scene.shape)
        m_lo = waypoint_map(
            engine.waypoint_visibility(0, lo), geom.distance, scene.obstruction
        )
        m_hi = waypoint_map(
            engine.waypoint_visibility(0, hi), geom.distance, scene.obstruction
        )
        if (m_hi & ~m_lo).any():
            violations += 1
    if violations:
        failures.append(
            f"{violations}/100 ordered field pairs violated antitonicity"
        )
    _verdict("temporal consistency and smoke antitonicity", failures)


def test_parser_round_trip_and_errors():
    # slice files round-trip bit-exactly in both byte orders, the eight-mesh
    # geometry index round-trips through the text parser, and truncated or
    # corrupt files raise clean errors
    failures = []
    rng = np.random.default_rng(SEED)
    bounds = (0, 8, 0, 6, 2, 2)
    frames = [
        (0.0, rng.random(63).astype(np.float32)),
        (1.5, rng.random(63).astype(np.float32)),
        (3.0, rng.random(63).astype(np.float32)),
    ]
    for order, tag in (("<", "little"), (">", "big")):
        data = sf_bytes(frames, bounds=bounds, order=order)
        sd = read_slice(data)
        rebuilt = sf_bytes(
            [(f.time, f.values) for f in sd.frames],
            bounds=sd.header.index_bounds,
            quantity=sd.header.quantity,
            short=sd.header.short_name,
            units=sd.header.units,
            order=sd.byte_order,
        )
        if rebuilt != data:
            failures.append(f"{tag}-endian slice file does not round-trip bit-exactly")

    meshes = [
        {
            "name": f"mesh{mi}",
            "origin": (5.0 * (mi % 4), 5.0 * (mi // 4), 0.0),
            "shape": (10, 10, 4),
            "cell": (0.5, 0.5, 1.0),
        }
        for mi in range(8)
    ]
    obst = {
        0: [(1.0, 2.0, 1.0, 2.0, 0.0, 4.0)],
        5: [(5.5, 6.5, 5.5, 6.0, 0.0, 2.0)],
    }
    slices = [
        {
            "mesh": mi + 1,
            "filename": f"case_{mi:02d}.sf",
            "quantity": "EXTINCTION COEFFICIENT",
            "bounds": (0, 10, 0, 10, 2, 2),
        }
        for mi in range(8)
    ]
    text = smv_text(meshes, obst, slices)
    parsed = parse_smv(text)
    re_meshes = [
        {
            "name": m.name,
            "origin": (float(m.x[0]), float(m.y[0]), float(m.z[0])),
            "shape": (m.nx, m.ny, m.nz),
            "cell": (m.dx, m.dy, float((m.z[-1] - m.z[0]) / m.nz)),
        }
        for m in parsed.meshes
    ]
    re_obst = {}
    for b in parsed.obstructions:
        re_obst.setdefault(b.mesh, []).append(b.bounds)
    re_slices = [
        {
            "mesh": s.mesh + 1,
            "filename": s.filename,
            "quantity": s.quantity,
            "short": s.short_name,
            "units": s.units,
            "bounds": s.bounds,
        }
        for s in parsed.slice_refs
    ]
    if smv_text(re_meshes, re_obst, re_slices) != text:
        failures.append("eight-mesh geometry index does not round-trip")

    corrupt = bytearray(sf_bytes(frames, bounds=bounds))
    corrupt[34] ^= 0xFF  # trailing marker of the first label record
    try:
        read_slice(bytes(corrupt))
        failures.append("corrupt record marker was not rejected")
    except FormatError:
        pass

    whole = sf_bytes(frames, bounds=bounds)
    sd = read_slice(whole[:-10])
    if sd.dropped_frames != 1 or len(sd.frames) != 2:
        failures.append("truncated trailing frame was not dropped cleanly")
    _verdict("parser round-trips and error handling", failures)


def test_full_pipeline_performance():
    # 400x200 grid, 3 oriented signs, 10 frames: under 10 s with the
    # per-waypoint geometry computed exactly once
    failures = []
    rng = np.random.default_rng(SEED)
    scene = make_scene(
        400, 200, dx=0.25, obst=[(200, j) for j in range(40, 160)]
    )
    wps = [
        Waypoint(0, 20.0, 20.0, c=3.0, alpha=0.0),
        Waypoint(1, 60.0, 30.0, c=3.0, alpha=270.0),
        Waypoint(2, 90.0, 10.0, c=8.0, alpha=180.0),
    ]
    times = np.arange(0.0, 500.0, 50.0)
    base = 1.0 + rng.random((400, 200))
    frames = np.stack(
        [(0.02 + 0.0004 * t) * base for t in times]
    ).astype(np.float32)
    field = FieldSeries(times, frames)

    start = time.perf_counter()
    engine = VisibilityEngine(scene, wps)
    result = engine.evaluate(field)
    elapsed = time.perf_counter() - start

    if elapsed >= 10.0:
        failures.append(f"runtime {elapsed:.2f} s, limit 10 s")
    counts = engine.geometry_compute_count
    if sorted(counts.values()) != [1, 1, 1]:
        failures.append(f"geometry recomputed: {counts}")
    if result.waypoint_maps.shape != (10, 3, 400, 200):
        failures.append(f"unexpected result shape {result.waypoint_maps.shape}")
    _verdict(
        "full pipeline on 400x200, 3 signs, 10 frames",
        failures,
        f"runtime {elapsed:.2f} s",
    )
