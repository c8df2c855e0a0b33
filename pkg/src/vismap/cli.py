"""Command-line pipeline: load scene and field, evaluate all (waypoint,
time) pairs, write maps, tables, figures and a run manifest.

The run is described by a YAML config file; a handful of flags override
single values. Exit codes: 0 ok, 2 config, 3 parse, 4 compute, 5 I/O.
"""

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
import yaml

from . import fds_io, render
from .core import DEFAULT_THICKNESS, DEFAULT_VMAX, VisibilityEngine, VisParams
from .errors import ConfigError, OutputError, VismapError
from .grid import DEFAULT_EVAL_HEIGHT, Waypoint


@dataclass
class RunConfig:
    waypoints: list
    times: list
    input_smv: str | None = None
    input_scene: str | None = None
    input_field: str | None = None
    quantity: str = "EXTINCTION COEFFICIENT"
    eval_height: float = DEFAULT_EVAL_HEIGHT
    vmax: float = DEFAULT_VMAX
    thickness: int = DEFAULT_THICKNESS
    out_dir: str = "out"
    start_point: tuple | None = None  # recorded in the manifest, unused
    outputs: dict = dc_field(default_factory=dict)

    def wants(self, name):
        defaults = {
            "waypoint_fields": True,
            "per_time_maps": True,
            "aggregate_map": True,
            "aset_map": True,
        }
        return bool(self.outputs.get(name, defaults[name]))


def _parse_times(spec):
    """Times from a list, a `{start, stop, step}` mapping, or CLI strings
    like `0,100,400` and `0:400:10`."""
    if isinstance(spec, dict):
        try:
            start, stop = float(spec["start"]), float(spec["stop"])
            step = float(spec.get("step", 1.0))
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"bad times range {spec!r}")
        if step <= 0 or stop < start:
            raise ConfigError(f"bad times range {spec!r}")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [start + k * step for k in range(n)]
    if isinstance(spec, str):
        if ":" in spec:
            parts = spec.split(":")
            if len(parts) not in (2, 3):
                raise ConfigError(f"bad times spec {spec!r}")
            start, stop = float(parts[0]), float(parts[1])
            step = float(parts[2]) if len(parts) == 3 else 1.0
            return _parse_times({"start": start, "stop": stop, "step": step})
        return [float(v) for v in spec.split(",") if v.strip()]
    try:
        return [float(v) for v in spec]
    except (TypeError, ValueError):
        raise ConfigError(f"bad times specification {spec!r}")


def load_config(path):
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return _config_from_dict(raw, base=Path(path).parent)


def _config_from_dict(raw, base=Path(".")):
    known = {
        "input", "quantity", "eval_height", "vmax", "thickness",
        "waypoints", "times", "out", "outputs", "start_point",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    inp = raw.get("input") or {}
    if not isinstance(inp, dict):
        raise ConfigError("config key 'input' must be a mapping")

    def _resolve(p):
        return str(base / p) if p else None

    wps = []
    for n, w in enumerate(raw.get("waypoints") or []):
        if not isinstance(w, dict) or "x" not in w or "y" not in w:
            raise ConfigError(f"waypoint {n} needs at least x and y")
        wps.append(
            Waypoint(
                id=n, x=float(w["x"]), y=float(w["y"]),
                c=float(w.get("c", 3.0)),
                alpha=None if w.get("alpha") is None else float(w["alpha"]),
            )
        )
    if not wps:
        raise ConfigError("at least one waypoint is required")

    times = _parse_times(raw.get("times") or [])
    if not times:
        raise ConfigError("at least one evaluation time is required")
    if sorted(times) != times:
        raise ConfigError("times must be sorted ascending")

    sp = raw.get("start_point")
    if sp is not None:
        sp = tuple(float(v) for v in sp)

    return RunConfig(
        waypoints=wps,
        times=times,
        input_smv=_resolve(inp.get("smv")),
        input_scene=_resolve(inp.get("scene")),
        input_field=_resolve(inp.get("field")),
        quantity=str(raw.get("quantity", "EXTINCTION COEFFICIENT")),
        eval_height=float(raw.get("eval_height", DEFAULT_EVAL_HEIGHT)),
        vmax=float(raw.get("vmax", DEFAULT_VMAX)),
        thickness=int(raw.get("thickness", DEFAULT_THICKNESS)),
        out_dir=str(raw.get("out", "out")),
        start_point=sp,
        outputs=dict(raw.get("outputs") or {}),
    )


def _load_inputs(cfg):
    if cfg.input_smv:
        return fds_io.load_fds_case(
            cfg.input_smv, quantity=cfg.quantity, eval_height=cfg.eval_height
        )
    if cfg.input_scene and cfg.input_field:
        try:
            scene_text = Path(cfg.input_scene).read_text()
            field_bytes = Path(cfg.input_field).read_bytes()
        except OSError as exc:
            raise ConfigError(f"cannot read input: {exc}")
        scene = fds_io.parse_portable_scene(
            scene_text, eval_height=cfg.eval_height
        )
        field = fds_io.parse_portable_field(field_bytes, scene.shape)
        return scene, field
    raise ConfigError(
        "config must name an input: either an FDS case (input.smv) or "
        "portable files (input.scene and input.field)"
    )


def _sha256(path):
    path = Path(path)
    if path.is_dir():  # FDS case directory: hash its index file
        candidates = sorted(path.glob("*.smv"))
        if len(candidates) == 1:
            path = candidates[0]
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _tname(t):
    return f"{t:g}".replace(".", "p")


def run(cfg):
    """Execute the pipeline for one config; returns the manifest dict."""
    scene, field = _load_inputs(cfg)
    params = VisParams(vmax=cfg.vmax, thickness=cfg.thickness)
    engine = VisibilityEngine(scene, cfg.waypoints, params)
    result = engine.evaluate(
        field, times=cfg.times, store_v=cfg.wants("waypoint_fields")
    )

    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out}: {exc}")

    style = render.DEFAULT_STYLE
    artifacts = []

    def _emit(name):
        artifacts.append(name)
        return out / name

    if cfg.wants("per_time_maps"):
        for ti, t in enumerate(result.requested_times):
            tri = render.tri_state(result.time_maps[ti], scene.obstruction)
            render.write_map_image(
                tri, style, _emit(f"map_t{_tname(t)}.pgm"), png=False
            )
            render.plot_map_figure(
                scene, tri, _emit(f"map_t{_tname(t)}.png"), style,
                title=f"visibility map, t = {t:g} s",
            )
    if cfg.wants("waypoint_fields"):
        for ti, t in enumerate(result.requested_times):
            for k, wp in enumerate(cfg.waypoints):
                v = result.v_fields[ti, k]
                stem = f"v_w{wp.id}_t{_tname(t)}"
                render.write_field_csv(scene, v, _emit(stem + ".csv"))
                render.plot_field_figure(
                    scene, v, _emit(stem + ".png"), style,
                    label="available visibility / m", vmax=result.vmax,
                    title=f"waypoint {wp.id}, t = {t:g} s",
                )
    if cfg.wants("aggregate_map"):
        tri = render.tri_state(result.aggregate, scene.obstruction)
        render.write_map_image(tri, style, _emit("map_aggregate.pgm"))
        render.plot_map_figure(
            scene, tri, _emit("map_aggregate.png"), style,
            title="time-aggregated visibility map",
        )
    if cfg.wants("aset_map"):
        render.write_aset(scene, result.aset, _emit("aset.csv"))
        render.plot_aset_figure(scene, result.aset, _emit("aset.png"))

    manifest = {
        "inputs": {
            name: {"path": p, "sha256": _sha256(p)}
            for name, p in (
                ("smv", cfg.input_smv),
                ("scene", cfg.input_scene),
                ("field", cfg.input_field),
            )
            if p
        },
        "parameters": {
            "quantity": cfg.quantity,
            "eval_height": cfg.eval_height,
            "vmax": cfg.vmax,
            "thickness": cfg.thickness,
            "times": list(map(float, cfg.times)),
            "start_point": list(cfg.start_point) if cfg.start_point else None,
            "waypoints": [
                {"id": w.id, "x": w.x, "y": w.y, "c": w.c, "alpha": w.alpha}
                for w in cfg.waypoints
            ],
        },
        "frame_matching": [
            {
                "requested": float(t),
                "frame_index": int(fi),
                "frame_time": float(result.times[n]),
            }
            for n, (t, fi) in enumerate(
                zip(result.requested_times, result.frame_indices)
            )
        ],
        "outputs": {name: _sha256(out / name) for name in artifacts},
    }
    manifest_path = out / "manifest.json"
    try:
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    except OSError as exc:
        raise OutputError(f"cannot write manifest: {exc}")
    return manifest


def _build_parser():
    p = argparse.ArgumentParser(
        prog="vismap",
        description="Waypoint-based visibility and ASET maps from "
        "fire-simulation slice data.",
    )
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--input", help="FDS case directory or .smv file (override)")
    p.add_argument("--out", help="output directory (override)")
    p.add_argument("--times", help="override times, e.g. '0,200,400' or '0:400:50'")
    p.add_argument("--vmax", type=float, help="maximum visibility in m")
    p.add_argument("--thickness", type=int, help="collision ray thickness in cells")
    p.add_argument("--quantity", help="slice quantity name")
    p.add_argument("--height", type=float, help="evaluation height in m")
    return p


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.input:
            cfg.input_smv = args.input
            cfg.input_scene = cfg.input_field = None
        if args.out:
            cfg.out_dir = args.out
        if args.times:
            cfg.times = _parse_times(args.times)
        if args.vmax is not None:
            cfg.vmax = args.vmax
        if args.thickness is not None:
            cfg.thickness = args.thickness
        if args.quantity:
            cfg.quantity = args.quantity
        if args.height is not None:
            cfg.eval_height = args.height
        run(cfg)
    except VismapError as exc:
        print(f"vismap: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"vismap: I/O error: {exc}", file=sys.stderr)
        return 5
    return 0


if __name__ == "__main__":
    sys.exit(main())
