"""Command-line driver.

Each subcommand reads its inputs, fans independent work items out to a
process pool, and writes one deterministic output. Parameters come from
built-in defaults, then an optional ``--config`` JSON file, then flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from . import io
from .errors import DegenerateGeometryError, InvalidDetectionError, SchemaError, SVIMapError
from .synthetic import (
    SceneSpec,
    billboard_detections,
    render_landcover,
    trunk_observations,
)
from .tacheometry import DimensionRegistry, localize_detection, merge_observations
from .triangulation import (
    aggregate_tree,
    group_pairs,
    measure_pair,
    pair_observations,
)
from .width import DEFAULT_ALLOWED_TOUCHING, SliceFilter, measure_widths

log = logging.getLogger("svimap")

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "width": {
        "target_class": "road",
        "interval_m": 0.25,
        "kernel_px": 3,
        "min_cover_ratio": 0.9,
        "allowed_touching": sorted(DEFAULT_ALLOWED_TOUCHING),
        "min_length_m": None,
        "max_length_m": None,
    },
    "localize": {"min_angle_deg": 0.01, "dimensions": {}},
    "merge": {"radius_m": 3.0},
    "pair": {"max_match_distance_m": 3.0},
    "diameter": {"max_match_distance_m": 3.0, "min_theta_c_deg": 2.0, "exact": False},
    "synth": {
        "resolution_m": 0.25,
        "extent_m": [100.0, 100.0],
        "raster_heading_deg": 0.0,
        "thumb_width": 1024,
        "thumb_height": 1024,
        "measure_height_m": 1.37,
        "max_depth_m": 25.0,
        "seed": None,
    },
}


def resolve_config(command: str, config_path: Optional[str], flags: Dict[str, Any]) -> Dict[str, Any]:
    """Defaults, overridden by the config file, overridden by explicit flags.

    The config file is a JSON object holding either the keys directly or a
    section named after the subcommand.
    """
    cfg = dict(DEFAULTS[command])
    if config_path:
        try:
            data = json.loads(Path(config_path).read_text())
        except json.JSONDecodeError as e:
            raise SchemaError(f"{config_path}: {e}") from e
        if not isinstance(data, dict):
            raise SchemaError(f"{config_path}: config must be a JSON object")
        if isinstance(data.get(command), dict):
            data = data[command]
        unknown = set(data) - set(cfg) - set(DEFAULTS)
        if unknown:
            raise SchemaError(f"{config_path}: unknown config keys {sorted(unknown)}", field=sorted(unknown)[0])
        cfg.update({k: v for k, v in data.items() if k in cfg})
    cfg.update({k: v for k, v in flags.items() if v is not None and k in cfg})
    return cfg


def _pmap(fn: Callable, items: Sequence, workers: int) -> List:
    """Ordered map over a bounded process pool (inline for one worker)."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


# -- width ---------------------------------------------------------------------


def _width_job(job):
    path, cfg = job
    raster = io.load_landcover(path)
    filt = SliceFilter(
        min_cover_ratio=cfg["min_cover_ratio"],
        allowed_touching=frozenset(cfg["allowed_touching"]),
        min_length=cfg["min_length_m"],
        max_length=cfg["max_length_m"],
    )
    slices = measure_widths(raster, cfg["target_class"], cfg["interval_m"], cfg["kernel_px"], filt)
    return [io.slice_feature(s, i) for i, s in enumerate(slices)]


def cmd_width(args, cfg) -> int:
    jobs = [(p, cfg) for p in args.raster]
    features = [f for fs in _pmap(_width_job, jobs, args.workers) for f in fs]
    inputs = list(args.raster) + [io.sidecar_path(p) for p in args.raster]
    io.write_geojson(features, args.out, io.run_metadata(cfg, inputs))
    log.info("%d slices from %d rasters", len(features), len(args.raster))
    return io.EXIT_OK


# -- localize / merge ------------------------------------------------------------


def _localize_job(job):
    pose, det, dims, min_angle = job
    try:
        return localize_detection(pose, det, dims, min_angle=min_angle), None
    except (DegenerateGeometryError, InvalidDetectionError) as e:
        return None, f"{det.pano_id}/{det.class_name}: {e}"


def cmd_localize(args, cfg) -> int:
    poses = {p.pano_id: p for p in io.load_pano_metadata(args.panos)}
    dets = io.load_detections(args.detections)
    reg = DimensionRegistry.from_json(args.registry) if args.registry else DimensionRegistry.default()
    dims = {**reg.as_dict(), **{k: float(v) for k, v in cfg["dimensions"].items()}}
    cfg = {**cfg, "dimensions": dict(sorted(dims.items()))}
    jobs = []
    for d in dets:
        if d.pano_id not in poses:
            raise SchemaError(f"detection refers to unknown pano_id {d.pano_id!r}", field="pano_id")
        jobs.append((poses[d.pano_id], d, dims, cfg["min_angle_deg"]))
    results = _pmap(_localize_job, jobs, args.workers)
    located = []
    for obj, err in results:
        if err:
            log.warning("skipped %s", err)
        else:
            located.append(obj)
    features = [io.located_feature(o, i) for i, o in enumerate(located)]
    inputs = [args.panos, args.detections] + ([args.registry] if args.registry else [])
    io.write_geojson(features, args.out, io.run_metadata(cfg, inputs))
    if jobs and not located:
        return io.EXIT_DEGENERATE
    return io.EXIT_OK


def cmd_merge(args, cfg) -> int:
    data = json.loads(Path(args.input).read_text())
    if data.get("type") != "FeatureCollection":
        raise SchemaError(f"{args.input}: not a FeatureCollection", field="type")
    objs = [io.located_from_feature(f) for f in data.get("features", [])]
    merged = merge_observations(objs, cfg["radius_m"])
    features = [io.located_feature(o, i) for i, o in enumerate(merged)]
    io.write_geojson(features, args.out, io.run_metadata(cfg, [args.input]))
    return io.EXIT_OK


# -- pair / diameter -------------------------------------------------------------


def _load_pairs(args, cfg):
    poses = io.load_pano_metadata(args.panos)
    obs = io.load_trunk_observations(args.observations, poses)
    return poses, obs, pair_observations(poses, obs, cfg["max_match_distance_m"])


def cmd_pair(args, cfg) -> int:
    _, _, pairs = _load_pairs(args, cfg)
    tree_of = {k: t for t, ks in enumerate(group_pairs(pairs)) for k in ks}
    records = []
    for k, p in enumerate(pairs):
        records.append(
            {
                "pair_index": k,
                "tree_index": tree_of[k],
                "obs_a": p.obs_a.obs_id,
                "obs_b": p.obs_b.obs_id,
                "pano_a": p.obs_a.pano_id,
                "pano_b": p.obs_b.pano_id,
                "heading_offset_a": p.obs_a.thumbnail.heading_offset if p.obs_a.thumbnail else None,
                "heading_offset_b": p.obs_b.thumbnail.heading_offset if p.obs_b.thumbnail else None,
            }
        )
    meta = io.run_metadata(cfg, [args.panos, args.observations])
    with open(args.out, "w") as f:
        f.write(json.dumps({"metadata": meta}, sort_keys=True) + "\n")
        for r in records:
            f.write(json.dumps(r, sort_keys=True) + "\n")
    return io.EXIT_OK


def _diameter_job(job):
    pairs, min_theta_c, exact = job
    done, errors = [], []
    for p in pairs:
        try:
            done.append(measure_pair(p, min_theta_c=min_theta_c, exact=exact))
        except DegenerateGeometryError as e:
            errors.append(f"{p.obs_a.obs_id}~{p.obs_b.obs_id}: {e}")
    if not done:
        return None, errors
    return aggregate_tree(done), errors


def cmd_diameter(args, cfg) -> int:
    _, _, pairs = _load_pairs(args, cfg)
    groups = group_pairs(pairs)
    jobs = [([pairs[k] for k in g], cfg["min_theta_c_deg"], bool(cfg["exact"])) for g in groups]
    trees = []
    for tree, errors in _pmap(_diameter_job, jobs, args.workers):
        for e in errors:
            log.warning("skipped pair %s", e)
        if tree is not None:
            trees.append(tree)
    method = "triangulation-exact" if cfg["exact"] else "triangulation"
    features = [io.tree_feature(t, i, method) for i, t in enumerate(trees)]
    io.write_geojson(features, args.out, io.run_metadata(cfg, [args.panos, args.observations]))
    if jobs and not trees:
        return io.EXIT_DEGENERATE
    return io.EXIT_OK


# -- synth -----------------------------------------------------------------------


def cmd_synth(args, cfg) -> int:
    scene = SceneSpec.load(args.scene)
    if cfg["seed"] is not None:
        scene = replace(scene, seed=int(cfg["seed"]))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_pano_metadata(scene.cameras, out / "panos.jsonl")
    io.write_jsonl(billboard_detections(scene), out / "detections.jsonl")
    io.write_jsonl(
        trunk_observations(
            scene,
            thumb_width=int(cfg["thumb_width"]),
            thumb_height=int(cfg["thumb_height"]),
            measure_height=float(cfg["measure_height_m"]),
            max_depth_m=float(cfg["max_depth_m"]),
        ),
        out / "observations.jsonl",
    )
    if scene.ribbons:
        raster = render_landcover(
            scene,
            float(cfg["resolution_m"]),
            tuple(map(float, cfg["extent_m"])),
            heading=float(cfg["raster_heading_deg"]),
            name="landcover.png",
        )
        io.save_landcover(raster, out / "landcover.png")
    truth = {
        "metadata": io.run_metadata(cfg, [args.scene]),
        "scene": scene.to_dict(),
    }
    (out / "truth.json").write_text(json.dumps(truth, indent=1, sort_keys=True) + "\n")
    return io.EXIT_OK


# -- parser ----------------------------------------------------------------------


def _csv(s: str) -> List[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with parameter values (flags win)")
    common.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="svimap", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {io.__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    w = sub.add_parser("width", parents=[common], help="measure ribbon widths on land-cover rasters")
    w.add_argument("raster", nargs="+", help="class rasters (PNG/PGM) with JSON sidecars")
    w.add_argument("-o", "--out", required=True)
    w.add_argument("--class", dest="target_class")
    w.add_argument("--interval", dest="interval_m", type=float)
    w.add_argument("--kernel", dest="kernel_px", type=int)
    w.add_argument("--min-cover", dest="min_cover_ratio", type=float)
    w.add_argument("--allowed-touching", type=_csv, help="comma-separated class names")
    w.add_argument("--min-length", dest="min_length_m", type=float)
    w.add_argument("--max-length", dest="max_length_m", type=float)

    lo = sub.add_parser("localize", parents=[common], help="place detections with known heights")
    lo.add_argument("--panos", required=True)
    lo.add_argument("--detections", required=True)
    lo.add_argument("--registry", help="JSON object of class -> height in metres")
    lo.add_argument("--min-angle", dest="min_angle_deg", type=float)
    lo.add_argument("-o", "--out", required=True)

    m = sub.add_parser("merge", parents=[common], help="merge repeated sightings of located objects")
    m.add_argument("input", help="GeoJSON written by 'localize'")
    m.add_argument("--radius", dest="radius_m", type=float)
    m.add_argument("-o", "--out", required=True)

    for name, help_ in (("pair", "match trunk observations across adjacent panoramas"),
                        ("diameter", "triangulate trunks and measure diameters")):
        q = sub.add_parser(name, parents=[common], help=help_)
        q.add_argument("--panos", required=True)
        q.add_argument("--observations", required=True)
        q.add_argument("--max-match-distance", dest="max_match_distance_m", type=float)
        q.add_argument("-o", "--out", required=True)
        if name == "diameter":
            q.add_argument("--min-theta-c", dest="min_theta_c_deg", type=float)
            q.add_argument("--exact", action="store_true", default=None,
                           help="circle-exact diameter instead of the tangent form")

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic scene's inputs and truth")
    s.add_argument("scene", help="scene JSON")
    s.add_argument("-o", "--out-dir", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--resolution", dest="resolution_m", type=float)
    s.add_argument("--extent", dest="extent_m", type=float, nargs=2, metavar=("EAST_M", "NORTH_M"))
    s.add_argument("--raster-heading", dest="raster_heading_deg", type=float)
    return p


COMMANDS = {
    "width": cmd_width,
    "localize": cmd_localize,
    "merge": cmd_merge,
    "pair": cmd_pair,
    "diameter": cmd_diameter,
    "synth": cmd_synth,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args.command, args.config, vars(args))
        return COMMANDS[args.command](args, cfg)
    except SchemaError as e:
        log.error("%s", e)
        return io.EXIT_SCHEMA
    except DegenerateGeometryError as e:
        log.error("%s", e)
        return io.EXIT_DEGENERATE
    except SVIMapError as e:
        log.error("%s", e)
        return io.EXIT_SCHEMA
    except OSError as e:
        log.error("%s", e)
        return io.EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
