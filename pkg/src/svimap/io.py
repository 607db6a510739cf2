"""File formats: panorama metadata, land-cover rasters, detections,
trunk observations and GeoJSON output."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np
from PIL import Image
from scipy import ndimage

from . import __version__
from .errors import AmbiguousMaskError, NoTrunkError, SchemaError
from .geo import GeoPoint, PanoramaPose, normalize_azimuth
from .projection import (
    PixelBox,
    ThumbnailSpec,
    pano_point_to_angles,
    thumb_point_to_angles,
)
from .tacheometry import Detection, LocatedObject
from .triangulation import TriangulatedTree, TrunkObservation
from .width import LandCoverRaster, Slice

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_DEGENERATE = 3
EXIT_IO = 4


# -- generic -------------------------------------------------------------------


def read_records(path: PathLike) -> List[dict]:
    """Read a JSON array or JSON-lines file into a list of dicts."""
    text = Path(path).read_text()
    stripped = text.strip()
    if not stripped:
        return []
    if stripped.startswith("["):
        try:
            data = json.loads(stripped)
        except json.JSONDecodeError as e:
            raise SchemaError(f"{path}: {e}") from e
        return list(data)
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as e:
            raise SchemaError(f"{path}:{n}: {e}") from e
    return out


def write_jsonl(records: Iterable[Mapping], path: PathLike) -> None:
    with open(path, "w") as f:
        for r in records:
            f.write(json.dumps(r, sort_keys=True) + "\n")


def file_sha256(path: PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _require(rec: Mapping, key: str, cast: Callable = float, where: str = ""):
    if key not in rec or rec[key] is None:
        raise SchemaError(f"{where}missing required field '{key}'", field=key)
    try:
        return cast(rec[key])
    except (TypeError, ValueError) as e:
        raise SchemaError(f"{where}field '{key}' has bad value {rec[key]!r}", field=key) from e


def _optional(rec: Mapping, key: str, cast: Callable = float, default=None):
    v = rec.get(key)
    return default if v is None else cast(v)


# -- panorama metadata -----------------------------------------------------------


def pose_from_record(rec: Mapping, where: str = "") -> PanoramaPose:
    pano_id = _require(rec, "pano_id", str, where)
    lat = _require(rec, "lat", float, where)
    lon = _require(rec, "lon", float, where)
    heading = _require(rec, "heading_deg", float, where)
    if not 0.0 <= heading < 360.0:
        norm = normalize_azimuth(heading)
        logger.warning("%spano %s heading %s normalized to %s", where, pano_id, heading, norm)
        heading = norm
    try:
        position = GeoPoint(lat, lon, _optional(rec, "alt", float, 0.0))
    except ValueError as e:
        raise SchemaError(f"{where}{e}", field="lat") from e
    return PanoramaPose(
        pano_id=pano_id,
        position=position,
        heading=heading,
        pitch=_optional(rec, "pitch_deg", float, 0.0),
        roll=_optional(rec, "roll_deg", float, 0.0),
        camera_height=_optional(rec, "camera_height_m", float, 2.5),
        image_width=_require(rec, "image_width", int, where),
        image_height=_require(rec, "image_height", int, where),
        sequence_id=_optional(rec, "sequence_id", str),
        seq_index=_optional(rec, "seq_index", int),
    )


def pose_to_record(p: PanoramaPose) -> dict:
    rec = {
        "pano_id": p.pano_id,
        "lat": p.position.lat,
        "lon": p.position.lon,
        "alt": p.position.alt,
        "heading_deg": p.heading,
        "pitch_deg": p.pitch,
        "roll_deg": p.roll,
        "camera_height_m": p.camera_height,
        "image_width": p.image_width,
        "image_height": p.image_height,
    }
    if p.sequence_id is not None:
        rec["sequence_id"] = p.sequence_id
    if p.seq_index is not None:
        rec["seq_index"] = p.seq_index
    return rec


def load_pano_metadata(path: PathLike) -> List[PanoramaPose]:
    """Validated panorama poses in file order.

    Records without ``seq_index`` get one from their position among the
    records sharing their ``sequence_id`` (file order).
    """
    poses = [pose_from_record(r, f"{path}[{i}]: ") for i, r in enumerate(read_records(path))]
    counters: Dict[Optional[str], int] = {}
    out = []
    for p in poses:
        k = counters.get(p.sequence_id, 0)
        counters[p.sequence_id] = k + 1
        if p.seq_index is None:
            p = PanoramaPose(**{**p.__dict__, "seq_index": k})
        out.append(p)
    return out


def write_pano_metadata(poses: Iterable[PanoramaPose], path: PathLike) -> None:
    write_jsonl((pose_to_record(p) for p in poses), path)


# -- land cover ------------------------------------------------------------------


def sidecar_path(raster_path: PathLike) -> Path:
    return Path(raster_path).with_suffix(".json")


def load_landcover(path: PathLike, sidecar: Optional[PathLike] = None) -> LandCoverRaster:
    """Single-band 8-bit class raster (PNG/PGM) plus its JSON sidecar."""
    path = Path(path)
    sidecar = Path(sidecar) if sidecar else sidecar_path(path)
    with Image.open(path) as im:
        if im.mode not in ("L", "P"):
            raise SchemaError(f"{path}: expected a single-band 8-bit raster, got mode {im.mode}")
        grid = np.array(im, dtype=np.uint8)
    meta = json.loads(sidecar.read_text())
    where = f"{sidecar}: "
    table = meta.get("class_table")
    if not isinstance(table, dict):
        raise SchemaError(f"{where}missing required field 'class_table'", field="class_table")
    return LandCoverRaster(
        grid=grid,
        resolution=_require(meta, "resolution_m", float, where),
        center=GeoPoint(_require(meta, "center_lat", float, where), _require(meta, "center_lon", float, where)),
        class_table={int(k): v for k, v in table.items()},
        heading=_require(meta, "heading_deg", float, where),
        name=path.name,
    )


def save_landcover(r: LandCoverRaster, path: PathLike) -> Path:
    path = Path(path)
    Image.fromarray(np.asarray(r.grid, dtype=np.uint8), mode="L").save(path)
    meta = {
        "resolution_m": r.resolution,
        "center_lat": r.center.lat,
        "center_lon": r.center.lon,
        "heading_deg": r.heading,
        "class_table": {str(k): v for k, v in sorted(r.class_table.items())},
    }
    side = sidecar_path(path)
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return side


# -- detections and observations -------------------------------------------------


def thumbnail_from_record(rec: Mapping, pano_id: Optional[str] = None) -> ThumbnailSpec:
    return ThumbnailSpec(
        heading_offset=_require(rec, "heading_offset"),
        pitch=_optional(rec, "pitch", float, 0.0),
        hfov=_optional(rec, "hfov", float, 90.0),
        width=_require(rec, "width", int),
        height=_require(rec, "height", int),
        pano_id=pano_id,
    )


def thumbnail_to_record(s: ThumbnailSpec) -> dict:
    return {"heading_offset": s.heading_offset, "pitch": s.pitch, "hfov": s.hfov,
            "width": s.width, "height": s.height}


def load_detections(path: PathLike) -> List[Detection]:
    out = []
    for i, rec in enumerate(read_records(path)):
        where = f"{path}[{i}]: "
        pano_id = _require(rec, "pano_id", str, where)
        spec = None
        if rec.get("thumbnail_spec") is not None:
            spec = thumbnail_from_record(rec["thumbnail_spec"], pano_id)
        box = PixelBox(
            _require(rec, "col_min", float, where),
            _require(rec, "row_min", float, where),
            _require(rec, "col_max", float, where),
            _require(rec, "row_max", float, where),
            image=spec if spec is not None else pano_id,
        )
        out.append(
            Detection(
                class_name=_require(rec, "class", str, where),
                box=box,
                pano_id=pano_id,
                thumbnail=spec,
                confidence=_optional(rec, "confidence", float, 1.0),
            )
        )
    return out


def _edge_azimuth(pose: PanoramaPose, spec: Optional[ThumbnailSpec], x: float, y: float) -> float:
    if spec is None:
        return pano_point_to_angles(pose, x, y).azimuth
    return thumb_point_to_angles(pose, spec, x, y).azimuth


def observation_from_record(rec: Mapping, poses: Mapping[str, PanoramaPose], where: str = "") -> TrunkObservation:
    """Build a trunk observation from azimuths or from pixel columns.

    Pixel form: ``col_left``/``col_right`` are the leftmost and rightmost
    trunk pixel columns on row ``row_measure``; the silhouette edges are the
    outer pixel boundaries.
    """
    pano_id = _require(rec, "pano_id", str, where)
    if pano_id not in poses:
        raise SchemaError(f"{where}unknown pano_id {pano_id!r}", field="pano_id")
    pose = poses[pano_id]
    spec = None
    if rec.get("thumbnail_spec") is not None:
        spec = thumbnail_from_record(rec["thumbnail_spec"], pano_id)
    if "az_left_deg" in rec or "az_right_deg" in rec:
        az_l = _require(rec, "az_left_deg", float, where)
        az_r = _require(rec, "az_right_deg", float, where)
    else:
        cl = _require(rec, "col_left", float, where)
        cr = _require(rec, "col_right", float, where)
        y = _require(rec, "row_measure", float, where) + 0.5
        az_l = _edge_azimuth(pose, spec, cl, y)
        az_r = _edge_azimuth(pose, spec, cr + 1.0, y)
    return TrunkObservation(
        pose=pose,
        az_left=az_l,
        az_right=az_r,
        thumbnail=spec,
        depth_m=_optional(rec, "depth_m"),
        obs_id=str(rec.get("obs_id", f"{pano_id}#{where}")),
    )


def load_trunk_observations(path: PathLike, poses: Sequence[PanoramaPose]) -> List[TrunkObservation]:
    by_id = {p.pano_id: p for p in poses}
    out = []
    for i, rec in enumerate(read_records(path)):
        rec = dict(rec)
        rec.setdefault("obs_id", f"obs{i:06d}")
        out.append(observation_from_record(rec, by_id, f"{path}[{i}]: "))
    return out


def mask_to_trunk_observation(
    mask: np.ndarray,
    spec: Optional[ThumbnailSpec],
    pose: PanoramaPose,
    depth_m: Optional[float] = None,
    obs_id: Optional[str] = None,
) -> TrunkObservation:
    """Trunk observation at the row whose width is the median trunk width.

    Each mask row's width is the span from its leftmost to its rightmost
    trunk pixel. Among rows with the median width (lower median for an even
    count) the topmost is used.
    """
    mask = np.asarray(mask, dtype=bool)
    labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        raise NoTrunkError("mask contains no trunk pixels")
    if n > 1:
        raise AmbiguousMaskError(f"mask has {n} connected components")
    rows = np.flatnonzero(mask.any(axis=1))
    lefts = np.array([np.argmax(mask[r]) for r in rows])
    rights = np.array([mask.shape[1] - 1 - np.argmax(mask[r, ::-1]) for r in rows])
    widths = rights - lefts + 1
    order = np.lexsort((rows, widths))
    k = order[(len(order) - 1) // 2]
    row, cl, cr = int(rows[k]), int(lefts[k]), int(rights[k])
    y = row + 0.5
    return TrunkObservation(
        pose=pose,
        az_left=_edge_azimuth(pose, spec, float(cl), y),
        az_right=_edge_azimuth(pose, spec, float(cr + 1), y),
        thumbnail=spec,
        depth_m=depth_m,
        obs_id=obs_id,
    )


# -- GeoJSON ---------------------------------------------------------------------


def _num(x: Optional[float]):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def slice_feature(s: Slice, index: int) -> dict:
    return {
        "type": "Feature",
        "geometry": {
            "type": "LineString",
            "coordinates": [[s.start_geo.lon, s.start_geo.lat], [s.end_geo.lon, s.end_geo.lat]],
        },
        "properties": {
            "length_m": s.length,
            "row_index": s.row_index,
            "touching_start": s.touching_start,
            "touching_end": s.touching_end,
            "cover_ratio": s.cover_ratio,
            "valid": s.valid,
            "source_raster": s.source_raster,
            "index": index,
        },
    }


def located_feature(o: LocatedObject, index: int) -> dict:
    return {
        "type": "Feature",
        "geometry": {"type": "Point", "coordinates": [o.position.lon, o.position.lat]},
        "properties": {
            "class": o.class_name,
            "d_hor_m": o.d_hor,
            "h_b_m": o.h_b,
            "height_above_ground_m": _num(o.height_above_ground),
            "alt_m": o.position.alt,
            "azimuth_deg": o.azimuth,
            "method": o.method,
            "source_pano": o.source_pano,
            "n_observations": o.n_observations,
            "d_hor_uncertainty_m": _num(o.d_hor_uncertainty),
            "angle_uncertainty_deg": _num(o.angle_uncertainty),
            "confidence": _num(o.confidence),
            "index": index,
        },
    }


def located_from_feature(f: Mapping) -> LocatedObject:
    p = f["properties"]
    lon, lat = f["geometry"]["coordinates"][:2]
    return LocatedObject(
        class_name=p["class"],
        position=GeoPoint(lat, lon, p.get("alt_m") or 0.0),
        d_hor=p["d_hor_m"],
        h_b=p["h_b_m"],
        azimuth=p["azimuth_deg"],
        source_pano=p["source_pano"],
        method=p.get("method", "tacheometry"),
        height_above_ground=p.get("height_above_ground_m"),
        d_hor_uncertainty=p.get("d_hor_uncertainty_m"),
        angle_uncertainty=p.get("angle_uncertainty_deg"),
        n_observations=int(p.get("n_observations", 1)),
        confidence=p.get("confidence"),
    )


def tree_feature(t: TriangulatedTree, index: int, method: str = "triangulation") -> dict:
    return {
        "type": "Feature",
        "geometry": {"type": "Point", "coordinates": [t.position.lon, t.position.lat]},
        "properties": {
            "diameter_m": _num(t.diameter),
            "mean_diameter_m": _num(t.mean_diameter),
            "per_image_diameters_m": [float(d) for d in t.per_image_diameters],
            "n_pairs": t.n_pairs,
            "theta_c_deg_min": _num(t.theta_c_min if t.theta_c_min is not None else t.theta_c),
            "method": method,
            "source_panos": list(t.source_panos),
            "source_pano": t.source_panos[0] if t.source_panos else "",
            "index": index,
        },
    }


def _feature_key(f: Mapping):
    p = f.get("properties") or {}
    src = p.get("source_raster", p.get("source_pano", ""))
    return str(src), int(p.get("index", 0))


def feature_collection(features: Iterable[Mapping], metadata: Optional[Mapping] = None) -> dict:
    fc: Dict[str, Any] = {
        "type": "FeatureCollection",
        "features": sorted(features, key=_feature_key),
    }
    if metadata is not None:
        fc["metadata"] = dict(metadata)
    return fc


def write_geojson(features: Iterable[Mapping], path: PathLike, metadata: Optional[Mapping] = None) -> None:
    """Write an RFC 7946 FeatureCollection with deterministic ordering.

    ``metadata`` is stored as a foreign member of the collection.
    """
    text = json.dumps(feature_collection(features, metadata), sort_keys=True, indent=1) + "\n"
    try:
        Path(path).write_text(text)
    except OSError as e:
        raise OSError(f"cannot write GeoJSON to {path}: {e}") from e


def run_metadata(config: Mapping, inputs: Sequence[PathLike]) -> dict:
    return {
        "tool_version": __version__,
        "resolved_config": dict(config),
        "input_hashes": {Path(p).name: file_sha256(p) for p in inputs},
    }
