"""Synthetic street scenes with exact ground truth.

Everything here is computed by forward geometry in the scene's tangent
plane (anchored at ``SceneSpec.anchor``, ground at ``up = 0``). Angles and
pixel positions are derived directly from 3D vectors and do not go through
the inverse functions in :mod:`svimap.projection`, so agreement between the
two is a real check.

The panorama oracle only handles level cameras (zero pitch and roll).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InvalidSceneError, NotVisibleError
from .geo import GeoPoint, LocalPoint, PanoramaPose, geo_to_local, local_to_geo
from .projection import PixelBox, ThumbnailSpec
from .width import LandCoverRaster

DEFAULT_CLASS_TABLE = {
    0: "terrain",
    1: "road",
    2: "vehicle",
    3: "sidewalk",
    4: "curb",
    5: "vegetation",
    6: "building",
}


@dataclass(frozen=True)
class Ribbon:
    """Band of ``width_m`` around a polyline given in scene metres (east, north)."""

    polyline: Tuple[Tuple[float, float], ...]
    width_m: float
    class_name: str = "road"

    def __post_init__(self):
        object.__setattr__(self, "polyline", tuple(tuple(map(float, p)) for p in self.polyline))
        if not self.width_m > 0:
            raise InvalidSceneError("ribbon width must be positive")
        if len(self.polyline) < 2:
            raise InvalidSceneError("ribbon needs at least two vertices")


@dataclass(frozen=True)
class Billboard:
    """Flat sign facing the viewer; ``position`` is the foot of its post."""

    position: GeoPoint
    bottom_height_m: float
    height_m: float
    width_m: float = 0.75
    class_name: str = "stop_sign"

    def __post_init__(self):
        if not (self.height_m > 0 and self.width_m > 0):
            raise InvalidSceneError("billboard dimensions must be positive")


@dataclass(frozen=True)
class Cylinder:
    position: GeoPoint
    radius_m: float
    height_m: float = 10.0
    name: str = ""

    def __post_init__(self):
        if not (self.radius_m > 0 and self.height_m > 0):
            raise InvalidSceneError("cylinder dimensions must be positive")


@dataclass(frozen=True)
class NoiseSpec:
    angle_deg_sigma: float = 0.0
    pose_m_sigma: float = 0.0
    depth_m_sigma: float = 0.0

    def __post_init__(self):
        if min(self.angle_deg_sigma, self.pose_m_sigma, self.depth_m_sigma) < 0:
            raise InvalidSceneError("noise sigmas must be non-negative")


@dataclass
class SceneSpec:
    anchor: GeoPoint
    ribbons: List[Ribbon] = field(default_factory=list)
    billboards: List[Billboard] = field(default_factory=list)
    cylinders: List[Cylinder] = field(default_factory=list)
    cameras: List[PanoramaPose] = field(default_factory=list)
    seed: int = 0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    background_class: str = "terrain"

    def local(self, p: GeoPoint) -> LocalPoint:
        return geo_to_local(p, self.anchor)

    def geo(self, east: float, north: float, up: float = 0.0) -> GeoPoint:
        return local_to_geo(LocalPoint(east, north, up), self.anchor)

    # -- JSON ---------------------------------------------------------------

    def to_dict(self) -> dict:
        def gp(p: GeoPoint):
            return {"lat": p.lat, "lon": p.lon, "alt": p.alt}

        return {
            "anchor": gp(self.anchor),
            "seed": self.seed,
            "background_class": self.background_class,
            "noise": asdict(self.noise),
            "ribbons": [
                {"polyline": [list(v) for v in r.polyline], "width_m": r.width_m, "class": r.class_name}
                for r in self.ribbons
            ],
            "billboards": [
                {
                    "position": gp(b.position),
                    "bottom_height_m": b.bottom_height_m,
                    "height_m": b.height_m,
                    "width_m": b.width_m,
                    "class": b.class_name,
                }
                for b in self.billboards
            ],
            "cylinders": [
                {"position": gp(c.position), "radius_m": c.radius_m, "height_m": c.height_m, "name": c.name}
                for c in self.cylinders
            ],
            "cameras": [
                {
                    "pano_id": c.pano_id,
                    "lat": c.position.lat,
                    "lon": c.position.lon,
                    "alt": c.position.alt,
                    "heading_deg": c.heading,
                    "camera_height_m": c.camera_height,
                    "image_width": c.image_width,
                    "image_height": c.image_height,
                    "sequence_id": c.sequence_id,
                    "seq_index": c.seq_index,
                }
                for c in self.cameras
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        def gp(x) -> GeoPoint:
            return GeoPoint(float(x["lat"]), float(x["lon"]), float(x.get("alt", 0.0)))

        def pos(x, anchor):
            # positions may be geographic or scene metres
            if "lat" in x:
                return gp(x)
            return local_to_geo(LocalPoint(float(x["east"]), float(x["north"]), float(x.get("up", 0.0))), anchor)

        anchor = gp(d["anchor"])
        cams = []
        for i, c in enumerate(d.get("cameras", [])):
            cams.append(
                PanoramaPose(
                    pano_id=str(c.get("pano_id", f"cam{i:03d}")),
                    position=pos(c, anchor),
                    heading=float(c.get("heading_deg", 0.0)),
                    camera_height=float(c.get("camera_height_m", 2.5)),
                    image_width=int(c.get("image_width", 16384)),
                    image_height=int(c.get("image_height", 8192)),
                    sequence_id=c.get("sequence_id", "synthetic"),
                    seq_index=c.get("seq_index", i),
                )
            )
        return cls(
            anchor=anchor,
            ribbons=[Ribbon(tuple(map(tuple, r["polyline"])), float(r["width_m"]), r.get("class", "road")) for r in d.get("ribbons", [])],
            billboards=[
                Billboard(pos(b["position"], anchor), float(b["bottom_height_m"]), float(b["height_m"]),
                          float(b.get("width_m", 0.75)), b.get("class", "stop_sign"))
                for b in d.get("billboards", [])
            ],
            cylinders=[
                Cylinder(pos(c["position"], anchor), float(c["radius_m"]), float(c.get("height_m", 10.0)),
                         str(c.get("name", f"tree{i:03d}")))
                for i, c in enumerate(d.get("cylinders", []))
            ],
            cameras=cams,
            seed=int(d.get("seed", 0)),
            noise=NoiseSpec(**d.get("noise", {})),
            background_class=d.get("background_class", "terrain"),
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SceneSpec":
        with open(path) as f:
            return cls.from_dict(json.load(f))


# -- land cover ----------------------------------------------------------------


def _segment_distance(px, py, a, b):
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    if L2 == 0.0:
        return np.hypot(px - ax, py - ay)
    t = np.clip(((px - ax) * dx + (py - ay) * dy) / L2, 0.0, 1.0)
    return np.hypot(px - (ax + t * dx), py - (ay + t * dy))


def pixel_centers(width_px: int, height_px: int, resolution: float):
    """Scene-metre coordinates of every pixel centre of a north-up grid centred on the anchor."""
    cols = (np.arange(width_px) + 0.5 - width_px / 2.0) * resolution
    rows = (height_px / 2.0 - np.arange(height_px) - 0.5) * resolution
    return np.meshgrid(cols, rows)


def render_landcover(
    scene: SceneSpec,
    resolution: float,
    extent: Tuple[float, float],
    heading: float = 0.0,
    class_table: Optional[Dict[int, str]] = None,
    name: str = "synthetic",
) -> LandCoverRaster:
    """Rasterize ribbons onto a north-up grid centred on the scene anchor.

    A pixel takes the class of the last ribbon whose centreline lies within
    half its width of the pixel centre.
    """
    if not resolution > 0:
        raise InvalidSceneError("resolution must be positive")
    w_px, h_px = int(round(extent[0] / resolution)), int(round(extent[1] / resolution))
    if w_px <= 0 or h_px <= 0:
        raise InvalidSceneError("empty extent")
    table = dict(class_table or DEFAULT_CLASS_TABLE)
    ids = {v: k for k, v in table.items()}
    for cname in [scene.background_class] + [r.class_name for r in scene.ribbons]:
        if cname not in ids:
            ids[cname] = max(ids.values(), default=-1) + 1
            table[ids[cname]] = cname
    px, py = pixel_centers(w_px, h_px, resolution)
    grid = np.full((h_px, w_px), ids[scene.background_class], dtype=np.uint8)
    for rib in scene.ribbons:
        d = np.full(px.shape, np.inf)
        for a, b in zip(rib.polyline, rib.polyline[1:]):
            d = np.minimum(d, _segment_distance(px, py, a, b))
        grid[d <= rib.width_m / 2.0] = ids[rib.class_name]
    return LandCoverRaster(grid, resolution, scene.anchor, table, heading, name)


def straight_ribbon(heading: float, width_m: float, length_m: float, class_name: str = "road",
                    lateral_m: float = 0.0) -> Ribbon:
    """Straight ribbon through the anchor along ``heading``, shifted sideways by ``lateral_m``."""
    h = math.radians(heading)
    ux, uy = math.sin(h), math.cos(h)
    rx, ry = math.cos(h), -math.sin(h)
    half = length_m / 2.0
    a = (-half * ux + lateral_m * rx, -half * uy + lateral_m * ry)
    b = (half * ux + lateral_m * rx, half * uy + lateral_m * ry)
    return Ribbon((a, b), width_m, class_name)


# -- billboards ----------------------------------------------------------------


@dataclass(frozen=True)
class BillboardView:
    """Exact appearance of a billboard from one camera plus its quantized box."""

    theta_t: float
    theta_b: float
    az: float
    half_width_deg: float
    d_hor: float
    h_b: float
    box: Optional[PixelBox]
    box_exact: Optional[Tuple[float, float, float, float]]
    pano_id: str = ""
    class_name: str = ""


def _eye(scene: SceneSpec, camera: PanoramaPose) -> np.ndarray:
    c = scene.local(camera.position)
    return np.array([c.east, c.north, c.up + camera.camera_height])


def _quantize(x0, y0, x1, y1):
    q = [float(np.rint(v)) for v in (x0, y0, x1, y1)]
    if q[2] <= q[0]:
        q[2] = q[0] + 1.0
    if q[3] <= q[1]:
        q[3] = q[1] + 1.0
    return q


def project_billboard(
    scene: SceneSpec,
    camera: PanoramaPose,
    billboard: Billboard,
    spec: Optional[ThumbnailSpec] = None,
    quantize: bool = True,
) -> BillboardView:
    """Exact angles of a billboard and the detector box it would produce.

    Without ``spec`` the box is on the camera's panorama; otherwise on the
    given thumbnail.
    """
    if camera.pitch != 0.0 or camera.roll != 0.0:
        raise InvalidSceneError("the oracle only models level cameras")
    eye = _eye(scene, camera)
    b = scene.local(billboard.position)
    de, dn = b.east - eye[0], b.north - eye[1]
    d = math.hypot(de, dn)
    if d == 0.0:
        raise NotVisibleError("billboard directly above or below the camera")
    z_bottom = b.up + billboard.bottom_height_m - eye[2]
    z_top = z_bottom + billboard.height_m
    theta_t = math.degrees(math.atan2(z_top, d))
    theta_b = math.degrees(math.atan2(z_bottom, d))
    az = math.degrees(math.atan2(de, dn)) % 360.0
    half_w = math.degrees(math.atan2(billboard.width_m / 2.0, d))

    if spec is None:
        W, H = camera.image_width, camera.image_height
        rel = (az - camera.heading + 180.0) % 360.0
        xc = rel / 360.0 * W
        dx = half_w / 360.0 * W
        exact = (xc - dx, (90.0 - theta_t) / 180.0 * H, xc + dx, (90.0 - theta_b) / 180.0 * H)
        if exact[0] < 0 or exact[2] > W:
            raise NotVisibleError("billboard straddles the panorama seam")
    else:
        corners = []
        rx, ry = math.cos(math.radians(az)), -math.sin(math.radians(az))
        hw = billboard.width_m / 2.0
        for s in (-1.0, 1.0):
            for z in (z_top, z_bottom):
                corners.append(_pinhole(camera, spec, np.array([de + s * rx * hw, dn + s * ry * hw, z])))
        if any(c is None for c in corners):
            raise NotVisibleError("billboard outside the thumbnail")
        xs, ys = zip(*corners)
        x0, y0, x1, y1 = min(xs), min(ys), max(xs), max(ys)
        exact = (x0, y0, x1, y1)
        W, H = spec.width, spec.height
        if x0 < 0 or y0 < 0 or x1 > W or y1 > H:
            raise NotVisibleError("billboard cut by the thumbnail border")

    box_vals = _quantize(*exact) if quantize else list(exact)
    box = PixelBox(*box_vals, image=spec if spec is not None else camera.pano_id)
    return BillboardView(
        theta_t, theta_b, az, half_w, d, z_bottom, box, exact, camera.pano_id, billboard.class_name
    )


def _camera_basis(camera: PanoramaPose, spec: ThumbnailSpec):
    h = math.radians(camera.heading + spec.heading_offset)
    p = math.radians(spec.pitch)
    fwd = np.array([math.cos(p) * math.sin(h), math.cos(p) * math.cos(h), math.sin(p)])
    right = np.array([math.cos(h), -math.sin(h), 0.0])
    up = np.cross(right, fwd)
    return right, fwd, up


def _pinhole(camera: PanoramaPose, spec: ThumbnailSpec, v: np.ndarray):
    """Image-plane position of a camera-relative vector, or None if behind."""
    right, fwd, up = _camera_basis(camera, spec)
    z = float(v @ fwd)
    if z <= 0:
        return None
    f = spec.focal_px
    return spec.width / 2.0 + f * float(v @ right) / z, spec.height / 2.0 - f * float(v @ up) / z


# -- cylinders -----------------------------------------------------------------


@dataclass(frozen=True)
class CylinderView:
    az_left: float
    az_right: float
    az_center: float
    half_angle: float
    depth: float
    altitude: float
    pano_id: str = ""
    name: str = ""


def project_cylinder(
    scene: SceneSpec, camera: PanoramaPose, cylinder: Cylinder, measure_height: float = 1.37
) -> CylinderView:
    """Tangent-ray azimuths of a vertical cylinder and the distance to its axis.

    The silhouette half-angle is ``asin(r / D)`` for axis distance ``D``.
    """
    eye = _eye(scene, camera)
    c = scene.local(cylinder.position)
    de, dn = c.east - eye[0], c.north - eye[1]
    D = math.hypot(de, dn)
    if D <= cylinder.radius_m:
        raise InvalidSceneError("camera inside cylinder")
    az = math.degrees(math.atan2(de, dn)) % 360.0
    half = math.degrees(math.asin(cylinder.radius_m / D))
    alt = math.degrees(math.atan2(c.up + measure_height - eye[2], D))
    return CylinderView(az - half, az + half, az, half, D, alt, camera.pano_id, cylinder.name)


def render_cylinder_mask(
    scene: SceneSpec, camera: PanoramaPose, spec: ThumbnailSpec, cylinder: Cylinder
) -> np.ndarray:
    """Boolean trunk mask on a thumbnail by casting a ray through every pixel centre."""
    eye = _eye(scene, camera)
    c = scene.local(cylinder.position)
    right, fwd, up = _camera_basis(camera, spec)
    f = spec.focal_px
    xs = np.arange(spec.width) + 0.5 - spec.width / 2.0
    ys = spec.height / 2.0 - (np.arange(spec.height) + 0.5)
    X, Y = np.meshgrid(xs, ys)
    dirs = X[..., None] * right + f * fwd + Y[..., None] * up
    h = np.hypot(dirs[..., 0], dirs[..., 1])
    ux, uy = dirs[..., 0] / h, dirs[..., 1] / h
    ax, ay = c.east - eye[0], c.north - eye[1]
    t = ax * ux + ay * uy
    perp = np.abs(ax * uy - ay * ux)
    z = eye[2] + dirs[..., 2] / h * t - c.up
    return (t > 0) & (perp <= cylinder.radius_m) & (z >= 0) & (z <= cylinder.height_m)


# -- noise ---------------------------------------------------------------------


def perturb(items: Sequence, noise: NoiseSpec, seed: int) -> list:
    """Add isotropic Gaussian noise to oracle outputs.

    Angles get ``angle_deg_sigma``, cylinder depths ``depth_m_sigma`` and
    camera positions ``pose_m_sigma`` per horizontal axis. Zero sigmas leave
    items untouched.
    """
    rng = np.random.default_rng(seed)
    sa, sp, sd = noise.angle_deg_sigma, noise.pose_m_sigma, noise.depth_m_sigma
    out = []
    for it in items:
        if isinstance(it, BillboardView):
            if sa:
                dt, db, daz = rng.normal(0.0, sa, 3)
                it = replace(it, theta_t=it.theta_t + dt, theta_b=it.theta_b + db, az=it.az + daz)
        elif isinstance(it, CylinderView):
            if sa:
                dl, dr = rng.normal(0.0, sa, 2)
                left, right = it.az_left + dl, it.az_right + dr
                it = replace(it, az_left=left, az_right=right, az_center=0.5 * (left + right))
            if sd:
                it = replace(it, depth=it.depth + rng.normal(0.0, sd))
        elif isinstance(it, PanoramaPose):
            if sp:
                de, dn = rng.normal(0.0, sp, 2)
                it = it.with_position(local_to_geo(LocalPoint(de, dn), it.position))
        else:
            raise TypeError(f"cannot perturb {type(it).__name__}")
        out.append(it)
    return out


# -- whole-scene generation ----------------------------------------------------


def camera_track(
    scene_anchor: GeoPoint,
    n: int,
    spacing_m: float,
    heading: float,
    start_m: float = 0.0,
    lateral_m: float = 0.0,
    sequence_id: str = "synthetic",
    camera_height: float = 2.5,
    image_width: int = 16384,
) -> List[PanoramaPose]:
    """Level panoramas every ``spacing_m`` metres along ``heading``."""
    h = math.radians(heading)
    out = []
    for i in range(n):
        s = start_m + i * spacing_m
        e = s * math.sin(h) + lateral_m * math.cos(h)
        nn = s * math.cos(h) - lateral_m * math.sin(h)
        out.append(
            PanoramaPose(
                pano_id=f"{sequence_id}_{i:04d}",
                position=local_to_geo(LocalPoint(e, nn), scene_anchor),
                heading=heading,
                camera_height=camera_height,
                image_width=image_width,
                image_height=image_width // 2,
                sequence_id=sequence_id,
                seq_index=i,
            )
        )
    return out


def trunk_observations(
    scene: SceneSpec,
    thumb_width: int = 1024,
    thumb_height: int = 1024,
    measure_height: float = 1.37,
    max_depth_m: float = 25.0,
    apply_noise: bool = True,
) -> List[dict]:
    """Trunk observations every planned thumbnail would yield, as JSON records.

    A trunk is observed in a thumbnail when both silhouette edges and the
    measuring point fall inside the frame.
    """
    from .triangulation import THUMBNAIL_OFFSETS

    views = []
    for cam in scene.cameras:
        for cyl in scene.cylinders:
            try:
                v = project_cylinder(scene, cam, cyl, measure_height)
            except InvalidSceneError:
                continue
            if v.depth > max_depth_m:
                continue
            for off in THUMBNAIL_OFFSETS:
                spec = ThumbnailSpec(off, width=thumb_width, height=thumb_height, pano_id=cam.pano_id)
                half_h = spec.hfov / 2.0
                rel_l = (v.az_left - cam.heading - off + 180.0) % 360.0 - 180.0
                rel_r = (v.az_right - cam.heading - off + 180.0) % 360.0 - 180.0
                if not (-half_h < rel_l < half_h and -half_h < rel_r < half_h):
                    continue
                rel_c = (v.az_center - cam.heading - off + 180.0) % 360.0 - 180.0
                y = spec.focal_px * math.tan(math.radians(v.altitude)) / math.cos(math.radians(rel_c))
                if abs(y) >= spec.height / 2.0:
                    continue
                views.append((cam, spec, v))
    noisy = [v for _, _, v in views]
    if apply_noise:
        noisy = perturb(noisy, scene.noise, scene.seed)
    records = []
    for (cam, spec, _), v in zip(views, noisy):
        records.append(
            {
                "obs_id": f"{cam.pano_id}/{int(spec.heading_offset):+d}/{v.name}",
                "pano_id": cam.pano_id,
                "thumbnail_spec": {
                    "heading_offset": spec.heading_offset,
                    "pitch": spec.pitch,
                    "hfov": spec.hfov,
                    "width": spec.width,
                    "height": spec.height,
                },
                "az_left_deg": v.az_left % 360.0,
                "az_right_deg": v.az_right % 360.0,
                "depth_m": v.depth,
                "truth_id": v.name,
            }
        )
    return records


def billboard_detections(scene: SceneSpec) -> List[dict]:
    """Quantized panorama boxes for every billboard seen by every camera."""
    records = []
    for cam in scene.cameras:
        for k, bb in enumerate(scene.billboards):
            try:
                v = project_billboard(scene, cam, bb)
            except NotVisibleError:
                continue
            records.append(
                {
                    "pano_id": cam.pano_id,
                    "class": bb.class_name,
                    "col_min": v.box.col_min,
                    "row_min": v.box.row_min,
                    "col_max": v.box.col_max,
                    "row_max": v.box.row_max,
                    "confidence": 1.0,
                    "truth_id": f"sign{k:03d}",
                }
            )
    return records
