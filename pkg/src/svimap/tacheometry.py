"""Single-image localization of objects with a known vertical size.

An object of height ``h_o`` whose top and bottom are seen at altitudes
``theta_t`` and ``theta_b`` lies at horizontal distance

    d_hor = h_o * cos(theta_t) * cos(theta_b) / sin(theta_t - theta_b)

with signed altitudes (negative below the horizon). The same expression
covers objects straddling the camera height and objects entirely above or
below it. The bottom sits ``h_b = tan(theta_b) * d_hor`` metres above the
camera centre (negative when below).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Union

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import ConfigError, DegenerateObjectError, PoleError
from .geo import (
    GeoPoint,
    LocalPoint,
    PanoramaPose,
    geo_to_local,
    local_to_geo,
    normalize_azimuth,
)
from .projection import PixelBox, ThumbnailSpec, box_to_angular_extents

MIN_ANGLE_DEG = 0.01
POLE_MARGIN_DEG = 0.01
DEFAULT_MERGE_RADIUS_M = 3.0

METHOD_TACHEOMETRY = "tacheometry"
METHOD_TRIANGULATION = "triangulation"
METHOD_DEPTH = "depth"


@dataclass(frozen=True)
class KnownDimension:
    class_name: str
    height_m: float

    def __post_init__(self):
        if not self.height_m > 0:
            raise ConfigError(f"{self.class_name}: height must be positive")


class DimensionRegistry(Mapping[str, KnownDimension]):
    """Known vertical sizes keyed by detection class."""

    def __init__(self, heights: Optional[Mapping[str, float]] = None):
        self._dims: Dict[str, KnownDimension] = {}
        for name, h in (heights or {}).items():
            self._dims[name] = KnownDimension(name, float(h))

    @classmethod
    def default(cls) -> "DimensionRegistry":
        text = resources.files("svimap").joinpath("data/registry.json").read_text()
        return cls(json.loads(text))

    @classmethod
    def from_json(cls, path: Union[str, Path], with_defaults: bool = True) -> "DimensionRegistry":
        with open(path) as f:
            data = json.load(f)
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: registry must be a JSON object")
        reg = cls.default() if with_defaults else cls()
        reg._dims.update({k: KnownDimension(k, float(v)) for k, v in data.items()})
        return reg

    def height_of(self, class_name: str) -> float:
        try:
            return self._dims[class_name].height_m
        except KeyError:
            raise ConfigError(f"no known dimension for class {class_name!r}") from None

    def as_dict(self) -> Dict[str, float]:
        return {k: v.height_m for k, v in sorted(self._dims.items())}

    def __getitem__(self, key):
        return self._dims[key]

    def __iter__(self):
        return iter(self._dims)

    def __len__(self):
        return len(self._dims)


@dataclass(frozen=True)
class TachInput:
    pose: PanoramaPose
    theta_t: float
    theta_b: float
    az: float
    h_o: float


@dataclass(frozen=True)
class Detection:
    class_name: str
    box: PixelBox
    pano_id: str
    thumbnail: Optional[ThumbnailSpec] = None
    confidence: float = 1.0


@dataclass(frozen=True)
class LocatedObject:
    """A detection placed in 3D.

    ``h_b`` is relative to the camera centre; ``height_above_ground`` adds the
    camera mast height. ``d_hor_uncertainty`` is the worst-case distance
    error implied by ``angle_uncertainty`` degrees of error on each box edge.
    """

    class_name: str
    position: GeoPoint
    d_hor: float
    h_b: float
    azimuth: float
    source_pano: str
    method: str = METHOD_TACHEOMETRY
    height_above_ground: Optional[float] = None
    d_hor_uncertainty: Optional[float] = None
    angle_uncertainty: Optional[float] = None
    n_observations: int = 1
    confidence: Optional[float] = None


def _check_angles(theta_t: float, theta_b: float, min_angle: float) -> None:
    for name, th in (("theta_t", theta_t), ("theta_b", theta_b)):
        if abs(th) >= 90.0 - POLE_MARGIN_DEG:
            raise PoleError(f"{name}={th} is too close to the pole")
    if theta_t - theta_b < min_angle:
        raise DegenerateObjectError(
            f"angular height {theta_t - theta_b:.6g} deg below {min_angle} deg; object at infinity"
        )


def tacheometric_distance(inp: TachInput, min_angle: float = MIN_ANGLE_DEG):
    """Horizontal distance and bottom offset from a known object height.

    Returns:
        ``(d_hor, h_b)`` in metres; ``h_b`` is negative when the bottom is
        below the camera centre.
    """
    if not inp.h_o > 0:
        raise ConfigError("object height must be positive")
    _check_angles(inp.theta_t, inp.theta_b, min_angle)
    t, b = math.radians(inp.theta_t), math.radians(inp.theta_b)
    d_hor = inp.h_o * math.cos(t) * math.cos(b) / math.sin(t - b)
    h_b = math.tan(b) * d_hor
    return d_hor, h_b


def distance_bound(h_o: float, theta_t: float, theta_b: float, delta: float) -> float:
    """Worst-case |d_hor| error when each edge altitude is off by up to ``delta`` deg.

    d_hor = h_o / (tan theta_t - tan theta_b) falls as the top rises and the
    bottom drops, so the extremes sit at the corners of the error box.
    """
    t, b = math.radians(theta_t), math.radians(theta_b)
    d = h_o / (math.tan(t) - math.tan(b))
    dd = math.radians(delta)
    lim = math.radians(90.0 - POLE_MARGIN_DEG)
    near = h_o / (math.tan(min(t + dd, lim)) - math.tan(max(b - dd, -lim)))
    den_far = math.tan(t - dd) - math.tan(b + dd)
    if den_far <= 0:
        return math.inf
    far = h_o / den_far
    return max(far - d, d - near)


def pixel_angle(pose: PanoramaPose, spec: Optional[ThumbnailSpec] = None) -> float:
    """Angular size of one pixel (vertical), in degrees."""
    if spec is None:
        return 180.0 / pose.image_height
    return math.degrees(math.atan(1.0 / spec.focal_px))


def place_object(
    pose: PanoramaPose,
    d_hor: float,
    h_b: float,
    az: float,
    class_name: str = "object",
    anchor: Optional[GeoPoint] = None,
    **extra,
) -> LocatedObject:
    """Put an object at ``d_hor`` metres along azimuth ``az`` from the camera.

    The vertical coordinate is ``camera_height + h_b`` above the camera's
    ground datum. ``anchor`` picks the tangent plane to work in; by default
    the camera position itself.
    """
    if not d_hor > 0:
        raise ValueError("d_hor must be positive")
    a = math.radians(az)
    east, north = d_hor * math.sin(a), d_hor * math.cos(a)
    up = pose.camera_height + h_b
    if anchor is None:
        pos = local_to_geo(LocalPoint(east, north, up), pose.position)
    else:
        cam = geo_to_local(pose.position, anchor)
        pos = local_to_geo(LocalPoint(cam.east + east, cam.north + north, cam.up + up), anchor)
    return LocatedObject(
        class_name=class_name,
        position=pos,
        d_hor=d_hor,
        h_b=h_b,
        azimuth=normalize_azimuth(az),
        source_pano=pose.pano_id,
        height_above_ground=up,
        **extra,
    )


def localize_detection(
    pose: PanoramaPose,
    det: Detection,
    registry: Mapping[str, float] | DimensionRegistry,
    anchor: Optional[GeoPoint] = None,
    min_angle: float = MIN_ANGLE_DEG,
) -> LocatedObject:
    """Bounding box -> angular extents -> distance -> geographic position."""
    if isinstance(registry, DimensionRegistry):
        h_o = registry.height_of(det.class_name)
    else:
        if det.class_name not in registry:
            raise ConfigError(f"no known dimension for class {det.class_name!r}")
        h_o = float(registry[det.class_name])
    ext = box_to_angular_extents(pose, det.box, det.thumbnail)
    d_hor, h_b = tacheometric_distance(
        TachInput(pose, ext.theta_top, ext.theta_bottom, ext.az_center, h_o), min_angle
    )
    delta = pixel_angle(pose, det.thumbnail)
    return place_object(
        pose,
        d_hor,
        h_b,
        ext.az_center,
        class_name=det.class_name,
        anchor=anchor,
        d_hor_uncertainty=distance_bound(h_o, ext.theta_top, ext.theta_bottom, delta),
        angle_uncertainty=delta,
        confidence=det.confidence,
    )


def _cluster_labels(xy: np.ndarray, radius: float) -> np.ndarray:
    n = len(xy)
    if n == 0:
        return np.zeros(0, dtype=int)
    pairs = cKDTree(xy).query_pairs(radius, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    # relabel by first occurrence so cluster order follows input order
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    remap = np.empty_like(order)
    remap[order] = np.arange(len(order))
    return remap[labels]


def merge_observations(
    objs: Iterable[LocatedObject], radius_m: float = DEFAULT_MERGE_RADIUS_M
) -> List[LocatedObject]:
    """Single-linkage clustering of repeated sightings of the same object.

    Observations of the same class within ``radius_m`` (horizontally) of each
    other, directly or through a chain, form one object positioned at the
    component-wise median. Distance, azimuth and source panorama are taken
    from the member nearest that median.
    """
    if not radius_m > 0:
        raise ValueError("radius_m must be positive")
    objs = list(objs)
    if not objs:
        return []
    anchor = objs[0].position
    out: List[LocatedObject] = []
    classes = sorted({o.class_name for o in objs})
    for cls in classes:
        members = [o for o in objs if o.class_name == cls]
        loc = [geo_to_local(o.position, anchor) for o in members]
        xy = np.array([[p.east, p.north] for p in loc])
        up = np.array([p.up for p in loc])
        labels = _cluster_labels(xy, radius_m)
        for k in range(labels.max() + 1):
            idx = np.flatnonzero(labels == k)
            med = np.median(xy[idx], axis=0)
            med_up = float(np.median(up[idx]))
            rep = members[idx[np.argmin(np.hypot(*(xy[idx] - med).T))]]
            pos = local_to_geo(LocalPoint(float(med[0]), float(med[1]), med_up), anchor)
            n_obs = int(sum(members[i].n_observations for i in idx))
            out.append(replace(rep, position=pos, n_observations=n_obs))
    return out
