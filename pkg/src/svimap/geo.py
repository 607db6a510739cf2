"""Geographic points, local tangent-plane offsets and bearings.

The local plane is a spherical-earth equirectangular approximation anchored
at a point: east and north offsets scale degrees by the arc length of one
degree along the parallel and meridian at the anchor latitude. Street view
scenes span well under a kilometre, so this is plenty.

Frame conventions used everywhere in the package:
  - east, north, up in metres (ENU)
  - azimuths in degrees clockwise from true north, in [0, 360)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

from .errors import DegenerateGeometryError, InvalidCoordinateError

EARTH_RADIUS_M = 6_371_000.0
DEFAULT_CAMERA_HEIGHT_M = 2.5

_M_PER_DEG = EARTH_RADIUS_M * math.pi / 180.0


def meters_per_degree_lat() -> float:
    return _M_PER_DEG


def meters_per_degree_lon(lat: float) -> float:
    return _M_PER_DEG * math.cos(math.radians(lat))


def normalize_azimuth(deg: float) -> float:
    """Wrap an angle into [0, 360)."""
    a = math.fmod(deg, 360.0)
    if a < 0.0:
        a += 360.0
    # fmod of a tiny negative number plus 360 rounds up to exactly 360
    if a >= 360.0:
        a = 0.0
    return a


def wrap_signed(deg: float) -> float:
    """Wrap an angle into [-180, 180)."""
    return normalize_azimuth(deg + 180.0) - 180.0


def _wrap_lon(lon: float) -> float:
    return normalize_azimuth(lon + 180.0) - 180.0


@dataclass(frozen=True)
class GeoPoint:
    """WGS84 latitude/longitude in degrees and an altitude in metres.

    The altitude datum is whatever the caller uses; the library only ever
    adds offsets to it.
    """

    lat: float
    lon: float
    alt: float = 0.0

    def __post_init__(self):
        for name in ("lat", "lon", "alt"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidCoordinateError(f"{name} must be finite, got {v!r}")
        if not -90.0 <= self.lat <= 90.0:
            raise InvalidCoordinateError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon < 180.0:
            raise InvalidCoordinateError(f"longitude {self.lon} outside [-180, 180)")


@dataclass(frozen=True)
class LocalPoint:
    """ENU offset in metres from ``anchor``."""

    east: float
    north: float
    up: float = 0.0
    anchor: Optional[GeoPoint] = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("east", "north", "up"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidCoordinateError(f"{name} must be finite")

    @property
    def horizontal(self) -> float:
        return math.hypot(self.east, self.north)


@dataclass(frozen=True)
class PanoramaPose:
    """Street view image metadata: where the camera was and how it looked.

    ``position.alt`` is the ground datum below the camera; the optical
    centre sits ``camera_height`` metres above it.
    """

    pano_id: str
    position: GeoPoint
    heading: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0
    camera_height: float = DEFAULT_CAMERA_HEIGHT_M
    image_width: int = 16384
    image_height: int = 8192
    sequence_id: Optional[str] = None
    seq_index: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_azimuth(self.heading))
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image dimensions must be positive")

    @property
    def is_full_panorama(self) -> bool:
        return self.image_width == 2 * self.image_height

    def with_position(self, position: GeoPoint) -> "PanoramaPose":
        return replace(self, position=position)


def geo_to_local(p: GeoPoint, anchor: GeoPoint) -> LocalPoint:
    """Offset of ``p`` from ``anchor`` in the anchor's tangent plane."""
    dlon = wrap_signed(p.lon - anchor.lon)
    east = dlon * meters_per_degree_lon(anchor.lat)
    north = (p.lat - anchor.lat) * _M_PER_DEG
    return LocalPoint(east, north, p.alt - anchor.alt, anchor)


def local_to_geo(p: LocalPoint, anchor: Optional[GeoPoint] = None) -> GeoPoint:
    """Inverse of :func:`geo_to_local`.

    ``anchor`` defaults to the one recorded on the point.
    """
    if anchor is None:
        anchor = p.anchor
    if anchor is None:
        raise ValueError("local point has no anchor")
    m_lon = meters_per_degree_lon(anchor.lat)
    if m_lon == 0.0:
        raise InvalidCoordinateError("tangent plane undefined at the poles")
    lat = anchor.lat + p.north / _M_PER_DEG
    lon = _wrap_lon(anchor.lon + p.east / m_lon)
    return GeoPoint(lat, lon, anchor.alt + p.up)


def offset(anchor: GeoPoint, east: float, north: float, up: float = 0.0) -> GeoPoint:
    """Shorthand for ``local_to_geo(LocalPoint(east, north, up), anchor)``."""
    return local_to_geo(LocalPoint(east, north, up), anchor)


def horizontal_distance(a: GeoPoint, b: GeoPoint) -> float:
    return geo_to_local(b, a).horizontal


def bearing_between(a: GeoPoint, b: GeoPoint) -> float:
    """Azimuth of ``b`` seen from ``a``, clockwise from north.

    Offsets are scaled at the mean latitude of the two points so that the
    forward and reverse bearings differ by exactly 180 degrees.
    """
    dlon = wrap_signed(b.lon - a.lon)
    mid_lat = 0.5 * (a.lat + b.lat)
    east = dlon * meters_per_degree_lon(mid_lat)
    north = (b.lat - a.lat) * _M_PER_DEG
    if east == 0.0 and north == 0.0:
        raise DegenerateGeometryError("bearing between coincident points")
    return normalize_azimuth(math.degrees(math.atan2(east, north)))
