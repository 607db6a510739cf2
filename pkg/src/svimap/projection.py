"""Pixel <-> angle geometry for equirectangular panoramas and thumbnails.

Two kinds of image coordinate appear here:

* pixel indices ``(col, row)``: integers (or floats) naming a pixel, which
  samples the scene at its centre ``(col + 0.5, row + 0.5)``;
* continuous image-plane coordinates ``(x, y)``: ``x`` in ``[0, width]``
  from the left edge, ``y`` in ``[0, height]`` from the top edge. Detector
  boxes are given in these units.

Panorama layout: the centre column looks along the pose heading, the left
edge is heading - 180 degrees, the top edge is the zenith.

Thumbnails are ideal pinhole images with ``focal = (width / 2) / tan(hfov / 2)``
looking along ``heading + heading_offset`` with the given pitch.

The camera body frame is (right, forward, up). A pose rotates it into ENU by
heading (about up, clockwise), then pitch (about right, nose up positive),
then roll (about forward, right side down positive).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .errors import InvalidDetectionError, InvalidSpecError, PixelRangeError
from .geo import PanoramaPose, normalize_azimuth, wrap_signed


@dataclass(frozen=True)
class AngularObservation:
    """World-frame ray direction: azimuth from north, altitude above horizontal."""

    azimuth: float
    altitude: float

    def __post_init__(self):
        if not (math.isfinite(self.azimuth) and math.isfinite(self.altitude)):
            raise ValueError("angles must be finite")
        if not -90.0 <= self.altitude <= 90.0:
            raise ValueError(f"altitude {self.altitude} outside [-90, 90]")
        object.__setattr__(self, "azimuth", normalize_azimuth(self.azimuth))


@dataclass(frozen=True)
class ThumbnailSpec:
    """A perspective image cut from a panorama."""

    heading_offset: float
    pitch: float = 0.0
    hfov: float = 90.0
    width: int = 1024
    height: int = 1024
    pano_id: Optional[str] = None

    def __post_init__(self):
        if not 0.0 < self.hfov < 180.0:
            raise InvalidSpecError(f"hfov must be in (0, 180), got {self.hfov}")
        if self.width <= 0 or self.height <= 0:
            raise InvalidSpecError("thumbnail dimensions must be positive")

    @property
    def focal_px(self) -> float:
        return (self.width / 2.0) / math.tan(math.radians(self.hfov) / 2.0)

    @property
    def vfov(self) -> float:
        return 2.0 * math.degrees(math.atan((self.height / 2.0) / self.focal_px))


@dataclass(frozen=True)
class PixelBox:
    """Axis-aligned box in continuous image-plane coordinates."""

    col_min: float
    row_min: float
    col_max: float
    row_max: float
    image: Union[str, ThumbnailSpec, None] = None

    def __post_init__(self):
        if self.col_min > self.col_max or self.row_min > self.row_max:
            raise InvalidDetectionError("box bounds are inverted")

    @property
    def col_center(self) -> float:
        return 0.5 * (self.col_min + self.col_max)

    @property
    def row_center(self) -> float:
        return 0.5 * (self.row_min + self.row_max)


@dataclass(frozen=True)
class BoxExtents:
    theta_top: float
    theta_bottom: float
    az_center: float
    hfov_box: float


# -- rotations ---------------------------------------------------------------


def _rot_heading(h: float) -> np.ndarray:
    c, s = math.cos(math.radians(h)), math.sin(math.radians(h))
    # columns: images of right, forward, up
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_pitch(p: float) -> np.ndarray:
    c, s = math.cos(math.radians(p)), math.sin(math.radians(p))
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_roll(r: float) -> np.ndarray:
    c, s = math.cos(math.radians(r)), math.sin(math.radians(r))
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def body_to_world(heading: float, pitch: float = 0.0, roll: float = 0.0) -> np.ndarray:
    """Rotation taking (right, forward, up) body vectors to (east, north, up)."""
    return _rot_heading(heading) @ _rot_pitch(pitch) @ _rot_roll(roll)


def _thumb_rotation(pose: PanoramaPose, spec: ThumbnailSpec) -> np.ndarray:
    return body_to_world(pose.heading, pose.pitch, pose.roll) @ (
        _rot_heading(spec.heading_offset) @ _rot_pitch(spec.pitch)
    )


def direction_to_angles(v) -> AngularObservation:
    e, n, u = (float(c) for c in v)
    az = math.degrees(math.atan2(e, n))
    alt = math.degrees(math.atan2(u, math.hypot(e, n)))
    return AngularObservation(az, alt)


def angles_to_direction(obs: AngularObservation) -> np.ndarray:
    az, alt = math.radians(obs.azimuth), math.radians(obs.altitude)
    return np.array([math.cos(alt) * math.sin(az), math.cos(alt) * math.cos(az), math.sin(alt)])


# -- panorama ----------------------------------------------------------------


def pano_point_to_angles(pose: PanoramaPose, x: float, y: float) -> AngularObservation:
    """Angles of a continuous image-plane point on an equirectangular panorama."""
    W, H = pose.image_width, pose.image_height
    az_rel = x / W * 360.0 - 180.0
    alt_rel = 90.0 - y / H * 180.0
    if pose.pitch == 0.0 and pose.roll == 0.0:
        return AngularObservation(pose.heading + az_rel, alt_rel)
    body = angles_to_direction(AngularObservation(az_rel, alt_rel))
    return direction_to_angles(body_to_world(pose.heading, pose.pitch, pose.roll) @ body)


def pano_pixel_to_angles(pose: PanoramaPose, col: float, row: float) -> AngularObservation:
    """Angles sampled by pixel ``(col, row)`` of a panorama.

    Fractional indices are accepted down to -0.5 (the image edge), matching
    what :func:`angles_to_pano_point` can produce after subtracting 0.5.
    """
    if not (-0.5 <= col < pose.image_width - 0.5 and -0.5 <= row < pose.image_height - 0.5):
        raise PixelRangeError(
            f"pixel ({col}, {row}) outside {pose.image_width}x{pose.image_height} panorama"
        )
    return pano_point_to_angles(pose, col + 0.5, row + 0.5)


def angles_to_pano_point(pose: PanoramaPose, obs: AngularObservation) -> Tuple[float, float]:
    """Continuous image-plane position of a world ray on the panorama."""
    if pose.pitch == 0.0 and pose.roll == 0.0:
        az_rel, alt_rel = wrap_signed(obs.azimuth - pose.heading), obs.altitude
    else:
        R = body_to_world(pose.heading, pose.pitch, pose.roll)
        rel = direction_to_angles(R.T @ angles_to_direction(obs))
        az_rel, alt_rel = wrap_signed(rel.azimuth), rel.altitude
    x = (az_rel + 180.0) / 360.0 * pose.image_width
    y = (90.0 - alt_rel) / 180.0 * pose.image_height
    return x, y


# -- thumbnails --------------------------------------------------------------


def thumb_point_to_angles(
    pose: PanoramaPose, spec: ThumbnailSpec, x: float, y: float
) -> AngularObservation:
    """Angles of a continuous image-plane point on a thumbnail."""
    ray = np.array([x - spec.width / 2.0, spec.focal_px, spec.height / 2.0 - y])
    return direction_to_angles(_thumb_rotation(pose, spec) @ ray)


def thumb_pixel_to_angles(
    pose: PanoramaPose, spec: ThumbnailSpec, col: float, row: float
) -> AngularObservation:
    """Angles sampled by (possibly fractional) pixel ``(col, row)`` of a thumbnail.

    Valid indices are those :func:`angles_to_thumb_pixel` can return.
    """
    if not (-0.5 <= col < spec.width - 0.5 and -0.5 <= row < spec.height - 0.5):
        raise PixelRangeError(f"pixel ({col}, {row}) outside {spec.width}x{spec.height} thumbnail")
    return thumb_point_to_angles(pose, spec, col + 0.5, row + 0.5)


def angles_to_thumb_point(
    pose: PanoramaPose, spec: ThumbnailSpec, obs: AngularObservation
) -> Optional[Tuple[float, float]]:
    """Continuous image-plane position of a ray, or None when it misses the frame."""
    cam = _thumb_rotation(pose, spec).T @ angles_to_direction(obs)
    right, fwd, up = cam
    if fwd <= 0.0:
        return None
    f = spec.focal_px
    x = spec.width / 2.0 + f * right / fwd
    y = spec.height / 2.0 - f * up / fwd
    if not (0.0 <= x <= spec.width and 0.0 <= y <= spec.height):
        return None
    return float(x), float(y)


def angles_to_thumb_pixel(
    pose: PanoramaPose, spec: ThumbnailSpec, obs: AngularObservation
) -> Optional[Tuple[float, float]]:
    """Fractional pixel index ``(col, row)`` of a ray, or None when out of view.

    Exact inverse of :func:`thumb_pixel_to_angles`.
    """
    pt = angles_to_thumb_point(pose, spec, obs)
    if pt is None:
        return None
    col, row = pt[0] - 0.5, pt[1] - 0.5
    if not (-0.5 <= col < spec.width - 0.5 and -0.5 <= row < spec.height - 0.5):
        return None
    return col, row


def box_to_angular_extents(
    pose: PanoramaPose, box: PixelBox, spec: Optional[ThumbnailSpec] = None
) -> BoxExtents:
    """Vertical and horizontal angular extents of a detection box.

    ``theta_top``/``theta_bottom`` are the altitudes of the top and bottom edge
    midpoints, ``az_center`` the azimuth of the box centre and ``hfov_box``
    the azimuth span across the box at its centre row. When ``spec`` is None
    the box lives on the panorama itself.
    """
    if box.col_max - box.col_min <= 0 or box.row_max - box.row_min <= 0:
        raise InvalidDetectionError("degenerate box (zero area)")
    if spec is None:
        W, H = pose.image_width, pose.image_height
        to_angles = lambda x, y: pano_point_to_angles(pose, x, y)  # noqa: E731
    else:
        W, H = spec.width, spec.height
        to_angles = lambda x, y: thumb_point_to_angles(pose, spec, x, y)  # noqa: E731
    if box.col_min < 0 or box.row_min < 0 or box.col_max > W or box.row_max > H:
        raise InvalidDetectionError(f"box {box} exceeds {W}x{H} image")

    cx, cy = box.col_center, box.row_center
    top = to_angles(cx, box.row_min)
    bottom = to_angles(cx, box.row_max)
    center = to_angles(cx, cy)
    left = to_angles(box.col_min, cy)
    right = to_angles(box.col_max, cy)
    span = normalize_azimuth(right.azimuth - left.azimuth)
    return BoxExtents(top.altitude, bottom.altitude, center.azimuth, span)
