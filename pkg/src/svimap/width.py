"""Width measurement of ribbon-shaped ground classes on a land-cover raster.

The raster is north-up. Its ``heading`` is the direction of travel; rotating
the raster so that direction points up turns roads into vertical bands, and
each raster row of the rotated map then crosses the band at right angles.

Steps:
  1. rotate so the heading points up (nearest neighbour, enlarged canvas)
  2. binarize the target class
  3. morphological open-then-close
  4. run-length encode sampled rows ("scanlines"); each run is a slice
  5. slice attributes: touching classes and cover ratio
  6. map slice endpoints back to the original raster and to geographic
     coordinates
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .errors import ConfigError
from .geo import GeoPoint, LocalPoint, local_to_geo, normalize_azimuth

NODATA = 255
EDGE = "edge"
DEFAULT_INTERVAL_M = 0.25
DEFAULT_KERNEL_PX = 3
DEFAULT_MIN_COVER = 0.9
DEFAULT_ALLOWED_TOUCHING = frozenset({"terrain", "sidewalk", "curb", "vegetation"})


@dataclass
class LandCoverRaster:
    """Georeferenced grid of class IDs.

    ``center`` is the geographic position of the grid centre, ``resolution``
    the pixel size in metres, and ``heading`` the travel direction in degrees
    clockwise from north (grid rows run west to east, top row northmost).
    """

    grid: np.ndarray
    resolution: float
    center: GeoPoint
    class_table: Dict[int, str]
    heading: float = 0.0
    name: str = ""

    def __post_init__(self):
        self.grid = np.asarray(self.grid)
        if self.grid.ndim != 2 or self.grid.size == 0:
            raise ConfigError("land-cover grid must be a non-empty 2D array")
        if not self.resolution > 0:
            raise ConfigError("resolution must be positive")
        self.class_table = {int(k): str(v) for k, v in self.class_table.items()}
        if NODATA in self.class_table:
            raise ConfigError(f"class id {NODATA} is reserved for no-data")
        present = set(np.unique(self.grid).tolist()) - {NODATA}
        missing = present - set(self.class_table)
        if missing:
            raise ConfigError(f"class ids {sorted(missing)} missing from class_table")
        self.heading = normalize_azimuth(self.heading)

    @property
    def height(self) -> int:
        return self.grid.shape[0]

    @property
    def width(self) -> int:
        return self.grid.shape[1]

    def class_id(self, name: str) -> int:
        for k, v in self.class_table.items():
            if v == name:
                return k
        raise ConfigError(f"unknown class {name!r}; known: {sorted(self.class_table.values())}")

    def class_name(self, cid: int) -> str:
        if cid == NODATA:
            return EDGE
        return self.class_table.get(int(cid), EDGE)


def _cos_sin(deg: float) -> Tuple[float, float]:
    q, r = divmod(normalize_azimuth(deg), 90.0)
    if r == 0.0:
        return [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][int(q)]
    a = math.radians(deg)
    return math.cos(a), math.sin(a)


@dataclass(frozen=True)
class RotationTransform:
    """Maps continuous image coordinates between source and rotated canvases."""

    angle: float
    src_shape: Tuple[int, int]
    dst_shape: Tuple[int, int]

    def to_rotated(self, x: float, y: float) -> Tuple[float, float]:
        (H, W), (H2, W2) = self.src_shape, self.dst_shape
        c, s = _cos_sin(self.angle)
        px, py = x - W / 2.0, H / 2.0 - y
        qx, qy = px * c - py * s, px * s + py * c
        return qx + W2 / 2.0, H2 / 2.0 - qy

    def to_source(self, x, y):
        (H, W), (H2, W2) = self.src_shape, self.dst_shape
        c, s = _cos_sin(self.angle)
        qx, qy = x - W2 / 2.0, H2 / 2.0 - y
        px, py = qx * c + qy * s, -qx * s + qy * c
        return px + W / 2.0, H / 2.0 - py


def rotate_to_heading(r: LandCoverRaster) -> Tuple[LandCoverRaster, RotationTransform]:
    """Rotate the raster so its heading points up.

    Returns the rotated raster (heading 0, same georeference centre) and the
    transform needed to map rotated coordinates back. Pixels outside the
    source footprint are filled with ``NODATA``.
    """
    H, W = r.grid.shape
    c, s = _cos_sin(r.heading)
    W2 = int(math.ceil(W * abs(c) + H * abs(s) - 1e-6))
    H2 = int(math.ceil(W * abs(s) + H * abs(c) - 1e-6))
    tf = RotationTransform(r.heading, (H, W), (H2, W2))

    rows, cols = np.mgrid[0:H2, 0:W2]
    sx, sy = tf.to_source(cols + 0.5, rows + 0.5)
    sc = np.floor(sx).astype(np.int64)
    sr = np.floor(sy).astype(np.int64)
    inside = (sc >= 0) & (sc < W) & (sr >= 0) & (sr < H)
    out = np.full((H2, W2), NODATA, dtype=r.grid.dtype if r.grid.dtype.itemsize == 1 else np.uint16)
    out[inside] = r.grid[sr[inside], sc[inside]]
    rotated = LandCoverRaster(out, r.resolution, r.center, dict(r.class_table), 0.0, r.name)
    return rotated, tf


def binarize(r: LandCoverRaster, target_class: str) -> np.ndarray:
    """Boolean mask of the target class."""
    return r.grid == r.class_id(target_class)


def morph_open_close(b: np.ndarray, kernel_px: int = DEFAULT_KERNEL_PX) -> np.ndarray:
    """Opening followed by closing with a square kernel.

    The image is treated as embedded in an all-zero plane, so shapes touching
    the border are not eroded away by the border itself.
    """
    if kernel_px < 1 or kernel_px % 2 == 0:
        raise ConfigError(f"kernel size must be odd and >= 1, got {kernel_px}")
    b = np.asarray(b, dtype=bool)
    if kernel_px == 1:
        return b.copy()
    k = kernel_px
    st = np.ones((k, k), dtype=bool)
    padded = np.pad(b, k)
    out = ndimage.binary_opening(padded, structure=st)
    out = ndimage.binary_closing(out, structure=st)
    return out[k:-k, k:-k]


class Run(NamedTuple):
    row: int
    col_start: int
    col_end: int  # inclusive

    @property
    def length_px(self) -> int:
        return self.col_end - self.col_start + 1


def row_runs(row: np.ndarray) -> List[Tuple[int, int]]:
    """Maximal runs of truthy values as inclusive ``(start, end)`` columns."""
    v = np.concatenate(([0], np.asarray(row, dtype=np.int8) != 0, [0])).astype(np.int8)
    d = np.diff(v)
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def scanline_stride(interval_m: float, resolution: float) -> int:
    if not interval_m > 0:
        raise ConfigError("scanline interval must be positive")
    return max(1, int(round(interval_m / resolution)))


def scanline_slices(
    b: np.ndarray, interval_m: float = DEFAULT_INTERVAL_M, resolution: float = 1.0
) -> List[Run]:
    """Run-length encode every ``interval_m`` worth of rows."""
    stride = scanline_stride(interval_m, resolution)
    runs = []
    for r in range(0, b.shape[0], stride):
        runs.extend(Run(r, s, e) for s, e in row_runs(b[r]))
    return runs


@dataclass(frozen=True)
class SliceAttributes:
    touching_start: str
    touching_end: str
    cover_ratio: float


def slice_attributes(run: Run, r: LandCoverRaster, target_class: str) -> SliceAttributes:
    """Touching classes at both ends and the bounding-square cover ratio.

    The square has side equal to the run length, spans the run's columns and
    is centred vertically on the run's row; it is clipped to the raster and
    the ratio taken over the clipped pixels.
    """
    H, W = r.grid.shape
    target = r.class_id(target_class)
    left = r.class_name(r.grid[run.row, run.col_start - 1]) if run.col_start > 0 else EDGE
    right = r.class_name(r.grid[run.row, run.col_end + 1]) if run.col_end + 1 < W else EDGE

    L = run.length_px
    r0 = run.row - (L - 1) // 2
    rows = slice(max(r0, 0), min(r0 + L, H))
    cols = slice(max(run.col_start, 0), min(run.col_start + L, W))
    square = r.grid[rows, cols]
    cover = float(np.count_nonzero(square == target)) / square.size if square.size else 0.0
    return SliceAttributes(left, right, cover)


@dataclass(frozen=True)
class SliceFilter:
    min_cover_ratio: float = DEFAULT_MIN_COVER
    allowed_touching: FrozenSet[str] = DEFAULT_ALLOWED_TOUCHING
    min_length: Optional[float] = None
    max_length: Optional[float] = None

    def accepts(self, attrs: SliceAttributes, length: float) -> bool:
        if not attrs.cover_ratio > self.min_cover_ratio:
            return False
        if attrs.touching_start not in self.allowed_touching:
            return False
        if attrs.touching_end not in self.allowed_touching:
            return False
        if self.min_length is not None and length < self.min_length:
            return False
        if self.max_length is not None and length > self.max_length:
            return False
        return True


@dataclass(frozen=True)
class Slice:
    """One width measurement.

    ``start``/``end`` are offsets from the raster centre in metres; the
    matching geographic points are ``start_geo``/``end_geo``.
    """

    start: LocalPoint
    end: LocalPoint
    start_geo: GeoPoint
    end_geo: GeoPoint
    length: float
    row_index: int
    col_start: int
    col_end: int
    touching_start: str
    touching_end: str
    cover_ratio: float
    valid: bool
    source_raster: str = field(default="")

    @property
    def midpoint(self) -> Tuple[float, float]:
        return 0.5 * (self.start.east + self.end.east), 0.5 * (self.start.north + self.end.north)


def finalize_slices(
    runs: Sequence[Run],
    attrs: Sequence[SliceAttributes],
    transform: RotationTransform,
    r: LandCoverRaster,
    filters: Optional[SliceFilter] = None,
) -> List[Slice]:
    """Map runs back to the source raster and geographic coordinates."""
    filters = filters or SliceFilter()
    H, W = r.grid.shape
    res = r.resolution
    out = []
    for run, a in zip(runs, attrs):
        y = run.row + 0.5
        ends = []
        for x in (run.col_start, run.col_end + 1):
            sx, sy = transform.to_source(x, y)
            lp = LocalPoint((sx - W / 2.0) * res, (H / 2.0 - sy) * res, 0.0, r.center)
            ends.append(lp)
        length = run.length_px * res
        out.append(
            Slice(
                start=ends[0],
                end=ends[1],
                start_geo=local_to_geo(ends[0], r.center),
                end_geo=local_to_geo(ends[1], r.center),
                length=length,
                row_index=run.row,
                col_start=run.col_start,
                col_end=run.col_end,
                touching_start=a.touching_start,
                touching_end=a.touching_end,
                cover_ratio=a.cover_ratio,
                valid=filters.accepts(a, length),
                source_raster=r.name,
            )
        )
    return out


def measure_widths(
    r: LandCoverRaster,
    target_class: str,
    interval_m: float = DEFAULT_INTERVAL_M,
    kernel_px: int = DEFAULT_KERNEL_PX,
    filters: Optional[SliceFilter] = None,
) -> List[Slice]:
    """Run the whole width pipeline on one raster."""
    r.class_id(target_class)
    rotated, tf = rotate_to_heading(r)
    mask = morph_open_close(binarize(rotated, target_class), kernel_px)
    runs = scanline_slices(mask, interval_m, r.resolution)
    attrs = [slice_attributes(run, rotated, target_class) for run in runs]
    return finalize_slices(runs, attrs, tf, r, filters)
