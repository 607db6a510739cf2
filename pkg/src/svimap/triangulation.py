"""Stereo diameter measurement from two adjacent panoramas.

Two cameras A and B look at the same trunk. In a frame with A at the
origin, the A->B baseline along +x and +y towards the trunk, the interior
angles of triangle ABC give

    s_b = s_c * sin(theta_b) / sin(theta_c)
    x_c = x_a + s_b * cos(theta_a)
    y_c = y_a + s_b * sin(theta_a)

and each image then yields a diameter ``d = 2 * s * tan(theta / 2)`` from the
trunk's angular width ``theta`` and that camera's distance ``s`` to C.
The tangent form overestimates a circular trunk slightly; ``exact=True``
uses ``2 * s * sin(theta / 2)``, which is exact for tangent rays to a circle
centred at C.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DegenerateGeometryError,
    DivergentRaysError,
    IllConditionedPairError,
    InvalidDepthError,
    InvalidObservationError,
    NoMeasurementError,
    PairingRejectedError,
)
from .geo import (
    GeoPoint,
    LocalPoint,
    PanoramaPose,
    geo_to_local,
    horizontal_distance,
    local_to_geo,
    normalize_azimuth,
    wrap_signed,
)
from .projection import ThumbnailSpec

THUMBNAIL_OFFSETS = (45.0, 90.0, 135.0, -45.0, -90.0, -135.0)
DEFAULT_MATCH_DISTANCE_M = 3.0
MIN_THETA_C_DEG = 2.0
MIN_BASELINE_M = 0.5


def plan_thumbnails(
    pose: PanoramaPose,
    pitch: float = 0.0,
    hfov: float = 90.0,
    width: int = 1024,
    height: int = 1024,
) -> List[ThumbnailSpec]:
    """Six thumbnails per panorama: 45, 90 and 135 degrees to either side."""
    return [
        ThumbnailSpec(off, pitch=pitch, hfov=hfov, width=width, height=height, pano_id=pose.pano_id)
        for off in THUMBNAIL_OFFSETS
    ]


@dataclass(frozen=True)
class TrunkObservation:
    """Angular extent of one trunk at its measuring height, in one image.

    ``az_left``/``az_right`` are world azimuths of the trunk's left and right
    silhouette edges.
    """

    pose: PanoramaPose
    az_left: float
    az_right: float
    thumbnail: Optional[ThumbnailSpec] = None
    depth_m: Optional[float] = None
    coarse_position: Optional[GeoPoint] = None
    obs_id: Optional[str] = None

    def __post_init__(self):
        w = self.angular_width
        if not 0.0 < w < 90.0:
            raise InvalidObservationError(f"angular width {w:.6g} deg outside (0, 90)")

    @property
    def pano_id(self) -> str:
        return self.pose.pano_id

    @property
    def angular_width(self) -> float:
        return wrap_signed(self.az_right - self.az_left)

    @property
    def az_center(self) -> float:
        return normalize_azimuth(self.az_left + 0.5 * self.angular_width)


def locate_from_depth(
    obs: TrunkObservation, pose: Optional[PanoramaPose] = None
) -> GeoPoint:
    """Coarse trunk position from a single image's depth estimate."""
    pose = pose or obs.pose
    if obs.depth_m is None or not obs.depth_m > 0:
        raise InvalidDepthError(f"depth must be positive, got {obs.depth_m!r}")
    a = math.radians(obs.az_center)
    return local_to_geo(
        LocalPoint(obs.depth_m * math.sin(a), obs.depth_m * math.cos(a)), pose.position
    )


def with_coarse_position(obs: TrunkObservation) -> TrunkObservation:
    if obs.coarse_position is not None or obs.depth_m is None:
        return obs
    return replace(obs, coarse_position=locate_from_depth(obs))


def match_by_depth(
    a: TrunkObservation, b: TrunkObservation, max_dist_m: float = DEFAULT_MATCH_DISTANCE_M
) -> bool:
    """True when the two coarse positions are within ``max_dist_m`` horizontally."""
    if a.coarse_position is None or b.coarse_position is None:
        return False
    return horizontal_distance(a.coarse_position, b.coarse_position) <= max_dist_m


def match_observations(
    obs_a: Sequence[TrunkObservation],
    obs_b: Sequence[TrunkObservation],
    max_dist_m: float = DEFAULT_MATCH_DISTANCE_M,
) -> List[Tuple[int, int]]:
    """One-to-one matches between two images' trunks.

    A pair matches when it passes :func:`match_by_depth` and each is the
    other's nearest coarse position. Mutual nearest neighbours keep a trunk
    from pairing with two neighbours at once.
    """
    ia = [i for i, o in enumerate(obs_a) if o.coarse_position is not None]
    ib = [j for j, o in enumerate(obs_b) if o.coarse_position is not None]
    if not ia or not ib:
        return []
    anchor = obs_a[ia[0]].coarse_position
    pa = np.array([_xy(obs_a[i].coarse_position, anchor) for i in ia])
    pb = np.array([_xy(obs_b[j].coarse_position, anchor) for j in ib])
    dist = np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=2)
    out = []
    for r in range(len(ia)):
        c = int(np.argmin(dist[r]))
        if int(np.argmin(dist[:, c])) == r and match_by_depth(obs_a[ia[r]], obs_b[ib[c]], max_dist_m):
            out.append((ia[r], ib[c]))
    return out


def _xy(p: GeoPoint, anchor: GeoPoint) -> Tuple[float, float]:
    loc = geo_to_local(p, anchor)
    return loc.east, loc.north


# -- pairing -----------------------------------------------------------------


def are_adjacent(a: PanoramaPose, b: PanoramaPose) -> bool:
    if a.seq_index is None or b.seq_index is None:
        return False
    return a.sequence_id == b.sequence_id and abs(a.seq_index - b.seq_index) == 1


def front_and_rear(a: PanoramaPose, b: PanoramaPose) -> Tuple[PanoramaPose, PanoramaPose]:
    """Order two panoramas along the direction of travel.

    The one lying ahead of the other's heading is the front panorama.
    """
    d = geo_to_local(b.position, a.position)
    if d.horizontal == 0.0:
        raise DegenerateGeometryError("panoramas share a position")
    h = math.radians(a.heading)
    ahead = d.east * math.sin(h) + d.north * math.cos(h)
    return (b, a) if ahead >= 0.0 else (a, b)


@dataclass(frozen=True)
class CandidatePair:
    side: str
    front: ThumbnailSpec
    rear: ThumbnailSpec


def candidate_pairs(
    pano_a: PanoramaPose, pano_b: PanoramaPose, require_adjacent: bool = True, **plan_kwargs
) -> List[CandidatePair]:
    """Thumbnail pairs worth searching for shared trunks.

    On each side, the front panorama's rear-facing (135 degree) thumbnail is
    paired with all three same-side thumbnails of the rear panorama: three
    pairs per side, six in total.
    """
    if require_adjacent and not are_adjacent(pano_a, pano_b):
        raise PairingRejectedError(
            f"panoramas {pano_a.pano_id} and {pano_b.pano_id} are not adjacent in a sequence"
        )
    front, rear = front_and_rear(pano_a, pano_b)
    f_specs = {s.heading_offset: s for s in plan_thumbnails(front, **plan_kwargs)}
    r_specs = {s.heading_offset: s for s in plan_thumbnails(rear, **plan_kwargs)}
    out = []
    for side, sign in (("right", 1.0), ("left", -1.0)):
        trailing = f_specs[sign * 135.0]
        for off in (45.0, 90.0, 135.0):
            out.append(CandidatePair(side, trailing, r_specs[sign * off]))
    return out


@dataclass(frozen=True)
class StereoPair:
    obs_a: TrunkObservation
    obs_b: TrunkObservation

    def __post_init__(self):
        if self.obs_a.pano_id == self.obs_b.pano_id:
            raise PairingRejectedError("a stereo pair needs two different panoramas")
        pa, pb = self.obs_a.pose, self.obs_b.pose
        if pa.seq_index is not None and pb.seq_index is not None and not are_adjacent(pa, pb):
            raise PairingRejectedError(f"{pa.pano_id} and {pb.pano_id} are not adjacent")
        if self.baseline < MIN_BASELINE_M:
            raise DegenerateGeometryError(
                f"baseline {self.baseline:.3f} m shorter than {MIN_BASELINE_M} m"
            )

    @property
    def baseline(self) -> float:
        return horizontal_distance(self.obs_a.pose.position, self.obs_b.pose.position)

    @property
    def baseline_bearing(self) -> float:
        d = geo_to_local(self.obs_b.pose.position, self.obs_a.pose.position)
        return normalize_azimuth(math.degrees(math.atan2(d.east, d.north)))


@dataclass(frozen=True)
class TriangulatedTree:
    """Triangulated trunk position, triangle, and diameter.

    ``s_b`` is camera A's distance to the trunk and ``s_a`` camera B's;
    ``s_c`` is the baseline. Angles are interior angles in degrees.
    """

    position: GeoPoint
    s_a: float
    s_b: float
    s_c: float
    theta_a: float
    theta_b: float
    theta_c: float
    diameter: Optional[float] = None
    per_image_diameters: Tuple[float, ...] = ()
    mean_diameter: Optional[float] = None
    n_pairs: int = 1
    theta_c_min: Optional[float] = None
    source_panos: Tuple[str, ...] = field(default=())


def triangulate(
    pair: StereoPair,
    anchor: Optional[GeoPoint] = None,
    min_theta_c: float = MIN_THETA_C_DEG,
) -> TriangulatedTree:
    """Intersect the two trunk-centre rays.

    Args:
        pair: matched observations from two panoramas.
        anchor: tangent-plane origin for the computation; camera A by default.
        min_theta_c: smallest acceptable convergence angle at the trunk.

    Raises:
        DivergentRaysError: the rays do not meet in front of both cameras.
        IllConditionedPairError: the rays meet at less than ``min_theta_c``,
            or within ``min_theta_c`` of a straight line through the baseline.
    """
    anchor = anchor or pair.obs_a.pose.position
    A = geo_to_local(pair.obs_a.pose.position, anchor)
    B = geo_to_local(pair.obs_b.pose.position, anchor)
    de, dn = B.east - A.east, B.north - A.north
    s_c = math.hypot(de, dn)
    beta = math.degrees(math.atan2(de, dn))

    delta_a = wrap_signed(pair.obs_a.az_center - beta)
    delta_b = wrap_signed(pair.obs_b.az_center - (beta + 180.0))
    if delta_a == 0.0 or delta_b == 0.0:
        raise IllConditionedPairError("a ray runs along the baseline")
    side = 1.0 if delta_a > 0 else -1.0
    if (delta_b > 0) == (delta_a > 0):
        raise DivergentRaysError("rays point to opposite sides of the baseline")
    theta_a, theta_b = abs(delta_a), abs(delta_b)
    theta_c = 180.0 - theta_a - theta_b
    if theta_c <= 0.0:
        raise DivergentRaysError("rays diverge; intersection is behind a camera")
    if theta_c < min_theta_c:
        raise IllConditionedPairError(f"theta_c={theta_c:.4g} deg below {min_theta_c} deg")
    # a trunk on the baseline itself is just as unstable as parallel rays
    if theta_c > 180.0 - min_theta_c:
        raise IllConditionedPairError(f"theta_c={theta_c:.4g} deg; trunk lies on the baseline")

    ta, tb, tc = (math.radians(t) for t in (theta_a, theta_b, theta_c))
    s_b = s_c * math.sin(tb) / math.sin(tc)
    s_a = s_c * math.sin(ta) / math.sin(tc)

    # baseline-aligned frame: x along A->B, y to the trunk's side
    b = math.radians(beta)
    ux = (math.sin(b), math.cos(b))
    uy = (side * math.cos(b), -side * math.sin(b))
    x_c = s_b * math.cos(ta)
    y_c = s_b * math.sin(ta)
    east = A.east + x_c * ux[0] + y_c * uy[0]
    north = A.north + x_c * ux[1] + y_c * uy[1]
    pos = local_to_geo(LocalPoint(east, north, A.up), anchor)
    return TriangulatedTree(
        position=pos,
        s_a=s_a,
        s_b=s_b,
        s_c=s_c,
        theta_a=theta_a,
        theta_b=theta_b,
        theta_c=theta_c,
        theta_c_min=theta_c,
        source_panos=(pair.obs_a.pano_id, pair.obs_b.pano_id),
    )


def image_diameter(angular_width: float, distance: float, exact: bool = False) -> float:
    if not angular_width > 0:
        raise InvalidObservationError("angular width must be positive")
    half = math.radians(angular_width) / 2.0
    if exact:
        return 2.0 * distance * math.sin(half)
    return 2.0 * distance * math.tan(half)


def diameter_from_pair(pair: StereoPair, tri: TriangulatedTree, exact: bool = False):
    """Diameter seen by each camera and their mean.

    Returns:
        ``(mean, (d_a, d_b))`` in metres.
    """
    d_a = image_diameter(pair.obs_a.angular_width, tri.s_b, exact)
    d_b = image_diameter(pair.obs_b.angular_width, tri.s_a, exact)
    return 0.5 * (d_a + d_b), (d_a, d_b)


def measure_pair(
    pair: StereoPair,
    anchor: Optional[GeoPoint] = None,
    min_theta_c: float = MIN_THETA_C_DEG,
    exact: bool = False,
) -> TriangulatedTree:
    tri = triangulate(pair, anchor, min_theta_c)
    d, per_image = diameter_from_pair(pair, tri, exact)
    return replace(tri, diameter=d, per_image_diameters=per_image, mean_diameter=d)


def aggregate_tree(measurements: Sequence[TriangulatedTree]) -> TriangulatedTree:
    """Combine per-pair measurements of one tree.

    Position is the component-wise median; ``mean_diameter`` is the mean of
    the per-pair diameters.
    """
    ms = list(measurements)
    if not ms:
        raise NoMeasurementError("no measurements to aggregate")
    if len(ms) == 1:
        return ms[0]
    anchor = ms[0].position
    loc = np.array([[p.east, p.north, p.up] for p in (geo_to_local(m.position, anchor) for m in ms)])
    med = np.median(loc, axis=0)
    diam = [m.diameter for m in ms if m.diameter is not None]
    mean_d = float(np.mean(diam)) if diam else None
    panos = tuple(sorted({p for m in ms for p in m.source_panos}))
    return replace(
        ms[0],
        position=local_to_geo(LocalPoint(*map(float, med)), anchor),
        diameter=mean_d,
        mean_diameter=mean_d,
        per_image_diameters=tuple(d for m in ms for d in m.per_image_diameters),
        n_pairs=sum(m.n_pairs for m in ms),
        theta_c_min=min(m.theta_c_min if m.theta_c_min is not None else m.theta_c for m in ms),
        source_panos=panos,
    )


# -- batch -------------------------------------------------------------------


def _spec_key(obs: TrunkObservation):
    off = obs.thumbnail.heading_offset if obs.thumbnail is not None else None
    return obs.pano_id, off


def adjacent_couples(poses: Sequence[PanoramaPose]) -> List[Tuple[PanoramaPose, PanoramaPose]]:
    by_seq: Dict[Optional[str], List[PanoramaPose]] = defaultdict(list)
    for p in poses:
        by_seq[p.sequence_id].append(p)
    out = []
    for seq in sorted(by_seq, key=lambda s: (s is None, s or "")):
        ps = sorted(by_seq[seq], key=lambda p: (p.seq_index is None, p.seq_index or 0))
        out.extend((a, b) for a, b in zip(ps, ps[1:]) if are_adjacent(a, b))
    return out


def pair_observations(
    poses: Sequence[PanoramaPose],
    observations: Iterable[TrunkObservation],
    max_dist_m: float = DEFAULT_MATCH_DISTANCE_M,
) -> List[StereoPair]:
    """Form stereo pairs between adjacent panoramas using the depth rule."""
    groups: Dict[tuple, List[TrunkObservation]] = defaultdict(list)
    for o in observations:
        groups[_spec_key(o)].append(with_coarse_position(o))
    pairs = []
    for a, b in adjacent_couples(poses):
        try:
            cands = candidate_pairs(a, b)
        except DegenerateGeometryError:
            continue
        for cand in cands:
            oa = groups.get((cand.front.pano_id, cand.front.heading_offset), [])
            ob = groups.get((cand.rear.pano_id, cand.rear.heading_offset), [])
            for i, j in match_observations(oa, ob, max_dist_m):
                try:
                    pairs.append(StereoPair(oa[i], ob[j]))
                except DegenerateGeometryError:
                    continue
    return pairs


def group_pairs(pairs: Sequence[StereoPair]) -> List[List[int]]:
    """Connected components of observations linked by pairs (one per tree)."""
    parent: Dict[str, str] = {}

    def find(x):
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def key(o: TrunkObservation):
        return o.obs_id or f"{o.pano_id}:{o.az_left:.9f}:{o.az_right:.9f}"

    for p in pairs:
        ra, rb = find(key(p.obs_a)), find(key(p.obs_b))
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: Dict[str, List[int]] = defaultdict(list)
    for k, p in enumerate(pairs):
        groups[find(key(p.obs_a))].append(k)
    return [groups[g] for g in sorted(groups, key=lambda g: groups[g][0])]
