import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svimap.errors import (
    DegenerateGeometryError,
    DivergentRaysError,
    IllConditionedPairError,
    InvalidDepthError,
    InvalidObservationError,
    NoMeasurementError,
    PairingRejectedError,
)
from svimap.geo import GeoPoint, LocalPoint, PanoramaPose, geo_to_local, local_to_geo
from svimap.synthetic import Cylinder, SceneSpec, project_cylinder
from svimap.triangulation import (
    THUMBNAIL_OFFSETS,
    StereoPair,
    TriangulatedTree,
    TrunkObservation,
    aggregate_tree,
    candidate_pairs,
    diameter_from_pair,
    image_diameter,
    locate_from_depth,
    match_by_depth,
    match_observations,
    measure_pair,
    pair_observations,
    plan_thumbnails,
    triangulate,
    with_coarse_position,
)

ANCHOR = GeoPoint(38.9, -77.03)


def cam(pid, e, n, heading=0.0, seq=None, idx=None):
    return PanoramaPose(pid, local_to_geo(LocalPoint(e, n), ANCHOR), heading=heading,
                        sequence_id=seq, seq_index=idx)


def obs_from_oracle(scene, c, cyl, **kw):
    v = project_cylinder(scene, c, cyl)
    return TrunkObservation(c, v.az_left, v.az_right, **kw), v


def local(p):
    lp = geo_to_local(p, ANCHOR)
    return lp.east, lp.north


# -- thumbnails and pairing ------------------------------------------------------


def test_plan_thumbnails_world_headings():
    specs = plan_thumbnails(cam("a", 0, 0, 0.0))
    assert sorted((s.heading_offset % 360) for s in specs) == [45, 90, 135, 225, 270, 315]
    assert all(s.hfov == 90.0 and s.pitch == 0.0 for s in specs)
    specs = plan_thumbnails(cam("a", 0, 0, 90.0))
    assert sorted((90 + s.heading_offset) % 360 for s in specs) == sorted((90 + o) % 360 for o in THUMBNAIL_OFFSETS)


def test_candidate_pairs_three_per_side():
    a = cam("a", 0, 0, 0.0, "s", 0)
    b = cam("b", 0, 8, 0.0, "s", 1)
    pairs = candidate_pairs(a, b)
    assert len(pairs) == 6
    for side, sign in (("right", 1), ("left", -1)):
        ps = [p for p in pairs if p.side == side]
        assert len(ps) == 3
        # front panorama is b (ahead along heading); its trailing thumbnail
        assert all(p.front.pano_id == "b" and p.front.heading_offset == sign * 135 for p in ps)
        assert sorted(p.rear.heading_offset * sign for p in ps) == [45, 90, 135]
        assert all(p.rear.pano_id == "a" for p in ps)


def test_candidate_pairs_order_independent():
    a = cam("a", 0, 0, 0.0, "s", 0)
    b = cam("b", 0, 8, 0.0, "s", 1)
    assert candidate_pairs(a, b) == candidate_pairs(b, a)


def test_non_adjacent_rejected():
    a = cam("a", 0, 0, 0.0, "s", 0)
    c = cam("c", 0, 16, 0.0, "s", 2)
    with pytest.raises(PairingRejectedError):
        candidate_pairs(a, c)
    with pytest.raises(PairingRejectedError):
        candidate_pairs(a, cam("d", 0, 8, 0.0, "t", 1))


# -- depth matching --------------------------------------------------------------


def test_locate_from_depth_cardinal():
    c = cam("a", 0, 0)
    o = TrunkObservation(c, -1.0, 1.0, depth_m=5.0)
    assert local(locate_from_depth(o)) == (pytest.approx(0, abs=1e-9), pytest.approx(5, abs=1e-9))
    o = TrunkObservation(c, 89.0, 91.0, depth_m=5.0)
    assert local(locate_from_depth(o)) == (pytest.approx(5, abs=1e-9), pytest.approx(0, abs=1e-9))
    with pytest.raises(InvalidDepthError):
        locate_from_depth(TrunkObservation(c, 89.0, 91.0, depth_m=0.0))


def test_locate_from_exact_depth_oracle():
    scene = SceneSpec(anchor=ANCHOR)
    c = cam("a", 1.0, -2.0, 30.0)
    cyl = Cylinder(scene.geo(7.0, 9.0), 0.3)
    o, v = obs_from_oracle(scene, c, cyl, depth_m=None)
    o = TrunkObservation(c, v.az_left, v.az_right, depth_m=v.depth)
    got = local(locate_from_depth(o))
    assert math.dist(got, (7.0, 9.0)) < 1e-3


def _with_pos(e, n):
    return TrunkObservation(cam("a", 0, 0), 1.0, 2.0, coarse_position=local_to_geo(LocalPoint(e, n), ANCHOR))


def test_match_by_depth_threshold():
    a = _with_pos(0, 0)
    assert match_by_depth(a, _with_pos(0, 0))
    assert match_by_depth(a, _with_pos(2.9, 0))
    assert not match_by_depth(a, _with_pos(3.1, 0))
    assert not match_by_depth(a, TrunkObservation(cam("a", 0, 0), 1.0, 2.0))


def test_match_observations_is_one_to_one():
    a = [_with_pos(0, 0), _with_pos(2.0, 0)]
    b = [_with_pos(1.9, 0)]
    assert match_observations(a, b) == [(1, 0)]


def test_observation_width_validation():
    c = cam("a", 0, 0)
    with pytest.raises(InvalidObservationError):
        TrunkObservation(c, 10.0, 10.0)
    with pytest.raises(InvalidObservationError):
        TrunkObservation(c, 10.0, 5.0)
    o = TrunkObservation(c, 359.0, 1.0)
    assert o.angular_width == pytest.approx(2.0) and o.az_center == pytest.approx(0.0)


# -- triangulation ---------------------------------------------------------------


def pair_for(thetas, s_c=10.0):
    """A at origin, B at (s_c, 0): rays at interior angles ta, tb above the baseline."""
    ta, tb = thetas
    a, b = cam("a", 0, 0), cam("b", s_c, 0)
    # baseline bearing 90; trunk on the north side (left of A->B)
    az_a = 90.0 - ta
    az_b = 270.0 + tb
    oa = TrunkObservation(a, az_a - 1.0, az_a + 1.0)
    ob = TrunkObservation(b, az_b - 1.0, az_b + 1.0)
    return StereoPair(oa, ob)


def test_isoceles_right_triangle():
    tri = triangulate(pair_for((45.0, 45.0)), anchor=ANCHOR)
    assert tri.theta_c == pytest.approx(90.0)
    assert tri.s_b == pytest.approx(10 * math.sin(math.radians(45)))
    assert local(tri.position) == (pytest.approx(5.0, abs=1e-6), pytest.approx(5.0, abs=1e-6))


def test_limiting_case_perpendicular_at_a():
    tri = triangulate(pair_for((90.0, 5.0)), anchor=ANCHOR)
    e, n = local(tri.position)
    assert e == pytest.approx(0.0, abs=1e-6)
    assert n == pytest.approx(10 * math.tan(math.radians(5.0)), abs=1e-6)
    assert tri.s_b == pytest.approx(10 * math.sin(math.radians(5)) / math.sin(math.radians(85)))


def test_ill_conditioned_and_divergent():
    with pytest.raises(IllConditionedPairError):
        triangulate(pair_for((89.5, 89.0)))
    with pytest.raises(DivergentRaysError):
        triangulate(pair_for((100.0, 85.0)))
    a, b = cam("a", 0, 0), cam("b", 10, 0)
    # rays to opposite sides of the baseline
    with pytest.raises(DivergentRaysError):
        triangulate(StereoPair(TrunkObservation(a, 44, 46), TrunkObservation(b, 224, 226)))


def test_stereo_pair_validation():
    a = cam("a", 0, 0, seq="s", idx=0)
    with pytest.raises(PairingRejectedError):
        StereoPair(TrunkObservation(a, 1, 2), TrunkObservation(a, 3, 4))
    with pytest.raises(PairingRejectedError):
        StereoPair(TrunkObservation(a, 1, 2), TrunkObservation(cam("c", 10, 0, seq="s", idx=2), 3, 4))
    with pytest.raises(DegenerateGeometryError):
        StereoPair(TrunkObservation(a, 1, 2), TrunkObservation(cam("b", 0.1, 0), 3, 4))


@settings(max_examples=200)
@given(st.floats(3, 25), st.floats(0, 360), st.floats(10, 15), st.floats(0, 360), st.floats(0.05, 0.6))
def test_round_trip_random_trunks(dist, az, base, bearing, r):
    scene = SceneSpec(anchor=ANCHOR)
    b_rad = math.radians(bearing)
    a = cam("a", 0.0, 0.0)
    b = cam("b", base * math.sin(b_rad), base * math.cos(b_rad))
    t = math.radians(az)
    te, tn = dist * math.sin(t), dist * math.cos(t)
    if math.dist((te, tn), local(b.position)) < 3.0:
        return
    cyl = Cylinder(scene.geo(te, tn), r)
    oa, _ = obs_from_oracle(scene, a, cyl)
    ob, _ = obs_from_oracle(scene, b, cyl)
    try:
        tri = triangulate(StereoPair(oa, ob), anchor=ANCHOR)
    except (IllConditionedPairError, DivergentRaysError):
        return
    assert math.dist(local(tri.position), local(cyl.position)) < 1e-6
    assert tri.theta_a + tri.theta_b + tri.theta_c == pytest.approx(180.0, abs=1e-9)
    ta, tb, tc = (math.radians(x) for x in (tri.theta_a, tri.theta_b, tri.theta_c))
    assert abs(tri.s_b / math.sin(tb) - tri.s_c / math.sin(tc)) < 1e-9 * tri.s_c
    assert abs(tri.s_a / math.sin(ta) - tri.s_c / math.sin(tc)) < 1e-9 * tri.s_c


# -- diameter --------------------------------------------------------------------


def test_constructed_inverse():
    s = math.hypot(5, 5)
    theta = 2 * math.degrees(math.atan(0.25 / s))
    assert theta == pytest.approx(4.0497, abs=1e-4)
    assert image_diameter(theta, s) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(InvalidObservationError):
        image_diameter(0.0, s)


def test_pair_diameter_is_mean_of_images():
    pair = pair_for((45.0, 60.0))
    tri = triangulate(pair)
    d, (da, db) = diameter_from_pair(pair, tri)
    assert da == pytest.approx(2 * tri.s_b * math.tan(math.radians(1.0)))
    assert db == pytest.approx(2 * tri.s_a * math.tan(math.radians(1.0)))
    assert d == pytest.approx(0.5 * (da + db))


@settings(max_examples=200)
@given(st.floats(0.05, 0.6), st.floats(3, 25))
def test_tangent_vs_exact_gap(r, s):
    half = math.degrees(math.asin(r / s))
    tangent = image_diameter(2 * half, s)
    exact = image_diameter(2 * half, s, exact=True)
    assert exact == pytest.approx(2 * r, rel=1e-12)
    assert abs(tangent - exact) / exact <= (r / s) ** 2


@settings(max_examples=50)
@given(st.floats(0.5, 4.0))
def test_diameter_scale_equivariance(k):
    def diameter(scale):
        scene = SceneSpec(anchor=ANCHOR)
        a, b = cam("a", 0, 0), cam("b", 12 * scale, 0)
        cyl = Cylinder(scene.geo(4 * scale, 9 * scale), 0.3)
        oa, _ = obs_from_oracle(scene, a, cyl)
        ob, _ = obs_from_oracle(scene, b, cyl)
        return measure_pair(StereoPair(oa, ob), anchor=ANCHOR, exact=True).diameter

    assert diameter(k) == pytest.approx(diameter(1.0), rel=1e-9)


def _tree(d, e=0.0, n=0.0, per=()):
    return TriangulatedTree(local_to_geo(LocalPoint(e, n), ANCHOR), 1, 1, 1, 60, 60, 60, diameter=d,
                            per_image_diameters=per, mean_diameter=d, theta_c_min=60, source_panos=("a", "b"))


def test_aggregate_single_and_empty():
    t = _tree(0.5)
    assert aggregate_tree([t]) is t
    with pytest.raises(NoMeasurementError):
        aggregate_tree([])


def test_aggregate_mean_and_median():
    agg = aggregate_tree([_tree(0.62, 0, 0), _tree(0.73, 1, 2)])
    assert agg.mean_diameter == pytest.approx(0.675)
    assert agg.n_pairs == 2
    assert local(agg.position) == (pytest.approx(0.5, abs=1e-6), pytest.approx(1.0, abs=1e-6))


def test_aggregate_noisy_pairs_monte_carlo():
    rng = np.random.default_rng(17)
    hits = 0
    for _ in range(400):
        ds = 0.5 + rng.normal(0, 0.03, 6)
        hits += abs(aggregate_tree([_tree(d) for d in ds]).mean_diameter - 0.5) <= 0.03
    assert hits / 400 >= 0.95


# -- batch -----------------------------------------------------------------------


def test_pair_observations_on_synthetic_street():
    from svimap.io import observation_from_record
    from svimap.synthetic import camera_track, trunk_observations

    scene = SceneSpec(anchor=ANCHOR)
    scene.cameras = camera_track(ANCHOR, 4, 8.0, 0.0)
    scene.cylinders = [Cylinder(scene.geo(6.0, 4.0 + 9.0 * k), 0.25, name=f"t{k}") for k in range(3)]
    recs = trunk_observations(scene)
    poses = {p.pano_id: p for p in scene.cameras}
    obs = [observation_from_record(r, poses) for r in recs]
    truth = {r["obs_id"]: r["truth_id"] for r in recs}
    pairs = pair_observations(scene.cameras, obs)
    assert pairs
    for p in pairs:
        assert truth[p.obs_a.obs_id] == truth[p.obs_b.obs_id]
        assert p.obs_a.pose.seq_index - p.obs_b.pose.seq_index == 1
    for p in pairs:
        tri = measure_pair(p, anchor=ANCHOR, exact=True)
        k = int(truth[p.obs_a.obs_id][1:])
        assert math.dist(local(tri.position), (6.0, 4.0 + 9.0 * k)) < 1e-6
        assert tri.diameter == pytest.approx(0.5, rel=1e-9)


def test_with_coarse_position_keeps_existing():
    o = _with_pos(1, 1)
    assert with_coarse_position(o) is o
