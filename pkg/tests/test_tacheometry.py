import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svimap.errors import ConfigError, DegenerateObjectError, PoleError
from svimap.geo import GeoPoint, LocalPoint, PanoramaPose, bearing_between, geo_to_local, local_to_geo
from svimap.projection import PixelBox
from svimap.synthetic import Billboard, SceneSpec, project_billboard
from svimap.tacheometry import (
    Detection,
    DimensionRegistry,
    LocatedObject,
    TachInput,
    distance_bound,
    localize_detection,
    merge_observations,
    place_object,
    tacheometric_distance,
)

CAM = PanoramaPose("c0", GeoPoint(38.9, -77.03), heading=0.0)


def tach(theta_t, theta_b, h_o, pose=CAM):
    return tacheometric_distance(TachInput(pose, theta_t, theta_b, 0.0, h_o))


def test_symmetric_straddle():
    d, hb = tach(45.0, -45.0, 2.0)
    assert d == pytest.approx(1.0, abs=1e-12)
    assert hb == pytest.approx(-1.0, abs=1e-12)


def test_stop_sign_registry_default():
    reg = DimensionRegistry.default()
    assert reg.height_of("stop_sign") == 0.75


def test_worked_case():
    # camera 2.5 m, sign 2.13..2.88 m, 10 m away
    tb = math.degrees(math.atan(-0.37 / 10.0))
    tt = math.degrees(math.atan(0.38 / 10.0))
    d, hb = tach(tt, tb, 0.75)
    assert d == pytest.approx(10.0, abs=1e-9)
    assert hb == pytest.approx(-0.37, abs=1e-9)


def test_worked_case_via_oracle():
    scene = SceneSpec(anchor=CAM.position)
    bb = Billboard(scene.geo(0.0, 10.0), 2.13, 0.75)
    v = project_billboard(scene, CAM, bb)
    assert math.tan(math.radians(v.theta_b)) == pytest.approx(-0.037, abs=1e-12)
    assert math.tan(math.radians(v.theta_t)) == pytest.approx(0.038, abs=1e-12)
    d, hb = tach(v.theta_t, v.theta_b, 0.75)
    assert abs(d - 10.0) < 1e-3 and abs(hb + 0.37) < 1e-3


def test_unified_formula_matches_straddle_form():
    # the straddle form uses an unsigned downward angle for the bottom
    for tt, down in [(3.0, 2.0), (10.0, 25.0), (0.5, 0.2)]:
        t, b = math.radians(tt), math.radians(down)
        straddle = 0.75 * math.cos(t) * math.cos(b) / math.sin(t + b)
        assert tach(tt, -down, 0.75)[0] == pytest.approx(straddle, rel=1e-12)


def test_degenerate_and_pole():
    with pytest.raises(DegenerateObjectError):
        tach(1.0, 1.0, 0.75)
    with pytest.raises(DegenerateObjectError):
        tach(1.0, 0.995, 0.75)
    with pytest.raises(PoleError):
        tach(89.999, 10.0, 0.75)


@settings(max_examples=300)
@given(st.floats(0.1, 5), st.floats(2, 100), st.floats(1.5, 3.5), st.floats(0, 5))
def test_inversion_exact(h_o, dist, cam_h, bottom):
    zb, zt = bottom - cam_h, bottom - cam_h + h_o
    tb, tt = math.degrees(math.atan2(zb, dist)), math.degrees(math.atan2(zt, dist))
    d, hb = tach(tt, tb, h_o)
    assert abs(d - dist) < 1e-6
    assert abs(hb - zb) < 1e-6


@given(st.floats(-30, 30), st.floats(0.05, 20), st.floats(0.05, 20), st.floats(0.1, 5))
def test_monotone_in_angular_height(tb, g1, g2, h_o):
    if abs(g1 - g2) < 1e-6 or tb + max(g1, g2) > 80:
        return
    d1 = tach(tb + g1, tb, h_o)[0]
    d2 = tach(tb + g2, tb, h_o)[0]
    assert (d1 > d2) == (g1 < g2)


@given(st.floats(-30, 30), st.floats(0.05, 20), st.floats(0.1, 5))
def test_scale_equivariance(tb, g, h_o):
    d1 = tach(tb + g, tb, h_o)[0]
    d2 = tach(tb + g, tb, 2 * h_o)[0]
    assert d2 == 2 * d1


@given(st.floats(-20, 20), st.floats(0.5, 20), st.floats(0.001, 0.05), st.floats(-1, 1), st.floats(-1, 1))
def test_distance_bound_covers_perturbations(tb, g, delta, u, w):
    h_o = 1.0
    d = tach(tb + g, tb, h_o)[0]
    bound = distance_bound(h_o, tb + g, tb, delta)
    try:
        d2 = tach(tb + g + u * delta, tb + w * delta, h_o)[0]
    except DegenerateObjectError:
        return
    assert abs(d2 - d) <= bound * (1 + 1e-9) + 1e-12


def test_place_object_cardinal():
    n = place_object(CAM, 10.0, -0.37, 0.0)
    e = place_object(CAM, 10.0, -0.37, 90.0)
    ln, le = geo_to_local(n.position, CAM.position), geo_to_local(e.position, CAM.position)
    assert (ln.east, ln.north) == (pytest.approx(0.0, abs=1e-6), pytest.approx(10.0, abs=1e-6))
    assert (le.east, le.north) == (pytest.approx(10.0, abs=1e-6), pytest.approx(0.0, abs=1e-6))
    assert ln.up == pytest.approx(2.5 - 0.37)


@given(st.floats(0, 359.999), st.floats(1, 100))
def test_place_object_round_trip(az, d):
    obj = place_object(CAM, d, 0.0, az)
    lp = geo_to_local(obj.position, CAM.position)
    assert math.hypot(lp.east, lp.north) == pytest.approx(d, abs=1e-3)
    # camera-plane azimuth is exact; the mid-latitude bearing agrees to < 1 mm
    # across the usual sighting range
    plane_az = math.degrees(math.atan2(lp.east, lp.north)) % 360.0
    assert abs(((plane_az - az + 180) % 360 - 180)) * math.pi / 180 * d < 1e-6
    got = bearing_between(CAM.position, obj.position)
    assert abs(((got - az + 180) % 360 - 180)) * math.pi / 180 * d < 1e-3


def test_unknown_class():
    det = Detection("hydrant", PixelBox(0, 0, 10, 10), "c0")
    with pytest.raises(ConfigError):
        localize_detection(CAM, det, DimensionRegistry.default())


def test_registry_from_json(tmp_path):
    p = tmp_path / "reg.json"
    p.write_text(json.dumps({"hydrant": 0.6}))
    reg = DimensionRegistry.from_json(p)
    assert reg.height_of("hydrant") == 0.6 and reg.height_of("stop_sign") == 0.75
    assert "stop_sign" not in DimensionRegistry.from_json(p, with_defaults=False)


def test_zero_height_box_is_degenerate():
    det = Detection("stop_sign", PixelBox(100, 4000, 110, 4000.0001), "c0")
    with pytest.raises(DegenerateObjectError):
        localize_detection(CAM, det, DimensionRegistry.default())


def _scene_errors(n, seed, quantize):
    rng = np.random.default_rng(seed)
    scene = SceneSpec(anchor=GeoPoint(40.0, -75.0))
    cam = PanoramaPose("c", scene.geo(3.0, -4.0), heading=float(rng.uniform(0, 360)))
    errs = []
    for _ in range(n):
        d, az = rng.uniform(5, 50), rng.uniform(0, 360)
        ce = scene.local(cam.position)
        a = math.radians(az)
        bb = Billboard(scene.geo(ce.east + d * math.sin(a), ce.north + d * math.cos(a)), rng.uniform(0.5, 3.0), 0.75)
        v = project_billboard(scene, cam, bb, quantize=quantize)
        obj = localize_detection(cam, Detection("stop_sign", v.box, "c"), {"stop_sign": 0.75}, anchor=scene.anchor)
        got = scene.local(obj.position)
        want = scene.local(bb.position)
        errs.append(math.dist((got.east, got.north, got.up), (want.east, want.north, want.up + bb.bottom_height_m)))
    return np.array(errs)


def test_end_to_end_single_sign():
    assert _scene_errors(1, 3, quantize=False).max() < 0.01


def test_sweep_100_signs_exact_angles():
    assert _scene_errors(100, 11, quantize=False).max() < 0.05


def test_thumbnail_detection_localizes():
    from svimap.projection import ThumbnailSpec

    scene = SceneSpec(anchor=CAM.position)
    spec = ThumbnailSpec(90.0, width=1024, height=1024)
    bb = Billboard(scene.geo(12.0, 0.0), 2.0, 0.75)
    v = project_billboard(scene, CAM, bb, spec=spec, quantize=False)
    obj = localize_detection(CAM, Detection("stop_sign", v.box, "c0", spec), DimensionRegistry.default())
    lp = scene.local(obj.position)
    assert math.hypot(lp.east - 12.0, lp.north) < 0.01


# -- merging -------------------------------------------------------------------


def obj_at(anchor, e, n, cls="stop_sign"):
    return LocatedObject(cls, local_to_geo(LocalPoint(e, n), anchor), 5.0, 0.0, 0.0, "p")


def test_merge_single():
    a = GeoPoint(0, 0)
    o = obj_at(a, 1, 2)
    assert merge_observations([o]) == [o]


def test_merge_two_close_points_at_midpoint():
    a = GeoPoint(10, 10)
    m = merge_observations([obj_at(a, 0, 0), obj_at(a, 0.5, 0)], radius_m=2.0)
    assert len(m) == 1 and m[0].n_observations == 2
    lp = geo_to_local(m[0].position, a)
    assert lp.east == pytest.approx(0.25, abs=1e-6)


def test_merge_keeps_classes_apart():
    a = GeoPoint(10, 10)
    m = merge_observations([obj_at(a, 0, 0), obj_at(a, 0.5, 0, "hydrant")])
    assert len(m) == 2


def brute_force_clusters(xy, radius):
    n = len(xy)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if math.dist(xy[i], xy[j]) <= radius:
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted(sorted(g) for g in groups.values())


def test_merge_noisy_signs_against_brute_force():
    rng = np.random.default_rng(5)
    a = GeoPoint(38.9, -77.03)
    truth = [(0.0, 0.0), (12.0, 3.0), (-4.0, 15.0)]
    pts = []
    for k in range(20):
        t = truth[k % 3]
        pts.append((t[0] + rng.normal(0, 1.0), t[1] + rng.normal(0, 1.0)))
    objs = [obj_at(a, *p) for p in pts]
    merged = merge_observations(objs, radius_m=3.0)
    assert len(merged) == 3
    assert len(brute_force_clusters(pts, 3.0)) == 3
    for m in merged:
        lp = geo_to_local(m.position, a)
        assert min(math.dist((lp.east, lp.north), t) for t in truth) < 1.0


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(-30, 30), st.floats(-30, 30)), min_size=1, max_size=25))
def test_merge_cluster_count_matches_brute_force(pts):
    a = GeoPoint(45.0, 7.0)
    merged = merge_observations([obj_at(a, *p) for p in pts], radius_m=3.0)
    clusters = brute_force_clusters(pts, 3.0)
    assert len(merged) == len(clusters)
    assert sorted(m.n_observations for m in merged) == sorted(len(c) for c in clusters)
