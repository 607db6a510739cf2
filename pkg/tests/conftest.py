import math

import pytest

from svimap.geo import GeoPoint, PanoramaPose

R_EARTH = 6_371_000.0


def sphere_offset_m(anchor_lat, anchor_lon, lat, lon):
    """Independent spherical-earth east/north offsets (radians based)."""
    phi0 = math.radians(anchor_lat)
    east = R_EARTH * math.cos(phi0) * math.radians(lon - anchor_lon)
    north = R_EARTH * math.radians(lat - anchor_lat)
    return east, north


@pytest.fixture
def anchor():
    return GeoPoint(38.9, -77.03)


@pytest.fixture
def level_pose(anchor):
    return PanoramaPose("p0", anchor, heading=30.0)


# acceptance verdicts, printed once at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
