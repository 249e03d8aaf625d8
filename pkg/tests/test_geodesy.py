"""Geodesy conversions against frozen independent-oracle goldens.

Goldens derived with scripts/derive_goldens.py (two independent ECEF
formulations + finite-difference ENU basis) before this module was written.
"""

import math

import numpy as np
import pytest

from bevloc.geodesy import (
    WGS84_A,
    WGS84_B,
    EcefPoint,
    EnuFrame,
    EnuPoint,
    GeodeticPoint,
    ecef_to_enu,
    enu_to_ecef,
    wgs84_to_ecef,
    wgs84_to_local,
)

BOSTON = GeodeticPoint(42.3365, -71.0578, 0.0)
BOSTON_ECEF = (1532797.914614069, -4466199.601238485, 4273306.950039663)
# ENU of (42.33425, -71.0605, 0) in the zero-drift Boston frame
CORNER_ENU = (-222.522571079, -249.926019006, -0.008783136)
MERIDIAN_ARC_0001DEG = 110.574275822  # a(1-e^2) * radians(0.001) at the equator


def test_equator_prime_meridian_is_semimajor_axis():
    p = wgs84_to_ecef(GeodeticPoint(0.0, 0.0, 0.0))
    assert abs(p.x_m - WGS84_A) < 1e-9
    assert abs(p.y_m) < 1e-9
    assert abs(p.z_m) < 1e-9


def test_pole_is_semiminor_axis():
    p = wgs84_to_ecef(GeodeticPoint(90.0, 0.0, 0.0))
    assert abs(p.x_m) < 1e-9
    assert abs(p.y_m) < 1e-9
    assert abs(p.z_m - WGS84_B) < 1e-9


def test_boston_golden_ecef():
    p = wgs84_to_ecef(BOSTON)
    assert abs(p.x_m - BOSTON_ECEF[0]) < 1e-3
    assert abs(p.y_m - BOSTON_ECEF[1]) < 1e-3
    assert abs(p.z_m - BOSTON_ECEF[2]) < 1e-3


def test_origin_maps_to_frame_zero():
    frame = EnuFrame(BOSTON)
    enu = ecef_to_enu(wgs84_to_ecef(BOSTON), frame)
    assert abs(enu.east_m) < 1e-9
    assert abs(enu.north_m) < 1e-9
    assert abs(enu.up_m) < 1e-9


def test_meridian_step_at_equator():
    frame = EnuFrame(GeodeticPoint(0.0, 0.0, 0.0))
    enu = wgs84_to_local(GeodeticPoint(0.001, 0.0, 0.0), frame)
    assert abs(enu.north_m - MERIDIAN_ARC_0001DEG) < 0.01
    assert abs(enu.east_m) < 1e-9


def test_corner_golden_enu():
    frame = EnuFrame(BOSTON)
    enu = wgs84_to_local(GeodeticPoint(42.33425, -71.0605, 0.0), frame)
    assert abs(enu.east_m - CORNER_ENU[0]) < 1e-3
    assert abs(enu.north_m - CORNER_ENU[1]) < 1e-3
    assert abs(enu.up_m - CORNER_ENU[2]) < 1e-3


def test_drift_is_exactly_additive():
    base = EnuFrame(BOSTON)
    shifted = EnuFrame(BOSTON, drift_e_m=2.0, drift_n_m=-1.5)
    p = GeodeticPoint(42.3401, -71.0533, 12.0)
    a = wgs84_to_local(p, base)
    b = wgs84_to_local(p, shifted)
    assert b.east_m == a.east_m + 2.0
    assert b.north_m == a.north_m + -1.5
    assert b.up_m == a.up_m


def test_roundtrip_ecef_enu_ecef():
    rng = np.random.default_rng(7)
    frame = EnuFrame(BOSTON, drift_e_m=3.0, drift_n_m=4.0)
    for _ in range(1000):
        p = GeodeticPoint(
            lat_deg=float(rng.uniform(-89.0, 89.0)),
            lon_deg=float(rng.uniform(-180.0, 180.0)),
            alt_m=float(rng.uniform(-1000.0, 1000.0)),
        )
        ecef = wgs84_to_ecef(p)
        back = enu_to_ecef(ecef_to_enu(ecef, frame), frame)
        assert abs(back.x_m - ecef.x_m) < 1e-6
        assert abs(back.y_m - ecef.y_m) < 1e-6
        assert abs(back.z_m - ecef.z_m) < 1e-6


def test_composition_equals_two_step_path():
    rng = np.random.default_rng(11)
    frame = EnuFrame(BOSTON, drift_e_m=-1.0, drift_n_m=0.5)
    for _ in range(1000):
        p = GeodeticPoint(
            lat_deg=float(rng.uniform(42.0, 42.6)),
            lon_deg=float(rng.uniform(-71.4, -70.7)),
            alt_m=float(rng.uniform(-50.0, 50.0)),
        )
        one = wgs84_to_local(p, frame)
        two = ecef_to_enu(wgs84_to_ecef(p), frame)
        assert one == two  # bit-for-bit: same path by construction


def test_locality_enu_distance_matches_ground_distance():
    # At <= 1 km the great-circle arc exceeds the ECEF chord by < 1e-8
    # relative, so the chord is a valid stand-in for the arc at 0.1%.
    rng = np.random.default_rng(13)
    frame = EnuFrame(BOSTON)
    o_ecef = wgs84_to_ecef(BOSTON)
    for _ in range(200):
        d_lat = float(rng.uniform(-0.008, 0.008))
        d_lon = float(rng.uniform(-0.01, 0.01))
        p = GeodeticPoint(BOSTON.lat_deg + d_lat, BOSTON.lon_deg + d_lon, 0.0)
        ecef = wgs84_to_ecef(p)
        chord = math.dist((ecef.x_m, ecef.y_m, ecef.z_m), (o_ecef.x_m, o_ecef.y_m, o_ecef.z_m))
        if not 10.0 < chord < 1000.0:
            continue
        enu = ecef_to_enu(ecef, frame)
        horizontal = math.hypot(enu.east_m, enu.north_m)
        assert abs(horizontal - chord) / chord < 1e-3


def test_ecef_norm_sanity_for_low_altitudes():
    rng = np.random.default_rng(17)
    for _ in range(300):
        p = GeodeticPoint(
            lat_deg=float(rng.uniform(-90.0, 90.0)),
            lon_deg=float(rng.uniform(-180.0, 180.0)),
            alt_m=float(rng.uniform(-10_000.0, 10_000.0)),
        )
        e = wgs84_to_ecef(p)
        norm = math.sqrt(e.x_m**2 + e.y_m**2 + e.z_m**2)
        assert 6.34e6 < norm < 6.40e6


def test_frame_json_round_trip():
    frame = EnuFrame(BOSTON, drift_e_m=2.5, drift_n_m=-0.25)
    assert EnuFrame.from_json_dict(frame.to_json_dict()) == frame


def test_invalid_coordinates_rejected():
    with pytest.raises(ValueError):
        GeodeticPoint(91.0, 0.0)
    with pytest.raises(ValueError):
        GeodeticPoint(0.0, 181.0)
    with pytest.raises(ValueError):
        EnuFrame(BOSTON, drift_e_m=120.0)


def test_drift_bound_is_a_sanity_bound():
    EnuFrame(BOSTON, drift_e_m=70.0, drift_n_m=70.0)  # hypot < 100 still fine? no: 98.99
    with pytest.raises(ValueError):
        EnuFrame(BOSTON, drift_e_m=71.0, drift_n_m=71.0)
