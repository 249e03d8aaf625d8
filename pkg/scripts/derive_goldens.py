#!/usr/bin/env python3
"""Derive frozen golden values for the test suite from independent formulations.

Run manually; paste the printed literals into the tests. Deliberately avoids
importing the package so the oracle shares no code with the implementation.

ECEF route A: prime-vertical closed form.
ECEF route B: geocentric-latitude ellipse parameterization
    tan(psi) = (1 - e^2) tan(phi); ellipse radius rho(psi) = ab / sqrt(a^2 sin^2 psi + b^2 cos^2 psi);
    surface point (rho cos psi, rho sin psi) in the meridian plane, plus h along the geodetic normal.
ENU route: project the ECEF delta onto finite-difference tangent unit vectors at the origin
    (d ecef / d lon, d ecef / d lat, d ecef / d h), never forming the analytic rotation matrix.
"""

import math

A = 6378137.0
F = 1.0 / 298.257223563
B = A * (1.0 - F)
E2 = F * (2.0 - F)


def ecef_route_a(lat_deg, lon_deg, h):
    lat, lon = math.radians(lat_deg), math.radians(lon_deg)
    n = A / math.sqrt(1.0 - E2 * math.sin(lat) ** 2)
    return (
        (n + h) * math.cos(lat) * math.cos(lon),
        (n + h) * math.cos(lat) * math.sin(lon),
        (n * (1.0 - E2) + h) * math.sin(lat),
    )


def ecef_route_b(lat_deg, lon_deg, h):
    lat, lon = math.radians(lat_deg), math.radians(lon_deg)
    psi = math.atan2((1.0 - E2) * math.sin(lat), math.cos(lat))  # geocentric latitude
    rho = A * B / math.sqrt((A * math.sin(psi)) ** 2 + (B * math.cos(psi)) ** 2)
    r_surf = rho * math.cos(psi)  # distance from rotation axis, on the surface
    z_surf = rho * math.sin(psi)
    # geodetic normal direction
    nx, nz = math.cos(lat), math.sin(lat)
    r = r_surf + h * nx
    z = z_surf + h * nz
    return (r * math.cos(lon), r * math.sin(lon), z)


def enu_fd(lat_deg, lon_deg, h, origin):
    """ENU of a geodetic point w.r.t. origin, via finite-difference tangent basis."""
    o_lat, o_lon, o_h = origin
    p = ecef_route_b(lat_deg, lon_deg, h)
    o = ecef_route_b(o_lat, o_lon, o_h)
    d = [p[i] - o[i] for i in range(3)]

    def unit(v):
        s = math.sqrt(sum(c * c for c in v))
        return [c / s for c in v]

    eps_deg = 1e-6
    east = unit([(a - b) / (2 * eps_deg) for a, b in
                 zip(ecef_route_b(o_lat, o_lon + eps_deg, o_h), ecef_route_b(o_lat, o_lon - eps_deg, o_h))])
    north = unit([(a - b) / (2 * eps_deg) for a, b in
                  zip(ecef_route_b(o_lat + eps_deg, o_lon, o_h), ecef_route_b(o_lat - eps_deg, o_lon, o_h))])
    up = unit([(a - b) / 2.0 for a, b in
               zip(ecef_route_b(o_lat, o_lon, o_h + 1.0), ecef_route_b(o_lat, o_lon, o_h - 1.0))])
    return tuple(sum(u[i] * d[i] for i in range(3)) for u in (east, north, up))


def main():
    pts = [
        ("boston golden", 42.3365, -71.0578, 0.0),
        ("equator", 0.0, 0.0, 0.0),
        ("pole", 90.0, 0.0, 0.0),
    ]
    print("== ECEF goldens (route A vs route B) ==")
    for name, lat, lon, h in pts:
        pa, pb = ecef_route_a(lat, lon, h), ecef_route_b(lat, lon, h)
        dmax = max(abs(x - y) for x, y in zip(pa, pb))
        print(f"{name}: A={pa}")
        print(f"{name}: B={pb}  |A-B|max={dmax:.3e} m")

    origin = (42.3365, -71.0578, 0.0)
    print("\n== ENU goldens vs Boston-ish origin (FD-basis route) ==")
    for name, lat, lon, h in [
        ("extract SW-ish corner", 42.33425, -71.0605, 0.0),
        ("meridian +0.001deg at equator", 0.001, 0.0, 0.0),
    ]:
        o = origin if name.startswith("extract") else (0.0, 0.0, 0.0)
        enu = enu_fd(lat, lon, h, o)
        print(f"{name}: enu={enu}")

    # analytic meridian arc at the equator for 0.001 deg
    m_eq = A * (1.0 - E2)
    print(f"\nmeridian radius at equator = {m_eq!r}")
    print(f"0.001 deg arc = {m_eq * math.radians(0.001)!r} m")
    print(f"WGS84 b = {B!r}")


if __name__ == "__main__":
    main()
