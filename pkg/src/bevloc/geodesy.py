"""WGS84 -> ECEF -> local ENU conversion.

OSM geometry arrives as WGS84 lat/lon; the map frame is a local East-North-Up
tangent plane anchored at a per-region reference origin, optionally shifted by
a constant (east, north) drift correction. All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# WGS84 ellipsoid
WGS84_A = 6378137.0
WGS84_INV_F = 298.257223563
WGS84_F = 1.0 / WGS84_INV_F
WGS84_B = WGS84_A * (1.0 - WGS84_F)
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)


@dataclass(frozen=True)
class GeodeticPoint:
    lat_deg: float
    lon_deg: float
    alt_m: float = 0.0

    def __post_init__(self):
        if not -90.0 <= self.lat_deg <= 90.0:
            raise ValueError(f"latitude {self.lat_deg} outside [-90, 90]")
        if not -180.0 <= self.lon_deg <= 180.0:
            raise ValueError(f"longitude {self.lon_deg} outside [-180, 180]")


@dataclass(frozen=True)
class EcefPoint:
    x_m: float
    y_m: float
    z_m: float


@dataclass(frozen=True)
class EnuFrame:
    """Local tangent frame: origin plus a constant drift correction in meters."""

    origin: GeodeticPoint
    drift_e_m: float = 0.0
    drift_n_m: float = 0.0

    def __post_init__(self):
        if math.hypot(self.drift_e_m, self.drift_n_m) >= 100.0:
            raise ValueError("drift correction magnitude must stay below 100 m")

    def to_json_dict(self) -> dict:
        return {
            "origin_lat": self.origin.lat_deg,
            "origin_lon": self.origin.lon_deg,
            "origin_alt": self.origin.alt_m,
            "drift_e": self.drift_e_m,
            "drift_n": self.drift_n_m,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "EnuFrame":
        return cls(
            origin=GeodeticPoint(d["origin_lat"], d["origin_lon"], d.get("origin_alt", 0.0)),
            drift_e_m=d.get("drift_e", 0.0),
            drift_n_m=d.get("drift_n", 0.0),
        )


@dataclass(frozen=True)
class EnuPoint:
    east_m: float
    north_m: float
    up_m: float = 0.0


def wgs84_to_ecef(p: GeodeticPoint) -> EcefPoint:
    """Closed-form geodetic -> ECEF on the WGS84 ellipsoid."""
    lat = math.radians(p.lat_deg)
    lon = math.radians(p.lon_deg)
    sin_lat, cos_lat = math.sin(lat), math.cos(lat)
    sin_lon, cos_lon = math.sin(lon), math.cos(lon)
    # prime vertical radius of curvature
    n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * sin_lat * sin_lat)
    x = (n + p.alt_m) * cos_lat * cos_lon
    y = (n + p.alt_m) * cos_lat * sin_lon
    z = (n * (1.0 - WGS84_E2) + p.alt_m) * sin_lat
    return EcefPoint(x, y, z)


def _enu_rotation(origin: GeodeticPoint) -> tuple[tuple[float, ...], ...]:
    """Rows are the east / north / up unit vectors at the origin, in ECEF."""
    lat = math.radians(origin.lat_deg)
    lon = math.radians(origin.lon_deg)
    sin_lat, cos_lat = math.sin(lat), math.cos(lat)
    sin_lon, cos_lon = math.sin(lon), math.cos(lon)
    return (
        (-sin_lon, cos_lon, 0.0),
        (-sin_lat * cos_lon, -sin_lat * sin_lon, cos_lat),
        (cos_lat * cos_lon, cos_lat * sin_lon, sin_lat),
    )


def ecef_to_enu(p: EcefPoint, frame: EnuFrame) -> EnuPoint:
    """Rotate-translate an ECEF point into the frame's tangent plane.

    The frame's drift correction is added to (east, north) after rotation.
    """
    o = wgs84_to_ecef(frame.origin)
    dx, dy, dz = p.x_m - o.x_m, p.y_m - o.y_m, p.z_m - o.z_m
    (ex, ey, ez), (nx, ny, nz), (ux, uy, uz) = _enu_rotation(frame.origin)
    east = ex * dx + ey * dy + ez * dz + frame.drift_e_m
    north = nx * dx + ny * dy + nz * dz + frame.drift_n_m
    up = ux * dx + uy * dy + uz * dz
    return EnuPoint(east, north, up)


def enu_to_ecef(p: EnuPoint, frame: EnuFrame) -> EcefPoint:
    """Inverse of ecef_to_enu (drift removed before rotating back)."""
    o = wgs84_to_ecef(frame.origin)
    e = p.east_m - frame.drift_e_m
    n = p.north_m - frame.drift_n_m
    u = p.up_m
    (ex, ey, ez), (nx, ny, nz), (ux, uy, uz) = _enu_rotation(frame.origin)
    # transpose of the rotation
    x = ex * e + nx * n + ux * u + o.x_m
    y = ey * e + ny * n + uy * u + o.y_m
    z = ez * e + nz * n + uz * u + o.z_m
    return EcefPoint(x, y, z)


def wgs84_to_local(p: GeodeticPoint, frame: EnuFrame) -> EnuPoint:
    """Composition wgs84 -> ecef -> enu; the 2-D map pipeline drops `up`."""
    return ecef_to_enu(wgs84_to_ecef(p), frame)
