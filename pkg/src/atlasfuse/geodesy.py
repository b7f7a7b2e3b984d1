"""WGS84 geodetic <-> ECEF <-> local east-north-up conversions."""

from __future__ import annotations

import math

import numpy as np

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)


def geodetic_to_ecef(latitude_deg: float, longitude_deg: float, altitude_m: float) -> np.ndarray:
    lat = math.radians(latitude_deg)
    lon = math.radians(longitude_deg)
    sin_lat = math.sin(lat)
    cos_lat = math.cos(lat)
    n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * sin_lat * sin_lat)
    x = (n + altitude_m) * cos_lat * math.cos(lon)
    y = (n + altitude_m) * cos_lat * math.sin(lon)
    z = (n * (1.0 - WGS84_E2) + altitude_m) * sin_lat
    return np.array([x, y, z])


def ecef_to_geodetic(x: float, y: float, z: float) -> tuple:
    """Iterative inverse of :func:`geodetic_to_ecef`; converges to sub-micron."""
    lon = math.atan2(y, x)
    p = math.hypot(x, y)
    if p < 1e-9:
        # on the polar axis the latitude is exactly +-90 degrees
        lat = math.copysign(math.pi / 2.0, z)
        n = WGS84_A / math.sqrt(1.0 - WGS84_E2)
        alt = abs(z) - n * (1.0 - WGS84_E2)
        return math.degrees(lat), math.degrees(lon), alt
    lat = math.atan2(z, p * (1.0 - WGS84_E2))
    alt = 0.0
    for _ in range(12):
        sin_lat = math.sin(lat)
        cos_lat = math.cos(lat)
        n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * sin_lat * sin_lat)
        # the p/cos form loses precision near the poles, the z/sin form near
        # the equator; pick whichever divisor is larger
        if abs(sin_lat) > abs(cos_lat):
            alt = z / sin_lat - n * (1.0 - WGS84_E2)
        else:
            alt = p / cos_lat - n
        lat_new = math.atan2(z, p * (1.0 - WGS84_E2 * n / (n + alt)))
        if abs(lat_new - lat) < 1e-14:
            lat = lat_new
            break
        lat = lat_new
    return math.degrees(lat), math.degrees(lon), alt


def enu_rotation(latitude_deg: float, longitude_deg: float) -> np.ndarray:
    """Row-wise rotation taking ECEF deltas to east, north, up at the anchor."""
    lat = math.radians(latitude_deg)
    lon = math.radians(longitude_deg)
    sl, cl = math.sin(lat), math.cos(lat)
    so, co = math.sin(lon), math.cos(lon)
    return np.array(
        [
            [-so, co, 0.0],
            [-sl * co, -sl * so, cl],
            [cl * co, cl * so, sl],
        ]
    )


def geodetic_to_enu(anchor: tuple, latitude_deg: float, longitude_deg: float,
                    altitude_m: float) -> np.ndarray:
    """ENU meters of a fix relative to an (lat, lon, alt) anchor."""
    ref = geodetic_to_ecef(*anchor)
    ecef = geodetic_to_ecef(latitude_deg, longitude_deg, altitude_m)
    return enu_rotation(anchor[0], anchor[1]) @ (ecef - ref)


def enu_to_geodetic(anchor: tuple, enu) -> tuple:
    """Inverse of :func:`geodetic_to_enu` (used by the scenario generator)."""
    ref = geodetic_to_ecef(*anchor)
    ecef = ref + enu_rotation(anchor[0], anchor[1]).T @ np.asarray(enu, dtype=np.float64)
    return ecef_to_geodetic(ecef[0], ecef[1], ecef[2])
