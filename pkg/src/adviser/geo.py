"""Geographic helpers: great-circle distances and planar approximations.

All distances are kilometres. Points are (lat, lon) in degrees.
"""

from __future__ import annotations

import math

import numpy as np

EARTH_RADIUS_KM = 6371.0088
KM_PER_DEG_LAT = 110.574


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance between two points."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(a)))


def haversine_km_vec(lats: np.ndarray, lons: np.ndarray, lat0: float, lon0: float) -> np.ndarray:
    """Great-circle distance from many points to one point."""
    phi = np.radians(lats)
    phi0 = math.radians(lat0)
    dphi = phi0 - phi
    dlam = np.radians(lon0 - lons)
    a = np.sin(dphi / 2.0) ** 2 + np.cos(phi) * math.cos(phi0) * np.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(a)))


def km_per_deg_lon(lat: float) -> float:
    return 111.320 * math.cos(math.radians(lat))


def project_km(lat: float, lon: float, lat_ref: float, lon_ref: float) -> tuple[float, float]:
    """Equirectangular projection to km around a reference point.

    Adequate at city scale; used where segment geometry is needed
    (great-circle segments would be overkill for <50 km extents).
    """
    x = (lon - lon_ref) * km_per_deg_lon(lat_ref)
    y = (lat - lat_ref) * KM_PER_DEG_LAT
    return x, y


def point_segment_km(
    point: tuple[float, float],
    seg_a: tuple[float, float],
    seg_b: tuple[float, float],
) -> float:
    """Distance from a point to the segment a-b, all (lat, lon)."""
    lat_ref, lon_ref = seg_a
    px, py = project_km(point[0], point[1], lat_ref, lon_ref)
    ax, ay = 0.0, 0.0
    bx, by = project_km(seg_b[0], seg_b[1], lat_ref, lon_ref)
    abx, aby = bx - ax, by - ay
    denom = abx * abx + aby * aby
    if denom <= 0.0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * abx + (py - ay) * aby) / denom))
    cx, cy = ax + t * abx, ay + t * aby
    return math.hypot(px - cx, py - cy)
