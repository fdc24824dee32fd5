"""Flat-top axial hexagonal grid over a local azimuthal-equidistant projection.

Cells are addressed by axial coordinates ``(q, r)``. The projection is
centred on ``GridConfig.anchor`` so the anchor always falls in cell
``(0, 0)``. Default edge length (3200 m) puts the cells at roughly the
scale of H3 resolution 6.

Reference for the axial/cube arithmetic:
https://www.redblobgames.com/grids/hexagons/
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

EARTH_RADIUS_M = 6_371_000.0
SQRT3 = math.sqrt(3.0)

AXIAL_DIRECTIONS = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1))


class InvalidCoordinateError(ValueError):
    """Raised for latitudes/longitudes outside the valid range."""


class CellId(NamedTuple):
    q: int
    r: int

    def __str__(self) -> str:
        return f"{self.q}:{self.r}"

    @classmethod
    def parse(cls, text: str) -> "CellId":
        q, r = text.strip().split(":")
        return cls(int(q), int(r))

    def distance(self, other: "CellId") -> int:
        dq = self.q - other.q
        dr = self.r - other.r
        return (abs(dq) + abs(dr) + abs(dq + dr)) // 2


def check_coordinates(lat: float, lon: float) -> None:
    if not (math.isfinite(lat) and math.isfinite(lon)):
        raise InvalidCoordinateError(f"non-finite coordinate ({lat}, {lon})")
    if abs(lat) > 90.0 or abs(lon) > 180.0:
        raise InvalidCoordinateError(f"coordinate out of range ({lat}, {lon})")


@dataclass(frozen=True)
class GridConfig:
    anchor_lat: float = -12.0464
    anchor_lon: float = -77.0428
    edge_length_m: float = 3200.0

    def __post_init__(self) -> None:
        if not self.edge_length_m > 0:
            raise ValueError(f"edge_length_m must be positive, got {self.edge_length_m}")
        check_coordinates(self.anchor_lat, self.anchor_lon)

    @property
    def pitch_m(self) -> float:
        """Distance between the centres of two adjacent cells."""
        return self.edge_length_m * SQRT3


def project(lat: float, lon: float, cfg: GridConfig) -> tuple[float, float]:
    """Azimuthal-equidistant projection to local (x east, y north) metres."""
    phi0 = math.radians(cfg.anchor_lat)
    lam0 = math.radians(cfg.anchor_lon)
    phi = math.radians(lat)
    dlam = math.radians(lon) - lam0
    # angular distance via the haversine form, stable for small separations
    a = math.sin((phi - phi0) / 2) ** 2 + math.cos(phi0) * math.cos(phi) * math.sin(dlam / 2) ** 2
    c = 2.0 * math.atan2(math.sqrt(a), math.sqrt(max(0.0, 1.0 - a)))
    k = 1.0 if c < 1e-12 else c / math.sin(c)
    x = k * math.cos(phi) * math.sin(dlam)
    y = k * (math.cos(phi0) * math.sin(phi) - math.sin(phi0) * math.cos(phi) * math.cos(dlam))
    return x * EARTH_RADIUS_M, y * EARTH_RADIUS_M


def unproject(x: float, y: float, cfg: GridConfig) -> tuple[float, float]:
    """Inverse of :func:`project`."""
    phi0 = math.radians(cfg.anchor_lat)
    lam0 = math.radians(cfg.anchor_lon)
    rho = math.hypot(x, y)
    if rho == 0.0:
        return cfg.anchor_lat, cfg.anchor_lon
    c = rho / EARTH_RADIUS_M
    sin_c, cos_c = math.sin(c), math.cos(c)
    phi = math.asin(cos_c * math.sin(phi0) + y * sin_c * math.cos(phi0) / rho)
    lam = lam0 + math.atan2(x * sin_c, rho * math.cos(phi0) * cos_c - y * math.sin(phi0) * sin_c)
    lon = (math.degrees(lam) + 180.0) % 360.0 - 180.0
    return math.degrees(phi), lon


def unproject_many(x: np.ndarray, y: np.ndarray, cfg: GridConfig) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`unproject`."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    phi0 = math.radians(cfg.anchor_lat)
    lam0 = math.radians(cfg.anchor_lon)
    rho = np.hypot(x, y)
    c = rho / EARTH_RADIUS_M
    sin_c, cos_c = np.sin(c), np.cos(c)
    safe = np.where(rho == 0.0, 1.0, rho)
    phi = np.arcsin(np.clip(cos_c * math.sin(phi0) + y * sin_c * math.cos(phi0) / safe, -1.0, 1.0))
    lam = lam0 + np.arctan2(x * sin_c, rho * math.cos(phi0) * cos_c - y * math.sin(phi0) * sin_c)
    lat = np.where(rho == 0.0, cfg.anchor_lat, np.degrees(phi))
    lon = np.where(rho == 0.0, cfg.anchor_lon, (np.degrees(lam) + 180.0) % 360.0 - 180.0)
    return lat, lon


def cell_center_xy(c: CellId, cfg: GridConfig) -> tuple[float, float]:
    s = cfg.edge_length_m
    return s * 1.5 * c.q, s * SQRT3 * (c.r + c.q / 2.0)


def cell_centers_xy(cells: Iterable[CellId], cfg: GridConfig) -> np.ndarray:
    """Projected centres of many cells as an ``(n, 2)`` array."""
    qr = np.array([tuple(c) for c in cells], dtype=float).reshape(-1, 2)
    s = cfg.edge_length_m
    return np.column_stack([s * 1.5 * qr[:, 0], s * SQRT3 * (qr[:, 1] + qr[:, 0] / 2.0)])


def _cube_round(fq: float, fr: float) -> CellId:
    fs = -fq - fr
    q, r, s = round(fq), round(fr), round(fs)
    dq, dr, ds = abs(q - fq), abs(r - fr), abs(s - fs)
    if dq > dr and dq > ds:
        q = -r - s
    elif dr > ds:
        r = -q - s
    return CellId(int(q), int(r))


def xy_to_cell(x: float, y: float, cfg: GridConfig) -> CellId:
    s = cfg.edge_length_m
    fq = (2.0 / 3.0 * x) / s
    fr = (-1.0 / 3.0 * x + SQRT3 / 3.0 * y) / s
    return _cube_round(fq, fr)


def geo_to_cell(lat: float, lon: float, cfg: GridConfig) -> CellId:
    """Map a coordinate to the hexagon containing its projection."""
    check_coordinates(lat, lon)
    return xy_to_cell(*project(lat, lon, cfg), cfg)


def cell_centroid(c: CellId, cfg: GridConfig) -> tuple[float, float]:
    return unproject(*cell_center_xy(c, cfg), cfg)


def grid_disk(c: CellId, k: int) -> set[CellId]:
    """All cells within hex distance ``k`` of ``c`` (``c`` included)."""
    if k < 0:
        raise ValueError("k must be non-negative")
    out = set()
    for dq in range(-k, k + 1):
        for dr in range(max(-k, -dq - k), min(k, -dq + k) + 1):
            out.add(CellId(c.q + dq, c.r + dr))
    return out


def neighbors(c: CellId) -> set[CellId]:
    return {CellId(c.q + dq, c.r + dr) for dq, dr in AXIAL_DIRECTIONS}


def neighbor_list(c: CellId) -> list[CellId]:
    """The six neighbours in a fixed direction order."""
    return [CellId(c.q + dq, c.r + dr) for dq, dr in AXIAL_DIRECTIONS]
