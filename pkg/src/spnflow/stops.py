"""Stop-point extraction by incremental medoid clustering."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - pure-Python fallback, slow on long dwells
    def njit(*args, **kwargs):
        return (lambda f: f) if not args or not callable(args[0]) else args[0]

from .hexgrid import EARTH_RADIUS_M, CellId, GridConfig, geo_to_cell
from .ingest import Ping, format_timestamp, parse_timestamp

STOP_COLUMNS = ["user_id", "cell", "medoid_lat", "medoid_lon", "arrival_iso", "departure_iso"]


@dataclass(frozen=True)
class StopParams:
    radius_m: float = 50.0
    max_gap_s: float = 300.0
    min_duration_s: float = 300.0

    def __post_init__(self) -> None:
        for name in ("radius_m", "max_gap_s", "min_duration_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Stop:
    user_id: str
    cell: CellId
    medoid_lat: float
    medoid_lon: float
    arrival: float
    departure: float

    @property
    def duration(self) -> float:
        return self.departure - self.arrival


def haversine(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in metres between two (lat, lon) pairs."""
    phi1, phi2 = math.radians(a[0]), math.radians(b[0])
    dphi = phi2 - phi1
    dlam = math.radians(b[1] - a[1])
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def medoid(points: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """The member minimising the summed haversine distance to all members.

    Ties go to the earliest point.
    """
    if not points:
        raise ValueError("medoid of an empty point set")
    best, best_sum = 0, math.inf
    for i, p in enumerate(points):
        total = sum(haversine(p, q) for q in points)
        if total < best_sum:
            best, best_sum = i, total
    return points[best]


@njit(cache=True)
def _arc(x, y, z, i, j):
    # great-circle distance from the chord between unit vectors; equal to the
    # haversine form since hav(theta) = (chord / 2) ** 2
    dx = x[i] - x[j]
    dy = y[i] - y[j]
    dz = z[i] - z[j]
    half = 0.5 * np.sqrt(dx * dx + dy * dy + dz * dz)
    return 2 * EARTH_RADIUS_M * np.arcsin(min(1.0, half))


@njit(cache=True)
def _scan(phi, lam, ts, radius, max_gap, min_dur):
    """Core clustering pass. Returns (first, last, medoid) index triples of emitted stops.

    Cluster members always form a contiguous run ``first..i-1``: any point
    that fails to join closes the cluster.
    """
    n = phi.shape[0]
    x = np.cos(phi) * np.cos(lam)
    y = np.cos(phi) * np.sin(lam)
    z = np.sin(phi)
    sums = np.zeros(n)
    out = np.empty((n, 3), dtype=np.int64)
    k = 0
    first = 0
    med = 0
    for i in range(1, n + 1):
        joined = False
        if i < n:
            joined = _arc(x, y, z, i, med) <= radius and ts[i] - ts[i - 1] <= max_gap
        if joined:
            total = 0.0
            best = -1
            best_sum = np.inf
            for j in range(first, i):
                dj = _arc(x, y, z, i, j)
                sums[j] += dj
                total += dj
                if sums[j] < best_sum:
                    best, best_sum = j, sums[j]
            sums[i] = total
            if total < best_sum:
                best = i
            med = best
        else:
            if ts[i - 1] - ts[first] >= min_dur:
                out[k, 0] = first
                out[k, 1] = i - 1
                out[k, 2] = med
                k += 1
            first = i
            med = i
    return out[:k]


def extract_stops(trajectory: Sequence[Ping], p: StopParams, cfg: GridConfig) -> list[Stop]:
    """Scan a time-sorted trajectory and emit dwell events.

    A point joins the open cluster when it lies within ``p.radius_m`` of the
    cluster's current medoid and follows the previous member by at most
    ``p.max_gap_s``. Otherwise the cluster is closed, kept as a stop if it
    lasted at least ``p.min_duration_s``, and a new one starts at the point.
    The medoid is kept exact after every join.
    """
    n = len(trajectory)
    if n == 0:
        return []
    ts = np.fromiter((q.timestamp for q in trajectory), dtype=float, count=n)
    if np.any(np.diff(ts) < 0):
        raise ValueError("trajectory must be sorted by timestamp")
    lat = np.fromiter((q.lat for q in trajectory), dtype=float, count=n)
    lon = np.fromiter((q.lon for q in trajectory), dtype=float, count=n)
    runs = _scan(np.radians(lat), np.radians(lon), ts, float(p.radius_m), float(p.max_gap_s),
                 float(p.min_duration_s))
    user = trajectory[0].user_id
    stops = []
    for first, last, m in runs.tolist():
        stops.append(Stop(user, geo_to_cell(lat[m], lon[m], cfg), float(lat[m]), float(lon[m]),
                          float(ts[first]), float(ts[last])))
    return stops


def extract_all(trajectories: dict[str, Sequence[Ping]], p: StopParams, cfg: GridConfig) -> dict[str, list[Stop]]:
    return {user: extract_stops(trajectories[user], p, cfg) for user in sorted(trajectories)}


def write_stops(stops: dict[str, list[Stop]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STOP_COLUMNS)
        for user in sorted(stops):
            for s in stops[user]:
                w.writerow((s.user_id, str(s.cell), f"{s.medoid_lat:.7f}", f"{s.medoid_lon:.7f}",
                            format_timestamp(s.arrival), format_timestamp(s.departure)))


def read_stops(path: str | Path) -> dict[str, list[Stop]]:
    out: dict[str, list[Stop]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != STOP_COLUMNS:
            raise ValueError(f"unexpected stops header {reader.fieldnames}")
        for row in reader:
            s = Stop(row["user_id"], CellId.parse(row["cell"]), float(row["medoid_lat"]),
                     float(row["medoid_lon"]), parse_timestamp(row["arrival_iso"]),
                     parse_timestamp(row["departure_iso"]))
            out.setdefault(s.user_id, []).append(s)
    for lst in out.values():
        lst.sort(key=lambda s: s.arrival)
    return out


def iter_stops(stops: dict[str, list[Stop]]) -> Iterable[Stop]:
    for user in sorted(stops):
        yield from stops[user]
