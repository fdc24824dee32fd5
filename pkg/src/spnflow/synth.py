"""Deterministic synthetic commuter traces and night-light rasters.

Users live in a home cell and commute to a work cell on most days, with
departure times drawn from a smooth hour-of-day intensity. Each activity
group carries a day-level log-activity that follows an AR(1) process, so
commute probability drifts persistently from day to day. With
``work_clusters`` on, groups are districts of seven adjacent cells and
every user working in a district shares its activity, which gives
neighbouring cells correlated flows. With it off, work cells are drawn
independently across the study area and each work cell has its own
independent activity.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .hexgrid import CellId, GridConfig, cell_center_xy, grid_disk, unproject_many
from .ingest import Ping, parse_timestamp

DWELL_JITTER_M = 20.0
TRAVEL_SPEED_MS = 8.0


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 200
    n_days: int = 28
    n_home_cells: int = 40
    daily_period_strength: float = 2.0
    sparsity: float = 0.1
    noise_std: float = 0.4
    seed: int = 0
    grid: GridConfig = field(default_factory=GridConfig)
    work_clusters: bool = True
    n_clusters: int = 8
    area_radius: int = 6
    activity_persistence: float = 0.8
    commute_rate: float = 0.7
    errand_rate: float = 0.6
    start_iso: str = "2020-04-01T00:00:00Z"

    def __post_init__(self) -> None:
        for name in ("n_users", "n_days", "n_home_cells", "n_clusters", "area_radius"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("sparsity", "activity_persistence", "commute_rate", "errand_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.daily_period_strength < 0 or self.noise_std < 0:
            raise ValueError("daily_period_strength and noise_std must be non-negative")

    @property
    def start(self) -> float:
        return parse_timestamp(self.start_iso)

    @property
    def end(self) -> float:
        return self.start + self.n_days * 86400.0


@dataclass
class _World:
    area: list[CellId]
    homes: list[CellId]
    districts: list[list[CellId]]
    user_home: list[tuple[float, float]]
    user_work: list[tuple[float, float]]
    user_work_cell: list[CellId]
    user_group: list[int]
    user_errands: list[list[tuple[float, float]]]
    activity: np.ndarray  # (groups, days) log-activity


def _user_id(seed: int, i: int) -> str:
    return hashlib.sha256(f"synth-{seed}-{i}".encode()).hexdigest()[:16]


def _point_in_cell(rng: np.random.Generator, c: CellId, grid: GridConfig) -> tuple[float, float]:
    x0, y0 = cell_center_xy(c, grid)
    rad = 0.6 * grid.edge_length_m * math.sqrt(rng.random())
    ang = 2 * math.pi * rng.random()
    return x0 + rad * math.cos(ang), y0 + rad * math.sin(ang)


def _pick_districts(rng: np.random.Generator, area: list[CellId], k: int, radius: int) -> list[CellId]:
    inner = [c for c in area if c.distance(CellId(0, 0)) <= radius - 1]
    centers: list[CellId] = []
    for idx in rng.permutation(len(inner)):
        c = inner[idx]
        if all(c.distance(o) >= 3 for o in centers):
            centers.append(c)
        if len(centers) == k:
            break
    return sorted(centers)


def build_world(cfg: SynthConfig) -> _World:
    rng = np.random.default_rng([cfg.seed, 0])
    area = sorted(grid_disk(CellId(0, 0), cfg.area_radius))
    homes = sorted(area[i] for i in rng.choice(len(area), size=min(cfg.n_home_cells, len(area)), replace=False))
    centers = _pick_districts(rng, area, cfg.n_clusters, cfg.area_radius)
    districts = [sorted(grid_disk(c, 1)) for c in centers]

    user_home, user_work, work_cells, groups, errands = [], [], [], [], []
    for i in range(cfg.n_users):
        urng = np.random.default_rng([cfg.seed, 1, i])
        h = homes[urng.integers(len(homes))]
        if cfg.work_clusters:
            g = int(urng.integers(len(districts)))
            cells = districts[g]
            w = cells[urng.integers(len(cells))]
            errand_cells = [cells[j] for j in urng.choice(len(cells), size=2, replace=False)]
        else:
            w = area[urng.integers(len(area))]
            errand_cells = [area[j] for j in urng.choice(len(area), size=2, replace=False)]
            g = area.index(w)
        user_home.append(_point_in_cell(urng, h, cfg.grid))
        user_work.append(_point_in_cell(urng, w, cfg.grid))
        errands.append([_point_in_cell(urng, c, cfg.grid) for c in errand_cells])
        work_cells.append(w)
        groups.append(g)

    n_groups = len(districts) if cfg.work_clusters else len(area)
    arng = np.random.default_rng([cfg.seed, 2])
    z = np.zeros((n_groups, cfg.n_days))
    rho = cfg.activity_persistence
    innov = cfg.noise_std * math.sqrt(max(1.0 - rho**2, 0.0))
    z[:, 0] = cfg.noise_std * arng.standard_normal(n_groups)
    for d in range(1, cfg.n_days):
        z[:, d] = rho * z[:, d - 1] + innov * arng.standard_normal(n_groups)
    return _World(area, homes, districts, user_home, user_work, work_cells, groups, errands, z)


def _hour_weights(peak: float, lo: int, hi: int, strength: float) -> np.ndarray:
    hours = np.arange(lo, hi)
    w = np.exp(strength * np.cos(2 * np.pi * (hours - peak) / 24.0))
    return w / w.sum()


def _draw_time(rng, hours_lo, weights) -> float:
    h = hours_lo + rng.choice(len(weights), p=weights)
    return h * 3600.0 + rng.uniform(0, 3600.0)


def _day_plan(cfg: SynthConfig, world: _World, i: int, day: int, rng) -> list[tuple[float, tuple[float, float]]]:
    """List of (departure offset in the day, destination) trips."""
    p = min(1.0, cfg.commute_rate * math.exp(world.activity[world.user_group[i], day]))
    s = cfg.daily_period_strength
    if rng.random() >= p:
        return []
    t_out = _draw_time(rng, 6, _hour_weights(8.0, 6, 11, s))
    silent = rng.random() < cfg.sparsity
    if silent:
        return []
    trips = [(t_out, world.user_work[i])]
    t_back = _draw_time(rng, 16, _hour_weights(18.0, 16, 21, s))
    if rng.random() < cfg.errand_rate:
        t_err = _draw_time(rng, 12, _hour_weights(13.0, 12, 15, s))
        dest = world.user_errands[i][int(rng.integers(2))]
        trips.append((t_err, dest))
        trips.append((t_err + rng.uniform(1800, 5400), world.user_work[i]))
    trips.append((t_back, world.user_home[i]))
    return trips


def _dwell_times(rng, t0: float, t1: float) -> np.ndarray:
    n = int((t1 - t0) / 60.0) + 2
    steps = rng.uniform(60.0, 180.0, size=n)
    t = t0 + np.concatenate([[0.0], np.cumsum(steps)])
    return t[t < t1]


def _jitter(rng, x: float, y: float, n: int) -> np.ndarray:
    rad = DWELL_JITTER_M * np.sqrt(rng.random(n))
    ang = 2 * np.pi * rng.random(n)
    return np.column_stack([x + rad * np.cos(ang), y + rad * np.sin(ang)])


def user_track(cfg: SynthConfig, world: _World, i: int) -> tuple[np.ndarray, np.ndarray]:
    """Timestamps and projected (x, y) positions of one user's pings."""
    rng = np.random.default_rng([cfg.seed, 3, i])
    start = cfg.start
    times, xys = [], []
    here = world.user_home[i]
    t = start
    for day in range(cfg.n_days):
        for dep, dest in _day_plan(cfg, world, i, day, rng):
            t_dep = start + day * 86400.0 + dep
            if t_dep < t + 600.0:
                # previous leg ran late; linger at least ten minutes
                t_dep = t + 600.0 + rng.uniform(0.0, 1200.0)
            ts = _dwell_times(rng, t, t_dep)
            times.append(ts)
            xys.append(_jitter(rng, *here, len(ts)))
            dist = math.dist(here, dest)
            travel = dist / TRAVEL_SPEED_MS + 300.0
            tt = t_dep + np.arange(360.0, travel, rng.uniform(360.0, 600.0))
            frac = (tt - t_dep) / travel
            times.append(tt)
            xys.append(np.column_stack([here[0] + frac * (dest[0] - here[0]), here[1] + frac * (dest[1] - here[1])]))
            here, t = dest, t_dep + travel
    ts = _dwell_times(rng, t, cfg.end)
    times.append(ts)
    xys.append(_jitter(rng, *here, len(ts)))
    return np.floor(np.concatenate(times)), np.concatenate(xys)


def _status(seed: int, i: int) -> str:
    u = np.random.default_rng([seed, 4, i]).random()
    return "infected" if u < 0.02 else ("unknown" if u < 0.1 else "healthy")


def generate_pings(cfg: SynthConfig) -> Iterator[Ping]:
    """Yield every user's pings, users in index order, each in time order."""
    world = build_world(cfg)
    for i in range(cfg.n_users):
        uid = _user_id(cfg.seed, i)
        status = _status(cfg.seed, i)
        ts, xy = user_track(cfg, world, i)
        lat, lon = unproject_many(xy[:, 0], xy[:, 1], cfg.grid)
        for t, la, lo in zip(ts.tolist(), np.round(lat, 7).tolist(), np.round(lon, 7).tolist()):
            yield Ping(uid, t, la, lo, status)


def generate_raster(cfg: SynthConfig) -> dict[CellId, float]:
    """Radiance per cell: Gaussian blobs (peak ~12) over a ~1 background."""
    world = build_world(cfg)
    if cfg.work_clusters:
        centers = [d[len(d) // 2] for d in world.districts]
    else:
        counts: dict[CellId, int] = {}
        for c in world.user_work_cell:
            counts[c] = counts.get(c, 0) + 1
        centers = sorted(counts, key=lambda c: (-counts[c], c))[: cfg.n_clusters]
    cells = sorted(grid_disk(CellId(0, 0), cfg.area_radius + 2))
    rng = np.random.default_rng([cfg.seed, 5])
    sigma = 1.2
    out = {}
    for c in cells:
        bump = max((math.exp(-c.distance(b) ** 2 / (2 * sigma**2)) for b in centers), default=0.0)
        v = 1.0 + 11.0 * bump + 0.25 * cfg.noise_std * rng.standard_normal()
        out[c] = max(0.0, v)
    return out
