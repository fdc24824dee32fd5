"""Night-lights urban mask: radiance threshold, kernel smoothing, clusters."""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .hexgrid import CellId, GridConfig, cell_centers_xy, neighbors

DEFAULT_TAU = 8.0


@dataclass
class UrbanMask:
    binary: dict[CellId, bool]
    density: dict[CellId, float]
    clusters: list[set[CellId]] = field(default_factory=list)

    @property
    def urban_cells(self) -> list[CellId]:
        return sorted(c for c, u in self.binary.items() if u)

    def cluster_of(self) -> dict[CellId, int]:
        return {c: k for k, cl in enumerate(self.clusters) for c in cl}


def threshold_mask(raster: Mapping[CellId, float], tau: float = DEFAULT_TAU) -> dict[CellId, bool]:
    """Urban iff radiance is strictly above ``tau``."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    return {c: bool(v > tau) for c, v in raster.items()}


def connected_clusters(cells: Iterable[CellId]) -> list[set[CellId]]:
    """Connected components under the 6-neighbour relation, ordered by smallest member."""
    remaining = set(cells)
    clusters = []
    for seed in sorted(remaining):
        if seed not in remaining:
            continue
        remaining.discard(seed)
        comp = {seed}
        queue = deque([seed])
        while queue:
            for n in neighbors(queue.popleft()):
                if n in remaining:
                    remaining.discard(n)
                    comp.add(n)
                    queue.append(n)
        clusters.append(comp)
    return clusters


def kde_smooth(mask: Mapping[CellId, bool], cfg: GridConfig, bandwidth: float | None = None,
               cutoff: float = 0.5) -> UrbanMask:
    """Gaussian-kernel weighted share of urban cells around each cell.

    ``bandwidth`` is in metres and defaults to two cell pitches. Cells whose
    smoothed share reaches ``cutoff`` are urban.
    """
    if bandwidth is None:
        bandwidth = 2.0 * cfg.pitch_m
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    if not 0 < cutoff <= 1:
        raise ValueError("cutoff must lie in (0, 1]")
    cells = sorted(mask)
    if not cells:
        return UrbanMask({}, {}, [])
    xy = cell_centers_xy(cells, cfg)
    d2 = ((xy[:, None, :] - xy[None, :, :]) ** 2).sum(axis=2)
    k = np.exp(-d2 / (2.0 * bandwidth**2))
    u = np.array([1.0 if mask[c] else 0.0 for c in cells])
    dens = np.clip(k @ u / k.sum(axis=1), 0.0, 1.0)
    binary = {c: bool(d >= cutoff) for c, d in zip(cells, dens)}
    density = {c: float(d) for c, d in zip(cells, dens)}
    return UrbanMask(binary, density, connected_clusters(c for c in cells if binary[c]))


def read_raster(path: str | Path) -> dict[CellId, float]:
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            v = float(row["radiance"])
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"invalid radiance {v} for cell {row['cell']}")
            out[CellId.parse(row["cell"])] = v
    return out


def write_raster(raster: Mapping[CellId, float], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell", "radiance"])
        for c in sorted(raster):
            w.writerow((str(c), f"{raster[c]:.6f}"))


def write_mask(m: UrbanMask, path: str | Path) -> None:
    cid = m.cluster_of()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell", "binary", "density", "cluster_id"])
        for c in sorted(m.binary):
            w.writerow((str(c), int(m.binary[c]), f"{m.density[c]:.6f}", cid.get(c, -1)))


def read_mask_cells(path: str | Path) -> list[CellId]:
    with open(path, newline="") as fh:
        return sorted(CellId.parse(r["cell"]) for r in csv.DictReader(fh) if r["binary"] == "1")
