"""Spatial neighbourhood fusion.

Each cell's hourly flow is paired with the median of its neighbours'
non-zero flows (falling back to its own value when no neighbour is
active) and with the mean of the two. The same neighbour median feeds the
alpha-blended smoothed target used for training.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .hexgrid import CellId, neighbor_list
from .odcube import FlowSeries, read_flow, write_flow

CHANNEL_ORDER = ("raw", "med", "mean")
ALPHA_GRID = tuple(round(1.0 - i / 10, 1) for i in range(11))


@dataclass(frozen=True)
class AlphaBlend:
    alpha: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass
class FeatureTensor:
    values: np.ndarray  # (hours, cells, 3) in CHANNEL_ORDER
    cells: list[CellId]
    hour0: int = 0

    @property
    def hours(self) -> int:
        return self.values.shape[0]

    def channel(self, k: int) -> FlowSeries:
        return FlowSeries(self.values[:, :, k], list(self.cells), self.hour0)


def neighbor_table(cells: list[CellId]) -> np.ndarray:
    """``(M, 6)`` column indices of each cell's neighbours, -1 where absent."""
    pos = {c: i for i, c in enumerate(cells)}
    return np.array([[pos.get(n, -1) for n in neighbor_list(c)] for c in cells], dtype=int).reshape(-1, 6)


def neighbor_median(series: FlowSeries, c: CellId, t: int) -> float:
    """Median of the strictly positive neighbour flows of ``c`` at row ``t``."""
    if c not in series.cells:
        raise IndexError(f"cell {c} not in series")
    if not 0 <= t < series.hours:
        raise IndexError(f"hour row {t} out of range [0, {series.hours})")
    pos = {cell: i for i, cell in enumerate(series.cells)}
    row = series.values[t]
    vals = [row[pos[n]] for n in neighbor_list(c) if n in pos and row[pos[n]] > 0]
    if not vals:
        return float(row[pos[c]])
    return float(statistics.median(vals))


def neighbor_median_field(values: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Vectorised neighbour median for every (hour, cell) of a ``(N, M)`` array."""
    values = np.asarray(values, dtype=float)
    padded = np.concatenate([values, np.zeros((values.shape[0], 1))], axis=1)
    nb = padded[:, table]  # (N, M, 6); absent neighbours read the zero pad
    valid = nb > 0
    k = valid.sum(axis=2)
    nb = np.where(valid, nb, np.inf)
    nb.sort(axis=2)
    lo = np.maximum((k - 1) // 2, 0)[..., None]
    hi = (k // 2)[..., None]
    a = np.take_along_axis(nb, lo, axis=2)[..., 0]
    b = np.take_along_axis(nb, hi.clip(max=5), axis=2)[..., 0]
    with np.errstate(invalid="ignore"):
        med = (a + b) / 2
    return np.where(k > 0, med, values)


def fuse(series: FlowSeries) -> FeatureTensor:
    raw = series.values
    med = neighbor_median_field(raw, neighbor_table(series.cells))
    out = np.stack([raw, med, (raw + med) / 2], axis=2)
    return FeatureTensor(out, list(series.cells), series.hour0)


def blend(raw: np.ndarray, med: np.ndarray, alpha: float) -> np.ndarray:
    out = alpha * raw + (1.0 - alpha) * med
    # where both inputs agree the blend is that value; keep it exact
    return np.where(raw == med, raw, out)


def smooth_target(series: FlowSeries, a: AlphaBlend) -> FlowSeries:
    med = neighbor_median_field(series.values, neighbor_table(series.cells))
    return FlowSeries(blend(series.values, med, a.alpha), list(series.cells), series.hour0)


def grid_search_alpha(series: FlowSeries, evaluate: Callable[[FlowSeries, float], float]) -> AlphaBlend:
    """Pick the alpha on the 1.0, 0.9, ..., 0.0 grid with the lowest validation MSE.

    ``evaluate(smoothed_series, alpha)`` returns a validation MSE. Ties keep the
    larger alpha.
    """
    best_alpha, best = None, np.inf
    for alpha in ALPHA_GRID:
        mse = evaluate(smooth_target(series, AlphaBlend(alpha)), alpha)
        if mse < best:
            best_alpha, best = alpha, mse
    if best_alpha is None:
        raise ValueError("evaluation returned no finite MSE")
    return AlphaBlend(best_alpha)


def write_features(ft: FeatureTensor, prefix: str | Path, alpha: float | None = None,
                   epoch: float | None = None) -> list[Path]:
    prefix = Path(prefix)
    paths = []
    for k, name in enumerate(CHANNEL_ORDER):
        p = prefix.parent / f"{prefix.name}_{name}.csv"
        write_flow(ft.channel(k), p, epoch)
        paths.append(p)
    meta = prefix.parent / f"{prefix.name}_meta.json"
    meta.write_text(json.dumps({"alpha": alpha, "channel_order": list(CHANNEL_ORDER)}, indent=2) + "\n")
    paths.append(meta)
    return paths


def read_features(prefix: str | Path) -> FeatureTensor:
    prefix = Path(prefix)
    chans = [read_flow(prefix.parent / f"{prefix.name}_{name}.csv") for name in CHANNEL_ORDER]
    return FeatureTensor(np.stack([c.values for c in chans], axis=2), chans[0].cells, chans[0].hour0)
