"""In-memory chaining of the preprocessing stages."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable

from .hexgrid import CellId, GridConfig
from .ingest import Ping, StudyWindow, filter_active
from .odcube import FlowSeries, ODCube, build_od, densify, top_cells
from .stops import Stop, StopParams, extract_stops
from .synth import SynthConfig, generate_pings


def hour_floor(t: float) -> float:
    return math.floor(t / 3600.0) * 3600.0


@dataclass
class PreprocessResult:
    stops: dict[str, list[Stop]]
    od: ODCube
    stats: dict
    epoch: float


def stops_from_pings(pings: Iterable[Ping], window: StudyWindow, params: StopParams,
                     grid: GridConfig) -> tuple[dict[str, list[Stop]], dict]:
    """Filter and extract stops user by user.

    ``pings`` must arrive grouped by user (as the generator emits them); the
    per-user filter then equals :func:`filter_active` on the whole stream.
    """
    stops: dict[str, list[Stop]] = {}
    total_records = 0
    users = 0
    for user, group in itertools.groupby(pings, key=lambda p: p.user_id):
        plist = list(group)
        total_records += len(plist)
        users += 1
        active = filter_active(plist, window)
        if user in active:
            stops[user] = extract_stops(active[user], params, grid)
    stats = {"total_records": total_records, "total_users": users,
             "active_users": len(stops), "skipped_rows": 0}
    return dict(sorted(stops.items())), stats


def preprocess_synthetic(cfg: SynthConfig, params: StopParams = StopParams(),
                         min_records: int = 30) -> PreprocessResult:
    window = StudyWindow(cfg.start, cfg.end, min_records)
    stops, stats = stops_from_pings(generate_pings(cfg), window, params, cfg.grid)
    epoch = hour_floor(window.start)
    return PreprocessResult(stops, build_od(stops, epoch), stats, epoch)


def model_flow(od: ODCube, max_cells: int | None = None, cell_filter: Iterable[CellId] | None = None) -> FlowSeries:
    series = densify(od, cell_filter)
    if max_cells is not None and len(series.cells) > max_cells:
        series = top_cells(series, max_cells)
    return series
