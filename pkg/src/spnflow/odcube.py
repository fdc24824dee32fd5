"""Hourly origin-destination counts and their per-cell marginals."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .hexgrid import CellId
from .ingest import format_timestamp
from .stops import Stop


class ShapeError(ValueError):
    pass


class EmptySeriesError(ValueError):
    pass


@dataclass
class ODCube:
    entries: dict[tuple[int, CellId, CellId], int] = field(default_factory=dict)
    hours: int = 0
    cells: list[CellId] = field(default_factory=list)

    @property
    def total_transitions(self) -> int:
        return sum(self.entries.values())


@dataclass
class FlowSeries:
    """Dense hour x cell matrix. Row ``i`` is absolute hour index ``hour0 + i``."""

    values: np.ndarray
    cells: list[CellId]
    hour0: int = 0

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.cells):
            raise ShapeError(f"values {self.values.shape} do not match {len(self.cells)} cells")
        if np.isnan(self.values).any() or (self.values < 0).any():
            raise ValueError("flow series must be non-negative and NaN-free")

    @property
    def hours(self) -> int:
        return self.values.shape[0]

    def column(self, c: CellId) -> np.ndarray:
        return self.values[:, self.cells.index(c)]


def hour_index(t: float, epoch: float) -> int:
    return math.floor((t - epoch) / 3600.0)


def build_od(stops: Mapping[str, Sequence[Stop]] | Iterable[Sequence[Stop]], epoch: float) -> ODCube:
    """Count consecutive-stop transitions per user, keyed by departure hour of the first stop."""
    groups = stops.values() if isinstance(stops, Mapping) else stops
    counts: Counter = Counter()
    for user_stops in groups:
        for a, b in zip(user_stops, user_stops[1:]):
            if a.departure < epoch:
                raise ValueError(f"stop departs at {a.departure} before epoch {epoch}")
            counts[(hour_index(a.departure, epoch), a.cell, b.cell)] += 1
    entries = dict(sorted(counts.items()))
    cells = sorted({c for _, s, d in entries for c in (s, d)})
    hours = max((h for h, _, _ in entries), default=-1) + 1
    return ODCube(entries, hours, cells)


def aggregate_in_out(od: ODCube) -> tuple[FlowSeries, FlowSeries]:
    pos = {c: i for i, c in enumerate(od.cells)}
    inflow = np.zeros((od.hours, len(od.cells)))
    outflow = np.zeros((od.hours, len(od.cells)))
    for (h, src, dst), n in od.entries.items():
        inflow[h, pos[dst]] += n
        outflow[h, pos[src]] += n
    return FlowSeries(inflow, list(od.cells)), FlowSeries(outflow, list(od.cells))


def total_flow(inflow: FlowSeries, outflow: FlowSeries) -> FlowSeries:
    if inflow.values.shape != outflow.values.shape or inflow.cells != outflow.cells or inflow.hour0 != outflow.hour0:
        raise ShapeError("IN and OUT series are not aligned")
    return FlowSeries(inflow.values + outflow.values, list(inflow.cells), inflow.hour0)


def densify(od: ODCube, cell_filter: Iterable[CellId] | None = None) -> FlowSeries:
    """Total flow over the observed hour span, optionally restricted to some cells.

    Columns are sorted by cell id. Filter cells never seen in the cube are dropped.
    """
    if not od.entries:
        raise EmptySeriesError("OD cube has no transitions")
    total = total_flow(*aggregate_in_out(od))
    observed = [h for h, _, _ in od.entries]
    lo, hi = min(observed), max(observed)
    cols = list(range(len(od.cells)))
    if cell_filter is not None:
        keep = set(cell_filter)
        cols = [i for i, c in enumerate(od.cells) if c in keep]
    return FlowSeries(total.values[lo:hi + 1, cols], [od.cells[i] for i in cols], lo)


def top_cells(series: FlowSeries, m: int) -> FlowSeries:
    """Keep the ``m`` cells with the largest total flow (ties by cell id)."""
    totals = series.values.sum(axis=0)
    order = sorted(range(len(series.cells)), key=lambda i: (-totals[i], series.cells[i]))[:m]
    order.sort(key=lambda i: series.cells[i])
    return FlowSeries(series.values[:, order], [series.cells[i] for i in order], series.hour0)


def write_od(od: ODCube, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour_index", "src_cell", "dst_cell", "count"])
        for (h, s, d), n in sorted(od.entries.items()):
            w.writerow((h, str(s), str(d), n))


def read_od(path: str | Path) -> ODCube:
    entries = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            entries[(int(row["hour_index"]), CellId.parse(row["src_cell"]), CellId.parse(row["dst_cell"]))] = int(row["count"])
    cells = sorted({c for _, s, d in entries for c in (s, d)})
    hours = max((h for h, _, _ in entries), default=-1) + 1
    return ODCube(dict(sorted(entries.items())), hours, cells)


def _fmt(v: float) -> str:
    return repr(float(v)) if v != int(v) else str(int(v))


def write_flow(series: FlowSeries, path: str | Path, epoch: float | None = None) -> None:
    """Flow CSV (hour_index + one column per cell) plus a JSON sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour_index"] + [str(c) for c in series.cells])
        for i, row in enumerate(series.values):
            w.writerow([series.hour0 + i] + [_fmt(v) for v in row])
    meta = {"epoch_iso": format_timestamp(epoch) if epoch is not None else None,
            "n_hours": series.hours, "n_cells": len(series.cells)}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")


def read_flow(path: str | Path) -> FlowSeries:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "hour_index":
            raise ValueError(f"{path}: not a flow CSV")
        cells = [CellId.parse(h) for h in header[1:]]
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        return FlowSeries(np.zeros((0, len(cells))), cells, 0)
    arr = np.array(rows)
    return FlowSeries(arr[:, 1:], cells, int(arr[0, 0]))


def read_epoch(flow_path: str | Path) -> str | None:
    side = Path(flow_path).with_suffix(".json")
    if side.exists():
        return json.loads(side.read_text()).get("epoch_iso")
    return None
