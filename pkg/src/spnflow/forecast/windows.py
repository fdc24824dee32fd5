"""Chronological windowing and train-split standardisation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from ..hexgrid import CellId
from ..odcube import FlowSeries
from ..spn import FeatureTensor

STD_FLOOR = 1e-8


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class WindowSpec:
    lookback: int
    horizon: int = 48
    split: tuple[float, float, float] = (0.7, 0.1, 0.2)

    def __post_init__(self) -> None:
        if self.lookback < 1 or self.horizon < 1:
            raise ValueError("lookback and horizon must be >= 1")
        if len(self.split) != 3 or any(f <= 0 for f in self.split):
            raise ValueError("split needs three positive fractions")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(self.split)}")

    def boundaries(self, n: int) -> tuple[int, int]:
        """End rows of the train and validation segments for a series of ``n`` hours."""
        tr, va = (Fraction(str(f)) for f in self.split[:2])
        return math.floor(tr * n), math.floor((tr + va) * n)


@dataclass
class SampleSet:
    """Windows over shared source arrays.

    Sample ``k`` has input rows ``[s - L, s)`` of ``inputs`` and target rows
    ``[s, s + T)`` of ``targets`` with ``s = starts[k]``.
    """

    inputs: np.ndarray  # (N, M, C)
    targets: np.ndarray  # (N, M)
    starts: np.ndarray
    lookback: int
    horizon: int
    cells: list[CellId] = field(default_factory=list)
    hour0: int = 0
    train_end: int = 0
    _rows: tuple | None = field(default=None, init=False, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.starts)

    @property
    def channels(self) -> int:
        return self.inputs.shape[2]

    def batch(self, idx) -> tuple[np.ndarray, np.ndarray]:
        """Inputs ``(B, L, M, C)`` and targets ``(B, T, M)`` for sample indices ``idx``."""
        s = self.starts[np.asarray(idx)]
        x = self.inputs[s[:, None] + np.arange(-self.lookback, 0)]
        y = self.targets[s[:, None] + np.arange(self.horizon)]
        return x, y

    def rows(self, idx) -> tuple[np.ndarray, np.ndarray]:
        """Per-cell rows for samples ``idx``: inputs ``(B * M, L, C)`` and targets ``(B * M, T)``.

        Row ``b * M + m`` is cell ``m`` of sample ``idx[b]``. The windows of the
        whole set are materialised once, cell-major, so a batch is one gather.
        """
        if self._rows is None:
            xv = np.lib.stride_tricks.sliding_window_view(self.inputs, self.lookback, axis=0)
            yv = np.lib.stride_tricks.sliding_window_view(self.targets, self.horizon, axis=0)
            xw = np.ascontiguousarray(xv[self.starts - self.lookback].transpose(0, 1, 3, 2))
            self._rows = (xw, np.ascontiguousarray(yv[self.starts]))
        xw, yw = self._rows
        idx = np.asarray(idx)
        b, m = len(idx), xw.shape[1]
        return xw[idx].reshape(b * m, self.lookback, -1), yw[idx].reshape(b * m, self.horizon)


def _as_array(series) -> tuple[np.ndarray, list[CellId], int]:
    if isinstance(series, FeatureTensor):
        return series.values, list(series.cells), series.hour0
    if isinstance(series, FlowSeries):
        return series.values[:, :, None], list(series.cells), series.hour0
    arr = np.asarray(series, dtype=float)
    return (arr[:, :, None] if arr.ndim == 2 else arr), [], 0


def make_windows(series, target: FlowSeries | np.ndarray, spec: WindowSpec) -> tuple[SampleSet, SampleSet, SampleSet]:
    """Split every valid window into train/val/test by the segment holding its target start."""
    x, cells, hour0 = _as_array(series)
    y = target.values if isinstance(target, FlowSeries) else np.asarray(target, dtype=float)
    n = x.shape[0]
    if y.shape != x.shape[:2]:
        raise ValueError(f"target shape {y.shape} does not match inputs {x.shape[:2]}")
    L, T = spec.lookback, spec.horizon
    if n < L + T:
        raise InsufficientDataError(f"{n} hours cannot hold a {L}+{T} window")
    b1, b2 = spec.boundaries(n)
    starts = np.arange(L, n - T + 1)
    base = SampleSet(x, y, starts, L, T, cells, hour0, b1)
    return (replace(base, starts=starts[starts < b1]),
            replace(base, starts=starts[(starts >= b1) & (starts < b2)]),
            replace(base, starts=starts[starts >= b2]))


@dataclass
class Standardizer:
    mean: np.ndarray  # (M, C)
    std: np.ndarray  # (M, C)

    @classmethod
    def fit(cls, inputs: np.ndarray, train_end: int) -> "Standardizer":
        rows = inputs[:train_end]
        if len(rows) == 0:
            raise InsufficientDataError("empty train segment")
        return cls(rows.mean(axis=0), np.maximum(rows.std(axis=0), STD_FLOOR))

    def transform(self, inputs: np.ndarray) -> np.ndarray:
        return (inputs - self.mean) / self.std

    def transform_target(self, targets: np.ndarray) -> np.ndarray:
        return (targets - self.mean[:, 0]) / self.std[:, 0]

    def inverse_target(self, z: np.ndarray) -> np.ndarray:
        return z * self.std[:, 0] + self.mean[:, 0]


def standardize(*sets: SampleSet) -> tuple[Standardizer, list[SampleSet]]:
    """z-score inputs per cell and channel with train-segment statistics.

    Targets use the statistics of input channel 0. All sets must share the
    same source arrays (as returned by :func:`make_windows`).
    """
    first = sets[0]
    st = Standardizer.fit(first.inputs, first.train_end)
    x = st.transform(first.inputs)
    y = st.transform_target(first.targets)
    return st, [replace(s, inputs=x, targets=y) for s in sets]
