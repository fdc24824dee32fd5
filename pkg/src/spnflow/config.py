"""JSON run configuration.

Every section maps onto one dataclass; unknown keys and bad values raise
:class:`ConfigValidationError` so typos never pass silently.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .forecast.models import MODELS, PATCH_LEN
from .forecast.train import TrainConfig
from .forecast.windows import WindowSpec
from .hexgrid import GridConfig
from .stops import StopParams
from .synth import SynthConfig


class ConfigValidationError(ValueError):
    pass


@dataclass(frozen=True)
class MaskConfig:
    tau: float = 8.0
    bandwidth_m: float | None = None  # None means two cell pitches
    cutoff: float = 0.5


@dataclass(frozen=True)
class BenchmarkConfig:
    models: tuple[str, ...] = ("NLinear", "MLP", "PatchMini")
    lookbacks: tuple[int, ...] = (48, 72, 96, 120)
    max_cells: int | None = 101
    use_mask: bool = False
    min_records: int = 30
    plot_samples: tuple[int, ...] = (0,)


@dataclass(frozen=True)
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    stops: StopParams = field(default_factory=StopParams)
    alpha: float | str = 0.5  # a number in [0, 1] or "search"
    window: WindowSpec = field(default_factory=lambda: WindowSpec(48))
    train: TrainConfig = field(default_factory=TrainConfig)
    mask: MaskConfig = field(default_factory=MaskConfig)
    benchmark: BenchmarkConfig = field(default_factory=BenchmarkConfig)


def _build(cls, data: Any, where: str, **extra):
    if not isinstance(data, dict):
        raise ConfigValidationError(f"{where}: expected an object, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigValidationError(f"{where}: unknown keys {unknown}")
    kwargs = {k: (tuple(v) if isinstance(v, list) else v) for k, v in data.items()}
    kwargs.update(extra)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigValidationError(f"{where}: {exc}") from None


def from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigValidationError("config root must be an object")
    unknown = sorted(set(data) - {f.name for f in dataclasses.fields(RunConfig)})
    if unknown:
        raise ConfigValidationError(f"unknown top-level keys {unknown}")
    grid = _build(GridConfig, data.get("grid", {}), "grid")
    synth = _build(SynthConfig, data.get("synth", {}), "synth", grid=grid)
    stops = _build(StopParams, data.get("stops", {}), "stops")
    window = _build(WindowSpec, {"lookback": 48, **data.get("window", {})}, "window")
    train = _build(TrainConfig, data.get("train", {}), "train")
    mask = _build(MaskConfig, data.get("mask", {}), "mask")
    bench = _build(BenchmarkConfig, data.get("benchmark", {}), "benchmark")

    alpha = data.get("alpha", 0.5)
    if alpha != "search" and not (isinstance(alpha, (int, float)) and 0.0 <= alpha <= 1.0):
        raise ConfigValidationError(f"alpha must be a number in [0, 1] or 'search', got {alpha!r}")
    if mask.tau < 0 or not 0 < mask.cutoff <= 1 or (mask.bandwidth_m is not None and mask.bandwidth_m <= 0):
        raise ConfigValidationError(f"mask: invalid parameters {mask}")
    bad = [m for m in bench.models if m not in MODELS]
    if bad or not bench.models:
        raise ConfigValidationError(f"benchmark.models: unknown {bad}; choose from {sorted(MODELS)}")
    if not bench.lookbacks or any(int(L) != L or L < 1 for L in bench.lookbacks):
        raise ConfigValidationError("benchmark.lookbacks must be positive integers")
    if "PatchMini" in bench.models and any(L % PATCH_LEN for L in bench.lookbacks):
        raise ConfigValidationError(f"PatchMini needs look-backs divisible by {PATCH_LEN}")
    if bench.max_cells is not None and bench.max_cells < 1:
        raise ConfigValidationError("benchmark.max_cells must be positive")
    return RunConfig(grid, synth, stops, alpha, window, train, mask, bench)


def load(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigValidationError(f"{path}: invalid JSON ({exc})") from None
    return from_dict(data)


def to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)
