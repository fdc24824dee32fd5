"""Backbone x {vanilla, +spn} x look-back benchmark matrix."""

from __future__ import annotations

import csv
import dataclasses
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..odcube import FlowSeries
from ..spn import FeatureTensor
from .train import TrainConfig, evaluate, predict, train
from .windows import WindowSpec, make_windows, standardize

# Avg-Imp (train %, test %) published for the original backbones on the
# national DCT data; PatchMini is compared against the PatchTST figures.
REFERENCE_AVG_IMP = {"NLinear": (7.89, 8.55), "PatchMini": (9.75, 8.00)}

RESULT_COLUMNS = ["model", "spn", "L", "T", "seed", "train_mse", "val_mse", "test_mse", "epochs", "wall_clock_s"]


def label(model: str, spn: bool) -> str:
    return f"{model}+spn" if spn else model


@dataclass(frozen=True)
class RunRecord:
    model: str
    spn: bool
    L: int
    T: int
    seed: int
    train_mse: float
    val_mse: float
    test_mse: float
    epochs: int
    wall_clock_s: float


@dataclass
class PredictionDump:
    model: str
    L: int
    sample_start: int  # absolute hour index of the first predicted step
    hours: np.ndarray
    cells: list
    y_true: np.ndarray  # (T, M)
    y_pred: np.ndarray


@dataclass
class BenchmarkResult:
    records: list[RunRecord]
    models: list[str]
    lookbacks: list[int]
    horizon: int
    predictions: list[PredictionDump] = field(default_factory=list)


def avg_improvement(vanilla: list[float], spn: list[float]) -> float:
    """Mean over look-backs of 100 * (vanilla - spn) / vanilla."""
    v, s = np.asarray(vanilla, dtype=float), np.asarray(spn, dtype=float)
    return float(np.mean(100.0 * (v - s) / v))


def _run(kind, spn, spec, sets, cfg, seed, plot_samples):
    tr, va, te = sets
    t0 = time.perf_counter()
    model, hist = train(kind, tr, va, cfg, seed)
    rec = RunRecord(kind, spn, spec.lookback, spec.horizon, seed,
                    evaluate(model, tr, cfg.batch_size, cfg.chunk_rows),
                    evaluate(model, va, cfg.batch_size, cfg.chunk_rows),
                    evaluate(model, te, cfg.batch_size, cfg.chunk_rows),
                    hist.epochs, time.perf_counter() - t0)
    dumps = []
    if seed == cfg.seeds[0] and plot_samples:
        idx = [i for i in plot_samples if i < len(te)]
        sub = dataclasses.replace(te, starts=te.starts[idx])
        preds = predict(model, sub, cfg.batch_size, cfg.chunk_rows)
        for j, i in enumerate(idx):
            _, y = sub.batch([j])
            s = int(te.starts[i])
            dumps.append(PredictionDump(label(kind, spn), spec.lookback, te.hour0 + s,
                                        te.hour0 + s + np.arange(spec.horizon), te.cells, y[0], preds[j]))
    return rec, dumps


def run_benchmark(flow: FlowSeries, features: FeatureTensor, target: FlowSeries, models: list[str],
                  lookbacks: list[int], cfg: TrainConfig, horizon: int = 48,
                  split: tuple[float, float, float] = (0.7, 0.1, 0.2), threads: int = 1,
                  plot_samples: tuple[int, ...] = (0,)) -> BenchmarkResult:
    """Train every (model, spn, L, seed) combination.

    Vanilla runs see the raw flow channel; ``+spn`` runs see all three fused
    channels. Both share seeds, target and every other setting.
    """
    jobs = []
    for L in lookbacks:
        spec = WindowSpec(L, horizon, split)
        data = {}
        for spn in (False, True):
            _, sets = standardize(*make_windows(features if spn else flow, target, spec))
            data[spn] = sets
        for kind in models:
            for spn in (False, True):
                for seed in cfg.seeds:
                    jobs.append((kind, spn, spec, data[spn], cfg, seed, plot_samples))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outs = list(pool.map(lambda j: _run(*j), jobs))
    else:
        outs = [_run(*j) for j in jobs]
    records = [r for r, _ in outs]
    dumps = [d for _, ds in outs for d in ds]
    return BenchmarkResult(records, list(models), list(lookbacks), horizon, dumps)


def aggregate(records: list[RunRecord]) -> dict[tuple[str, bool, int], dict[str, float]]:
    groups: dict[tuple[str, bool, int], list[RunRecord]] = {}
    for r in records:
        groups.setdefault((r.model, r.spn, r.L), []).append(r)
    out = {}
    for key, rs in groups.items():
        tr = np.array([r.train_mse for r in rs])
        te = np.array([r.test_mse for r in rs])
        out[key] = {"train_mean": tr.mean(), "train_std": tr.std(), "test_mean": te.mean(), "test_std": te.std()}
    return out


def improvements(records: list[RunRecord], models: list[str], lookbacks: list[int]) -> dict[str, tuple[float, float]]:
    agg = aggregate(records)
    out = {}
    for m in models:
        out[m] = tuple(
            avg_improvement([agg[(m, False, L)][f"{split}_mean"] for L in lookbacks],
                            [agg[(m, True, L)][f"{split}_mean"] for L in lookbacks])
            for split in ("train", "test"))
    return out


def summary_rows(records: list[RunRecord], models: list[str], lookbacks: list[int]) -> list[list[str]]:
    """Table-1 layout: one row per look-back plus an Avg-Imp row."""
    agg = aggregate(records)
    header = ["L"]
    for m in models:
        for spn in (False, True):
            lab = label(m, spn)
            header += [f"{lab}_train_mean", f"{lab}_train_std", f"{lab}_test_mean", f"{lab}_test_std"]
    rows = [header]
    for L in lookbacks:
        row = [str(L)]
        for m in models:
            for spn in (False, True):
                a = agg[(m, spn, L)]
                row += [f"{a['train_mean']:.6f}", f"{a['train_std']:.6f}", f"{a['test_mean']:.6f}", f"{a['test_std']:.6f}"]
        rows.append(row)
    imp = improvements(records, models, lookbacks)
    row = ["Avg Imp. (%)"]
    for m in models:
        row += ["", "", "", ""]
        row += [f"{imp[m][0]:.4f}", "", f"{imp[m][1]:.4f}", ""]
    rows.append(row)
    return rows


def write_results(records: list[RunRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in records:
            w.writerow([r.model, int(r.spn), r.L, r.T, r.seed, f"{r.train_mse:.10f}", f"{r.val_mse:.10f}",
                        f"{r.test_mse:.10f}", r.epochs, f"{r.wall_clock_s:.3f}"])


def read_results(path: str | Path) -> list[RunRecord]:
    with open(path, newline="") as fh:
        return [RunRecord(row["model"], row["spn"] == "1", int(row["L"]), int(row["T"]), int(row["seed"]),
                          float(row["train_mse"]), float(row["val_mse"]), float(row["test_mse"]),
                          int(row["epochs"]), float(row["wall_clock_s"]))
                for row in csv.DictReader(fh)]


def write_summary(records: list[RunRecord], models: list[str], lookbacks: list[int], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(summary_rows(records, models, lookbacks))


def write_predictions(dumps: list[PredictionDump], directory: str | Path) -> list[Path]:
    """One CSV per look-back: hour_index, cell, y_true, y_pred, model."""
    directory = Path(directory)
    paths = []
    for L in sorted({d.L for d in dumps}):
        p = directory / f"predictions_L{L}.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["hour_index", "cell", "y_true", "y_pred", "model"])
            for d in (d for d in dumps if d.L == L):
                for h, hour in enumerate(d.hours.tolist()):
                    for c, cell in enumerate(d.cells):
                        w.writerow([hour, str(cell), f"{d.y_true[h, c]:.6f}", f"{d.y_pred[h, c]:.6f}", d.model])
        paths.append(p)
    return paths


def render_table(records: list[RunRecord], models: list[str], lookbacks: list[int]) -> str:
    """Plain-text table with test MSE means and the Avg-Imp row."""
    agg = aggregate(records)
    labels = [label(m, s) for m in models for s in (False, True)]
    buf = io.StringIO()
    buf.write(f"{'L':>6} " + " ".join(f"{lab:>24}" for lab in labels) + "\n")
    for L in lookbacks:
        cells = []
        for m in models:
            for s in (False, True):
                a = agg[(m, s, L)]
                cells.append(f"{a['train_mean']:.4f}/{a['test_mean']:.4f}")
        buf.write(f"{L:>6} " + " ".join(f"{c:>24}" for c in cells) + "\n")
    imp = improvements(records, models, lookbacks)
    cells = []
    for m in models:
        cells += ["-", f"{imp[m][0]:.2f}%/{imp[m][1]:.2f}%"]
    buf.write(f"{'Imp':>6} " + " ".join(f"{c:>24}" for c in cells) + "\n")
    for m in models:
        if m in REFERENCE_AVG_IMP:
            ref_tr, ref_te = REFERENCE_AVG_IMP[m]
            buf.write(f"{m}+spn Avg-Imp test {imp[m][1]:.2f}% (published reference {ref_te:.2f}%), "
                      f"train {imp[m][0]:.2f}% (reference {ref_tr:.2f}%)\n")
    return buf.getvalue()
