"""Acceptance criteria, one PASS/FAIL line each (run with ``pytest -s`` to see them)."""

import filecmp
import os
import random
import statistics
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import EPOCH
from spnflow.cli import main
from spnflow.forecast import NLinear, TrainConfig, WindowSpec, build_model, loss_and_grads, make_windows
from spnflow.forecast.benchmark import REFERENCE_AVG_IMP, aggregate, improvements, run_benchmark
from spnflow.hexgrid import CellId, GridConfig, grid_disk, neighbor_list, unproject
from spnflow.ingest import Ping
from spnflow.odcube import FlowSeries, aggregate_in_out, build_od
from spnflow.pipeline import model_flow, preprocess_synthetic
from spnflow.spn import AlphaBlend, fuse, neighbor_median, smooth_target
from spnflow.stops import StopParams, extract_stops
from spnflow.synth import SynthConfig
from spnflow.urbanmask import connected_clusters, kde_smooth, threshold_mask
from test_forecast import enumerate_windows, numeric_grad
from test_odcube import random_stop_sets
from test_stops import naive_stops
from test_urbanmask import flood_fill_oracle

ROOT = Path(__file__).resolve().parents[1]
SPN_LOOKBACKS = [48, 72]


def report(name: str, ok: bool, detail: str) -> None:
    print(f"\n{'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, detail


def spn_comparison(flow: FlowSeries):
    cfg = TrainConfig()
    target = smooth_target(flow, AlphaBlend(0.5))
    res = run_benchmark(flow, fuse(flow), target, ["NLinear"], SPN_LOOKBACKS, cfg, horizon=48,
                        threads=os.cpu_count() or 1, plot_samples=())
    agg = aggregate(res.records)
    per_l = {L: (agg[("NLinear", False, L)]["test_mean"], agg[("NLinear", True, L)]["test_mean"])
             for L in SPN_LOOKBACKS}
    return per_l, improvements(res.records, ["NLinear"], SPN_LOOKBACKS)["NLinear"]


def test_spn_directional_claim(default_flow):
    _, flow = default_flow
    t0 = time.perf_counter()
    per_l, (imp_train, imp_test) = spn_comparison(flow)
    ok = all(s < v for v, s in per_l.values())
    cells = ", ".join(f"L={L} vanilla {v:.4f} vs spn {s:.4f}" for L, (v, s) in per_l.items())
    report("SPN directional claim", ok,
           f"{cells}; Avg-Imp test {imp_test:.2f}% (published {REFERENCE_AVG_IMP['NLinear'][1]:.2f}%), "
           f"train {imp_train:.2f}%; {time.perf_counter() - t0:.0f} s")


def test_spn_control_dataset():
    t0 = time.perf_counter()
    res = preprocess_synthetic(SynthConfig(work_clusters=False))
    per_l, (_, imp_test) = spn_comparison(model_flow(res.od, 101))
    cells = ", ".join(f"L={L} {v:.4f}/{s:.4f}" for L, (v, s) in per_l.items())
    report("SPN control (no work clusters)", abs(imp_test) < 3.0,
           f"|Avg-Imp| = {abs(imp_test):.2f}% (limit 3%); {cells}; {time.perf_counter() - t0:.0f} s")


def test_gradient_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    worst = 0.0
    for kind in ("NLinear", "MLP", "PatchMini"):
        for channels in (1, 3):
            model = build_model(kind, 8, 4, channels, rng, hidden=8)
            if "mix" in model.params:
                model.params["mix"] = rng.normal(size=channels)
            x, y = rng.normal(size=(2, 8, 3, channels)), rng.normal(size=(2, 4, 3))
            _, grads = loss_and_grads(model, x, y)
            for name in model.params:
                num = numeric_grad(model, x, y, name)
                err = np.abs(grads[name] - num) / np.maximum(np.abs(grads[name]) + np.abs(num), 1e-6)
                worst = max(worst, float(err.max()))
    elapsed = time.perf_counter() - t0
    report("Gradient oracle", worst < 1e-4 and elapsed < 30,
           f"max relative error {worst:.2e} (limit 1e-4), {elapsed:.1f} s (limit 30 s)")


def test_stop_extraction_oracle():
    grid, p = GridConfig(), StopParams()
    rng = np.random.default_rng(12)
    mismatches = 0
    for _ in range(1000):
        t, pts = 0.0, []
        x = y = 0.0
        for _ in range(int(rng.integers(0, 11))):
            t += float(rng.integers(30, 400))
            if rng.random() < 0.2:
                x, y = x + rng.normal(0, 200), y + rng.normal(0, 200)
            lat, lon = unproject(x + rng.normal(0, 20), y + rng.normal(0, 20), grid)
            pts.append(Ping("u", t, lat, lon, "healthy"))
        got = [(s.arrival, s.departure, (s.medoid_lat, s.medoid_lon)) for s in extract_stops(pts, p, grid)]
        mismatches += got != naive_stops(pts, p)
    srng = random.Random(13)
    conserved = 0
    for _ in range(100):
        od = build_od(random_stop_sets(srng), EPOCH)
        inflow, outflow = aggregate_in_out(od)
        conserved += inflow.values.sum() == outflow.values.sum() == od.total_transitions
    report("Stop extraction oracle", mismatches == 0 and conserved == 100,
           f"{1000 - mismatches}/1000 trajectories match the step-by-step oracle; "
           f"{conserved}/100 stop sets conserve IN == OUT == transitions")


def test_spn_unit_suite():
    center, ring = CellId(0, 0), neighbor_list(CellId(0, 0))
    cells = sorted([center] + ring)

    def star(c, nbs):
        vals = {center: c, **dict(zip(ring, nbs))}
        return FlowSeries(np.array([[vals[k] for k in cells]], dtype=float), cells)

    examples = [((1, [0, 2, 4, 6, 0, 0]), 4.0), ((7, [0] * 6), 7.0), ((1, [0, 0, 5, 0, 0, 0]), 5.0),
                ((1, [2, 4, 0, 0, 0, 0]), 3.0)]
    eq1 = all(neighbor_median(star(*args), center, 0) == want for args, want in examples)
    rng = np.random.default_rng(14)
    big = sorted(grid_disk(center, 5))
    eq2 = True
    for _ in range(100):
        v = fuse(FlowSeries(rng.exponential(2.0, (24, len(big))) * (rng.random((24, len(big))) < 0.5), big)).values
        eq2 &= bool(np.array_equal(v[..., 2], (v[..., 0] + v[..., 1]) / 2))
    const = FlowSeries(np.full((5, len(big)), 3.0), big)
    fixed = np.array_equal(fuse(const).values, np.full((5, len(big), 3), 3.0)) and all(
        np.array_equal(smooth_target(const, AlphaBlend(a)).values, const.values) for a in (0.0, 0.5, 1.0))
    report("SPN unit suite", eq1 and eq2 and fixed,
           f"median/fallback examples {'ok' if eq1 else 'FAILED'}, channel identity "
           f"{'bit-exact' if eq2 else 'FAILED'}, constant fixed points {'ok' if fixed else 'FAILED'}")


def test_spn_throughput():
    cells = sorted(grid_disk(CellId(0, 0), 6))[:101]
    snaps = np.random.default_rng(15).poisson(1.0, (1000, 1, 101)).astype(float)
    fuse(FlowSeries(snaps[0], cells))
    times = []
    for v in snaps:
        t0 = time.perf_counter()
        fuse(FlowSeries(v, cells))
        times.append(time.perf_counter() - t0)
    med = statistics.median(times) * 1e3
    report("SPN throughput", med < 4.0, f"median {med:.3f} ms per 101-cell snapshot (limit 4 ms)")


def test_window_bookkeeping():
    n, T = 577, 48
    ok, notes = True, []
    for L in (48, 72, 96, 120):
        sets = make_windows(np.zeros((n, 1)), np.zeros((n, 1)), WindowSpec(L, T))
        brute, bounds = enumerate_windows(n, L, T)
        got = [s.starts.tolist() for s in sets]
        ok &= got == [brute["train"], brute["val"], brute["test"]] and bounds == (403, 461)
        ok &= sum(len(s) for s in sets) == n - L - T + 1
        notes.append(f"L={L}: {sum(len(s) for s in sets)}")
    report("Window bookkeeping", ok, f"boundaries 403/461, sample counts {', '.join(notes)}")


def test_nlinear_invariants():
    rng = np.random.default_rng(16)
    worst_persist = worst_shift = 0.0
    for _ in range(1000):
        L, T = int(rng.integers(2, 30)), int(rng.integers(1, 12))
        m = NLinear(L, T, 1, rng)
        x = rng.normal(size=(1, L, 4, 1)) * 5
        m.params["weight"] = rng.normal(size=(T, L))
        m.params["bias"] = rng.normal(size=T)
        d = float(rng.normal() * 100)
        worst_shift = max(worst_shift, float(np.abs(m(x + d) - (m(x) + d)).max()))
        m.params["weight"][:] = 0
        m.params["bias"][:] = 0
        worst_persist = max(worst_persist, float(np.abs(m(x) - x[:, -1:, :, 0]).max()))
    report("NLinear invariants", worst_persist <= 1e-12 and worst_shift <= 1e-12,
           f"persistence error {worst_persist:.1e}, level-shift error {worst_shift:.1e} over 1000 trials")


def test_urban_mask():
    a, b, c = CellId(0, 0), CellId(1, 0), CellId(2, 0)
    thresh = threshold_mask({a: 7.9, b: 8.0, c: 8.1}) == {a: False, b: False, c: True}
    rng = np.random.default_rng(17)
    patch = [CellId(q, r) for q in range(10) for r in range(10)]
    flood = all(
        [frozenset(g) for g in connected_clusters(u)] == flood_fill_oracle(u)
        for u in ({x for x in patch if rng.random() < 0.45} for _ in range(200)))
    area = sorted(grid_disk(CellId(0, 0), 12))
    core, speck = grid_disk(CellId(-5, 0), 3), CellId(7, -2)
    m = kde_smooth({x: x in core or x == speck for x in area}, GridConfig())
    speckle = not m.binary[speck] and m.binary[CellId(-5, 0)] and len(m.clusters) == 1
    report("Urban mask", thresh and flood and speckle,
           f"threshold 7.9/8.0/8.1 {'ok' if thresh else 'FAILED'}, flood-fill oracle "
           f"{'ok' if flood else 'FAILED'}, speckle suppression {'ok' if speckle else 'FAILED'}")


@pytest.mark.parametrize("config", ["configs/demo.json"])
def test_benchmark_determinism(tmp_path, config):
    args = ["benchmark", "--config", str(ROOT / config), "--seed", "7"]
    codes = [main(args + ["--out", str(tmp_path / run)]) for run in ("a", "b")]
    same = codes == [0, 0] and filecmp.cmp(tmp_path / "a/summary.csv", tmp_path / "b/summary.csv", shallow=False)
    report("Determinism", same, f"exit codes {codes}, summary CSV byte-identical: {same}")
