"""Command-line entry point: one subcommand per pipeline stage plus the benchmark."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import __version__
from .config import ConfigValidationError, RunConfig, load
from .forecast import InsufficientDataError, WindowSpec, make_windows, standardize, train
from .forecast.benchmark import (
    read_results,
    render_table,
    run_benchmark,
    write_predictions,
    write_results,
    write_summary,
)
from .forecast.models import ConfigError
from .forecast.train import evaluate
from .ingest import (
    CorruptInputError,
    StudyWindow,
    filter_active,
    ingest_stats,
    parse_timestamp,
    read_pings,
    read_trajectories,
    write_pings,
    write_stats,
    write_trajectories,
)
from .odcube import EmptySeriesError, FlowSeries, build_od, read_flow, write_flow, write_od
from .pipeline import hour_floor, model_flow, stops_from_pings
from .spn import AlphaBlend, fuse, grid_search_alpha, read_features, smooth_target, write_features
from .stops import extract_all, read_stops, write_stops
from .synth import generate_pings, generate_raster
from .urbanmask import kde_smooth, read_mask_cells, read_raster, threshold_mask, write_mask, write_raster

EXIT_RUNTIME, EXIT_MISSING, EXIT_CONFIG = 1, 2, 3

log = logging.getLogger("spnflow")


class MissingInputError(FileNotFoundError):
    pass


# ------------------------------------------------------------------ helpers

def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Manifest:
    """Stage timings plus input paths and output digests, written as JSON."""

    def __init__(self, command: str, config: str | None, seed: int | None):
        self.data = {"tool": "spnflow", "version": __version__, "command": command,
                     "config": config, "seed": seed, "stages": []}

    def stage(self, name: str, inputs: list[Path], outputs: list[Path], seconds: float) -> None:
        self.data["stages"].append({
            "name": name,
            "inputs": [str(p) for p in inputs],
            "outputs": {str(p): sha256(p) for p in outputs},
            "seconds": round(seconds, 3),
        })

    def write(self, out: Path) -> Path:
        path = out / "manifest.json"
        path.write_text(json.dumps(self.data, indent=2) + "\n")
        return path


def need(path: str | Path) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingInputError(f"input not found: {p}")
    return p


def need_features(prefix: Path) -> Path:
    for suffix in ("raw", "med", "mean"):
        need(prefix.parent / f"{prefix.name}_{suffix}.csv")
    return prefix


def run_config(args) -> RunConfig:
    cfg = load(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(
            cfg,
            synth=dataclasses.replace(cfg.synth, seed=args.seed),
            train=dataclasses.replace(cfg.train, seeds=tuple(args.seed + s for s in cfg.train.seeds)),
        )
    return cfg


def epoch_of(args, cfg: RunConfig) -> float:
    return hour_floor(parse_timestamp(args.epoch) if args.epoch else cfg.synth.start)


def choose_alpha(flow: FlowSeries, cfg: RunConfig) -> float:
    """Fixed alpha, or a validation grid search with a reference NLinear."""
    if cfg.alpha != "search":
        return float(cfg.alpha)
    spec = WindowSpec(cfg.benchmark.lookbacks[0], cfg.window.horizon, cfg.window.split)
    seed = cfg.train.seeds[0]

    def val_mse(smoothed: FlowSeries, _alpha: float) -> float:
        _, (tr, va, _) = standardize(*make_windows(flow, smoothed, spec))
        model, _ = train("NLinear", tr, va, cfg.train, seed)
        return evaluate(model, va, cfg.train.batch_size, cfg.train.chunk_rows)

    return grid_search_alpha(flow, val_mse).alpha


# ------------------------------------------------------------------ stages

def cmd_synth(args, cfg: RunConfig, out: Path, man: Manifest) -> None:
    t0 = time.perf_counter()
    pings, raster = out / "pings.csv", out / "raster.csv"
    with open(pings, "w", newline="") as fh:
        write_pings(generate_pings(cfg.synth), fh)
    write_raster(generate_raster(cfg.synth), raster)
    man.stage("synth", [], [pings, raster], time.perf_counter() - t0)


def cmd_ingest(args, cfg: RunConfig, out: Path, man: Manifest) -> None:
    src = need(args.input)
    t0 = time.perf_counter()
    start = parse_timestamp(args.start) if args.start else cfg.synth.start
    end = parse_timestamp(args.end) if args.end else cfg.synth.end
    min_records = args.min_records if args.min_records is not None else cfg.benchmark.min_records
    pings, skipped = read_pings(src)
    active = filter_active(pings, StudyWindow(start, end, min_records))
    traj, stats = out / "trajectories.csv", out / "ingest_stats.json"
    write_trajectories(active, traj)
    write_stats(ingest_stats(len(pings), len({p.user_id for p in pings}), active, skipped), stats)
    if skipped:
        log.warning("skipped %d malformed rows", skipped)
    man.stage("ingest", [src], [traj, stats], time.perf_counter() - t0)


def cmd_stops(args, cfg: RunConfig, out: Path, man: Manifest) -> None:
    src = need(args.input)
    t0 = time.perf_counter()
    stops = extract_all(read_trajectories(src), cfg.stops, cfg.grid)
    path = out / "stops.csv"
    write_stops(stops, path)
    man.stage("stops", [src], [path], time.perf_counter() - t0)


def cmd_odcube(args, cfg: RunConfig, out: Path, man: Manifest) -> None:
    src = need(args.input)
    cell_filter = read_mask_cells(need(args.mask)) if args.mask else None
    t0 = time.perf_counter()
    epoch = epoch_of(args, cfg)
    od = build_od(read_stops(src), epoch)
    od_path, flow_path = out / "od.csv", out / "flow.csv"
    write_od(od, od_path)
    outputs = [od_path]
    if od.entries:
        max_cells = args.max_cells if args.max_cells is not None else cfg.benchmark.max_cells
        write_flow(model_flow(od, max_cells, cell_filter), flow_path, epoch)
        outputs += [flow_path, flow_path.with_suffix(".json")]
    else:
        log.warning("no transitions; flow.csv not written")
    man.stage("odcube", [src], outputs, time.perf_counter() - t0)


def cmd_spn(args, cfg: RunConfig, out: Path, man: Manifest) -> None:
    src = need(args.input)
    if args.alpha is not None:
        cfg = dataclasses.replace(cfg, alpha=args.alpha if args.alpha == "search" else float(args.alpha))
    t0 = time.perf_counter()
    flow = read_flow(src)
    alpha = choose_alpha(flow, cfg)
    target = out / "target.csv"
    outputs = write_features(fuse(flow), out / "features", alpha=alpha)
    write_flow(smooth_target(flow, AlphaBlend(alpha)), target)
    man.stage("spn", [src], outputs + [target, target.with_suffix(".json")], time.perf_counter() - t0)


def cmd_mask(args, cfg: RunConfig, out: Path, man: Manifest) -> None:
    src = need(args.input)
    tau = args.tau if args.tau is not None else cfg.mask.tau
    bandwidth = args.bandwidth_m if args.bandwidth_m is not None else cfg.mask.bandwidth_m
    cutoff = args.cutoff if args.cutoff is not None else cfg.mask.cutoff
    t0 = time.perf_counter()
    m = kde_smooth(threshold_mask(read_raster(src), tau), cfg.grid, bandwidth, cutoff)
    path = out / "mask.csv"
    write_mask(m, path)
    log.info("%d urban cells in %d clusters", len(m.urban_cells), len(m.clusters))
    man.stage("mask", [src], [path], time.perf_counter() - t0)


def cmd_train(args, cfg: RunConfig, out: Path, man: Manifest) -> None:
    flow_path, target_path = need(args.flow), need(args.target)
    feat = need_features(Path(args.features)) if args.spn else None
    t0 = time.perf_counter()
    flow, target = read_flow(flow_path), read_flow(target_path)
    source = read_features(feat) if feat else flow
    L = args.lookback or cfg.window.lookback
    spec = WindowSpec(L, cfg.window.horizon, cfg.window.split)
    _, (tr, va, te) = standardize(*make_windows(source, target, spec))
    rows = []
    for seed in cfg.train.seeds:
        s0 = time.perf_counter()
        model, hist = train(args.model, tr, va, cfg.train, seed)
        rows.append([args.model, int(args.spn), L, spec.horizon, seed,
                     *(f"{evaluate(model, s, cfg.train.batch_size, cfg.train.chunk_rows):.10f}" for s in (tr, va, te)),
                     hist.epochs, f"{time.perf_counter() - s0:.3f}"])
    path = out / "train_results.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "spn", "L", "T", "seed", "train_mse", "val_mse", "test_mse", "epochs", "wall_clock_s"])
        w.writerows(rows)
    inputs = [flow_path, target_path] + ([feat] if feat else [])
    man.stage("train", inputs, [path], time.perf_counter() - t0)


def cmd_benchmark(args, cfg: RunConfig, out: Path, man: Manifest) -> None:
    b = cfg.benchmark
    t0 = time.perf_counter()
    window = StudyWindow(cfg.synth.start, cfg.synth.end, b.min_records)
    stops, stats = stops_from_pings(generate_pings(cfg.synth), window, cfg.stops, cfg.grid)
    stops_path, stats_path = out / "stops.csv", out / "ingest_stats.json"
    write_stops(stops, stops_path)
    write_stats(stats, stats_path)
    man.stage("synth+ingest+stops", [], [stops_path, stats_path], time.perf_counter() - t0)

    t0 = time.perf_counter()
    cell_filter = None
    outputs = []
    if b.use_mask:
        raster_path, mask_path = out / "raster.csv", out / "mask.csv"
        raster = generate_raster(cfg.synth)
        write_raster(raster, raster_path)
        m = kde_smooth(threshold_mask(raster, cfg.mask.tau), cfg.grid, cfg.mask.bandwidth_m, cfg.mask.cutoff)
        write_mask(m, mask_path)
        cell_filter = m.urban_cells
        outputs += [raster_path, mask_path]
    epoch = hour_floor(cfg.synth.start)
    od = build_od(stops, epoch)
    flow = model_flow(od, b.max_cells, cell_filter)
    od_path, flow_path = out / "od.csv", out / "flow.csv"
    write_od(od, od_path)
    write_flow(flow, flow_path, epoch)
    man.stage("odcube", [stops_path], outputs + [od_path, flow_path], time.perf_counter() - t0)

    t0 = time.perf_counter()
    alpha = choose_alpha(flow, cfg)
    features = fuse(flow)
    target = smooth_target(flow, AlphaBlend(alpha))
    feat_paths = write_features(features, out / "features", alpha=alpha, epoch=epoch)
    target_path = out / "target.csv"
    write_flow(target, target_path, epoch)
    man.stage("spn", [flow_path], feat_paths + [target_path], time.perf_counter() - t0)

    t0 = time.perf_counter()
    result = run_benchmark(flow, features, target, list(b.models), list(b.lookbacks), cfg.train,
                           cfg.window.horizon, cfg.window.split, args.threads, b.plot_samples)
    results_path, summary_path = out / "results.csv", out / "summary.csv"
    write_results(result.records, results_path)
    write_summary(result.records, list(b.models), list(b.lookbacks), summary_path)
    pred_paths = write_predictions(result.predictions, out)
    man.stage("benchmark", [flow_path, target_path], [results_path, summary_path] + pred_paths,
              time.perf_counter() - t0)
    print(render_table(result.records, list(b.models), list(b.lookbacks)), end="")


def cmd_report(args, cfg: RunConfig, out: Path, man: Manifest) -> None:
    src = Path(args.input)
    results_path = need(src / "results.csv")
    t0 = time.perf_counter()
    records = read_results(results_path)
    models = list(dict.fromkeys(r.model for r in records))
    lookbacks = sorted({r.L for r in records})
    summary = out / "summary.csv"
    write_summary(records, models, lookbacks, summary)
    outputs = [summary]
    for pred in sorted(src.glob("predictions_L*.csv")):
        outputs.append(overlay_table(pred, out / pred.name.replace("predictions", "overlay")))
    man.stage("report", [results_path], outputs, time.perf_counter() - t0)
    print(render_table(records, models, lookbacks), end="")


def overlay_table(pred_path: Path, dest: Path) -> Path:
    """Pivot a prediction dump to one row per (hour, cell) with a column per model."""
    rows: dict[tuple[int, str], dict[str, str]] = {}
    models: list[str] = []
    with open(pred_path, newline="") as fh:
        for r in csv.DictReader(fh):
            key = (int(r["hour_index"]), r["cell"])
            entry = rows.setdefault(key, {"y_true": r["y_true"]})
            entry[r["model"]] = r["y_pred"]
            if r["model"] not in models:
                models.append(r["model"])
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour_index", "cell", "y_true"] + models)
        for (hour, cell), entry in sorted(rows.items()):
            w.writerow([hour, cell, entry["y_true"]] + [entry.get(m, "") for m in models])
    return dest


COMMANDS = {
    "synth": cmd_synth, "ingest": cmd_ingest, "stops": cmd_stops, "odcube": cmd_odcube, "spn": cmd_spn,
    "mask": cmd_mask, "train": cmd_train, "benchmark": cmd_benchmark, "report": cmd_report,
}


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="synthetic-data seed; also offsets the training seeds")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="parallel training runs")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="spnflow", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", parents=[common], help="generate synthetic pings and a radiance raster")

    p = sub.add_parser("ingest", parents=[common], help="parse pings and keep active users")
    p.add_argument("--input", required=True, help="pings CSV")
    p.add_argument("--start", help="study window start (ISO-8601 UTC)")
    p.add_argument("--end", help="study window end, exclusive")
    p.add_argument("--min-records", type=int)

    p = sub.add_parser("stops", parents=[common], help="extract stop points")
    p.add_argument("--input", required=True, help="trajectories CSV from ingest")

    p = sub.add_parser("odcube", parents=[common], help="build the OD cube and total-flow series")
    p.add_argument("--input", required=True, help="stops CSV")
    p.add_argument("--epoch", help="hour-index origin (ISO-8601 UTC); defaults to the synth start")
    p.add_argument("--mask", help="mask CSV restricting the flow columns")
    p.add_argument("--max-cells", type=int)

    p = sub.add_parser("spn", parents=[common], help="neighbour fusion features and smoothed target")
    p.add_argument("--input", required=True, help="flow CSV")
    p.add_argument("--alpha", help="blend weight in [0, 1] or 'search'")

    p = sub.add_parser("mask", parents=[common], help="urban mask from a radiance raster")
    p.add_argument("--input", required=True, help="radiance CSV")
    p.add_argument("--tau", type=float)
    p.add_argument("--bandwidth-m", type=float)
    p.add_argument("--cutoff", type=float)

    p = sub.add_parser("train", parents=[common], help="train one backbone over the configured seeds")
    p.add_argument("--flow", required=True, help="flow CSV")
    p.add_argument("--target", required=True, help="smoothed target CSV")
    p.add_argument("--features", default="features", help="feature prefix (with --spn)")
    p.add_argument("--model", default="NLinear")
    p.add_argument("--lookback", type=int)
    p.add_argument("--spn", action="store_true", help="use the three fused channels")

    sub.add_parser("benchmark", parents=[common], help="run every stage and the benchmark matrix")

    p = sub.add_parser("report", parents=[common], help="summary table and prediction overlays")
    p.add_argument("--input", required=True, help="benchmark output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigValidationError("--threads must be positive")
        cfg = run_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        man = Manifest(args.command, args.config, args.seed)
        COMMANDS[args.command](args, cfg, out, man)
        man.write(out)
    except (MissingInputError, FileNotFoundError) as exc:
        print(f"spnflow: error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ConfigValidationError, ConfigError) as exc:
        print(f"spnflow: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CorruptInputError, EmptySeriesError, InsufficientDataError, ValueError, RuntimeError) as exc:
        print(f"spnflow: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - last-resort diagnostic
        log.debug("unhandled failure", exc_info=True)
        print(f"spnflow: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
