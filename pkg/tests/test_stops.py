import math

import numpy as np
import pytest

from spnflow.hexgrid import GridConfig, geo_to_cell, unproject
from spnflow.ingest import Ping
from spnflow.stops import Stop, StopParams, extract_stops, haversine, medoid, read_stops, write_stops

CFG = GridConfig()
P = StopParams()
LAT0, LON0 = -12.05, -77.04


def offset(dx, dy):
    """(lat, lon) at dx metres east and dy metres north of the anchor."""
    return unproject(dx, dy, CFG)


def ping(t, dx=0.0, dy=0.0, user="u"):
    lat, lon = offset(dx, dy)
    return Ping(user, float(t), lat, lon, "healthy")


def naive_stops(traj, p):
    """Literal restatement of the clustering rule, medoid recomputed from scratch."""
    out, cluster = [], []

    def flush():
        if cluster and cluster[-1].timestamp - cluster[0].timestamp >= p.min_duration_s:
            m = medoid([(q.lat, q.lon) for q in cluster])
            out.append((cluster[0].timestamp, cluster[-1].timestamp, m))

    for q in traj:
        if cluster:
            m = medoid([(c.lat, c.lon) for c in cluster])
            if haversine((q.lat, q.lon), m) <= p.radius_m and q.timestamp - cluster[-1].timestamp <= p.max_gap_s:
                cluster.append(q)
                continue
            flush()
        cluster = [q]
    flush()
    return out


def test_haversine_known_values():
    assert haversine((0, 0), (0, 1)) == pytest.approx(2 * math.pi * 6_371_008.8 / 360, rel=1e-3)
    assert haversine((LAT0, LON0), (LAT0, LON0)) == 0


def test_medoid_tie_is_earliest():
    assert medoid([(0.0, 0.0), (0.0, 0.001)]) == (0.0, 0.0)


def test_empty_and_single():
    assert extract_stops([], P, CFG) == []
    assert extract_stops([ping(0)], P, CFG) == []


def test_stationary_block_is_one_stop():
    traj = [ping(60 * i, (i % 3) * 5.0) for i in range(11)]
    stops = extract_stops(traj, P, CFG)
    assert len(stops) == 1
    s = stops[0]
    assert (s.arrival, s.departure) == (0.0, 600.0)
    assert s.cell == geo_to_cell(s.medoid_lat, s.medoid_lon, CFG)


def test_short_dwell_is_dropped():
    assert extract_stops([ping(60 * i) for i in range(5)], P, CFG) == []  # 240 s


def test_exact_min_duration_is_kept():
    assert len(extract_stops([ping(0), ping(150), ping(300)], P, CFG)) == 1


def test_gap_splits_cluster():
    traj = [ping(60 * i) for i in range(6)] + [ping(300 + 301 + 60 * i) for i in range(6)]
    stops = extract_stops(traj, P, CFG)
    assert len(stops) == 2
    assert stops[0].departure == 300 and stops[1].arrival == 601


def test_distance_splits_cluster():
    traj = [ping(60 * i) for i in range(6)] + [ping(360 + 60 * i, 500.0) for i in range(6)]
    stops = extract_stops(traj, P, CFG)
    assert len(stops) == 2
    assert stops[0].departure == 300 and stops[1].arrival == 360


def test_trailing_cluster_flushed():
    traj = [ping(0, 900)] + [ping(100 + 60 * i) for i in range(7)]
    stops = extract_stops(traj, P, CFG)
    assert len(stops) == 1 and stops[0].departure == 100 + 360


def test_unsorted_rejected():
    with pytest.raises(ValueError):
        extract_stops([ping(10), ping(5)], P, CFG)


def test_params_validation():
    with pytest.raises(ValueError):
        StopParams(radius_m=0)


def random_trajectory(rng, n):
    t, x, y, out = 0.0, 0.0, 0.0, []
    for _ in range(n):
        t += float(rng.integers(30, 400))
        if rng.random() < 0.15:
            x += rng.normal(0, 300)
            y += rng.normal(0, 300)
        out.append(ping(t, x + rng.normal(0, 15), y + rng.normal(0, 15)))
    return out


def test_matches_naive_oracle_on_random_trajectories():
    rng = np.random.default_rng(7)
    for k in range(1000):
        traj = random_trajectory(rng, int(rng.integers(1, 60)))
        got = [(s.arrival, s.departure, (s.medoid_lat, s.medoid_lon)) for s in extract_stops(traj, P, CFG)]
        assert got == naive_stops(traj, P), f"trajectory {k}"


def test_invariants_on_random_trajectories():
    rng = np.random.default_rng(8)
    for _ in range(200):
        traj = random_trajectory(rng, 80)
        stops = extract_stops(traj, P, CFG)
        for s in stops:
            assert s.departure - s.arrival >= P.min_duration_s
            assert any((q.lat, q.lon) == (s.medoid_lat, s.medoid_lon) for q in traj)
        for a, b in zip(stops, stops[1:]):
            assert a.departure < b.arrival


def test_csv_round_trip(tmp_path):
    stops = {"u": extract_stops([ping(60 * i) for i in range(10)], P, CFG)}
    write_stops(stops, tmp_path / "stops.csv")
    back = read_stops(tmp_path / "stops.csv")
    s, b = stops["u"][0], back["u"][0]
    assert isinstance(b, Stop)
    assert (b.cell, b.arrival, b.departure) == (s.cell, s.arrival, s.departure)
    assert b.medoid_lat == pytest.approx(s.medoid_lat, abs=1e-7)
