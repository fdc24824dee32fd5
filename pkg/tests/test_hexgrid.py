import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spnflow.hexgrid import (
    SQRT3,
    CellId,
    GridConfig,
    InvalidCoordinateError,
    cell_center_xy,
    cell_centroid,
    geo_to_cell,
    grid_disk,
    neighbors,
    project,
    unproject,
    unproject_many,
)

CFG = GridConfig()


def hex_corners(c: CellId, cfg: GridConfig):
    cx, cy = cell_center_xy(c, cfg)
    s = cfg.edge_length_m
    return [(cx + s * math.cos(math.radians(60 * i)), cy + s * math.sin(math.radians(60 * i))) for i in range(6)]


def inside_hexagon(x, y, c, cfg, tol=1e-6):
    """Brute-force point-in-convex-polygon test against the six edges."""
    pts = hex_corners(c, cfg)
    for (x1, y1), (x2, y2) in zip(pts, pts[1:] + pts[:1]):
        if (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1) < -tol:
            return False
    return True


def test_anchor_maps_to_origin():
    assert geo_to_cell(CFG.anchor_lat, CFG.anchor_lon, CFG) == CellId(0, 0)


def test_deterministic():
    assert geo_to_cell(-12.1, -77.0, CFG) == geo_to_cell(-12.1, -77.0, CFG)


def test_east_pitch_is_neighbor():
    lat, lon = unproject(1.5 * CFG.edge_length_m, 0.0, CFG)
    c = geo_to_cell(lat, lon, CFG)
    assert c in neighbors(CellId(0, 0))
    x, y = project(lat, lon, CFG)
    holders = [d for d in grid_disk(CellId(0, 0), 1) if inside_hexagon(x, y, d, CFG)]
    assert c in holders


@pytest.mark.parametrize("lat,lon", [(91, 0), (-90.5, 0), (0, 181), (float("nan"), 0)])
def test_invalid_coordinates(lat, lon):
    with pytest.raises(InvalidCoordinateError):
        geo_to_cell(lat, lon, CFG)


def test_grid_config_validation():
    with pytest.raises(ValueError):
        GridConfig(edge_length_m=0)
    with pytest.raises(ValueError):
        GridConfig(anchor_lat=95)


def test_grid_disk_small():
    c = CellId(3, -2)
    assert grid_disk(c, 0) == {c}
    assert len(grid_disk(c, 1)) == 7 and c in grid_disk(c, 1)


@pytest.mark.parametrize("k", range(5))
def test_grid_disk_matches_enumeration(k):
    c = CellId(-1, 4)
    brute = {CellId(c.q + dq, c.r + dr)
             for dq in range(-k - 2, k + 3) for dr in range(-k - 2, k + 3)
             if (abs(dq) + abs(dr) + abs(dq + dr)) // 2 <= k}
    assert grid_disk(c, k) == brute
    assert len(grid_disk(c, k)) == 1 + 3 * k * (k + 1)


def test_grid_disk_negative():
    with pytest.raises(ValueError):
        grid_disk(CellId(0, 0), -1)


def test_neighbors_of_origin():
    assert neighbors(CellId(0, 0)) == {CellId(1, 0), CellId(-1, 0), CellId(0, 1),
                                       CellId(0, -1), CellId(1, -1), CellId(-1, 1)}


def test_neighbors_cross_check_and_symmetry():
    patch = [CellId(q, r) for q in range(10) for r in range(10)]
    for a in patch:
        nb = neighbors(a)
        assert len(nb) == 6 and a not in nb
        assert nb == grid_disk(a, 1) - {a}
        for b in patch:
            assert (b in nb) == (a in neighbors(b))


def test_cell_id_order_and_text():
    assert sorted([CellId(1, 0), CellId(0, 5), CellId(0, -1)]) == [CellId(0, -1), CellId(0, 5), CellId(1, 0)]
    assert str(CellId(-3, 7)) == "-3:7"
    assert CellId.parse("-3:7") == CellId(-3, 7)


def test_centroid_of_origin_is_anchor():
    lat, lon = cell_centroid(CellId(0, 0), CFG)
    assert lat == pytest.approx(CFG.anchor_lat, abs=1e-12)
    assert lon == pytest.approx(CFG.anchor_lon, abs=1e-12)


def test_centroid_round_trip_random_cells():
    rng = random.Random(0)
    for _ in range(100):
        c = CellId(rng.randint(-40, 40), rng.randint(-40, 40))
        assert geo_to_cell(*cell_centroid(c, CFG), CFG) == c


def test_adjacent_centroids_one_pitch_apart():
    c = CellId(2, -1)
    x0, y0 = project(*cell_centroid(c, CFG), CFG)
    for n in neighbors(c):
        x1, y1 = project(*cell_centroid(n, CFG), CFG)
        assert math.hypot(x1 - x0, y1 - y0) == pytest.approx(CFG.edge_length_m * SQRT3, rel=1e-9)


def test_partition_of_random_points():
    rng = np.random.default_rng(1)
    xs = rng.uniform(-25_000, 25_000, 10_000)
    ys = rng.uniform(-25_000, 25_000, 10_000)
    lats, lons = unproject_many(xs, ys, CFG)
    for lat, lon in zip(lats, lons):
        c = geo_to_cell(lat, lon, CFG)
        x, y = project(lat, lon, CFG)
        cx, cy = cell_center_xy(c, CFG)
        assert math.hypot(x - cx, y - cy) <= CFG.edge_length_m + 1e-6
        assert inside_hexagon(x, y, c, CFG)


@settings(max_examples=200, deadline=None)
@given(st.floats(-20_000, 20_000), st.floats(-20_000, 20_000))
def test_projection_round_trip(x, y):
    lat, lon = unproject(x, y, CFG)
    x2, y2 = project(lat, lon, CFG)
    assert x2 == pytest.approx(x, abs=1e-6) and y2 == pytest.approx(y, abs=1e-6)
