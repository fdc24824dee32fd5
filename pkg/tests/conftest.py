import pytest

from spnflow.hexgrid import CellId, GridConfig, cell_centroid
from spnflow.ingest import parse_timestamp
from spnflow.stops import Stop

EPOCH = parse_timestamp("2020-04-01T00:00:00Z")
A, B, C = CellId(0, 0), CellId(1, 0), CellId(0, 1)


def _stop(user, cell, arrive, depart):
    lat, lon = cell_centroid(cell, GridConfig())
    return Stop(user, cell, round(lat, 7), round(lon, 7),
                parse_timestamp(f"2020-04-01T{arrive}Z"), parse_timestamp(f"2020-04-01T{depart}Z"))


# Five users: a round trip, a single hop, a lone stop, a self-loop across an
# hour boundary and a departure exactly on the hour.
FIVE_USERS = {
    "u1": [_stop("u1", A, "00:10:00", "01:30:00"), _stop("u1", B, "02:00:00", "03:10:00"),
           _stop("u1", A, "03:40:00", "05:00:00")],
    "u2": [_stop("u2", B, "00:20:00", "01:05:00"), _stop("u2", C, "01:30:00", "02:30:00")],
    "u3": [_stop("u3", C, "00:00:00", "04:00:00")],
    "u4": [_stop("u4", A, "01:00:00", "01:59:59"), _stop("u4", A, "02:00:00", "02:00:00"),
           _stop("u4", B, "02:30:00", "03:30:00")],
    "u5": [_stop("u5", C, "02:00:00", "03:00:00"), _stop("u5", B, "03:20:00", "04:00:00")],
}

# Worked by hand: CellId order is (0,0) < (0,1) < (1,0).
FIVE_USERS_OD_CSV = (
    "hour_index,src_cell,dst_cell,count\n"
    "1,0:0,0:0,1\n"
    "1,0:0,1:0,1\n"
    "1,1:0,0:1,1\n"
    "2,0:0,1:0,1\n"
    "3,0:1,1:0,1\n"
    "3,1:0,0:0,1\n"
)
# total flow (IN + OUT), hours 1..3, columns A, C, B
FIVE_USERS_FLOW = [[3, 1, 2], [1, 0, 1], [1, 1, 2]]


@pytest.fixture
def five_users():
    return {u: list(s) for u, s in FIVE_USERS.items()}


@pytest.fixture(scope="session")
def default_flow():
    """Total-flow series of the default synthetic world (the benchmark input)."""
    from spnflow.pipeline import model_flow, preprocess_synthetic
    from spnflow.synth import SynthConfig

    res = preprocess_synthetic(SynthConfig())
    return res, model_flow(res.od, 101)
