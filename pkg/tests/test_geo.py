import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from resq.errors import DuplicateId, EmptyPopulation, NonMonotonicTimestamps, OutOfRegion, ParseError
from resq.geo import (
    HOUSTON,
    GeoBounds,
    GeoPoint,
    ScenarioSnapshot,
    apply_snapshot,
    geo_to_cell,
    parse_scenario,
    scenario_to_dict,
    snapshot_to_world,
)
from resq.grid import RESCUED, WAITING, Cell, GridConfig, Victim, WorldState

G = GridConfig()
NW = GeoPoint(30.154665, -95.874178)
SE = GeoPoint(29.422486, -95.069705)
DOWNTOWN = GeoPoint(29.7604, -95.3698)


def _exact_cell(bounds, rows, cols, p):
    """Rational re-derivation of the binning formula from the decimal literals."""
    f = lambda x: Fraction(repr(x))
    row = math.floor((f(bounds.lat_max) - f(p.lat)) / (f(bounds.lat_max) - f(bounds.lat_min)) * rows)
    col = math.floor((f(p.lon) - f(bounds.lon_min)) / (f(bounds.lon_max) - f(bounds.lon_min)) * cols)
    return min(row, rows - 1), min(col, cols - 1)


def test_corners():
    assert geo_to_cell(HOUSTON, 25, 25, NW) == Cell(0, 0)
    assert geo_to_cell(HOUSTON, 25, 25, SE) == Cell(24, 24)


def test_downtown_houston():
    assert _exact_cell(HOUSTON, 25, 25, DOWNTOWN) == (13, 15)
    assert geo_to_cell(HOUSTON, 25, 25, DOWNTOWN) == Cell(13, 15)


def test_out_of_region():
    outside = GeoPoint(31.0, -95.5)
    with pytest.raises(OutOfRegion):
        geo_to_cell(HOUSTON, 25, 25, outside)
    assert geo_to_cell(HOUSTON, 25, 25, outside, clamp=True) == Cell(0, geo_to_cell(HOUSTON, 25, 25, (30.0, -95.5))[1])
    assert geo_to_cell(HOUSTON, 25, 25, (0.0, 0.0), clamp=True) == Cell(24, 24)
    with pytest.raises(OutOfRegion):
        geo_to_cell(HOUSTON, 25, 25, (math.nan, -95.5), clamp=True)


def test_bounds_validation():
    with pytest.raises(ValueError):
        GeoBounds(1.0, 1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        GeoBounds(0.0, 1.0, 2.0, 1.0)


lat = st.floats(HOUSTON.lat_min, HOUSTON.lat_max)
lon = st.floats(HOUSTON.lon_min, HOUSTON.lon_max)


@given(lat, lat, lon, lon)
def test_monotone(lat1, lat2, lon1, lon2):
    lo_lat, hi_lat = sorted((lat1, lat2))
    lo_lon, hi_lon = sorted((lon1, lon2))
    a = geo_to_cell(HOUSTON, 25, 25, (lo_lat, lo_lon))
    b = geo_to_cell(HOUSTON, 25, 25, (hi_lat, hi_lon))
    assert b.row <= a.row
    assert b.col >= a.col


@given(st.integers(0, 24), st.integers(0, 24), st.integers(1, 40), st.integers(1, 40))
def test_cell_center_round_trip(r, c, rows, cols):
    r, c = r % rows, c % cols
    assert geo_to_cell(HOUSTON, rows, cols, HOUSTON.cell_center(r, c, rows, cols)) == (r, c)


def test_partition_random_points():
    rng = np.random.default_rng(3)
    lats = rng.uniform(HOUSTON.lat_min, HOUSTON.lat_max, 10_000)
    lons = rng.uniform(HOUSTON.lon_min, HOUSTON.lon_max, 10_000)
    for la, lo in zip(lats, lons):
        cell = geo_to_cell(HOUSTON, 25, 25, (la, lo))
        assert 0 <= cell.row < 25 and 0 <= cell.col < 25
        assert cell == _exact_cell(HOUSTON, 25, 25, GeoPoint(float(la), float(lo)))


DOC = {
    "bounds": {"lat_min": 29.422486, "lat_max": 30.154665, "lon_min": -95.874178, "lon_max": -95.069705},
    "grid": {"rows": 25, "cols": 25},
    "snapshots": [
        {
            "timestamp": "2017-08-28T00:00:00Z",
            "volunteers": [{"id": "u1", "lat": 29.8, "lon": -95.4}, {"id": "u2", "lat": 29.7, "lon": -95.3}],
            "victims": [
                {"id": "v1", "lat": 29.9, "lon": -95.5},
                {"id": "v2", "lat": 29.6, "lon": -95.2},
                {"id": "v3", "lat": 29.5, "lon": -95.1},
            ],
        }
    ],
}


def test_parse_json_counts():
    s = parse_scenario(json.dumps(DOC))
    assert len(s.snapshots) == 1
    assert (len(s.snapshots[0].volunteers), len(s.snapshots[0].victims)) == (2, 3)
    assert s.bounds == HOUSTON and s.grid == (25, 25)


def test_json_round_trip():
    s = parse_scenario(json.dumps(DOC))
    assert parse_scenario(json.dumps(scenario_to_dict(s))) == s


def test_parse_empty_snapshot_list():
    s = parse_scenario(json.dumps({**DOC, "snapshots": []}))
    assert s.snapshots == ()


def test_parse_rejects_time_travel():
    later = {**DOC["snapshots"][0], "timestamp": "2017-08-28T01:00:00Z"}
    doc = {**DOC, "snapshots": [later, DOC["snapshots"][0]]}
    with pytest.raises(NonMonotonicTimestamps):
        parse_scenario(json.dumps(doc))
    doc = {**DOC, "snapshots": [DOC["snapshots"][0], DOC["snapshots"][0]]}
    with pytest.raises(NonMonotonicTimestamps):
        parse_scenario(json.dumps(doc))


def test_parse_rejects_duplicate_ids():
    snap = dict(DOC["snapshots"][0])
    snap["victims"] = snap["victims"] + [{"id": "v1", "lat": 29.9, "lon": -95.5}]
    with pytest.raises(DuplicateId) as info:
        parse_scenario(json.dumps({**DOC, "snapshots": [snap]}))
    assert info.value.entity_id == "v1"


@pytest.mark.parametrize(
    "text",
    [
        "{not json",
        json.dumps({**DOC, "snapshots": [{"volunteers": []}]}),
        json.dumps({**DOC, "snapshots": [{**DOC["snapshots"][0], "timestamp": "yesterday"}]}),
        json.dumps({**DOC, "snapshots": [{**DOC["snapshots"][0], "timestamp": "2017-08-28T00:00:00"}]}),
        json.dumps({**DOC, "bounds": {"lat_min": 1}}),
        "time,role,id,lat,lon\n",
        "timestamp,role,id,lat,lon\n2017-08-28T00:00:00Z,boat,u1,29.8,-95.4\n",
        "timestamp,role,id,lat,lon\n2017-08-28T00:00:00Z,volunteer,u1,north,-95.4\n",
    ],
)
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse_scenario(text)


CSV = """timestamp,role,id,lat,lon
2017-08-28T00:00:00Z,volunteer,u1,29.8,-95.4
2017-08-28T00:00:00Z,volunteer,u2,29.7,-95.3
2017-08-28T00:00:00Z,victim,v1,29.9,-95.5
2017-08-28T00:00:00Z,victim,v2,29.6,-95.2
2017-08-28T00:00:00Z,victim,v3,29.5,-95.1
2017-08-28T01:00:00Z,victim,v4,29.5,-95.6
"""


def test_parse_csv_matches_json():
    s = parse_scenario(CSV)
    assert len(s.snapshots) == 2
    assert s.snapshots[0] == parse_scenario(json.dumps(DOC)).snapshots[0]
    assert [v[0] for v in s.snapshots[1].victims] == ["v4"]


def test_snapshot_to_world_corners():
    snap = ScenarioSnapshot("2017-08-28T00:00:00Z", (("u", NW),), (("v", SE),))
    w = snapshot_to_world(snap, HOUSTON, G)
    assert w.agents[0].cell == (0, 0) and w.agents[0].id == "u"
    assert w.victims[0].cell == (24, 24) and w.victims[0].id == "v"


def test_snapshot_to_world_errors_and_colocation():
    outside = ScenarioSnapshot("t", (("u", NW),), (("v", GeoPoint(35.0, -95.5)),))
    with pytest.raises(OutOfRegion):
        snapshot_to_world(outside, HOUSTON, G)
    with pytest.raises(EmptyPopulation):
        snapshot_to_world(ScenarioSnapshot("t", (("u", NW),), ()), HOUSTON, G)
    twin = ScenarioSnapshot("t", (("u", NW),), (("a", DOWNTOWN), ("b", DOWNTOWN)))
    w = snapshot_to_world(twin, HOUSTON, G)
    assert [v.cell for v in w.victims] == [(13, 15), (13, 15)]


def test_apply_snapshot_semantics():
    world = WorldState(
        3,
        (snapshot_to_world(ScenarioSnapshot("t", (("u1", NW),), (("x", SE),)), HOUSTON, G).agents[0],),
        (Victim("2", Cell(5, 5), RESCUED), Victim("3", Cell(6, 6), WAITING)),
    )
    snap = ScenarioSnapshot(
        "t",
        (("u1", DOWNTOWN),),
        (("7", SE), ("2", NW), ("3", NW)),
    )
    out = apply_snapshot(world, snap, HOUSTON, G)
    by_id = {v.id: v for v in out.victims}
    assert by_id["7"] == Victim("7", Cell(24, 24), WAITING)
    assert by_id["2"] == Victim("2", Cell(5, 5), RESCUED)
    assert by_id["3"] == Victim("3", Cell(0, 0), WAITING)
    assert out.agents[0].cell == (13, 15)
    assert out.t == 3
    assert apply_snapshot(world, ScenarioSnapshot("t"), HOUSTON, G) == world
