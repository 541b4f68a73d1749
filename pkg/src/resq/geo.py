"""Geocoded snapshots of volunteers and victims, and their mapping onto the grid.

Latitude/longitude are treated as an affine rectangle (no map projection).
Row 0 is the northernmost band and column 0 the westernmost one.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from datetime import datetime
from typing import NamedTuple

from .errors import DuplicateId, EmptyPopulation, NonMonotonicTimestamps, OutOfRegion, ParseError
from .grid import WAITING, Agent, Cell, GridConfig, Victim, WorldState


class GeoPoint(NamedTuple):
    lat: float
    lon: float


@dataclass(frozen=True)
class GeoBounds:
    lat_min: float = 29.422486
    lat_max: float = 30.154665
    lon_min: float = -95.874178
    lon_max: float = -95.069705

    def __post_init__(self):
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise ValueError("bounds need lat_min < lat_max and lon_min < lon_max")

    def contains(self, p: GeoPoint) -> bool:
        return self.lat_min <= p.lat <= self.lat_max and self.lon_min <= p.lon <= self.lon_max

    def clamp(self, p: GeoPoint) -> GeoPoint:
        return GeoPoint(
            min(max(p.lat, self.lat_min), self.lat_max),
            min(max(p.lon, self.lon_min), self.lon_max),
        )

    def cell_center(self, row: int, col: int, rows: int, cols: int) -> GeoPoint:
        lat = self.lat_max - (row + 0.5) * (self.lat_max - self.lat_min) / rows
        lon = self.lon_min + (col + 0.5) * (self.lon_max - self.lon_min) / cols
        return GeoPoint(lat, lon)


# default region: the greater Houston bounding box
HOUSTON = GeoBounds()


@dataclass(frozen=True)
class ScenarioSnapshot:
    timestamp: str
    volunteers: tuple[tuple[str, GeoPoint], ...] = ()
    victims: tuple[tuple[str, GeoPoint], ...] = ()

    def __post_init__(self):
        for side in (self.volunteers, self.victims):
            seen = set()
            for entity_id, _ in side:
                if entity_id in seen:
                    raise DuplicateId(entity_id)
                seen.add(entity_id)


@dataclass(frozen=True)
class Scenario:
    bounds: GeoBounds = HOUSTON
    grid: tuple[int, int] = (25, 25)
    snapshots: tuple[ScenarioSnapshot, ...] = field(default_factory=tuple)


def geo_to_cell(bounds: GeoBounds, rows: int, cols: int, p, clamp: bool = False) -> Cell:
    p = GeoPoint(float(p[0]), float(p[1]))
    if not (math.isfinite(p.lat) and math.isfinite(p.lon)):
        raise OutOfRegion(p)
    if not bounds.contains(p):
        if not clamp:
            raise OutOfRegion(p)
        p = bounds.clamp(p)
    row = math.floor((bounds.lat_max - p.lat) / (bounds.lat_max - bounds.lat_min) * rows)
    col = math.floor((p.lon - bounds.lon_min) / (bounds.lon_max - bounds.lon_min) * cols)
    # max edge belongs to the last band
    return Cell(min(row, rows - 1), min(col, cols - 1))


def _parse_timestamp(text: str, where: str) -> datetime:
    try:
        stamp = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except (TypeError, ValueError, AttributeError):
        raise ParseError(where, f"bad ISO-8601 timestamp {text!r}") from None
    if stamp.tzinfo is None:
        raise ParseError(where, f"timestamp {text!r} has no UTC offset")
    return stamp


def _check_order(snapshots: list[ScenarioSnapshot]) -> None:
    stamps = [_parse_timestamp(s.timestamp, f"snapshot {i}") for i, s in enumerate(snapshots)]
    for a, b in zip(stamps, stamps[1:]):
        if not a < b:
            raise NonMonotonicTimestamps(f"{b.isoformat()} does not follow {a.isoformat()}")


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(where, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ParseError(where, "non-finite coordinate")
    return value


def _parse_json(text: str, bounds: GeoBounds | None, grid: tuple[int, int] | None) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno} col {exc.colno}", exc.msg) from None
    if not isinstance(doc, dict):
        raise ParseError("$", "top level must be an object")

    if "bounds" in doc:
        b = doc["bounds"]
        if not isinstance(b, dict):
            raise ParseError("$.bounds", "expected an object")
        try:
            vals = {k: _number(b[k], f"$.bounds.{k}") for k in ("lat_min", "lat_max", "lon_min", "lon_max")}
        except KeyError as exc:
            raise ParseError("$.bounds", f"missing {exc.args[0]}") from None
        try:
            bounds = GeoBounds(**vals)
        except ValueError as exc:
            raise ParseError("$.bounds", str(exc)) from None
    if "grid" in doc:
        g = doc["grid"]
        try:
            grid = (int(g["rows"]), int(g["cols"]))
        except (KeyError, TypeError, ValueError):
            raise ParseError("$.grid", "expected {rows, cols} integers") from None
        if grid[0] < 1 or grid[1] < 1:
            raise ParseError("$.grid", "rows and cols must be positive")

    raw = doc.get("snapshots", [])
    if not isinstance(raw, list):
        raise ParseError("$.snapshots", "expected a list")
    snapshots = []
    for i, snap in enumerate(raw):
        where = f"$.snapshots[{i}]"
        if not isinstance(snap, dict) or "timestamp" not in snap:
            raise ParseError(where, "expected an object with a timestamp")
        sides = {}
        for role in ("volunteers", "victims"):
            entries = []
            for k, e in enumerate(snap.get(role, [])):
                at = f"{where}.{role}[{k}]"
                if not isinstance(e, dict) or "id" not in e:
                    raise ParseError(at, "expected {id, lat, lon}")
                entries.append((str(e["id"]), GeoPoint(_number(e.get("lat"), at + ".lat"), _number(e.get("lon"), at + ".lon"))))
            sides[role] = tuple(entries)
        snapshots.append(ScenarioSnapshot(str(snap["timestamp"]), sides["volunteers"], sides["victims"]))
    _check_order(snapshots)
    return Scenario(bounds or HOUSTON, grid or (25, 25), tuple(snapshots))


def _parse_csv(text: str, bounds: GeoBounds | None, grid: tuple[int, int] | None) -> Scenario:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["timestamp", "role", "id", "lat", "lon"]:
        raise ParseError("line 1", "header must be timestamp,role,id,lat,lon")
    groups: list[tuple[str, dict[str, list]]] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 5:
            raise ParseError(f"line {lineno}", f"expected 5 fields, got {len(row)}")
        stamp, role, entity_id, lat, lon = (cell.strip() for cell in row)
        if role not in ("volunteer", "victim"):
            raise ParseError(f"line {lineno}", f"unknown role {role!r}")
        try:
            point = GeoPoint(float(lat), float(lon))
        except ValueError:
            raise ParseError(f"line {lineno}", "lat/lon must be numbers") from None
        if not (math.isfinite(point.lat) and math.isfinite(point.lon)):
            raise ParseError(f"line {lineno}", "non-finite coordinate")
        _parse_timestamp(stamp, f"line {lineno}")
        if not groups or groups[-1][0] != stamp:
            groups.append((stamp, {"volunteer": [], "victim": []}))
        groups[-1][1][role].append((entity_id, point))
    snapshots = [ScenarioSnapshot(stamp, tuple(g["volunteer"]), tuple(g["victim"])) for stamp, g in groups]
    _check_order(snapshots)
    return Scenario(bounds or HOUSTON, grid or (25, 25), tuple(snapshots))


def parse_scenario(text: str, bounds: GeoBounds | None = None, grid: tuple[int, int] | None = None) -> Scenario:
    """Parse a scenario document, JSON or ``timestamp,role,id,lat,lon`` CSV.

    ``bounds``/``grid`` are fallbacks for documents that do not carry them
    (always the case for CSV); the Houston box and a 25x25 grid otherwise.
    """
    if text.lstrip().startswith("{"):
        return _parse_json(text, bounds, grid)
    return _parse_csv(text, bounds, grid)


def scenario_to_dict(scenario: Scenario) -> dict:
    b = scenario.bounds
    return {
        "bounds": {"lat_min": b.lat_min, "lat_max": b.lat_max, "lon_min": b.lon_min, "lon_max": b.lon_max},
        "grid": {"rows": scenario.grid[0], "cols": scenario.grid[1]},
        "snapshots": [
            {
                "timestamp": s.timestamp,
                "volunteers": [{"id": i, "lat": p.lat, "lon": p.lon} for i, p in s.volunteers],
                "victims": [{"id": i, "lat": p.lat, "lon": p.lon} for i, p in s.victims],
            }
            for s in scenario.snapshots
        ],
    }


def snapshot_to_world(snap: ScenarioSnapshot, bounds: GeoBounds, config: GridConfig, clamp: bool = False) -> WorldState:
    if not snap.volunteers or not snap.victims:
        raise EmptyPopulation(f"snapshot {snap.timestamp} needs volunteers and victims")
    agents = tuple(Agent(i, geo_to_cell(bounds, config.rows, config.cols, p, clamp)) for i, p in snap.volunteers)
    victims = tuple(Victim(i, geo_to_cell(bounds, config.rows, config.cols, p, clamp)) for i, p in snap.victims)
    return WorldState(0, agents, victims)


def apply_snapshot(world: WorldState, snap: ScenarioSnapshot, bounds: GeoBounds, config: GridConfig, clamp: bool = False) -> WorldState:
    """Merge an hourly snapshot into a running world.

    New ids are appended, reappearing agents and waiting victims move to their
    new cell, rescued victims stay rescued and absent entities are kept.
    """
    def cell(p):
        return geo_to_cell(bounds, config.rows, config.cols, p, clamp)

    moved_agents = {i: cell(p) for i, p in snap.volunteers}
    moved_victims = {i: cell(p) for i, p in snap.victims}

    agents = [Agent(a.id, moved_agents.pop(a.id, a.cell)) for a in world.agents]
    agents += [Agent(i, c) for i, c in moved_agents.items()]

    victims = []
    for v in world.victims:
        if v.id in moved_victims:
            c = moved_victims.pop(v.id)
            victims.append(v if v.status != WAITING else Victim(v.id, c, WAITING))
        else:
            victims.append(v)
    victims += [Victim(i, c, WAITING) for i, c in moved_victims.items()]
    return WorldState(world.t, tuple(agents), tuple(victims))
