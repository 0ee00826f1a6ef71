"""Deterministic network world: hex layout, tiles, UE counts and attenuation.

Everything downstream (game math, solver, baselines, metrics) reads a frozen
:class:`Scenario`.  Base stations are indexed by id, and ids are laid out team
by team so a team's locations are contiguous (macro first).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

MACRO = "macro"
MICRO = "micro"

A_FLOOR = 1e-18
MIN_DISTANCE_M = 10.0
SECTOR_BORESIGHTS = (0.0, 120.0, 240.0)
# micro offset from its macro, and nominal micro disc radius, as fractions of isd
MICRO_OFFSET = 0.35
MICRO_RADIUS = 0.08

DEFAULT_TILE_SIZE = 54.6  # 2496 tiles on the 57-team layout
SCENARIO_SCHEMA = "hetnet-bps/scenario"
SCENARIO_VERSION = 1


class LayoutError(ValueError):
    """Raised when a requested geometry cannot be built."""


@dataclass(frozen=True)
class CarrierSpec:
    id: int
    center_frequency: float  # Hz
    bandwidth: float  # Hz

    def __post_init__(self):
        if self.center_frequency <= 0 or self.bandwidth <= 0:
            raise ValueError(f"carrier {self.id}: frequency and bandwidth must be positive")


DEFAULT_CARRIERS = (
    CarrierSpec(0, 2.6e9, 10e6),
    CarrierSpec(1, 1.8e9, 10e6),
    CarrierSpec(2, 0.8e9, 10e6),
)


@dataclass(frozen=True)
class BaseStation:
    id: int
    kind: str
    position: tuple[float, float]
    max_power: float  # W
    team_id: int
    boresight: float | None = None  # degrees; sectorised macros only


@dataclass(frozen=True)
class Tile:
    id: int
    center: tuple[float, float]
    ue_count: int
    serving: int  # base station id


@dataclass(frozen=True)
class Team:
    id: int
    leader: int
    locations: tuple[int, ...]
    tiles: tuple[int, ...] = ()
    total_ues: int = 0


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------


def hex_sites(rings: int, isd: float) -> list[tuple[float, float]]:
    """Site positions of a hexagonal grid, centre first then ring by ring."""
    if rings < 0:
        raise LayoutError("rings must be >= 0")
    if isd <= 0:
        raise LayoutError("isd must be positive")
    sites = []
    for q in range(-rings, rings + 1):
        for r in range(-rings, rings + 1):
            if abs(q + r) > rings:
                continue
            x = isd * (q + r / 2.0)
            y = isd * (math.sqrt(3.0) / 2.0) * r
            ring = max(abs(q), abs(r), abs(q + r))
            ang = math.atan2(y, x) % (2 * math.pi)
            sites.append((ring, round(ang, 12), x, y))
    sites.sort()
    return [(x, y) for _, _, x, y in sites]


def micro_offsets(micros_per_macro: int, isd: float) -> list[tuple[float, float]]:
    """(distance, azimuth offset in degrees) of micros inside a 120 degree sector."""
    if micros_per_macro < 0:
        raise LayoutError("micros_per_macro must be >= 0")
    if micros_per_macro == 0:
        return []
    dist = MICRO_OFFSET * isd
    radius = MICRO_RADIUS * isd
    width = 360.0 / len(SECTOR_BORESIGHTS)
    step = width / micros_per_macro
    # neighbouring micros (also across sector borders) sit `step` degrees apart
    chord = 2.0 * dist * math.sin(math.radians(step) / 2.0)
    if chord < 2.0 * radius:
        raise LayoutError(
            f"{micros_per_macro} micros per macro overlap at isd={isd}: "
            f"spacing {chord:.1f} m < {2 * radius:.1f} m"
        )
    return [(dist, -width / 2.0 + step * (i + 0.5)) for i in range(micros_per_macro)]


def build_layout(
    rings: int,
    isd: float,
    micros_per_macro: int,
    macro_power: float = 20.0,
    micro_power: float = 1.0,
    max_teams: int | None = None,
) -> tuple[list[BaseStation], list[Team]]:
    """Three-sector hex layout with one team per macro sector.

    ``max_teams`` keeps only the first teams in site order (centre outwards),
    which gives the intermediate network sizes used for scaling runs.
    """
    if macro_power <= 0 or micro_power <= 0 or micro_power > macro_power:
        raise LayoutError("need 0 < micro_power <= macro_power")
    offsets = micro_offsets(micros_per_macro, isd)
    stations: list[BaseStation] = []
    teams: list[Team] = []
    for site in hex_sites(rings, isd):
        for boresight in SECTOR_BORESIGHTS:
            if max_teams is not None and len(teams) >= max_teams:
                break
            tid = len(teams)
            macro = BaseStation(len(stations), MACRO, site, macro_power, tid, boresight)
            stations.append(macro)
            ids = [macro.id]
            for dist, off in offsets:
                az = math.radians(boresight + off)
                pos = (site[0] + dist * math.cos(az), site[1] + dist * math.sin(az))
                micro = BaseStation(len(stations), MICRO, pos, micro_power, tid)
                stations.append(micro)
                ids.append(micro.id)
            teams.append(Team(tid, macro.id, _order_locations(stations, ids)))
    return stations, teams


def _order_locations(stations: Sequence[BaseStation], ids: Sequence[int]) -> tuple[int, ...]:
    leader, micros = ids[0], list(ids[1:])
    lx, ly = stations[leader].position
    micros.sort(key=lambda b: (math.hypot(stations[b].position[0] - lx, stations[b].position[1] - ly), b))
    return (leader, *micros)


def _angle_gap(a: np.ndarray, b: float) -> np.ndarray:
    return np.abs((a - b + 180.0) % 360.0 - 180.0)


def nearest_station(stations: Sequence[BaseStation], points: np.ndarray) -> np.ndarray:
    """Closest-BS association; co-sited sectors are split by their 120 degree wedges."""
    pos = np.array([b.position for b in stations], dtype=float)
    d = np.hypot(points[:, None, 0] - pos[None, :, 0], points[:, None, 1] - pos[None, :, 1])
    best = np.argmin(d, axis=1)
    dmin = d[np.arange(len(points)), best]
    tied = (d <= dmin[:, None] + 1e-9).sum(axis=1) > 1
    for i in np.flatnonzero(tied):
        cands = np.flatnonzero(d[i] <= dmin[i] + 1e-9)
        best[i] = _pick_sector(stations, cands, points[i])
    return best


def _pick_sector(stations: Sequence[BaseStation], cands: Sequence[int], point) -> int:
    def key(b):
        st = stations[b]
        if st.boresight is None:
            return (math.inf, b)
        az = math.degrees(math.atan2(point[1] - st.position[1], point[0] - st.position[0]))
        return (float(_angle_gap(np.array(az), st.boresight)), b)

    return int(min(cands, key=key))


def tessellate(
    stations: Sequence[BaseStation], tile_size: float, margin: float = 0.0
) -> list[Tile]:
    """Square tiles over the (margin-padded) bounding box of the layout.

    Tiles are ordered by (row, col) and served by their closest base station.
    """
    if tile_size <= 0:
        raise ValueError("tile_size must be positive")
    pos = np.array([b.position for b in stations], dtype=float)
    lo = pos.min(axis=0) - margin
    hi = pos.max(axis=0) + margin
    ncols = max(1, int(math.ceil((hi[0] - lo[0]) / tile_size - 1e-9)))
    nrows = max(1, int(math.ceil((hi[1] - lo[1]) / tile_size - 1e-9)))
    # centre the grid on the box
    x0 = (lo[0] + hi[0]) / 2.0 - ncols * tile_size / 2.0
    y0 = (lo[1] + hi[1]) / 2.0 - nrows * tile_size / 2.0
    cols, rows = np.meshgrid(np.arange(ncols), np.arange(nrows))
    centers = np.column_stack(
        [x0 + (cols.ravel() + 0.5) * tile_size, y0 + (rows.ravel() + 0.5) * tile_size]
    )
    serving = nearest_station(stations, centers)
    return [
        Tile(i, (float(c[0]), float(c[1])), 0, int(s))
        for i, (c, s) in enumerate(zip(centers, serving))
    ]


def largest_remainder(expected: np.ndarray, total: int, rng: np.random.Generator) -> np.ndarray:
    """Round non-negative reals to integers summing to ``total``; ties broken by ``rng``."""
    base = np.floor(expected).astype(np.int64)
    short = int(total - base.sum())
    if short > 0:
        frac = expected - base
        perm = rng.permutation(len(expected))
        order = np.lexsort((perm, -frac))
        base[order[:short]] += 1
    return base


def hotspot_mask(tiles: Sequence[Tile], stations: Sequence[BaseStation], radius: float) -> np.ndarray:
    centers = np.array([t.center for t in tiles], dtype=float)
    micros = np.array([b.position for b in stations if b.kind == MICRO], dtype=float)
    if len(micros) == 0 or radius <= 0:
        return np.zeros(len(tiles), dtype=bool)
    d = np.hypot(centers[:, None, 0] - micros[None, :, 0], centers[:, None, 1] - micros[None, :, 1])
    return (d <= radius).any(axis=1)


def distribute_ues(
    tiles: Sequence[Tile],
    stations: Sequence[BaseStation],
    total_ues: int,
    hotspot_ratio: float,
    hotspot_radius: float,
    seed: int,
) -> list[Tile]:
    """Spread ``total_ues`` over tiles, ``hotspot_ratio`` times denser near micros."""
    if total_ues <= 0:
        raise ValueError("total_ues must be positive")
    if hotspot_ratio < 1:
        raise ValueError("hotspot_ratio must be >= 1")
    weight = np.where(hotspot_mask(tiles, stations, hotspot_radius), float(hotspot_ratio), 1.0)
    expected = total_ues * weight / weight.sum()
    counts = largest_remainder(expected, total_ues, np.random.default_rng(seed))
    return [replace(t, ue_count=int(n)) for t, n in zip(tiles, counts)]


# ---------------------------------------------------------------------------
# propagation
# ---------------------------------------------------------------------------

_PATHLOSS = {
    MACRO: (128.1, 37.6),
    MICRO: (140.7, 36.7),
}


def pathloss_db(distance_m, frequency_hz, kind: str):
    """Log-distance urban pathloss with a 21 log10(f/2GHz) frequency term."""
    intercept, slope = _PATHLOSS[kind]
    d_km = np.maximum(np.asarray(distance_m, dtype=float), MIN_DISTANCE_M) / 1000.0
    return intercept + slope * np.log10(d_km) + 21.0 * np.log10(frequency_hz / 2.0e9)


def compute_attenuation(
    stations: Sequence[BaseStation], tiles: Sequence[Tile], carriers: Sequence[CarrierSpec]
) -> np.ndarray:
    """Linear gains ``a[bs, tile, carrier]`` clamped to ``[A_FLOOR, 1]``."""
    pos = np.array([b.position for b in stations], dtype=float)
    centers = np.array([t.center for t in tiles], dtype=float)
    d = np.hypot(centers[None, :, 0] - pos[:, None, 0], centers[None, :, 1] - pos[:, None, 1])
    out = np.empty((len(stations), len(tiles), len(carriers)))
    for kind in (MACRO, MICRO):
        rows = np.array([b.kind == kind for b in stations])
        if not rows.any():
            continue
        for c, car in enumerate(carriers):
            pl = pathloss_db(d[rows], car.center_frequency, kind)
            out[rows, :, c] = 10.0 ** (-pl / 10.0)
    return np.clip(out, A_FLOOR, 1.0)


# ---------------------------------------------------------------------------
# scenario
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    base_stations: tuple[BaseStation, ...]
    tiles: tuple[Tile, ...]
    teams: tuple[Team, ...]
    carriers: tuple[CarrierSpec, ...]
    attenuation: np.ndarray = field(repr=False, compare=False)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        a = self.attenuation
        expect = (len(self.base_stations), len(self.tiles), len(self.carriers))
        if a.shape != expect:
            raise ValueError(f"attenuation shape {a.shape} != {expect}")
        freqs = [c.center_frequency for c in self.carriers]
        if len(set(freqs)) != len(freqs):
            raise ValueError("carrier centre frequencies must be distinct")
        if len({c.id for c in self.carriers}) != len(self.carriers):
            raise ValueError("carrier ids must be unique")
        a.setflags(write=False)

    @classmethod
    def assemble(
        cls,
        stations: Sequence[BaseStation],
        tiles: Sequence[Tile],
        carriers: Sequence[CarrierSpec],
        attenuation: np.ndarray | None = None,
        meta: dict | None = None,
    ) -> "Scenario":
        """Group tiles into teams and attach (or compute) the attenuation tensor."""
        stations = tuple(stations)
        tiles = tuple(tiles)
        by_team: dict[int, list[int]] = {}
        for b in stations:
            by_team.setdefault(b.team_id, []).append(b.id)
        if sorted(by_team) != list(range(len(by_team))):
            raise ValueError("team ids must be 0..T-1")
        team_of = {b.id: b.team_id for b in stations}
        teams = []
        for tid in range(len(by_team)):
            ids = by_team[tid]
            macros = [b for b in ids if stations[b].kind == MACRO]
            if len(macros) != 1:
                raise ValueError(f"team {tid} needs exactly one macro")
            ids = [macros[0]] + [b for b in ids if b != macros[0]]
            locs = _order_locations(stations, ids)
            own = tuple(t.id for t in tiles if team_of[t.serving] == tid)
            ues = sum(tiles[z].ue_count for z in own)
            teams.append(Team(tid, macros[0], locs, own, ues))
        if attenuation is None:
            attenuation = compute_attenuation(stations, tiles, carriers)
        return cls(stations, tiles, tuple(teams), tuple(carriers),
                   np.array(attenuation, dtype=float), dict(meta or {}))

    # derived arrays -------------------------------------------------------
    @property
    def n_bs(self) -> int:
        return len(self.base_stations)

    @property
    def n_carriers(self) -> int:
        return len(self.carriers)

    @cached_property
    def max_power(self) -> np.ndarray:
        return np.array([b.max_power for b in self.base_stations])

    @cached_property
    def is_micro(self) -> np.ndarray:
        return np.array([b.kind == MICRO for b in self.base_stations])

    @cached_property
    def serving(self) -> np.ndarray:
        return np.array([t.serving for t in self.tiles], dtype=np.int64)

    @cached_property
    def ue_counts(self) -> np.ndarray:
        return np.array([t.ue_count for t in self.tiles], dtype=np.int64)

    @cached_property
    def bs_team(self) -> np.ndarray:
        return np.array([b.team_id for b in self.base_stations], dtype=np.int64)

    @cached_property
    def tile_team(self) -> np.ndarray:
        return self.bs_team[self.serving]

    @cached_property
    def tile_centers(self) -> np.ndarray:
        return np.array([t.center for t in self.tiles], dtype=float)

    @property
    def total_ues(self) -> int:
        return int(self.ue_counts.sum())

    def play_order(self) -> list[int]:
        """Carrier indices by strictly descending centre frequency."""
        return sorted(range(self.n_carriers), key=lambda c: -self.carriers[c].center_frequency)

    def summary(self) -> dict:
        return {
            "teams": len(self.teams),
            "base_stations": self.n_bs,
            "locations_per_team": sorted({len(t.locations) for t in self.teams}),
            "tiles": len(self.tiles),
            "ues": self.total_ues,
            "carriers": [c.center_frequency for c in self.carriers],
        }


@dataclass(frozen=True)
class ScenarioConfig:
    rings: int = 2
    isd: float = 500.0
    micros_per_macro: int = 4
    tile_size: float = DEFAULT_TILE_SIZE
    total_ues: int = 34400
    hotspot_ratio: float = 3.0
    hotspot_radius: float | None = None  # defaults to the nominal micro radius
    seed: int = 1
    max_teams: int | None = None
    macro_power: float = 20.0
    micro_power: float = 1.0
    carriers: tuple[CarrierSpec, ...] = DEFAULT_CARRIERS


def build_scenario(cfg: ScenarioConfig = ScenarioConfig()) -> Scenario:
    stations, _ = build_layout(cfg.rings, cfg.isd, cfg.micros_per_macro,
                               cfg.macro_power, cfg.micro_power, cfg.max_teams)
    tiles = tessellate(stations, cfg.tile_size, margin=cfg.isd / 2.0)
    radius = MICRO_RADIUS * cfg.isd if cfg.hotspot_radius is None else cfg.hotspot_radius
    tiles = distribute_ues(tiles, stations, cfg.total_ues, cfg.hotspot_ratio, radius, cfg.seed)
    meta = {"tile_size": cfg.tile_size, "isd": cfg.isd, "rings": cfg.rings,
            "micros_per_macro": cfg.micros_per_macro, "seed": cfg.seed,
            "max_teams": cfg.max_teams}
    return Scenario.assemble(stations, tiles, cfg.carriers, meta=meta)


def toy_scenario(
    seed: int,
    n_teams: int = 2,
    micros_per_team: int = 1,
    carriers: Sequence[CarrierSpec] = DEFAULT_CARRIERS[:1],
    isd: float = 500.0,
    tile_size: float = 100.0,
    total_ues: int = 200,
    hotspot_ratio: float = 3.0,
    macro_power: float = 20.0,
    micro_power: float = 1.0,
) -> Scenario:
    """Small random world: omni macros on a line, micros dropped around each."""
    rng = np.random.default_rng(seed)
    stations: list[BaseStation] = []
    for t in range(n_teams):
        macro = BaseStation(len(stations), MACRO, (t * isd, 0.0), macro_power, t)
        stations.append(macro)
        for _ in range(micros_per_team):
            r = rng.uniform(0.15, 0.45) * isd
            az = rng.uniform(0.0, 2 * math.pi)
            pos = (macro.position[0] + r * math.cos(az), r * math.sin(az))
            stations.append(BaseStation(len(stations), MICRO, pos, micro_power, t))
    tiles = tessellate(stations, tile_size, margin=isd / 2.0)
    tiles = distribute_ues(tiles, stations, total_ues, hotspot_ratio, MICRO_RADIUS * isd * 1.5,
                           int(rng.integers(2**31)))
    return Scenario.assemble(stations, tiles, carriers, meta={"toy_seed": seed})


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------


def save_scenario(scenario: Scenario, path: str | Path) -> tuple[Path, Path]:
    """Write ``<path>`` (JSON) and ``<path>.bin`` (attenuation, little-endian f8)."""
    path = Path(path)
    sidecar = path.with_name(path.name + ".bin")
    a = scenario.attenuation
    doc = {
        "schema": SCENARIO_SCHEMA,
        "version": SCENARIO_VERSION,
        "meta": scenario.meta,
        "summary": scenario.summary(),
        "carriers": [vars(c) for c in scenario.carriers],
        "base_stations": [
            {"id": b.id, "kind": b.kind, "x": b.position[0], "y": b.position[1],
             "max_power": b.max_power, "team": b.team_id, "boresight": b.boresight}
            for b in scenario.base_stations
        ],
        "tiles": [
            {"id": t.id, "x": t.center[0], "y": t.center[1], "ues": t.ue_count, "serving": t.serving}
            for t in scenario.tiles
        ],
        "teams": [
            {"id": t.id, "leader": t.leader, "locations": list(t.locations), "total_ues": t.total_ues}
            for t in scenario.teams
        ],
        "attenuation": {"file": sidecar.name, "shape": list(a.shape), "dtype": "<f8", "order": "C"},
    }
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    sidecar.write_bytes(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return path, sidecar


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    doc = json.loads(path.read_text())
    if doc.get("schema") != SCENARIO_SCHEMA or doc.get("version") != SCENARIO_VERSION:
        raise ValueError(f"{path}: not a version {SCENARIO_VERSION} scenario file")
    spec = doc["attenuation"]
    raw = (path.parent / spec["file"]).read_bytes()
    a = np.frombuffer(raw, dtype=spec["dtype"]).reshape(spec["shape"]).astype(float)
    carriers = [CarrierSpec(**c) for c in doc["carriers"]]
    stations = [
        BaseStation(b["id"], b["kind"], (b["x"], b["y"]), b["max_power"], b["team"], b["boresight"])
        for b in doc["base_stations"]
    ]
    tiles = [Tile(t["id"], (t["x"], t["y"]), t["ues"], t["serving"]) for t in doc["tiles"]]
    return Scenario.assemble(stations, tiles, carriers, attenuation=a, meta=doc["meta"])
