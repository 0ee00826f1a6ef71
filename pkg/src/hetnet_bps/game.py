"""Team game mathematics: interference, SINR, sigmoid utility, cost and payoff.

A *profile* is an integer array ``profile[bs, carrier]`` of indices into the
power-level set; a team's strategy is the block of rows of its locations.
All power arithmetic is linear (watts); dB only appears at I/O boundaries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .scenario import Scenario

DEFAULT_FRACTIONS = tuple(round(0.1 * i, 10) for i in range(11))


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(x, dtype=float))


def thermal_noise_watts(bandwidth_hz: float = 10e6, noise_figure_db: float = 9.0) -> float:
    """-174 dBm/Hz over ``bandwidth_hz`` plus the UE noise figure, in watts."""
    dbm = -174.0 + 10.0 * math.log10(bandwidth_hz) + noise_figure_db
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class PowerLevels:
    fractions: tuple[float, ...] = DEFAULT_FRACTIONS

    def __post_init__(self):
        f = self.fractions
        if len(f) < 2 or f[0] != 0.0 or f[-1] != 1.0:
            raise ValueError("power levels must start at 0 and end at 1")
        if any(b <= a for a, b in zip(f, f[1:])):
            raise ValueError("power levels must be strictly increasing")

    def __len__(self) -> int:
        return len(self.fractions)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.fractions, dtype=float)

    def index(self, fraction: float) -> int:
        for i, f in enumerate(self.fractions):
            if abs(f - fraction) < 1e-12:
                return i
        raise ValueError(f"{fraction} is not an available power level")

    @classmethod
    def uniform(cls, n: int) -> "PowerLevels":
        """``n`` evenly spaced fractions from 0 to 1."""
        return cls(tuple(round(i / (n - 1), 12) for i in range(n)))


@dataclass(frozen=True)
class GameParams:
    alpha: float = 1.0
    beta: float = 1.0
    xi: float | tuple[float, ...] = 0.0  # 1/W, scalar or one value per team
    delta: float = 0.6
    gamma_min: float = 0.1  # linear (-10 dB)
    noise: float = field(default_factory=thermal_noise_watts)
    levels: PowerLevels = PowerLevels()

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.noise <= 0 or self.gamma_min <= 0:
            raise ValueError("noise and gamma_min must be positive")
        if np.any(np.asarray(self.xi) < 0):
            raise ValueError("xi must be >= 0")

    def xi_for(self, team: int) -> float:
        if isinstance(self.xi, tuple):
            return float(self.xi[team])
        return float(self.xi)

    def with_(self, **kw) -> "GameParams":
        return replace(self, **kw)


def zero_profile(scenario: Scenario) -> np.ndarray:
    return np.zeros((scenario.n_bs, scenario.n_carriers), dtype=np.int64)


def constant_profile(scenario: Scenario, levels: PowerLevels, fraction: float) -> np.ndarray:
    return np.full((scenario.n_bs, scenario.n_carriers), levels.index(fraction), dtype=np.int64)


def watts(scenario: Scenario, profile: np.ndarray, levels: PowerLevels) -> np.ndarray:
    """Realised transmit power ``[bs, carrier]`` in watts."""
    return levels.array[profile] * scenario.max_power[:, None]


def _carriers(scenario: Scenario, carriers: Iterable[int] | None) -> list[int]:
    return list(range(scenario.n_carriers)) if carriers is None else sorted(set(carriers))


def interference(scenario: Scenario, profile: np.ndarray, team: int, levels: PowerLevels) -> np.ndarray:
    """Inter-team interference ``I[z, c]`` (W) over the team's tiles."""
    p = watts(scenario, profile, levels)
    p[scenario.bs_team == team] = 0.0
    a = scenario.attenuation[:, list(scenario.teams[team].tiles), :]
    return np.einsum("bc,bzc->zc", p, a)


def team_sinr(scenario: Scenario, profile: np.ndarray, team: int, params: GameParams) -> np.ndarray:
    """Linear SINR ``[z, c]`` over the team's tiles, each served by its own location."""
    tiles = list(scenario.teams[team].tiles)
    locs = list(scenario.teams[team].locations)
    p = watts(scenario, profile, params.levels)
    a = scenario.attenuation[:, tiles, :]
    inter = interference(scenario, profile, team, params.levels)
    srv = scenario.serving[tiles]
    others = np.asarray(locs)[:, None] != srv[None, :]
    intra = np.einsum("lc,lzc,lz->zc", p[locs], a[locs], others)
    signal = p[srv] * a[srv, np.arange(len(tiles))]
    return signal / (params.noise + intra + inter)


def sinr(scenario: Scenario, profile: np.ndarray, team: int, tile: int, carrier: int,
         params: GameParams) -> float:
    """SINR of one tile on one carrier; ``tile`` must be served by ``team``."""
    if scenario.tile_team[tile] != team:
        raise ValueError(f"tile {tile} is not served by team {team}")
    p = watts(scenario, profile, params.levels)[:, carrier]
    a = scenario.attenuation[:, tile, carrier]
    srv = scenario.serving[tile]
    signal = p[srv] * a[srv]
    if signal == 0.0:
        return 0.0
    same = scenario.bs_team == team
    intra = sum(p[b] * a[b] for b in np.flatnonzero(same) if b != srv)
    inter = sum(p[b] * a[b] for b in np.flatnonzero(~same))
    return float(signal / (params.noise + intra + inter))


def sigmoid(gamma, alpha: float, beta: float):
    return 1.0 / (1.0 + np.exp(-alpha * (np.asarray(gamma, dtype=float) - beta)))


def tile_weights(scenario: Scenario, team: int) -> np.ndarray:
    """``E_z / E_t`` over the team's tiles (zeros for an empty team)."""
    t = scenario.teams[team]
    ues = scenario.ue_counts[list(t.tiles)]
    total = int(ues.sum())
    if total == 0:
        return np.zeros(len(ues))
    return ues / total


def team_utility(scenario: Scenario, profile: np.ndarray, team: int, params: GameParams,
                 carriers: Iterable[int] | None = None) -> float:
    cs = _carriers(scenario, carriers)
    g = team_sinr(scenario, profile, team, params)[:, cs]
    return float(tile_weights(scenario, team) @ sigmoid(g, params.alpha, params.beta).sum(axis=1))


def unserved_fraction(scenario: Scenario, profile: np.ndarray, team: int, params: GameParams,
                      settled: Iterable[int] | None = None) -> float:
    """Share of team UEs below ``gamma_min`` on every carrier in ``settled``."""
    cs = _carriers(scenario, settled)
    if not cs:
        raise ValueError("settled carriers must be non-empty")
    g = team_sinr(scenario, profile, team, params)[:, cs]
    below = g.max(axis=1) < params.gamma_min
    return float(tile_weights(scenario, team) @ below)


def mean_link_quality(scenario: Scenario) -> np.ndarray:
    """Attenuation ``[bs, c]`` averaged (equal weights) over each BS's own tiles."""
    out = np.zeros((scenario.n_bs, scenario.n_carriers))
    counts = np.bincount(scenario.serving, minlength=scenario.n_bs)
    for b in np.flatnonzero(counts):
        out[b] = scenario.attenuation[b, scenario.serving == b, :].mean(axis=0)
    return out


def power_cost(scenario: Scenario, profile: np.ndarray, team: int, params: GameParams,
               carriers: Iterable[int] | None = None, abar: np.ndarray | None = None) -> float:
    cs = _carriers(scenario, carriers)
    locs = list(scenario.teams[team].locations)
    abar = mean_link_quality(scenario) if abar is None else abar
    p = watts(scenario, profile, params.levels)
    return params.xi_for(team) * float((abar[locs][:, cs] * p[locs][:, cs]).sum())


def team_cost(scenario: Scenario, profile: np.ndarray, team: int, params: GameParams,
              settled: Iterable[int] | None = None, abar: np.ndarray | None = None) -> float:
    cs = _carriers(scenario, settled)
    return (power_cost(scenario, profile, team, params, cs, abar)
            + params.delta * unserved_fraction(scenario, profile, team, params, cs))


def team_payoff(scenario: Scenario, profile: np.ndarray, team: int, params: GameParams,
                settled: Iterable[int] | None = None, abar: np.ndarray | None = None) -> float:
    cs = _carriers(scenario, settled)
    return (team_utility(scenario, profile, team, params, cs)
            - team_cost(scenario, profile, team, params, cs, abar))


def calibrate_xi(scenario: Scenario, k: float, params: GameParams,
                 per_team: bool = True) -> tuple[float, ...]:
    """Price per received watt, ``k * alpha / mean interference`` with every BS at half power."""
    if k < 0:
        raise ValueError("k must be >= 0")
    half = 0.5 * scenario.max_power
    sums = []
    for t in scenario.teams:
        outside = scenario.bs_team != t.id
        a = scenario.attenuation[outside][:, list(t.tiles), :]
        i = np.einsum("b,bzc->zc", half[outside], a)
        sums.append((float(i.sum()), i.size))
    if per_team:
        means = [s / n if n else 0.0 for s, n in sums]
    else:
        n = sum(n for _, n in sums)
        means = [sum(s for s, _ in sums) / n] * len(sums)
    return tuple(k * params.alpha / m if m > 0 else 0.0 for m in means)


def network_sinr(scenario: Scenario, power_w: np.ndarray, serving: np.ndarray,
                 noise: float) -> np.ndarray:
    """SINR ``[tile, c]`` for arbitrary association; everyone else interferes."""
    a = scenario.attenuation
    n = np.arange(len(serving))
    received = np.einsum("bc,bzc->zc", power_w, a)
    signal = power_w[serving] * a[serving, n]
    return signal / (noise + np.maximum(received - signal, 0.0))


def global_utility_from_sinr(scenario: Scenario, gamma: np.ndarray, params: GameParams) -> float:
    """Sum over teams of weighted tile utilities given precomputed SINRs."""
    per_tile = sigmoid(gamma, params.alpha, params.beta).sum(axis=1)
    return float(sum(tile_weights(scenario, t.id) @ per_tile[list(t.tiles)] for t in scenario.teams))


def team_power(scenario: Scenario, profile: np.ndarray, team: int, levels: PowerLevels,
               carriers: Sequence[int] | None = None) -> float:
    cs = _carriers(scenario, carriers)
    locs = list(scenario.teams[team].locations)
    return float(watts(scenario, profile, levels)[locs][:, cs].sum())
