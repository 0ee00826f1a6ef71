"""Evaluation quantities: SINR to rate mapping, per-user throughput, utility, power.

Throughput sharing is equal-share per (location, carrier) among the UEs that
meet the SINR threshold there.  Utility weights stay per team (``E_z / E_t``),
so the two notions of "share" are deliberately different.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .game import GameParams, PowerLevels, linear_to_db, network_sinr, team_utility, watts
from .scenario import MACRO, MICRO, Scenario

REPORT_SCHEMA = "hetnet-bps/run-report"
REPORT_VERSION = 1


@dataclass(frozen=True)
class RateTable:
    """Step function from SINR (dB) to spectral efficiency (bit/s/Hz)."""

    thresholds_db: tuple[float, ...]
    efficiencies: tuple[float, ...]

    def __post_init__(self):
        t, e = self.thresholds_db, self.efficiencies
        if len(t) == 0 or len(t) != len(e):
            raise ValueError("rate table needs matching, non-empty columns")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("thresholds must be strictly increasing")
        if any(b < a for a, b in zip(e, e[1:])) or e[0] < 0:
            raise ValueError("efficiencies must be non-negative and non-decreasing")

    def efficiency(self, gamma_db) -> np.ndarray:
        """Highest row at or below ``gamma_db``; 0 below the first row."""
        g = np.asarray(gamma_db, dtype=float)
        row = np.searchsorted(np.asarray(self.thresholds_db), g, side="right") - 1
        eff = np.concatenate(([0.0], self.efficiencies))
        return eff[row + 1]

    @classmethod
    def parse(cls, text: str) -> "RateTable":
        rows = []
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"line {n}: expected 'sinr_db efficiency'")
            rows.append((float(parts[0]), float(parts[1])))
        return cls(tuple(r[0] for r in rows), tuple(r[1] for r in rows))

    @classmethod
    def load(cls, path: str | Path) -> "RateTable":
        return cls.parse(Path(path).read_text())

    @classmethod
    def default(cls) -> "RateTable":
        return cls.parse(resources.files("hetnet_bps").joinpath("data/rate_table.txt").read_text())


def map_sinr_to_throughput(gamma_db, bandwidth_hz: float, table: RateTable) -> np.ndarray:
    """Rate in bit/s of a full carrier at SINR ``gamma_db``."""
    return bandwidth_hz * table.efficiency(gamma_db)


def tile_user_rates(scenario: Scenario, gamma: np.ndarray, serving: np.ndarray,
                    table: RateTable, gamma_min: float) -> np.ndarray:
    """Throughput of one UE in each tile (bit/s), summed over carriers.

    ``gamma`` is the linear SINR ``[tile, carrier]`` towards ``serving``.  Each
    (BS, carrier) splits its bandwidth equally among its UEs meeting ``gamma_min``.
    """
    ues = scenario.ue_counts.astype(float)
    eligible = gamma >= gamma_min
    eff = table.efficiency(linear_to_db(gamma))
    rates = np.zeros(len(ues))
    for c, spec in enumerate(scenario.carriers):
        load = np.bincount(serving, weights=ues * eligible[:, c], minlength=scenario.n_bs)
        n = load[serving]
        ok = eligible[:, c] & (n > 0)
        rates[ok] += spec.bandwidth / n[ok] * eff[ok, c]
    return rates


def expand_users(scenario: Scenario, tile_rates: np.ndarray) -> np.ndarray:
    """One entry per UE, tiles in id order."""
    return np.repeat(tile_rates, scenario.ue_counts)


def profile_sinr(scenario: Scenario, profile: np.ndarray, params: GameParams,
                 serving: np.ndarray | None = None) -> np.ndarray:
    serving = scenario.serving if serving is None else serving
    return network_sinr(scenario, watts(scenario, profile, params.levels), serving, params.noise)


def per_user_throughput(scenario: Scenario, profile: np.ndarray, params: GameParams,
                        table: RateTable | None = None) -> np.ndarray:
    table = RateTable.default() if table is None else table
    gamma = profile_sinr(scenario, profile, params)
    return expand_users(scenario, tile_user_rates(scenario, gamma, scenario.serving, table,
                                                  params.gamma_min))


def global_utility(scenario: Scenario, profile: np.ndarray, params: GameParams) -> float:
    return float(sum(team_utility(scenario, profile, t.id, params) for t in scenario.teams))


def total_power(scenario: Scenario, profile: np.ndarray, levels: PowerLevels) -> float:
    return float(watts(scenario, profile, levels).sum())


def unserved_share(scenario: Scenario, gamma: np.ndarray, gamma_min: float) -> float:
    """Fraction of all UEs below ``gamma_min`` on every carrier."""
    below = gamma.max(axis=1) < gamma_min
    total = scenario.total_ues
    return float(scenario.ue_counts @ below / total) if total else 0.0


def network_unserved_fraction(scenario: Scenario, profile: np.ndarray, params: GameParams) -> float:
    return unserved_share(scenario, profile_sinr(scenario, profile, params), params.gamma_min)


def ecdf(values) -> tuple[np.ndarray, np.ndarray]:
    """Distinct sorted values and the right-continuous empirical CDF at each."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("empty sample")
    x, counts = np.unique(v, return_counts=True)
    return x, np.cumsum(counts) / v.size


def cdf_gap(a, b) -> float:
    """Largest vertical distance between two empirical CDFs."""
    return float(stats.ks_2samp(np.asarray(a, float), np.asarray(b, float)).statistic)


def strategy_histogram(scenario: Scenario, profile: np.ndarray, levels: PowerLevels) -> dict:
    """``{kind: [[count per level] per carrier]}`` over BSs."""
    out = {}
    for kind, mask in ((MACRO, ~scenario.is_micro), (MICRO, scenario.is_micro)):
        out[kind] = [np.bincount(profile[mask, c], minlength=len(levels)).tolist()
                     for c in range(scenario.n_carriers)]
    return out


@dataclass
class RunReport:
    strategy: str
    global_utility: float
    total_power_watts: float
    unserved_fraction: float
    per_user_throughput: np.ndarray
    iterations: list[int] = field(default_factory=list)
    histograms: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.per_user_throughput = np.asarray(self.per_user_throughput, dtype=float)
        if not 0.0 <= self.unserved_fraction <= 1.0:
            raise ValueError("unserved fraction must lie in [0, 1]")

    def summary(self) -> dict:
        thr = self.per_user_throughput
        return {
            "strategy": self.strategy,
            "global_utility": self.global_utility,
            "total_power_watts": self.total_power_watts,
            "unserved_fraction": self.unserved_fraction,
            "mean_throughput_bps": float(thr.mean()) if thr.size else 0.0,
            "median_throughput_bps": float(np.median(thr)) if thr.size else 0.0,
            "mean_iterations": float(np.mean(self.iterations)) if self.iterations else None,
        }

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_user_throughput"] = self.per_user_throughput.tolist()
        return {"schema": REPORT_SCHEMA, "version": REPORT_VERSION, **d}

    def save(self, directory: str | Path, stem: str | None = None) -> tuple[Path, Path]:
        """Write ``<stem>.json`` and ``<stem>_throughput.csv``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        stem = stem or self.strategy
        jp = directory / f"{stem}.json"
        cp = directory / f"{stem}_throughput.csv"
        d = self.to_dict()
        d.pop("per_user_throughput")
        d["summary"] = self.summary()
        jp.write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
        with open(cp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["ue", "throughput_bps"])
            for i, r in enumerate(self.per_user_throughput):
                w.writerow([i, repr(float(r))])
        return jp, cp

    @classmethod
    def load(cls, json_path: str | Path) -> "RunReport":
        jp = Path(json_path)
        d = json.loads(jp.read_text())
        if d.get("schema") != REPORT_SCHEMA or d.get("version") != REPORT_VERSION:
            raise ValueError(f"{jp}: not a version {REPORT_VERSION} run report")
        cp = jp.with_name(jp.stem + "_throughput.csv")
        with open(cp, newline="") as fh:
            thr = [float(row["throughput_bps"]) for row in csv.DictReader(fh)]
        return cls(d["strategy"], d["global_utility"], d["total_power_watts"],
                   d["unserved_fraction"], np.array(thr), d["iterations"], d["histograms"], d["meta"])


def profile_report(scenario: Scenario, profile: np.ndarray, params: GameParams, strategy: str,
                   table: RateTable | None = None, iterations: Sequence[int] = (),
                   meta: dict | None = None) -> RunReport:
    """Report for a plain power profile under distance-based association."""
    table = RateTable.default() if table is None else table
    gamma = profile_sinr(scenario, profile, params)
    thr = expand_users(scenario, tile_user_rates(scenario, gamma, scenario.serving, table,
                                                 params.gamma_min))
    return RunReport(
        strategy=strategy,
        global_utility=global_utility(scenario, profile, params),
        total_power_watts=total_power(scenario, profile, params.levels),
        unserved_fraction=unserved_share(scenario, gamma, params.gamma_min),
        per_user_throughput=thr,
        iterations=[int(i) for i in iterations],
        histograms=strategy_histogram(scenario, profile, params.levels),
        meta=dict(meta or {}),
    )
