"""Comparison strategies: fixed max/min power and the two ABS-based ICIC schemes.

eICIC and LP-ABS run every BS at full power on all carriers, move users to
micros with a range-expansion bias on the pilot, and protect them during a
fraction of subframes in which macros mute or back off.  ABS is modelled as a
time share, not a subframe bitmap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .game import GameParams, PowerLevels, global_utility_from_sinr, network_sinr
from .metrics import (RateTable, RunReport, expand_users, profile_report, tile_user_rates)
from .scenario import Scenario, _pick_sector

MAX_POWER = "max_power"
MIN_POWER = "min_power"
EICIC = "eicic"
LP_ABS = "lp_abs"
KINDS = (MAX_POWER, MIN_POWER, EICIC, LP_ABS)
PILOT_FREQUENCY = 1.8e9


@dataclass(frozen=True)
class BaselineConfig:
    kind: str
    cre_bias_db: float = 0.0
    abs_ratio: float = 0.0
    abs_macro_reduction_db: float = math.inf  # inf mutes macros during ABS

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown baseline {self.kind!r}")
        if not 0.0 <= self.abs_ratio <= 1.0:
            raise ValueError("abs_ratio must lie in [0, 1]")
        if self.abs_macro_reduction_db < 0:
            raise ValueError("macro power reduction must be >= 0 dB")

    @classmethod
    def eicic(cls, cre_bias_db: float = 8.0, abs_ratio: float = 0.25) -> "BaselineConfig":
        return cls(EICIC, cre_bias_db, abs_ratio, math.inf)

    @classmethod
    def lp_abs(cls, cre_bias_db: float = 6.0, abs_ratio: float = 0.5,
               reduction_db: float = 6.0) -> "BaselineConfig":
        return cls(LP_ABS, cre_bias_db, abs_ratio, reduction_db)

    @classmethod
    def named(cls, kind: str) -> "BaselineConfig":
        if kind == EICIC:
            return cls.eicic()
        if kind == LP_ABS:
            return cls.lp_abs()
        return cls(kind)

    @property
    def uses_abs(self) -> bool:
        return self.kind in (EICIC, LP_ABS)

    @property
    def abs_macro_scale(self) -> float:
        """Linear factor on macro power during ABS subframes."""
        if math.isinf(self.abs_macro_reduction_db):
            return 0.0
        return 10.0 ** (-self.abs_macro_reduction_db / 10.0)


def fixed_profile(kind: str, scenario: Scenario, levels: PowerLevels) -> np.ndarray:
    """Every entry at full power (``max``) or the lowest non-zero level (``min``)."""
    if kind in ("max", MAX_POWER):
        idx = len(levels) - 1
    elif kind in ("min", MIN_POWER):
        idx = 1
    else:
        raise ValueError(f"fixed profile kind must be max or min, got {kind!r}")
    return np.full((scenario.n_bs, scenario.n_carriers), idx, dtype=np.int64)


def pilot_carrier(scenario: Scenario, frequency: float = PILOT_FREQUENCY) -> int:
    """Carrier whose centre frequency is closest to ``frequency``."""
    f = np.array([c.center_frequency for c in scenario.carriers])
    return int(np.argmin(np.abs(f - frequency)))


def biased_association(scenario: Scenario, bias_db: float, carrier: int | None = None) -> np.ndarray:
    """Serving BS per tile: strongest full-power pilot plus ``bias_db`` for micros.

    Exact ties (co-sited omni sectors) are split by sector wedge.
    """
    c = pilot_carrier(scenario) if carrier is None else carrier
    p_dbm = 10.0 * np.log10(scenario.max_power * 1e3)
    rx = p_dbm[:, None] + 10.0 * np.log10(scenario.attenuation[:, :, c])
    rx = rx + np.where(scenario.is_micro, bias_db, 0.0)[:, None]
    best = np.argmax(rx, axis=0)
    top = rx[best, np.arange(rx.shape[1])]
    tied = np.flatnonzero((rx >= top - 1e-9).sum(axis=0) > 1)
    centers = scenario.tile_centers
    for z in tied:
        cands = np.flatnonzero(rx[:, z] >= top[z] - 1e-9)
        best[z] = _pick_sector(scenario.base_stations, cands, centers[z])
    return best


def regime_powers(scenario: Scenario, config: BaselineConfig) -> tuple[np.ndarray, np.ndarray]:
    """Transmit watts ``[bs, c]`` outside and during ABS subframes."""
    full = np.repeat(scenario.max_power[:, None], scenario.n_carriers, axis=1)
    protected = full.copy()
    protected[~scenario.is_micro] *= config.abs_macro_scale
    return full, protected


def abs_sinr(scenario: Scenario, config: BaselineConfig, serving: np.ndarray,
             noise: float) -> tuple[np.ndarray, np.ndarray]:
    """Linear SINR ``[tile, c]`` outside and during ABS subframes."""
    full, protected = regime_powers(scenario, config)
    return (network_sinr(scenario, full, serving, noise),
            network_sinr(scenario, protected, serving, noise))


def abs_throughput(scenario: Scenario, config: BaselineConfig, params: GameParams,
                   table: RateTable | None = None) -> np.ndarray:
    """Per-UE throughput in each tile, time-averaged over the two subframe regimes."""
    table = RateTable.default() if table is None else table
    serving = biased_association(scenario, config.cre_bias_db)
    normal, protected = abs_sinr(scenario, config, serving, params.noise)
    r = config.abs_ratio
    return ((1.0 - r) * tile_user_rates(scenario, normal, serving, table, params.gamma_min)
            + r * tile_user_rates(scenario, protected, serving, table, params.gamma_min))


def abs_report(scenario: Scenario, config: BaselineConfig, params: GameParams,
               table: RateTable | None = None) -> RunReport:
    """Utility and power are time averages; a UE is unserved if it never meets the threshold."""
    table = RateTable.default() if table is None else table
    serving = biased_association(scenario, config.cre_bias_db)
    normal, protected = abs_sinr(scenario, config, serving, params.noise)
    r = config.abs_ratio
    full, low = regime_powers(scenario, config)
    utility = ((1.0 - r) * global_utility_from_sinr(scenario, normal, params)
               + r * global_utility_from_sinr(scenario, protected, params))
    never = np.ones(len(serving), dtype=bool)
    if r < 1.0:
        never &= normal.max(axis=1) < params.gamma_min
    if r > 0.0:
        never &= protected.max(axis=1) < params.gamma_min
    rates = ((1.0 - r) * tile_user_rates(scenario, normal, serving, table, params.gamma_min)
             + r * tile_user_rates(scenario, protected, serving, table, params.gamma_min))
    return RunReport(
        strategy=config.kind,
        global_utility=float(utility),
        total_power_watts=float((1.0 - r) * full.sum() + r * low.sum()),
        unserved_fraction=float(scenario.ue_counts @ never / max(scenario.total_ues, 1)),
        per_user_throughput=expand_users(scenario, rates),
        meta={"cre_bias_db": config.cre_bias_db, "abs_ratio": r,
              # None means muted
              "abs_macro_reduction_db": (None if math.isinf(config.abs_macro_reduction_db)
                                         else config.abs_macro_reduction_db),
              "micro_served_tiles": int(scenario.is_micro[serving].sum())},
    )


def baseline_report(scenario: Scenario, config: BaselineConfig, params: GameParams,
                    table: RateTable | None = None) -> RunReport:
    if config.uses_abs:
        return abs_report(scenario, config, params, table)
    prof = fixed_profile(config.kind, scenario, params.levels)
    return profile_report(scenario, prof, params, config.kind, table)


__all__ = [
    "BaselineConfig", "EICIC", "KINDS", "LP_ABS", "MAX_POWER", "MIN_POWER", "abs_report",
    "abs_sinr", "abs_throughput", "baseline_report", "biased_association", "fixed_profile",
    "pilot_carrier", "regime_powers",
]
