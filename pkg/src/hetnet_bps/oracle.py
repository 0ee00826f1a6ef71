"""Brute-force ground truth for toy instances.

Nothing here shares arithmetic with :mod:`hetnet_bps.solver` or
:mod:`hetnet_bps.game`: payoffs are re-summed tile by tile from the raw
scenario arrays and every candidate is evaluated from scratch.  The dense
tables used for joint enumeration are likewise built with explicit loops
over base stations.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .game import GameParams
from .scenario import Scenario

TIE_TOL = 1e-9
BEST_REPLY_GUARD = 10**7
JOINT_GUARD = 10**8
NE_GUARD = 10**7


class OracleGuardError(ValueError):
    """The requested enumeration is larger than the oracle allows."""


# ---------------------------------------------------------------------------
# scalar re-summation
# ---------------------------------------------------------------------------


def _link_quality(scenario: Scenario, bs: int, carrier: int) -> float:
    vals = [scenario.attenuation[bs, z, carrier] for z in range(len(scenario.tiles))
            if scenario.tiles[z].serving == bs]
    return sum(vals) / len(vals) if vals else 0.0


def _power(scenario: Scenario, profile, params: GameParams, bs: int, carrier: int) -> float:
    return params.levels.fractions[int(profile[bs][carrier])] * scenario.base_stations[bs].max_power


def oracle_sinr(scenario: Scenario, profile, params: GameParams, tile: int, carrier: int) -> float:
    srv = scenario.tiles[tile].serving
    team = scenario.base_stations[srv].team_id
    signal = _power(scenario, profile, params, srv, carrier) * scenario.attenuation[srv, tile, carrier]
    intra = 0.0
    inter = 0.0
    for b in scenario.base_stations:
        if b.id == srv:
            continue
        rx = _power(scenario, profile, params, b.id, carrier) * scenario.attenuation[b.id, tile, carrier]
        if b.team_id == team:
            intra += rx
        else:
            inter += rx
    return signal / (params.noise + intra + inter)


@dataclass
class Evaluation:
    payoff: float
    utility: float
    cost: float
    unserved: float
    total_watts: float


def evaluate_team(scenario: Scenario, profile, team: int, params: GameParams,
                  carriers: Iterable[int] | None = None) -> Evaluation:
    """Team payoff over ``carriers`` (default: all), straight from the equations."""
    cs = range(scenario.n_carriers) if carriers is None else sorted(set(carriers))
    t = scenario.teams[team]
    e_total = sum(scenario.tiles[z].ue_count for z in t.tiles)
    util = 0.0
    unserved = 0.0
    for z in t.tiles:
        weight = scenario.tiles[z].ue_count / e_total if e_total else 0.0
        served = False
        for c in cs:
            g = oracle_sinr(scenario, profile, params, z, c)
            util += weight / (1.0 + math.exp(-params.alpha * (g - params.beta)))
            if g >= params.gamma_min:
                served = True
        if not served:
            unserved += weight
    pcost = 0.0
    watts_total = 0.0
    for b in t.locations:
        for c in cs:
            p = _power(scenario, profile, params, b, c)
            pcost += _link_quality(scenario, b, c) * p
            watts_total += p
    cost = params.xi_for(team) * pcost + params.delta * unserved
    return Evaluation(util - cost, util, cost, unserved, watts_total)


def _preferred(entries):
    """entries: (payoff, total_watts, micro_levels, index) -> the argmax* entry."""
    best = max(e[0] for e in entries)
    tied = [e for e in entries if e[0] >= best - TIE_TOL]
    return min(tied, key=lambda e: (round(e[1], 9), tuple(-x for x in e[2]), e[3]))


def exhaustive_best_reply(scenario: Scenario, profile, team: int, carrier: int,
                          params: GameParams, settled: Iterable[int] = ()) -> np.ndarray:
    """Scan every power vector of ``team`` on ``carrier``; payoff over settled + carrier."""
    locs = scenario.teams[team].locations
    n_lev = len(params.levels)
    if n_lev ** len(locs) > BEST_REPLY_GUARD:
        raise OracleGuardError(f"{n_lev}^{len(locs)} candidates exceed {BEST_REPLY_GUARD}")
    cs = sorted(set(settled) | {carrier})
    work = [[int(v) for v in row] for row in np.asarray(profile)]
    entries = []
    combos = list(itertools.product(range(n_lev), repeat=len(locs)))
    for idx, combo in enumerate(combos):
        for b, k in zip(locs, combo):
            work[b][carrier] = k
        payoff = evaluate_team(scenario, work, team, params, cs).payoff
        watts = sum(params.levels.fractions[k] * scenario.base_stations[b].max_power
                    for b, k in zip(locs, combo))
        entries.append((payoff, watts, combo[1:], idx))
    return np.array(combos[_preferred(entries)[3]], dtype=np.int64)


# ---------------------------------------------------------------------------
# dense per-carrier tables
# ---------------------------------------------------------------------------


@dataclass
class CarrierTable:
    """Per-team terms for every joint power vector on one carrier."""

    carrier: int
    joint: np.ndarray  # (Q, B) level indices
    utility: np.ndarray  # (Q, T)
    power_cost: np.ndarray  # (Q, T) already multiplied by xi
    below: np.ndarray  # (Q, Z) SINR < gamma_min
    watts: np.ndarray  # (Q,) total transmitted on this carrier
    team_watts: np.ndarray = field(default=None)  # (Q, T)


def carrier_table(scenario: Scenario, params: GameParams, carrier: int) -> CarrierTable:
    n_bs = scenario.n_bs
    n_lev = len(params.levels)
    q = n_lev ** n_bs
    if q > NE_GUARD:
        raise OracleGuardError(f"{q} joint vectors exceed {NE_GUARD}")
    joint = np.array(list(itertools.product(range(n_lev), repeat=n_bs)), dtype=np.int64)
    frac = np.array(params.levels.fractions)
    p = np.stack([frac[joint[:, b]] * scenario.base_stations[b].max_power for b in range(n_bs)],
                 axis=1)
    n_tiles = len(scenario.tiles)
    gamma = np.zeros((q, n_tiles))
    for z, tile in enumerate(scenario.tiles):
        denom = np.full(q, params.noise)
        for b in range(n_bs):
            if b != tile.serving:
                denom = denom + p[:, b] * scenario.attenuation[b, z, carrier]
        gamma[:, z] = p[:, tile.serving] * scenario.attenuation[tile.serving, z, carrier] / denom
    sig = 1.0 / (1.0 + np.exp(-params.alpha * (gamma - params.beta)))
    n_teams = len(scenario.teams)
    util = np.zeros((q, n_teams))
    pcost = np.zeros((q, n_teams))
    twatts = np.zeros((q, n_teams))
    for t in scenario.teams:
        e_total = sum(scenario.tiles[z].ue_count for z in t.tiles)
        for z in t.tiles:
            if e_total:
                util[:, t.id] += scenario.tiles[z].ue_count / e_total * sig[:, z]
        for b in t.locations:
            pcost[:, t.id] += _link_quality(scenario, b, carrier) * p[:, b]
            twatts[:, t.id] += p[:, b]
        pcost[:, t.id] *= params.xi_for(t.id)
    return CarrierTable(carrier, joint, util, pcost, gamma < params.gamma_min, p.sum(axis=1), twatts)


def _team_weight_vectors(scenario: Scenario) -> np.ndarray:
    """(T, Z) matrix of E_z / E_t on each team's tiles, zero elsewhere."""
    w = np.zeros((len(scenario.teams), len(scenario.tiles)))
    for t in scenario.teams:
        e_total = sum(scenario.tiles[z].ue_count for z in t.tiles)
        for z in t.tiles:
            if e_total:
                w[t.id, z] = scenario.tiles[z].ue_count / e_total
    return w


def carrier_payoffs(scenario: Scenario, params: GameParams, carrier: int,
                    profile=None, settled: Iterable[int] = ()) -> tuple[CarrierTable, np.ndarray]:
    """Per-team payoff ``(Q, T)`` of every joint vector on ``carrier``.

    Settled carriers are held at ``profile`` and contribute utility, power cost
    and coverage exactly as in the sequential game.
    """
    tab = carrier_table(scenario, params, carrier)
    settled = sorted(set(settled) - {carrier})
    n_teams = len(scenario.teams)
    const = np.zeros(n_teams)
    unserved_prev = np.ones(len(scenario.tiles), dtype=bool)
    if settled:
        for t in range(n_teams):
            ev = evaluate_team(scenario, profile, t, params, settled)
            const[t] = ev.utility - (ev.cost - params.delta * ev.unserved)
        for z in range(len(scenario.tiles)):
            unserved_prev[z] = all(oracle_sinr(scenario, profile, params, z, c) < params.gamma_min
                                   for c in settled)
    weights = _team_weight_vectors(scenario)
    e = (tab.below & unserved_prev).astype(float) @ weights.T  # (Q, T)
    payoff = const + tab.utility - tab.power_cost - params.delta * e
    return tab, payoff


# ---------------------------------------------------------------------------
# equilibria
# ---------------------------------------------------------------------------


def _reply_map(scenario: Scenario, params: GameParams, tab: CarrierTable,
               payoff: np.ndarray) -> np.ndarray:
    """``br[q, t]``: True where team t's part of q is its argmax* against the rest of q."""
    n_lev = len(params.levels)
    q, n_bs = tab.joint.shape
    br = np.zeros((q, len(scenario.teams)), dtype=bool)
    place = n_lev ** np.arange(n_bs - 1, -1, -1)
    for t in scenario.teams:
        locs = list(t.locations)
        rest = [b for b in range(n_bs) if b not in locs]
        key = tab.joint[:, rest] @ place[rest] if rest else np.zeros(q, dtype=np.int64)
        for k in np.unique(key):
            members = np.flatnonzero(key == k)
            entries = [(payoff[m, t.id], tab.team_watts[m, t.id],
                        tuple(tab.joint[m, locs[1:]]), tuple(tab.joint[m, locs])) for m in members]
            best = _preferred(entries)
            winner = members[[e[3] for e in entries].index(best[3])]
            br[winner, t.id] = True
    return br


def enumerate_nes(scenario: Scenario, params: GameParams, carrier: int,
                  profile=None, settled: Iterable[int] = ()) -> list[np.ndarray]:
    """Every pure fixed point of the argmax* best-reply map on ``carrier``.

    Returns full profiles (other carriers copied from ``profile`` or zero).
    """
    tab, payoff = carrier_payoffs(scenario, params, carrier, profile, settled)
    br = _reply_map(scenario, params, tab, payoff)
    base = (np.zeros((scenario.n_bs, scenario.n_carriers), dtype=np.int64) if profile is None
            else np.array(profile, dtype=np.int64))
    out = []
    for m in np.flatnonzero(br.all(axis=1)):
        prof = base.copy()
        prof[:, carrier] = tab.joint[m]
        out.append(prof)
    return out


@dataclass
class NECheck:
    is_ne: bool
    team: int | None = None
    carrier: int | None = None
    deviation: np.ndarray | None = None
    gain: float = 0.0
    checked: int = 0


def verify_ne(scenario: Scenario, profile, params: GameParams,
              carriers: Iterable[int] | None = None, samples: int | None = None,
              seed: int = 0, sequential: bool = False) -> NECheck:
    """Look for a strictly improving single-(team, carrier) column change.

    Payoffs cover all carriers, or with ``sequential`` only the carriers
    played up to and including the deviating one (highest frequency first).
    With ``samples`` set, that many random deviations per (team, carrier) are
    drawn instead of the full scan.
    """
    cs = range(scenario.n_carriers) if carriers is None else sorted(set(carriers))
    freq = [scenario.carriers[c].center_frequency for c in range(scenario.n_carriers)]
    n_lev = len(params.levels)
    rng = np.random.default_rng(seed)
    prof = np.array(profile, dtype=np.int64)
    checked = 0
    for t in scenario.teams:
        locs = list(t.locations)
        for c in cs:
            scope = ([d for d in range(scenario.n_carriers) if freq[d] >= freq[c]]
                     if sequential else None)
            base = evaluate_team(scenario, prof, t.id, params, scope).payoff
            if samples is None:
                devs = itertools.product(range(n_lev), repeat=len(locs))
            else:
                devs = (tuple(rng.integers(n_lev, size=len(locs))) for _ in range(samples))
            for combo in devs:
                if tuple(prof[locs, c]) == tuple(combo):
                    continue
                trial = prof.copy()
                trial[locs, c] = combo
                checked += 1
                gain = evaluate_team(scenario, trial, t.id, params, scope).payoff - base
                if gain > TIE_TOL:
                    return NECheck(False, t.id, c, np.array(combo), gain, checked)
    return NECheck(True, checked=checked)


# ---------------------------------------------------------------------------
# joint optimum
# ---------------------------------------------------------------------------


@dataclass
class JointOptimum:
    profile: np.ndarray
    objective: float
    team_payoffs: np.ndarray
    team_utilities: np.ndarray


def exhaustive_joint_optimum(scenario: Scenario, params: GameParams,
                             objective: str = "payoff_sum") -> JointOptimum:
    """Global maximiser over every team, location and carrier simultaneously.

    Ties (within ``TIE_TOL``) go to the lowest total power, then the lowest
    joint index.
    """
    if objective not in ("payoff_sum", "utility_sum"):
        raise ValueError(f"unknown objective {objective!r}")
    n_lev = len(params.levels)
    size = n_lev ** (scenario.n_bs * scenario.n_carriers)
    if size > JOINT_GUARD:
        raise OracleGuardError(f"{size} joint profiles exceed {JOINT_GUARD}")
    tabs = [carrier_table(scenario, params, c) for c in range(scenario.n_carriers)]
    weights = _team_weight_vectors(scenario)
    n_teams = len(scenario.teams)
    q = len(tabs[0].joint)

    best = None  # (objective, watts, combo)
    # outer loop over all carriers but the last, vectorised over the last
    last = tabs[-1]
    for head in itertools.product(range(q), repeat=scenario.n_carriers - 1):
        util = last.utility.copy()
        pcost = last.power_cost.copy()
        watts = last.watts.copy()
        still = last.below.copy()
        for tab, h in zip(tabs[:-1], head):
            util += tab.utility[h]
            pcost += tab.power_cost[h]
            watts += tab.watts[h]
            still &= tab.below[h]
        e = still.astype(float) @ weights.T
        payoff = util - pcost - params.delta * e
        obj = (payoff if objective == "payoff_sum" else util).sum(axis=1)
        top = obj.max()
        tied = np.flatnonzero(obj >= top - TIE_TOL)
        w_tied = np.round(watts[tied], 9)
        pick = tied[w_tied == w_tied.min()][0]
        cand = (obj[pick], round(watts[pick], 9), (*head, pick), payoff[pick], util[pick])
        if best is None or cand[0] > best[0] + TIE_TOL or (
                abs(cand[0] - best[0]) <= TIE_TOL and cand[1] < best[1]):
            best = cand
    prof = np.zeros((scenario.n_bs, scenario.n_carriers), dtype=np.int64)
    for c, m in enumerate(best[2]):
        prof[:, c] = tabs[c].joint[m]
    return JointOptimum(prof, float(best[0]), np.asarray(best[3]), np.asarray(best[4]))
