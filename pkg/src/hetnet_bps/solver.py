"""Best-reply power setting: per-carrier team best replies and their dynamics.

Each carrier is played as its own game, from the highest centre frequency
down.  Within a carrier game teams take turns (fixed order) computing a best
reply by scanning all ``|P|^L`` power vectors for their locations, until one
full round passes with no team changing its choice.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._kernels import score_candidates
from .game import (GameParams, mean_link_quality, sigmoid, team_payoff, tile_weights, watts,
                   zero_profile)
from .scenario import Scenario

log = logging.getLogger(__name__)

# payoffs closer than this are treated as equal and resolved by preference
TIE_TOL = 1e-9
MAX_ROUNDS = 100


class ConvergenceError(RuntimeError):
    def __init__(self, msg: str, trace: "GameTrace"):
        super().__init__(msg)
        self.trace = trace


@lru_cache(maxsize=16)
def candidate_matrix(n_levels: int, n_locations: int) -> np.ndarray:
    """All level-index vectors, lexicographic with the first location most significant."""
    grids = np.indices((n_levels,) * n_locations).reshape(n_locations, -1).T
    grids = np.ascontiguousarray(grids, dtype=np.int64)
    grids.setflags(write=False)
    return grids


def argmax_star(payoff: np.ndarray, total_watts: np.ndarray, candidates: np.ndarray) -> int:
    """Index of the preferred maximiser.

    Near-equal payoffs (within ``TIE_TOL``) are resolved by: lowest total power,
    then the lexicographically larger micro power vector (micros listed by
    distance to the macro, i.e. columns 1..L-1), then the lowest index.
    """
    best = payoff.max()
    tie = np.flatnonzero(payoff >= best - TIE_TOL)
    if len(tie) == 1:
        return int(tie[0])
    tot = np.round(total_watts[tie], 9)
    tie = tie[tot == tot.min()]
    for col in range(1, candidates.shape[1]):
        if len(tie) == 1:
            break
        v = candidates[tie, col]
        tie = tie[v == v.max()]
    return int(tie.min())


@dataclass(frozen=True)
class TeamView:
    """Team-local slices of the scenario reused by every best reply."""

    locations: np.ndarray  # (L,) bs ids
    tiles: np.ndarray  # (Z,) tile ids
    serving_local: np.ndarray  # (Z,) index into locations
    weights: np.ndarray  # (Z,) E_z / E_t
    gain_own: np.ndarray  # (L, Z, C)
    gain_all: np.ndarray  # (B, Z, C)
    other_locs: np.ndarray  # (L, Z) True where location l does not serve tile z
    abar: np.ndarray  # (L, C)
    max_power: np.ndarray  # (L,)
    own_mask: np.ndarray  # (B,) True for this team's BSs

    @classmethod
    def build(cls, scenario: Scenario, team: int, abar: np.ndarray | None = None) -> "TeamView":
        t = scenario.teams[team]
        locs = np.asarray(t.locations, dtype=np.int64)
        tiles = np.asarray(t.tiles, dtype=np.int64)
        pos = {b: i for i, b in enumerate(locs)}
        srv_local = np.array([pos[b] for b in scenario.serving[tiles]], dtype=np.int64)
        abar = mean_link_quality(scenario) if abar is None else abar
        gain_all = scenario.attenuation[:, tiles, :]
        return cls(
            locations=locs,
            tiles=tiles,
            serving_local=srv_local,
            weights=tile_weights(scenario, team),
            gain_own=gain_all[locs],
            gain_all=gain_all,
            other_locs=np.arange(len(locs))[:, None] != srv_local[None, :],
            abar=abar[locs],
            max_power=scenario.max_power[locs],
            own_mask=scenario.bs_team == team,
        )


def team_views(scenario: Scenario) -> list[TeamView]:
    abar = mean_link_quality(scenario)
    return [TeamView.build(scenario, t, abar) for t in range(len(scenario.teams))]


@dataclass
class Reply:
    column: np.ndarray  # (L,) level indices
    payoff: float
    utility: float
    cost: float
    total_watts: float


def _settled_terms(view: TeamView, p_all: np.ndarray, team: int, params: GameParams,
                   settled: Sequence[int]):
    """Utility, power cost and still-unserved mask contributed by settled carriers."""
    z = len(view.tiles)
    if not settled:
        return 0.0, 0.0, np.ones(z, dtype=bool)
    cs = list(settled)
    p = p_all[:, cs]
    a = view.gain_all[:, :, cs]
    p_other = np.where(view.own_mask[:, None], 0.0, p)
    inter = np.einsum("bc,bzc->zc", p_other, a)
    p_own = p[view.locations]
    a_own = view.gain_own[:, :, cs]
    intra = np.einsum("lc,lzc,lz->zc", p_own, a_own, view.other_locs)
    signal = p_own[view.serving_local] * a_own[view.serving_local, np.arange(z)]
    g = signal / (params.noise + intra + inter)
    util = float(view.weights @ sigmoid(g, params.alpha, params.beta).sum(axis=1))
    pcost = params.xi_for(team) * float((view.abar[:, cs] * p_own).sum())
    unserved = g.max(axis=1) < params.gamma_min
    return util, pcost, unserved


def best_reply(
    scenario: Scenario,
    profile: np.ndarray,
    team: int,
    carrier: int,
    params: GameParams,
    settled: Iterable[int] = (),
    view: TeamView | None = None,
    background: np.ndarray | float = 0.0,
) -> Reply:
    """Best power vector for one team on one carrier against the frozen rest of ``profile``.

    ``settled`` are carriers whose games are already decided; their utility,
    power cost and coverage enter the payoff unchanged.  ``background`` is
    extra interference (W) added on every team tile.
    """
    settled = sorted(set(settled) - {carrier})
    view = TeamView.build(scenario, team) if view is None else view
    levels = params.levels.array
    cand = candidate_matrix(len(levels), len(view.locations))
    p_all = watts(scenario, profile, params.levels)

    u_set, pc_set, unserved_prev = _settled_terms(view, p_all, team, params, settled)
    p_c = np.where(view.own_mask, 0.0, p_all[:, carrier])
    inter = p_c @ view.gain_all[:, :, carrier] + background
    denom0 = params.noise + inter  # (Z,)
    g_own = view.gain_own[:, :, carrier]  # (L, Z)
    g_intra = g_own * view.other_locs
    g_serv = g_own[view.serving_local, np.arange(len(view.tiles))]  # (Z,)
    xi = params.xi_for(team)
    abar_c = view.abar[:, carrier]
    w_unserved = view.weights * unserved_prev

    n = len(cand)
    payoff = np.empty(n)
    util = np.empty(n)
    cost = np.empty(n)
    totals = np.empty(n)
    score_candidates(levels, view.max_power, view.serving_local, g_serv,
                     np.ascontiguousarray(g_intra), np.ascontiguousarray(denom0, dtype=float),
                     view.weights, w_unserved.astype(float), np.ascontiguousarray(abar_c),
                     float(params.alpha), float(params.beta), float(params.gamma_min), xi,
                     float(params.delta), u_set, pc_set, payoff, util, cost, totals)
    i = argmax_star(payoff, totals, cand)
    return Reply(cand[i].copy(), float(payoff[i]), float(util[i]), float(cost[i]), float(totals[i]))


def best_reply_single_carrier(scenario, profile, team, carrier, params, settled=(), **kw) -> np.ndarray:
    """Chosen level indices ``(L,)`` for ``team`` on ``carrier``."""
    return best_reply(scenario, profile, team, carrier, params, settled, **kw).column


# ---------------------------------------------------------------------------
# dynamics
# ---------------------------------------------------------------------------


@dataclass
class TraceEvent:
    round: int
    team: int
    carrier: int
    strategy: tuple[int, ...]
    payoff: float
    utility: float
    cost: float
    total_watts: float
    changed: bool


@dataclass
class Cycle:
    """A periodic orbit of the round-robin dynamics on one carrier."""

    carrier: int
    first_round: int  # round whose end state recurs
    period: int  # in rounds
    teams: list[int]  # teams whose column differs across the orbit
    kept_round: int  # end-of-round state returned


@dataclass
class GameTrace:
    events: list[TraceEvent] = field(default_factory=list)
    rounds: dict[int, int] = field(default_factory=dict)
    iterations: dict[int, list[int]] = field(default_factory=dict)  # carrier -> per team
    cycles: dict[int, "Cycle"] = field(default_factory=dict)
    converged: bool = True

    def extend(self, other: "GameTrace") -> None:
        self.events.extend(other.events)
        self.rounds.update(other.rounds)
        self.iterations.update(other.iterations)
        self.cycles.update(other.cycles)
        self.converged = self.converged and other.converged

    def cycling_teams(self) -> list[int]:
        return sorted({t for cyc in self.cycles.values() for t in cyc.teams})

    def per_team_iterations(self) -> np.ndarray:
        """BPS runs each team needed to reach its final choice, summed over carriers."""
        if not self.iterations:
            return np.zeros(0, dtype=int)
        return np.sum([np.asarray(v) for v in self.iterations.values()], axis=0)

    def mean_iterations(self) -> float:
        it = self.per_team_iterations()
        return float(it.mean()) if len(it) else 0.0

    CSV_FIELDS = ("iteration", "round", "team", "carrier", "payoff", "utility", "cost",
                  "total_watts", "changed", "strategy")

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(self.CSV_FIELDS)
            for i, e in enumerate(self.events):
                wr.writerow([i, e.round, e.team, e.carrier, repr(e.payoff), repr(e.utility),
                             repr(e.cost), repr(e.total_watts), int(e.changed),
                             " ".join(map(str, e.strategy))])


def play_carrier_game(
    scenario: Scenario,
    carrier: int,
    params: GameParams,
    settled: Iterable[int] = (),
    profile: np.ndarray | None = None,
    team_order: Sequence[int] | None = None,
    max_rounds: int = MAX_ROUNDS,
    views: Sequence[TeamView] | None = None,
    on_cycle: str = "resolve",
) -> tuple[np.ndarray, GameTrace]:
    """Round-robin best replies on ``carrier`` from all-zero power until a quiet round.

    The dynamics are deterministic, so an end-of-round state seen before proves
    a cycle.  ``on_cycle="raise"`` turns that into :class:`ConvergenceError`;
    ``"resolve"`` stops there, keeps the orbit state with the highest summed
    team payoff and records the cycle in the trace (``converged`` is False).
    """
    if on_cycle not in ("raise", "resolve"):
        raise ValueError("on_cycle must be 'raise' or 'resolve'")
    settled = sorted(set(settled) - {carrier})
    prof = zero_profile(scenario) if profile is None else np.array(profile, dtype=np.int64)
    prof[:, carrier] = 0
    n_teams = len(scenario.teams)
    order = list(range(n_teams)) if team_order is None else list(team_order)
    views = team_views(scenario) if views is None else views
    trace = GameTrace()
    last_change = [1] * n_teams
    stale = [True] * n_teams  # someone else moved since this team last replied
    cached: dict[int, Reply] = {}
    seen: dict[bytes, int] = {}
    snapshots: list[np.ndarray] = []
    for rnd in range(1, max_rounds + 1):
        changed_any = False
        for t in order:
            if stale[t] or t not in cached:
                cached[t] = best_reply(scenario, prof, t, carrier, params, settled, views[t])
                stale[t] = False
            r = cached[t]
            locs = views[t].locations
            changed = not np.array_equal(prof[locs, carrier], r.column)
            if changed:
                prof[locs, carrier] = r.column
                last_change[t] = rnd
                changed_any = True
                for o in order:
                    if o != t:
                        stale[o] = True
            trace.events.append(TraceEvent(rnd, t, carrier, tuple(int(x) for x in r.column),
                                           r.payoff, r.utility, r.cost, r.total_watts, changed))
        trace.rounds[carrier] = rnd
        trace.iterations[carrier] = last_change
        if not changed_any:
            log.debug("carrier %d converged after %d rounds", carrier, rnd)
            return prof, trace
        key = prof[:, carrier].tobytes()
        snapshots.append(prof[:, carrier].copy())
        if key in seen:
            first = seen[key]
            orbit = snapshots[first:]  # states at the end of rounds first+1 .. rnd
            teams = sorted({int(scenario.bs_team[b]) for b in
                            np.flatnonzero((np.array(orbit) != orbit[0]).any(axis=0))})
            trace.converged = False
            if on_cycle == "raise":
                raise ConvergenceError(
                    f"carrier {carrier}: best replies cycle with period {rnd - first} "
                    f"(teams {teams})", trace)
            scores = []
            for col in orbit:
                trial = prof.copy()
                trial[:, carrier] = col
                scores.append(_global_payoff(scenario, trial, params, [*settled, carrier], views))
            k = int(np.argmax(scores))
            prof[:, carrier] = orbit[k]
            trace.cycles[carrier] = Cycle(carrier, first, rnd - first, teams, first + 1 + k)
            log.warning("carrier %d: best replies cycle among teams %s; keeping round %d state",
                        carrier, teams, first + 1 + k)
            return prof, trace
        seen[key] = rnd
    trace.converged = False
    raise ConvergenceError(
        f"carrier {carrier}: no fixed point after {max_rounds} rounds", trace)


def _global_payoff(scenario, profile, params, carriers, views) -> float:
    abar = np.zeros((scenario.n_bs, scenario.n_carriers))
    for v in views:
        abar[v.locations] = v.abar
    return sum(team_payoff(scenario, profile, t, params, carriers, abar)
               for t in range(len(scenario.teams)))


def run_multicarrier(
    scenario: Scenario,
    params: GameParams,
    team_order: Sequence[int] | None = None,
    max_rounds: int = MAX_ROUNDS,
    on_cycle: str = "resolve",
) -> tuple[np.ndarray, GameTrace]:
    """Play every carrier, highest frequency first; decided carriers stay fixed."""
    prof = zero_profile(scenario)
    views = team_views(scenario)
    trace = GameTrace()
    settled: list[int] = []
    for c in scenario.play_order():
        try:
            prof, tr = play_carrier_game(scenario, c, params, settled, prof, team_order,
                                         max_rounds, views, on_cycle)
        except ConvergenceError as err:
            trace.extend(err.trace)
            raise ConvergenceError(str(err), trace) from None
        trace.extend(tr)
        settled.append(c)
    return prof, trace
