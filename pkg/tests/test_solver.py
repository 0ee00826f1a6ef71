import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetnet_bps import oracle
from hetnet_bps.game import GameParams, calibrate_xi, team_payoff, zero_profile
from hetnet_bps.scenario import DEFAULT_CARRIERS, toy_scenario
from hetnet_bps.solver import (ConvergenceError, argmax_star, best_reply, candidate_matrix,
                               play_carrier_game, run_multicarrier)


def calibrated(sc, k=0.25, **kw):
    p = GameParams(**kw)
    return p.with_(xi=calibrate_xi(sc, k, p))


def test_candidate_matrix_first_location_most_significant():
    c = candidate_matrix(3, 2)
    assert c.shape == (9, 2)
    assert c[:4].tolist() == [[0, 0], [0, 1], [0, 2], [1, 0]]
    assert not c.flags.writeable


def test_argmax_star_prefers_lower_power():
    cand = np.array([[0, 1], [1, 0], [2, 0]])
    pay = np.array([1.0, 1.0, 0.5])
    assert argmax_star(pay, np.array([5.0, 3.0, 0.0]), cand) == 1


def test_argmax_star_treats_near_equal_as_tie():
    cand = np.array([[0, 1], [1, 0]])
    assert argmax_star(np.array([1.0, 1.0 + 1e-12]), np.array([3.0, 5.0]), cand) == 0
    assert argmax_star(np.array([1.0, 1.0 + 1e-6]), np.array([3.0, 5.0]), cand) == 1


def test_argmax_star_prefers_power_on_nearer_micro():
    # same payoff and total: the vector with more power on the first micro wins
    cand = np.array([[0, 0, 2], [0, 2, 0], [0, 1, 1]])
    pay = np.zeros(3)
    assert argmax_star(pay, np.full(3, 2.0), cand) == 1


def test_argmax_star_falls_back_to_index():
    cand = np.array([[1, 0], [1, 0]])
    assert argmax_star(np.zeros(2), np.ones(2), cand) == 0


def test_huge_price_gives_zero_column():
    sc = toy_scenario(5, n_teams=1)
    p = GameParams(xi=1e30, delta=0.0)
    r = best_reply(sc, zero_profile(sc), 0, 0, p)
    assert r.column.tolist() == [0, 0]


@pytest.mark.parametrize("seed", range(6))
def test_best_reply_matches_oracle(seed):
    sc = toy_scenario(seed)
    p = calibrated(sc)
    rng = np.random.default_rng(seed)
    prof = rng.integers(len(p.levels), size=(sc.n_bs, sc.n_carriers))
    for team in range(2):
        ours = best_reply(sc, prof, team, 0, p)
        assert ours.column.tolist() == oracle.exhaustive_best_reply(sc, prof, team, 0, p).tolist()
        trial = prof.copy()
        trial[list(sc.teams[team].locations), 0] = ours.column
        assert ours.payoff == pytest.approx(team_payoff(sc, trial, team, p), abs=1e-12)


def test_best_reply_matches_oracle_with_settled_carrier(toy2):
    p = calibrated(toy2)
    rng = np.random.default_rng(9)
    prof = rng.integers(len(p.levels), size=(toy2.n_bs, 2))
    ours = best_reply(toy2, prof, 1, 1, p, settled=[0]).column
    ref = oracle.exhaustive_best_reply(toy2, prof, 1, 1, p, settled=[0])
    assert ours.tolist() == ref.tolist()


def test_best_reply_is_deterministic(toy):
    p = calibrated(toy)
    prof = zero_profile(toy)
    a = best_reply(toy, prof, 0, 0, p)
    b = best_reply(toy, prof, 0, 0, p)
    assert a.column.tolist() == b.column.tolist() and a.payoff == b.payoff


def test_single_team_converges_in_one_round():
    sc = toy_scenario(2, n_teams=1, micros_per_team=2)
    p = GameParams(xi=1e6)
    prof, trace = play_carrier_game(sc, 0, p)
    assert trace.converged
    # round 1 sets the column, round 2 confirms it
    assert trace.iterations[0] == [1]
    alone = best_reply(sc, zero_profile(sc), 0, 0, p).column
    assert prof[:, 0].tolist() == alone.tolist()


def test_trace_ends_with_quiet_round(toy):
    p = calibrated(toy)
    _, trace = play_carrier_game(toy, 0, p)
    last = trace.rounds[0]
    final = [e for e in trace.events if e.round == last]
    assert len(final) == len(toy.teams)
    assert not any(e.changed for e in final)


def test_fixed_point_is_ne(toy):
    p = calibrated(toy)
    prof, _ = play_carrier_game(toy, 0, p)
    assert oracle.verify_ne(toy, prof, p).is_ne


def test_one_carrier_multicarrier_equals_carrier_game(toy):
    p = calibrated(toy)
    a, ta = run_multicarrier(toy, p)
    b, tb = play_carrier_game(toy, 0, p)
    assert np.array_equal(a, b)
    assert ta.iterations == tb.iterations


@pytest.mark.parametrize("seed", range(5))
def test_team_order_does_not_change_outcome(seed):
    sc = toy_scenario(seed, n_teams=3, carriers=DEFAULT_CARRIERS[:2])
    p = calibrated(sc)
    a, _ = run_multicarrier(sc, p)
    b, _ = run_multicarrier(sc, p, team_order=[2, 1, 0])
    assert np.array_equal(a, b)


def test_sequential_stages_are_equilibria(toy2):
    p = calibrated(toy2)
    prof, trace = run_multicarrier(toy2, p)
    assert trace.converged
    assert oracle.verify_ne(toy2, prof, p, sequential=True).is_ne


def test_round_cap_raises_with_trace(toy):
    p = calibrated(toy)
    _, trace = play_carrier_game(toy, 0, p)
    assert trace.rounds[0] >= 2
    with pytest.raises(ConvergenceError) as err:
        play_carrier_game(toy, 0, p, max_rounds=1)
    assert err.value.trace.events


CYCLING = dict(seed=101, n_teams=2, micros_per_team=1, isd=150.0, tile_size=30.0)


def test_cycle_is_detected_and_resolved(caplog):
    sc = toy_scenario(**CYCLING)
    p = GameParams(xi=0.0, delta=0.0)
    with caplog.at_level(logging.WARNING):
        prof, trace = run_multicarrier(sc, p)
    assert not trace.converged
    cyc = trace.cycles[0]
    assert cyc.period == 2
    assert cyc.teams == [0, 1]
    assert "cycle" in caplog.text
    # the kept state is one of the orbit states
    states = {}
    for e in trace.events:
        states.setdefault(e.round, {})[e.team] = e.strategy
    kept = states[cyc.kept_round]
    got = {t.id: tuple(prof[list(t.locations), 0]) for t in sc.teams}
    assert got == kept


def test_cycle_can_raise():
    sc = toy_scenario(**CYCLING)
    with pytest.raises(ConvergenceError):
        run_multicarrier(sc, GameParams(xi=0.0, delta=0.0), on_cycle="raise")


def test_trace_csv(tmp_path, toy):
    _, trace = play_carrier_game(toy, 0, calibrated(toy))
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    lines = path.read_text().splitlines()
    assert len(lines) == len(trace.events) + 1
    assert lines[0].startswith("iteration,round,team,carrier,payoff")


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.0, 1.0))
def test_utility_only_replies_rise_with_interference(seed, offset):
    # with no price and no coverage penalty more interference never lowers the reply
    sc = toy_scenario(seed, n_teams=1, micros_per_team=0)
    p = GameParams(xi=0.0, delta=0.0)
    prof = zero_profile(sc)
    sweep = 10.0 ** (np.linspace(-14, -8, 12) + offset)
    idx = [int(best_reply(sc, prof, 0, 0, p, background=i).column[0]) for i in sweep]
    assert idx == sorted(idx)
