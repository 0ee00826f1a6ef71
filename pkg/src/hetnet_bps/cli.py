"""Batch experiment driver.

Every command reads one JSON experiment config (schema ``hetnet-bps/experiment``,
version 1), optionally patched with ``--set key=value``, and writes plain JSON
and CSV artifacts under the output directory.  Exit codes: 0 success, 1 bad
config, 2 best replies did not converge, 3 oracle size guard exceeded.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import oracle
from .baselines import EICIC, LP_ABS, MAX_POWER, MIN_POWER, BaselineConfig, baseline_report
from .game import GameParams, PowerLevels, calibrate_xi, team_payoff, team_power, team_utility
from .metrics import RateTable, RunReport, cdf_gap, per_user_throughput, profile_report
from .scenario import (CarrierSpec, LayoutError, Scenario, ScenarioConfig, build_scenario, save_scenario,
                       toy_scenario)
from .solver import ConvergenceError, GameTrace, best_reply, run_multicarrier

log = logging.getLogger(__name__)

CONFIG_SCHEMA = "hetnet-bps/experiment"
CONFIG_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGENT, EXIT_GUARD = 0, 1, 2, 3
STRATEGIES = {"bps": "bps", "max": MAX_POWER, "min": MIN_POWER, "eicic": EICIC, "lp_abs": LP_ABS}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # scenario
    rings: int = 2
    isd: float = 500.0
    micros_per_macro: int = 4
    tile_size: float = 54.6
    total_ues: int = 34400
    hotspot_ratio: float = 3.0
    hotspot_radius: float | None = None
    seed: int = 1
    max_teams: int | None = None
    macro_power: float = 20.0
    micro_power: float = 1.0
    carriers: list = field(default_factory=lambda: [[2.6e9, 10e6], [1.8e9, 10e6], [0.8e9, 10e6]])
    power_levels: list = field(default_factory=lambda: [round(0.1 * i, 10) for i in range(11)])
    # game
    alpha: float = 1.0
    beta: float = 1.0
    k: float = 0.25
    delta: float = 0.6
    gamma_min_db: float = -10.0
    noise_dbm: float = -95.0
    xi_per_team: bool = True
    max_rounds: int = 100
    on_cycle: str = "resolve"
    # baselines
    eicic_bias_db: float = 8.0
    eicic_abs_ratio: float = 0.25
    lp_abs_bias_db: float = 6.0
    lp_abs_abs_ratio: float = 0.5
    lp_abs_reduction_db: float = 6.0
    rate_table: str | None = None
    # oracle comparison on toys
    toy_instances: int = 10
    toy_carriers: int = 2
    toy_levels: int = 6
    toy_best_reply_instances: int = 200
    output_dir: str = "out"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.rings < 0 or self.micros_per_macro < 0 or self.total_ues < 0:
            raise ConfigError("rings, micros_per_macro and total_ues must be >= 0")
        if self.isd <= 0 or self.tile_size <= 0:
            raise ConfigError("isd and tile_size must be positive")
        if self.on_cycle not in ("resolve", "raise"):
            raise ConfigError("on_cycle must be 'resolve' or 'raise'")
        if not self.carriers or any(len(c) != 2 for c in self.carriers):
            raise ConfigError("carriers must be a non-empty list of [frequency_hz, bandwidth_hz]")
        freqs = [c[0] for c in self.carriers]
        if len(set(freqs)) != len(freqs):
            raise ConfigError("carrier frequencies must be distinct")
        for name in ("k", "delta", "eicic_abs_ratio", "lp_abs_abs_ratio"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.toy_instances < 1 or self.toy_levels < 2 or self.toy_carriers < 1:
            raise ConfigError("toy settings out of range")
        try:
            self.levels()
            self.game_params()
            self.baseline(EICIC)
            self.baseline(LP_ABS)
        except ValueError as err:
            raise ConfigError(str(err)) from None

    # --- (de)serialisation -------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        schema = data.pop("schema", CONFIG_SCHEMA)
        version = data.pop("version", CONFIG_VERSION)
        if schema != CONFIG_SCHEMA or version != CONFIG_VERSION:
            raise ConfigError(f"expected schema {CONFIG_SCHEMA} version {CONFIG_VERSION}")
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        defaults = cls.__new__(cls)
        for f in dataclasses.fields(cls):
            default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
            object.__setattr__(defaults, f.name, default)
        for key, value in data.items():
            data[key] = _coerce(key, value, getattr(defaults, key))
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path | None, overrides: Sequence[str] = ()) -> "ExperimentConfig":
        data = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as err:
                raise ConfigError(f"cannot read config {path}: {err}") from None
            if not isinstance(data, dict):
                raise ConfigError("config must be a JSON object")
        for item in overrides:
            key, sep, raw = item.partition("=")
            if not sep:
                raise ConfigError(f"override {item!r} is not key=value")
            try:
                data[key.strip()] = json.loads(raw)
            except json.JSONDecodeError:
                data[key.strip()] = raw
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {"schema": CONFIG_SCHEMA, "version": CONFIG_VERSION, **dataclasses.asdict(self)}

    # --- derived objects ---------------------------------------------------

    def levels(self) -> PowerLevels:
        return PowerLevels(tuple(float(x) for x in self.power_levels))

    def carrier_specs(self) -> tuple[CarrierSpec, ...]:
        return tuple(CarrierSpec(i, float(f), float(bw)) for i, (f, bw) in enumerate(self.carriers))

    def scenario_config(self) -> ScenarioConfig:
        return ScenarioConfig(self.rings, self.isd, self.micros_per_macro, self.tile_size,
                              self.total_ues, self.hotspot_ratio, self.hotspot_radius, self.seed,
                              self.max_teams, self.macro_power, self.micro_power,
                              self.carrier_specs())

    def game_params(self, **kw) -> GameParams:
        base = dict(alpha=self.alpha, beta=self.beta, delta=self.delta,
                    gamma_min=10.0 ** (self.gamma_min_db / 10.0),
                    noise=10.0 ** ((self.noise_dbm - 30.0) / 10.0), levels=self.levels())
        base.update(kw)
        return GameParams(**base)

    def baseline(self, kind: str) -> BaselineConfig:
        if kind == EICIC:
            return BaselineConfig.eicic(self.eicic_bias_db, self.eicic_abs_ratio)
        if kind == LP_ABS:
            return BaselineConfig.lp_abs(self.lp_abs_bias_db, self.lp_abs_abs_ratio,
                                         self.lp_abs_reduction_db)
        return BaselineConfig(kind)

    def table(self) -> RateTable:
        return RateTable.default() if self.rate_table is None else RateTable.load(self.rate_table)


def _coerce(key, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false")
        return value
    if isinstance(default, int) and default is not None and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number")
        return float(value)
    if isinstance(default, list) and not isinstance(value, list):
        raise ConfigError(f"{key} must be a list")
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{key} must be a string")
    return value


# ---------------------------------------------------------------------------
# experiment functions (importable; the commands below are thin wrappers)
# ---------------------------------------------------------------------------


def calibrated_params(cfg: ExperimentConfig, scenario: Scenario, **kw) -> GameParams:
    params = cfg.game_params(**{k: v for k, v in kw.items() if k != "k"})
    k = kw.get("k", cfg.k)
    return params.with_(xi=calibrate_xi(scenario, k, params, per_team=cfg.xi_per_team))


def run_bps(cfg: ExperimentConfig, scenario: Scenario, params: GameParams,
            table: RateTable | None = None) -> tuple[RunReport, np.ndarray, GameTrace]:
    t0 = time.perf_counter()
    profile, trace = run_multicarrier(scenario, params, max_rounds=cfg.max_rounds,
                                      on_cycle=cfg.on_cycle)
    meta = {
        "converged": trace.converged,
        "rounds": {str(c): r for c, r in trace.rounds.items()},
        "cycles": {str(c): dataclasses.asdict(cy) for c, cy in trace.cycles.items()},
        "runtime_s": round(time.perf_counter() - t0, 3),
    }
    report = profile_report(scenario, profile, params, "bps", table or cfg.table(),
                            trace.per_team_iterations(), meta)
    return report, profile, trace


def run_strategy(cfg: ExperimentConfig, scenario: Scenario, params: GameParams,
                 strategy: str) -> tuple[RunReport, GameTrace | None]:
    if strategy == "bps":
        report, _, trace = run_bps(cfg, scenario, params)
        return report, trace
    return baseline_report(scenario, cfg.baseline(STRATEGIES[strategy]), params, cfg.table()), None


SWEEP_FIELDS = ["parameter", "value", "global_utility", "unserved_fraction",
                "total_power_watts", "mean_iterations", "converged"]


def sweep(cfg: ExperimentConfig, scenario: Scenario, parameter: str,
          values: Sequence[float]) -> list[dict]:
    """BPS at each value of ``k`` or ``delta``; everything else at the config values."""
    if parameter not in ("k", "delta"):
        raise ConfigError("sweep parameter must be k or delta")
    if not values or any(not np.isfinite(v) or v < 0 for v in values):
        raise ConfigError("sweep values must be finite and >= 0")
    rows = []
    for v in values:
        params = calibrated_params(cfg, scenario, **{parameter: float(v)})
        report, _, trace = run_bps(cfg, scenario, params)
        rows.append({"parameter": parameter, "value": float(v),
                     "global_utility": report.global_utility,
                     "unserved_fraction": report.unserved_fraction,
                     "total_power_watts": report.total_power_watts,
                     "mean_iterations": trace.mean_iterations(),
                     "converged": trace.converged})
    return rows


def toy_params(cfg: ExperimentConfig, scenario: Scenario) -> GameParams:
    params = cfg.game_params(levels=PowerLevels.uniform(cfg.toy_levels))
    return params.with_(xi=calibrate_xi(scenario, cfg.k, params, per_team=cfg.xi_per_team))


def toy_world(cfg: ExperimentConfig, index: int) -> Scenario:
    """Two teams of one macro and one micro each, seeded from the config seed."""
    return toy_scenario(cfg.seed * 1000 + index, n_teams=2, micros_per_team=1,
                        carriers=cfg.carrier_specs()[:cfg.toy_carriers])


def verify_toys(cfg: ExperimentConfig) -> dict:
    """BPS against the exhaustive joint optimum and the NE check on random toys."""
    instances = []
    bps_thr, opt_thr = [], []
    for i in range(cfg.toy_instances):
        sc = toy_world(cfg, i)
        params = toy_params(cfg, sc)
        prof, trace = run_multicarrier(sc, params, max_rounds=cfg.max_rounds,
                                       on_cycle=cfg.on_cycle)
        opt = oracle.exhaustive_joint_optimum(sc, params, "payoff_sum")
        teams = range(len(sc.teams))
        bps_pay = sum(team_payoff(sc, prof, t, params) for t in teams)
        bps_util = sum(team_utility(sc, prof, t, params) for t in teams)
        bps_w = sum(team_power(sc, prof, t, params.levels) for t in teams)
        opt_w = sum(team_power(sc, opt.profile, t, params.levels) for t in teams)
        ne = oracle.verify_ne(sc, prof, params)
        ne_seq = oracle.verify_ne(sc, prof, params, sequential=True)
        bps_thr.append(per_user_throughput(sc, prof, params, cfg.table()))
        opt_thr.append(per_user_throughput(sc, opt.profile, params, cfg.table()))
        instances.append({
            "instance": i,
            "bps_payoff": bps_pay, "oracle_payoff": float(opt.team_payoffs.sum()),
            "bps_utility": bps_util, "oracle_utility": float(opt.team_utilities.sum()),
            "bps_power_watts": bps_w, "oracle_power_watts": opt_w,
            "bps_is_ne": ne.is_ne, "bps_is_sequential_ne": ne_seq.is_ne,
            "bps_converged": trace.converged,
        })
    rng = np.random.default_rng(cfg.seed)
    matches = 0
    for i in range(cfg.toy_best_reply_instances):
        sc = toy_world(cfg, 10_000 + i)
        params = toy_params(cfg, sc)
        prof = rng.integers(len(params.levels), size=(sc.n_bs, sc.n_carriers))
        team = int(rng.integers(len(sc.teams)))
        c = int(rng.integers(sc.n_carriers))
        ours = best_reply(sc, prof, team, c, params).column
        ref = oracle.exhaustive_best_reply(sc, prof, team, c, params)
        matches += bool(np.array_equal(ours, ref))
    mean = lambda key: float(np.mean([r[key] for r in instances]))
    gap = cdf_gap(np.concatenate(bps_thr), np.concatenate(opt_thr))
    return {
        "instances": instances,
        "mean_bps_payoff": mean("bps_payoff"), "mean_oracle_payoff": mean("oracle_payoff"),
        "mean_bps_utility": mean("bps_utility"), "mean_oracle_utility": mean("oracle_utility"),
        "throughput_cdf_gap": gap,
        "best_reply_matches": matches, "best_reply_checks": cfg.toy_best_reply_instances,
        "all_ne": all(r["bps_is_ne"] for r in instances),
        "all_sequential_ne": all(r["bps_is_sequential_ne"] for r in instances),
    }


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_rows(path: Path, rows: list[dict], fields: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields), extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def _dump(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def cmd_build(cfg: ExperimentConfig, args) -> int:
    sc = build_scenario(cfg.scenario_config())
    out = _out(cfg)
    save_scenario(sc, out / "scenario.json")
    summary = sc.summary()
    _dump(out / "summary.json", summary)
    print(json.dumps(summary))
    return EXIT_OK


def cmd_calibrate(cfg: ExperimentConfig, args) -> int:
    sc = build_scenario(cfg.scenario_config())
    params = calibrated_params(cfg, sc)
    _dump(_out(cfg) / "xi.json", {"k": cfg.k, "per_team": cfg.xi_per_team, "xi": list(params.xi)})
    print(f"calibrated xi for {len(params.xi)} teams, mean {np.mean(params.xi):.6g} 1/W")
    return EXIT_OK


def _converged_exit(trace: GameTrace | None) -> int:
    if trace is not None and not trace.converged:
        print(f"best replies cycled (teams {trace.cycling_teams()}); "
              "artifacts hold the resolved state", file=sys.stderr)
        return EXIT_NONCONVERGENT
    return EXIT_OK


def cmd_run(cfg: ExperimentConfig, args) -> int:
    sc = build_scenario(cfg.scenario_config())
    params = calibrated_params(cfg, sc)
    report, trace = run_strategy(cfg, sc, params, args.strategy)
    out = _out(cfg)
    report.save(out, args.strategy)
    if trace is not None:
        trace.to_csv(out / f"{args.strategy}_trace.csv")
    print(json.dumps(report.summary()))
    return _converged_exit(trace)


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    try:
        values = [float(v) for v in args.values.split(",")]
    except ValueError:
        raise ConfigError(f"bad sweep values {args.values!r}") from None
    sc = build_scenario(cfg.scenario_config())
    rows = sweep(cfg, sc, args.parameter, values)
    _write_rows(_out(cfg) / f"sweep_{args.parameter}.csv", rows, SWEEP_FIELDS)
    for r in rows:
        print(f"{r['parameter']}={r['value']:g} utility={r['global_utility']:.4f} "
              f"unserved={r['unserved_fraction']:.4f} power={r['total_power_watts']:.1f}")
    return EXIT_OK if all(r["converged"] for r in rows) else EXIT_NONCONVERGENT


def cmd_verify(cfg: ExperimentConfig, args) -> int:
    result = verify_toys(cfg)
    out = _out(cfg)
    _dump(out / "verify.json", result)
    _write_rows(out / "verify.csv", result["instances"], list(result["instances"][0]))
    print(f"payoff bps/oracle {result['mean_bps_payoff']:.4f}/{result['mean_oracle_payoff']:.4f} "
          f"utility bps/oracle {result['mean_bps_utility']:.4f}/{result['mean_oracle_utility']:.4f} "
          f"best replies {result['best_reply_matches']}/{result['best_reply_checks']} "
          f"NE {sum(r['bps_is_ne'] for r in result['instances'])}/{len(result['instances'])} "
          f"(per-carrier stage NE {sum(r['bps_is_sequential_ne'] for r in result['instances'])})")
    return EXIT_OK


COMPARE_FIELDS = ["strategy", "global_utility", "total_power_watts", "unserved_fraction",
                  "mean_throughput_bps", "median_throughput_bps", "mean_iterations"]


def cmd_compare(cfg: ExperimentConfig, args) -> int:
    sc = build_scenario(cfg.scenario_config())
    params = calibrated_params(cfg, sc)
    out = _out(cfg)
    rows = []
    code = EXIT_OK
    for name in STRATEGIES:
        report, trace = run_strategy(cfg, sc, params, name)
        report.save(out, name)
        if trace is not None:
            trace.to_csv(out / f"{name}_trace.csv")
            code = _converged_exit(trace)
        rows.append(report.summary() | {"strategy": name})
    _write_rows(out / "compare.csv", rows, COMPARE_FIELDS)
    for r in rows:
        print(f"{r['strategy']:>7} utility={r['global_utility']:.4f} "
              f"power={r['total_power_watts']:.1f} unserved={r['unserved_fraction']:.4f}")
    return code


COMMANDS = {"build": cmd_build, "calibrate": cmd_calibrate, "run": cmd_run,
            "sweep": cmd_sweep, "verify": cmd_verify, "compare": cmd_compare}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="experiment JSON (defaults apply when omitted)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field (JSON value)")
    common.add_argument("-o", "--out", help="output directory (overrides output_dir)")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="hetnet-bps", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("build", parents=[common], help="build and save the scenario")
    sub.add_parser("calibrate", parents=[common], help="compute the per-watt price")
    run = sub.add_parser("run", parents=[common], help="run one strategy")
    run.add_argument("strategy", choices=list(STRATEGIES))
    sw = sub.add_parser("sweep", parents=[common], help="sweep k or delta for BPS")
    sw.add_argument("parameter", choices=["k", "delta"])
    sw.add_argument("values", help="comma-separated values")
    sub.add_parser("verify", parents=[common], help="compare BPS with the brute-force oracle")
    sub.add_parser("compare", parents=[common], help="run all five strategies")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = list(args.set) + ([f"output_dir={json.dumps(args.out)}"] if args.out else [])
        cfg = ExperimentConfig.load(args.config, overrides)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, LayoutError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as err:
        print(f"no convergence: {err}", file=sys.stderr)
        return EXIT_NONCONVERGENT
    except oracle.OracleGuardError as err:
        print(f"oracle guard: {err}", file=sys.stderr)
        return EXIT_GUARD


if __name__ == "__main__":
    sys.exit(main())
