"""Team-based downlink power setting for carrier-aggregated HetNets via best replies."""
from .baselines import BaselineConfig, baseline_report, biased_association, fixed_profile
from .game import GameParams, PowerLevels, calibrate_xi, team_payoff, team_utility
from .metrics import RateTable, RunReport, global_utility, per_user_throughput, total_power
from .scenario import Scenario, ScenarioConfig, build_scenario, load_scenario, save_scenario, toy_scenario
from .solver import ConvergenceError, GameTrace, best_reply, play_carrier_game, run_multicarrier

__version__ = "0.1.0"
