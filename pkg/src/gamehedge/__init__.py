"""Shortfall-risk minimizing hedges for game (Israeli) options in discrete time.

A game option lets the seller cancel at time m for U_m and the buyer exercise
at time n for W_n (U >= W >= 0). On a finite scenario tree this package
computes, for a given initial capital, the minimal expected shortfall loss
over admissible self-financing strategies, the optimal hedge and the
seller's optimal cancellation rule, together with exhaustive oracles and a
Monte Carlo replay harness to verify them.
"""

__version__ = "0.1.0"

from .claims import ClaimError, GameClaim, LossFunction, game_payoff, loss, validate_claim
from .config import ConfigError, Problem, load_config, parse_config
from .dynkin import (DynkinSolution, StoppingRule, WealthProcess, expected_game_loss,
                     q_payoff, random_stopping_rule, risk_given_sigma, solve_dynkin)
from .market import (ConditionalDistribution, MarketNode, MarketTree, SupportBounds,
                     TreePathError, check_no_arbitrage, enumerate_nodes, stock_price,
                     support_bounds)
from .oracle import (GuardError, OracleRisk, enumerate_stopping_times, oracle_dynkin,
                     oracle_risk, stopping_time_count)
from .shortfall import (AdmissibilityError, AdmissibleInterval, HedgePolicy,
                        SolveResult, StrategyPath, ValueField, WealthGrid,
                        admissible_interval, continuation_integral, export_csv,
                        extract_strategy, local_value, minimize_over_interval,
                        optimal_stopping_rule, policy_wealth, price_sweep, solve)
from .simulate import (BatchReplay, PathSample, ReplayResult, RiskEstimate,
                       estimate_risk, replay_hedge, replay_paths, sample_paths)

__all__ = [
    "BatchReplay", "ClaimError", "ConditionalDistribution", "ConfigError",
    "DynkinSolution", "GameClaim", "GuardError", "HedgePolicy", "LossFunction",
    "MarketNode", "MarketTree", "OracleRisk", "PathSample", "Problem",
    "ReplayResult", "RiskEstimate", "SolveResult", "StoppingRule", "StrategyPath",
    "SupportBounds", "TreePathError", "ValueField", "WealthGrid", "WealthProcess",
    "AdmissibilityError", "AdmissibleInterval",
    "admissible_interval", "check_no_arbitrage", "continuation_integral",
    "enumerate_nodes", "enumerate_stopping_times", "estimate_risk",
    "expected_game_loss", "export_csv", "extract_strategy", "game_payoff",
    "load_config", "local_value", "loss", "minimize_over_interval",
    "optimal_stopping_rule", "oracle_dynkin", "oracle_risk", "parse_config",
    "policy_wealth", "price_sweep", "q_payoff", "random_stopping_rule",
    "replay_hedge", "replay_paths", "risk_given_sigma", "sample_paths", "solve",
    "solve_dynkin", "stock_price", "stopping_time_count", "support_bounds",
    "validate_claim",
]
