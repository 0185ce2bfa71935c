from .baselines import full_local, greedy_ao, minlp_oracle, opt_ao, rand_ao
from .j3o import AoConfig, baj3o, j3o
from .model import Plan, Scenario, check_constraints, load_scenario, parse_scenario, validate_plan
from .objective import eval_objective

__all__ = [
    "AoConfig",
    "Plan",
    "Scenario",
    "baj3o",
    "check_constraints",
    "eval_objective",
    "full_local",
    "greedy_ao",
    "j3o",
    "load_scenario",
    "minlp_oracle",
    "opt_ao",
    "parse_scenario",
    "rand_ao",
    "validate_plan",
]
