from __future__ import annotations

from typing import Any, Dict, Optional

from ..errors import ConfigError
from ..model import Mode, Scenario, parse_scenario

CLIENTS = 5
RATE_PER_CLIENT = 10.0
INPUT_BYTES = 1e6
MODEL_BYTES = 1e8
MODEL_FLOPS = 1e9
# Room for exactly one model per node.
NODE_MEMORY = 1.5e8
EDGE_COMPUTE = 1e12
BASE_SETUP_COST = 0.01
HOT_CLIENT_B_SHARE = 0.7

# (accuracy on A, accuracy on B, supported tasks)
MODELS = {
    "mA": (0.9, 0.1, ["A", "B"]),
    "mB": (0.1, 0.9, ["A", "B"]),
    "mAB": (0.6, 0.6, ["A", "B"]),
}


def _rates(p_a: float, hot_client: bool) -> Dict[str, Dict[str, float]]:
    if not hot_client:
        return {f"c{i}": {"A": RATE_PER_CLIENT * p_a, "B": RATE_PER_CLIENT * (1 - p_a)} for i in range(CLIENTS)}
    hot_b = RATE_PER_CLIENT * HOT_CLIENT_B_SHARE
    total_b = CLIENTS * RATE_PER_CLIENT * (1 - p_a)
    other_b = min(RATE_PER_CLIENT, max(0.0, (total_b - hot_b) / (CLIENTS - 1)))
    rates = {"c0": {"A": RATE_PER_CLIENT - hot_b, "B": hot_b}}
    for i in range(1, CLIENTS):
        rates[f"c{i}"] = {"A": RATE_PER_CLIENT - other_b, "B": other_b}
    return rates


def motivating_preset(
    p_a: float,
    *,
    hot_client: bool = False,
    nu_a: Optional[float] = None,
    mode: Optional[Mode] = None,
    uplink_scale: float = 0.9,
    client_compute_share: Optional[float] = None,
    batching_interval: float = 0.5,
) -> Scenario:
    """One edge, five clients, tasks A and B, and a library of m(A), m(B), m(AB).

    Every node holds one model, the edge link carries `uplink_scale` of the demand and the
    cloud is unreachable. `nu_a` sets m(A)'s batch launch latency and switches to batching
    mode unless `mode` says otherwise.
    """
    if not 0.0 < p_a < 1.0:
        raise ConfigError(f"p_a must be in (0, 1), got {p_a}")
    if uplink_scale < 0:
        raise ConfigError(f"uplink_scale must be >= 0, got {uplink_scale}")
    mode = mode or ("batching" if nu_a is not None else "plain")
    share = client_compute_share if client_compute_share is not None else (0.6 if mode == "batching" else 0.1)
    if share <= 0:
        raise ConfigError(f"client_compute_share must be > 0, got {share}")

    setup = {
        "mA": nu_a if nu_a is not None else BASE_SETUP_COST,
        "mB": BASE_SETUP_COST,
        "mAB": BASE_SETUP_COST,
    }
    document: Dict[str, Any] = {
        "name": f"motivating-pA{p_a:g}" + ("-hot" if hot_client else ""),
        "mode": mode,
        "client_accuracy_factor": 0.9,
        "models": [
            {
                "id": model_id,
                "memory_bytes": MODEL_BYTES,
                "compute_per_query": MODEL_FLOPS,
                "supported_tasks": supported,
                "setup_cost": {"e0": setup[model_id]},
            }
            for model_id, (_, _, supported) in MODELS.items()
        ],
        "tasks": [{"id": "A", "input_bytes": INPUT_BYTES}, {"id": "B", "input_bytes": INPUT_BYTES}],
        "clients": [
            {
                "id": f"c{i}",
                "edge": "e0",
                "memory_bytes": NODE_MEMORY,
                "compute_capacity": share * RATE_PER_CLIENT * MODEL_FLOPS,
            }
            for i in range(CLIENTS)
        ],
        "edges": [
            {
                "id": "e0",
                "memory_bytes": NODE_MEMORY,
                "compute_capacity": EDGE_COMPUTE,
                "uplink_bytes_per_s": uplink_scale * CLIENTS * RATE_PER_CLIENT * INPUT_BYTES,
                "accuracy": [[a, b] for a, b, _ in MODELS.values()],
            }
        ],
        "cloud": {"uplink_bytes_per_s": 0.0, "accuracy": {"A": 1.0, "B": 1.0}},
        "workload": {"rates": _rates(p_a, hot_client)},
        "batching": {"interval_s": batching_interval},
    }
    return parse_scenario(document)
