from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..model import Mode, Scenario, parse_scenario
from .rng import CounterRng

logger = logging.getLogger(__name__)

MB = 1e6
GB = 1e9
GFLOP = 1e9
TFLOP = 1e12


@dataclass(frozen=True)
class DeviceProfile:
    memory_bytes: float
    compute_capacity: float


@dataclass(frozen=True)
class BenchmarkPreset:
    tasks: Tuple[str, ...]
    input_bytes: float
    objective_kind: str
    clients: Tuple[DeviceProfile, ...]
    edges: Tuple[DeviceProfile, ...]
    # Shared backbone cost for every task subset; None when the library is tabulated.
    model_memory_bytes: Optional[float] = None
    model_compute: Optional[float] = None


SMALL_CLIENTS = (
    DeviceProfile(24 * MB, 0.5e3 * GFLOP),
    DeviceProfile(24 * MB, 1.0e3 * GFLOP),
    DeviceProfile(48 * MB, 1.0e3 * GFLOP),
    DeviceProfile(48 * MB, 2.0e3 * GFLOP),
    DeviceProfile(96 * MB, 2.0e3 * GFLOP),
)
SMALL_EDGES = (
    DeviceProfile(512 * MB, 10.0e3 * GFLOP),
    DeviceProfile(512 * MB, 12.0e3 * GFLOP),
    DeviceProfile(1024 * MB, 15.0e3 * GFLOP),
)
CITY_CLIENTS = (
    DeviceProfile(1.0 * GB, 10.0 * TFLOP),
    DeviceProfile(2.0 * GB, 10.0 * TFLOP),
    DeviceProfile(2.0 * GB, 15.0 * TFLOP),
    DeviceProfile(3.0 * GB, 15.0 * TFLOP),
    DeviceProfile(4.0 * GB, 20.0 * TFLOP),
)
CITY_EDGES = (
    DeviceProfile(5.0 * GB, 30.0 * TFLOP),
    DeviceProfile(6.0 * GB, 40.0 * TFLOP),
    DeviceProfile(6.0 * GB, 50.0 * TFLOP),
)

PRESETS: Dict[str, BenchmarkPreset] = {
    "taskonomy": BenchmarkPreset(
        tasks=("semseg", "depth", "normal", "keypoint", "edge"),
        input_bytes=0.79 * MB,
        objective_kind="loss",
        clients=SMALL_CLIENTS,
        edges=SMALL_EDGES,
        model_memory_bytes=73.66 * MB,
        model_compute=9.17 * GFLOP,
    ),
    "domainnet": BenchmarkPreset(
        tasks=("clipart", "infograph", "painting", "quickdraw", "real", "sketch"),
        input_bytes=0.60 * MB,
        objective_kind="acc",
        clients=SMALL_CLIENTS,
        edges=SMALL_EDGES,
        model_memory_bytes=83.15 * MB,
        model_compute=3.68 * GFLOP,
    ),
    "cityscape": BenchmarkPreset(
        tasks=("detection", "segmentation", "depth"),
        input_bytes=25.17 * MB,
        objective_kind="loss",
        clients=CITY_CLIENTS,
        edges=CITY_EDGES,
    ),
}

# Task subset -> (FP32 bytes, INT8 bytes, FLOPs per query).
CITY_MODELS: Dict[Tuple[int, ...], Tuple[float, float, float]] = {
    (0,): (1.10 * GB, 0.80 * GB, 1.13 * TFLOP),
    (1,): (1.10 * GB, 0.80 * GB, 1.13 * TFLOP),
    (2,): (1.14 * GB, 0.84 * GB, 0.73 * TFLOP),
    (0, 1): (1.18 * GB, 0.88 * GB, 1.84 * TFLOP),
    (0, 2): (1.22 * GB, 0.91 * GB, 1.44 * TFLOP),
    (1, 2): (1.22 * GB, 0.91 * GB, 1.44 * TFLOP),
    (0, 1, 2): (1.30 * GB, 0.99 * GB, 2.16 * TFLOP),
}

PRESET_NAMES = tuple(PRESETS) + ("custom",)


class GeneratorConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    preset: str = "taskonomy"
    num_clients: int = Field(default=30, ge=1)
    num_edges: int = Field(default=3, ge=1)
    # Library cap; None keeps every generated model.
    num_models: Optional[int] = Field(default=None, ge=1)
    # Only read by the custom preset.
    num_tasks: int = Field(default=3, ge=1)
    # Total jobs per second over all clients and tasks.
    total_rate: float = Field(default=2000.0, gt=0)
    client_concentration: float = Field(default=1.0, gt=0)
    task_concentration: float = Field(default=1.0, gt=0)
    edge_uplink_scale: float = Field(default=0.5, ge=0)
    cloud_uplink_scale: float = Field(default=0.25, ge=0)
    compute_scale: float = Field(default=1.0, gt=0)
    mode: Mode = "plain"
    batching_interval: Optional[float] = Field(default=None, gt=0)
    # Mean per-batch launch latency in seconds; each (model, edge) draws within +-50%.
    setup_cost: float = Field(default=0.01, ge=0)
    client_accuracy_factor: float = Field(default=0.9, gt=0, le=1)
    # Client-side variant footprint relative to the full model.
    client_memory_fraction: float = Field(default=0.25, gt=0, le=1)
    seed: int = Field(default=0, ge=0)
    # custom preset budgets and model stats
    model_memory_bytes: float = Field(default=75 * MB, gt=0)
    model_compute: float = Field(default=5 * GFLOP, gt=0)
    input_bytes: float = Field(default=0.6 * MB, gt=0)
    client_memory_bytes: float = Field(default=24 * MB, gt=0)
    client_compute: float = Field(default=0.5e3 * GFLOP, gt=0)
    edge_memory_bytes: float = Field(default=160 * MB, gt=0)
    edge_compute: float = Field(default=2.0e3 * GFLOP, gt=0)

    @field_validator("preset")
    @classmethod
    def _known_preset(cls, value: str) -> str:
        if value not in PRESET_NAMES:
            raise ValueError(f"unknown preset: {value} (expected one of {', '.join(PRESET_NAMES)})")
        return value

    @model_validator(mode="after")
    def _batching_needs_interval(self) -> "GeneratorConfig":
        if self.mode == "batching" and self.batching_interval is None:
            raise ValueError("batching mode needs batching_interval")
        return self


def _named_library(
    preset: BenchmarkPreset, cfg: GeneratorConfig, rng: CounterRng
) -> List[Tuple[Tuple[int, ...], float, float, float]]:
    """(task subset, edge bytes, client bytes, FLOPs per query) per model."""
    n_tasks = len(preset.tasks)
    if preset.model_memory_bytes is None:
        library = [(subset, fp32, int8, flops) for subset, (fp32, int8, flops) in CITY_MODELS.items()]
    else:
        max_size = n_tasks if n_tasks <= 3 else 3
        singles = [(j,) for j in range(n_tasks)]
        multis = [combo for size in range(2, max_size + 1) for combo in itertools.combinations(range(n_tasks), size)]
        order = rng.permutation(len(multis))
        subsets = singles + [multis[i] for i in order]
        memory = preset.model_memory_bytes
        library = [(subset, memory, memory * cfg.client_memory_fraction, preset.model_compute) for subset in subsets]
    if cfg.num_models is not None:
        library = library[: cfg.num_models]
    return library


def _custom_library(cfg: GeneratorConfig, rng: CounterRng) -> List[Tuple[Tuple[int, ...], float, float, float]]:
    n_models = cfg.num_models or 5
    library = []
    for _ in range(n_models):
        size = rng.integers(1, min(3, cfg.num_tasks) + 1)
        subset = tuple(sorted(rng.permutation(cfg.num_tasks)[:size]))
        library.append(
            (subset, cfg.model_memory_bytes, cfg.model_memory_bytes * cfg.client_memory_fraction, cfg.model_compute)
        )
    return library


def _model_id(subset: Tuple[int, ...], n_tasks: int) -> str:
    if n_tasks <= 9:
        return "m" + "".join(str(j + 1) for j in subset)
    return "m" + "_".join(str(j + 1) for j in subset)


def generate_scenario(cfg: GeneratorConfig) -> Scenario:
    """Seeded synthetic instance: Dirichlet loads, preset budgets, synthetic accuracy tables."""
    rng = CounterRng(cfg.seed)

    if cfg.preset == "custom":
        tasks = tuple(f"t{j}" for j in range(cfg.num_tasks))
        input_bytes = cfg.input_bytes
        objective_kind = "acc"
        clients = (DeviceProfile(cfg.client_memory_bytes, cfg.client_compute),)
        edges = (DeviceProfile(cfg.edge_memory_bytes, cfg.edge_compute),)
    else:
        preset = PRESETS[cfg.preset]
        tasks = preset.tasks
        input_bytes = preset.input_bytes
        objective_kind = preset.objective_kind
        clients = preset.clients
        edges = preset.edges
    n_tasks = len(tasks)

    client_ids = [f"c{i}" for i in range(cfg.num_clients)]
    edge_ids = [f"e{i}" for i in range(cfg.num_edges)]
    client_edge = [edge_ids[i * cfg.num_edges // cfg.num_clients] for i in range(cfg.num_clients)]

    client_share = rng.dirichlet([cfg.client_concentration] * cfg.num_clients)
    rates = np.zeros((cfg.num_clients, n_tasks))
    for c in range(cfg.num_clients):
        rates[c] = cfg.total_rate * client_share[c] * rng.dirichlet([cfg.task_concentration] * n_tasks)

    if cfg.preset == "custom":
        library = _custom_library(cfg, rng)
        model_ids = [f"m{i}" for i in range(len(library))]
    else:
        library = _named_library(PRESETS[cfg.preset], cfg, rng)
        model_ids = [_model_id(subset, n_tasks) for subset, _, _, _ in library]

    base = np.zeros((len(library), n_tasks))
    for m, (subset, _, _, _) in enumerate(library):
        for j in subset:
            base[m, j] = rng.uniform_range(0.6, 0.95) - 0.1 * (len(subset) - 1)

    accuracy = np.zeros((cfg.num_edges, len(library), n_tasks))
    for e in range(cfg.num_edges):
        for m in range(len(library)):
            for j in range(n_tasks):
                if base[m, j] > 0:
                    accuracy[e, m, j] = min(1.0, max(0.0, base[m, j] + rng.uniform_range(-0.03, 0.03)))

    setup = np.array(
        [[cfg.setup_cost * rng.uniform_range(0.5, 1.5) for _ in range(cfg.num_edges)] for _ in library]
    )

    demand = np.zeros(cfg.num_edges)
    for c, edge_id in enumerate(client_edge):
        demand[edge_ids.index(edge_id)] += float(np.sum(rates[c])) * input_bytes
    edge_uplink = cfg.edge_uplink_scale * demand
    cloud_uplink = cfg.cloud_uplink_scale * float(np.sum(np.minimum(edge_uplink, demand)))

    document = {
        "name": f"{cfg.preset}-s{cfg.seed}",
        "mode": cfg.mode,
        "objective_kind": objective_kind,
        "client_accuracy_factor": cfg.client_accuracy_factor,
        "models": [
            {
                "id": model_ids[m],
                "memory_bytes": edge_bytes,
                "client_memory_bytes": client_bytes,
                "compute_per_query": flops,
                "supported_tasks": [tasks[j] for j in subset],
                "setup_cost": {edge_ids[e]: float(setup[m, e]) for e in range(cfg.num_edges)},
            }
            for m, (subset, edge_bytes, client_bytes, flops) in enumerate(library)
        ],
        "tasks": [{"id": t, "input_bytes": input_bytes} for t in tasks],
        "clients": [
            {
                "id": client_ids[c],
                "edge": client_edge[c],
                "memory_bytes": clients[c % len(clients)].memory_bytes,
                "compute_capacity": clients[c % len(clients)].compute_capacity * cfg.compute_scale,
            }
            for c in range(cfg.num_clients)
        ],
        "edges": [
            {
                "id": edge_ids[e],
                "memory_bytes": edges[e % len(edges)].memory_bytes,
                "compute_capacity": edges[e % len(edges)].compute_capacity * cfg.compute_scale,
                "uplink_bytes_per_s": float(edge_uplink[e]),
                "accuracy": accuracy[e].tolist(),
            }
            for e in range(cfg.num_edges)
        ],
        "cloud": {"uplink_bytes_per_s": cloud_uplink, "accuracy": {t: 1.0 for t in tasks}},
        "workload": {
            "rates": {
                client_ids[c]: {tasks[j]: float(rates[c, j]) for j in range(n_tasks)} for c in range(cfg.num_clients)
            }
        },
    }
    if cfg.batching_interval is not None:
        document["batching"] = {"interval_s": cfg.batching_interval}
    scenario = parse_scenario(document)
    logger.debug("generated scenario %s", scenario.summary())
    return scenario


def desk_config(seed: int, **overrides) -> GeneratorConfig:
    """Small instance for oracle comparisons: 3 clients, 1 edge, 5 models, 3 tasks."""
    values = {
        "preset": "custom",
        "num_clients": 3,
        "num_edges": 1,
        "num_models": 5,
        "num_tasks": 3,
        "total_rate": 100.0,
        "seed": seed,
    }
    values.update(overrides)
    return GeneratorConfig(**values)
