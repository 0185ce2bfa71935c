from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from .errors import BatchingParametersMissing, PlanError, ScenarioParseError, ScenarioValidationError

SCHEMA_VERSION = 1
NULL_MODEL = "null"
FEASIBILITY_TOL = 1e-6

Mode = Literal["plain", "batching"]
ObjectiveKind = Literal["acc", "loss"]


class ModelProfile(BaseModel):
    """One entry of the shared multi-task model library."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    id: str
    # s_m in bytes (edge-side copy).
    memory_bytes: float = Field(gt=0)
    # Footprint of the compressed client-side variant; falls back to memory_bytes.
    client_memory_bytes: Optional[float] = Field(default=None, gt=0)
    # w_m in FLOPs per query.
    compute_per_query: float = Field(gt=0)
    supported_tasks: List[str] = Field(min_length=1)
    # Per-batch launch latency in seconds, keyed by edge id. Batching only.
    setup_cost: Optional[Dict[str, float]] = None

    @field_validator("id")
    @classmethod
    def _id_not_reserved(cls, value: str) -> str:
        if value == NULL_MODEL:
            raise ValueError(f"model id {NULL_MODEL!r} is reserved for the null model")
        return value

    @field_validator("supported_tasks")
    @classmethod
    def _canonical_tasks(cls, value: List[str]) -> List[str]:
        return sorted(set(value))

    @field_validator("setup_cost")
    @classmethod
    def _setup_nonnegative(cls, value: Optional[Dict[str, float]]) -> Optional[Dict[str, float]]:
        if value is not None:
            for edge_id, cost in value.items():
                if cost < 0:
                    raise ValueError(f"setup cost must be >= 0 (edge {edge_id}: {cost})")
        return value

    @property
    def client_memory(self) -> float:
        return self.client_memory_bytes if self.client_memory_bytes is not None else self.memory_bytes


class TaskProfile(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    id: str
    # Bytes sent per query.
    input_bytes: float = Field(gt=0)


class NodeBudget(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    # mu in bytes.
    memory_bytes: float = Field(gt=0)
    # beta in FLOPs per second.
    compute_capacity: float = Field(gt=0)


class ClientSpec(NodeBudget):
    id: str
    # Fixed client-to-edge assignment.
    edge: str


class EdgeSpec(NodeBudget):
    id: str
    # Edge-to-cloud uplink, bytes per second.
    uplink_bytes_per_s: float = Field(ge=0)
    # Edge accuracy, row-major [model][task], ordered like the scenario's models and tasks.
    accuracy: List[List[float]]


class CloudSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    # Cloud uplink, bytes per second.
    uplink_bytes_per_s: float = Field(ge=0)
    # Cloud accuracy per task id.
    accuracy: Dict[str, float]


class Workload(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    # Jobs per second: client id -> task id -> rate. Missing entries are 0.
    rates: Dict[str, Dict[str, float]]

    @property
    def total_rate(self) -> float:
        return float(sum(r for per_task in self.rates.values() for r in per_task.values()))


class BatchingSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    # Batching interval in seconds.
    interval_s: float = Field(gt=0)


@dataclass(frozen=True)
class Topology:
    clients: Tuple[ClientSpec, ...]
    edges: Tuple[EdgeSpec, ...]
    assignment: Dict[str, str]
    edge_uplink: Dict[str, float]
    cloud_uplink: float


@dataclass(frozen=True, eq=False)
class AccuracyTable:
    # [edge, model, task]
    edge: np.ndarray
    # [task]
    cloud: np.ndarray
    client_factor: float

    def client_view(self, edge_index: int) -> np.ndarray:
        return self.client_factor * self.edge[edge_index]


@dataclass(frozen=True, eq=False)
class ScenarioIndex:
    """Dense, read-only array view of a Scenario used by every solver."""

    model_ids: Tuple[str, ...]
    task_ids: Tuple[str, ...]
    client_ids: Tuple[str, ...]
    edge_ids: Tuple[str, ...]
    model_pos: Dict[str, int]
    task_pos: Dict[str, int]
    client_pos: Dict[str, int]
    edge_pos: Dict[str, int]
    client_edge: np.ndarray
    edge_clients: Tuple[Tuple[int, ...], ...]
    mem_edge: np.ndarray
    mem_client: np.ndarray
    compute: np.ndarray
    setup: np.ndarray
    has_setup: bool
    input_bytes: np.ndarray
    accuracy: AccuracyTable
    rates: np.ndarray
    total_rate: float
    weights: np.ndarray
    client_memory: np.ndarray
    client_compute: np.ndarray
    edge_memory: np.ndarray
    edge_compute: np.ndarray
    edge_uplink: np.ndarray
    cloud_uplink: float
    batching_interval: Optional[float]

    @property
    def n_models(self) -> int:
        return len(self.model_ids)

    @property
    def n_tasks(self) -> int:
        return len(self.task_ids)

    @property
    def n_clients(self) -> int:
        return len(self.client_ids)

    @property
    def n_edges(self) -> int:
        return len(self.edge_ids)

    def client_accuracy(self, c: int) -> np.ndarray:
        """[model, task] accuracy of client-side execution at client c (client accuracy factor applied)."""
        return self.accuracy.client_view(int(self.client_edge[c]))

    def edge_accuracy(self, e: int) -> np.ndarray:
        return self.accuracy.edge[e]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _duplicates(values: Iterable[str]) -> List[str]:
    seen: set = set()
    dups: List[str] = []
    for value in values:
        if value in seen:
            dups.append(value)
        seen.add(value)
    return dups


class Scenario(BaseModel):
    """Immutable problem instance: topology, model library, accuracies, workload, budgets."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    schema_version: Literal[1] = SCHEMA_VERSION
    name: str = "scenario"
    mode: Mode = "plain"
    objective_kind: ObjectiveKind = "acc"
    # Client-side accuracy is this factor times the accuracy at the client's edge.
    client_accuracy_factor: float = Field(default=0.9, gt=0, le=1)
    models: List[ModelProfile] = Field(min_length=1)
    tasks: List[TaskProfile] = Field(min_length=1)
    clients: List[ClientSpec] = Field(min_length=1)
    edges: List[EdgeSpec] = Field(min_length=1)
    cloud: CloudSpec
    workload: Workload
    batching: Optional[BatchingSpec] = None

    @model_validator(mode="after")
    def _check_references(self) -> "Scenario":
        model_ids = [m.id for m in self.models]
        task_ids = [t.id for t in self.tasks]
        node_ids = [c.id for c in self.clients] + [e.id for e in self.edges]
        for label, ids in (("model", model_ids), ("task", task_ids), ("node", node_ids)):
            dups = _duplicates(ids)
            if dups:
                raise ValueError(f"duplicate {label} id: {dups[0]}")

        tasks = set(task_ids)
        edges = {e.id for e in self.edges}
        clients = {c.id for c in self.clients}

        for model in self.models:
            unknown = [t for t in model.supported_tasks if t not in tasks]
            if unknown:
                raise ValueError(f"model {model.id} supports unknown task {unknown[0]}")
            for edge_id in (model.setup_cost or {}):
                if edge_id not in edges:
                    raise ValueError(f"model {model.id} has setup cost for unknown edge {edge_id}")

        for client in self.clients:
            if client.edge not in edges:
                raise ValueError(f"client {client.id} assigned to unknown edge {client.edge}")

        for edge in self.edges:
            if len(edge.accuracy) != len(self.models) or any(len(row) != len(self.tasks) for row in edge.accuracy):
                raise ValueError(
                    f"edge {edge.id} accuracy must be {len(self.models)}x{len(self.tasks)} [model][task]"
                )
            for model, row in zip(self.models, edge.accuracy):
                for task_id, value in zip(task_ids, row):
                    if not 0.0 <= value <= 1.0:
                        raise ValueError(
                            f"accuracy out of [0,1]: edge {edge.id} model {model.id} task {task_id} = {value}"
                        )
                    if value > 0.0 and task_id not in model.supported_tasks:
                        raise ValueError(
                            f"edge {edge.id} model {model.id} has accuracy on unsupported task {task_id}"
                        )

        if set(self.cloud.accuracy) != tasks:
            raise ValueError("cloud accuracy must list every task exactly once")
        for j, task_id in enumerate(task_ids):
            value = self.cloud.accuracy[task_id]
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"accuracy out of [0,1]: cloud task {task_id} = {value}")
            best_edge = max(edge.accuracy[m][j] for edge in self.edges for m in range(len(self.models)))
            if value < best_edge:
                raise ValueError(f"cloud accuracy for task {task_id} below best edge accuracy {best_edge}")

        for client_id, per_task in self.workload.rates.items():
            if client_id not in clients:
                raise ValueError(f"workload references unknown client {client_id}")
            for task_id, rate in per_task.items():
                if task_id not in tasks:
                    raise ValueError(f"workload references unknown task {task_id}")
                if rate < 0:
                    raise ValueError(f"rate must be >= 0 (client {client_id}, task {task_id}: {rate})")
        if self.workload.total_rate <= 0:
            raise ValueError("total arrival rate must be > 0")
        return self

    # ----- derived views -----

    # Cached in the instance dict; equality compares fields only.
    @cached_property
    def index(self) -> ScenarioIndex:
        return _build_index(self)

    @property
    def topology(self) -> Topology:
        return Topology(
            clients=tuple(self.clients),
            edges=tuple(self.edges),
            assignment={c.id: c.edge for c in self.clients},
            edge_uplink={e.id: e.uplink_bytes_per_s for e in self.edges},
            cloud_uplink=self.cloud.uplink_bytes_per_s,
        )

    @property
    def accuracy(self) -> AccuracyTable:
        return self.index.accuracy

    @property
    def batching_interval(self) -> Optional[float]:
        return self.batching.interval_s if self.batching is not None else None

    def replace(self, **update: Any) -> "Scenario":
        data = self.model_dump()
        data.update(update)
        return parse_scenario(data)

    def with_mode(self, mode: Mode) -> "Scenario":
        return self.replace(mode=mode)

    def with_batching_interval(self, interval_s: float) -> "Scenario":
        return self.replace(batching={"interval_s": interval_s})

    def summary(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "mode": self.mode,
            "clients": len(self.clients),
            "edges": len(self.edges),
            "models": len(self.models),
            "tasks": len(self.tasks),
            "total_rate": self.workload.total_rate,
            "digest": canonical_hash(self),
        }


def _build_index(s: Scenario) -> ScenarioIndex:
    model_ids = tuple(m.id for m in s.models)
    task_ids = tuple(t.id for t in s.tasks)
    client_ids = tuple(c.id for c in s.clients)
    edge_ids = tuple(e.id for e in s.edges)
    model_pos = {m: i for i, m in enumerate(model_ids)}
    task_pos = {t: i for i, t in enumerate(task_ids)}
    client_pos = {c: i for i, c in enumerate(client_ids)}
    edge_pos = {e: i for i, e in enumerate(edge_ids)}

    client_edge = np.array([edge_pos[c.edge] for c in s.clients], dtype=np.int64)
    edge_clients = tuple(
        tuple(int(c) for c in np.flatnonzero(client_edge == e)) for e in range(len(edge_ids))
    )

    setup = np.zeros((len(edge_ids), len(model_ids)))
    has_setup = True
    for m, model in enumerate(s.models):
        costs = model.setup_cost or {}
        for e, edge_id in enumerate(edge_ids):
            if edge_id in costs:
                setup[e, m] = costs[edge_id]
            else:
                has_setup = False

    rates = np.zeros((len(client_ids), len(task_ids)))
    for client_id, per_task in s.workload.rates.items():
        for task_id, rate in per_task.items():
            rates[client_pos[client_id], task_pos[task_id]] = rate
    total_rate = float(np.sum(rates))

    accuracy = AccuracyTable(
        edge=_frozen(np.array([e.accuracy for e in s.edges], dtype=float)),
        cloud=_frozen(np.array([s.cloud.accuracy[t] for t in task_ids], dtype=float)),
        client_factor=s.client_accuracy_factor,
    )

    return ScenarioIndex(
        model_ids=model_ids,
        task_ids=task_ids,
        client_ids=client_ids,
        edge_ids=edge_ids,
        model_pos=model_pos,
        task_pos=task_pos,
        client_pos=client_pos,
        edge_pos=edge_pos,
        client_edge=_frozen(client_edge),
        edge_clients=edge_clients,
        mem_edge=_frozen(np.array([m.memory_bytes for m in s.models])),
        mem_client=_frozen(np.array([m.client_memory for m in s.models])),
        compute=_frozen(np.array([m.compute_per_query for m in s.models])),
        setup=_frozen(setup),
        has_setup=has_setup,
        input_bytes=_frozen(np.array([t.input_bytes for t in s.tasks])),
        accuracy=accuracy,
        rates=_frozen(rates),
        total_rate=total_rate,
        weights=_frozen(rates / total_rate),
        client_memory=_frozen(np.array([c.memory_bytes for c in s.clients])),
        client_compute=_frozen(np.array([c.compute_capacity for c in s.clients])),
        edge_memory=_frozen(np.array([e.memory_bytes for e in s.edges])),
        edge_compute=_frozen(np.array([e.compute_capacity for e in s.edges])),
        edge_uplink=_frozen(np.array([e.uplink_bytes_per_s for e in s.edges])),
        cloud_uplink=float(s.cloud.uplink_bytes_per_s),
        batching_interval=s.batching_interval,
    )


# ----- decision containers -----


def best_assignment(accuracy: np.ndarray, models: Iterable[int]) -> np.ndarray:
    """Accuracy-max model per task over `models` (lowest index on ties, -1 = null model)."""
    n_tasks = accuracy.shape[1]
    z = np.full(n_tasks, -1, dtype=np.int64)
    best = np.zeros(n_tasks)
    for m in sorted(models):
        better = accuracy[m] > best
        z[better] = m
        best[better] = accuracy[m][better]
    return z


@dataclass(frozen=True, eq=False)
class Onloading:
    """Index-form (x, z): onloaded model indices and task assignments per node."""

    client_models: Tuple[Tuple[int, ...], ...]
    edge_models: Tuple[Tuple[int, ...], ...]
    # [client, task] / [edge, task]; -1 marks the null model.
    client_assign: np.ndarray
    edge_assign: np.ndarray

    @classmethod
    def from_sets(
        cls,
        ix: ScenarioIndex,
        client_sets: Sequence[Iterable[int]],
        edge_sets: Sequence[Iterable[int]],
    ) -> "Onloading":
        client_models = tuple(tuple(sorted(set(ms))) for ms in client_sets)
        edge_models = tuple(tuple(sorted(set(ms))) for ms in edge_sets)
        client_assign = np.array(
            [best_assignment(ix.client_accuracy(c), ms) for c, ms in enumerate(client_models)],
            dtype=np.int64,
        ).reshape(ix.n_clients, ix.n_tasks)
        edge_assign = np.array(
            [best_assignment(ix.edge_accuracy(e), ms) for e, ms in enumerate(edge_models)],
            dtype=np.int64,
        ).reshape(ix.n_edges, ix.n_tasks)
        return cls(client_models, edge_models, _frozen(client_assign), _frozen(edge_assign))

    @classmethod
    def empty(cls, ix: ScenarioIndex) -> "Onloading":
        return cls.from_sets(ix, [()] * ix.n_clients, [()] * ix.n_edges)

    def key(self) -> Tuple[Tuple[Tuple[int, ...], ...], Tuple[Tuple[int, ...], ...]]:
        return self.client_models, self.edge_models


@dataclass(frozen=True, eq=False)
class Offloading:
    # Share sent to the edge and share forwarded to the cloud, both [client, task].
    client: np.ndarray
    edge: np.ndarray

    @classmethod
    def zeros(cls, ix: ScenarioIndex) -> "Offloading":
        shape = (ix.n_clients, ix.n_tasks)
        return cls(_frozen(np.zeros(shape)), _frozen(np.zeros(shape)))

    @classmethod
    def of(cls, client: np.ndarray, edge: np.ndarray) -> "Offloading":
        return cls(_frozen(np.array(client, dtype=float)), _frozen(np.array(edge, dtype=float)))


def assigned_accuracy(accuracy: np.ndarray, assign: np.ndarray) -> np.ndarray:
    """Accuracy of the assigned model per task (0 for the null model)."""
    safe = np.where(assign >= 0, assign, 0)
    values = accuracy[safe, np.arange(assign.shape[0])]
    return np.where(assign >= 0, values, 0.0)


def assigned_compute(ix: ScenarioIndex, assign: np.ndarray) -> np.ndarray:
    safe = np.where(assign >= 0, assign, 0)
    return np.where(assign >= 0, ix.compute[safe], 0.0)


def assigned_setup(ix: ScenarioIndex, e: int, assign: np.ndarray) -> np.ndarray:
    safe = np.where(assign >= 0, assign, 0)
    return np.where(assign >= 0, ix.setup[e, safe], 0.0)


class Plan(BaseModel):
    """One candidate solution, keyed by scenario ids."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    # x: node id -> onloaded model ids.
    x: Dict[str, List[str]]
    # z: node id -> task id -> model id (or "null").
    z: Dict[str, Dict[str, str]]
    # client id -> task id -> fraction offloaded to the assigned edge.
    o_client: Dict[str, Dict[str, float]]
    # client id -> task id -> fraction forwarded on to the cloud.
    o_edge: Dict[str, Dict[str, float]]

    @classmethod
    def from_decisions(cls, s: Scenario, onloading: Onloading, offloading: Offloading) -> "Plan":
        ix = s.index

        def model_name(m: int) -> str:
            return ix.model_ids[m] if m >= 0 else NULL_MODEL

        x: Dict[str, List[str]] = {}
        z: Dict[str, Dict[str, str]] = {}
        for c, client_id in enumerate(ix.client_ids):
            x[client_id] = [ix.model_ids[m] for m in onloading.client_models[c]]
            z[client_id] = {t: model_name(int(onloading.client_assign[c, j])) for j, t in enumerate(ix.task_ids)}
        for e, edge_id in enumerate(ix.edge_ids):
            x[edge_id] = [ix.model_ids[m] for m in onloading.edge_models[e]]
            z[edge_id] = {t: model_name(int(onloading.edge_assign[e, j])) for j, t in enumerate(ix.task_ids)}
        o_client = {
            client_id: {t: float(offloading.client[c, j]) for j, t in enumerate(ix.task_ids)}
            for c, client_id in enumerate(ix.client_ids)
        }
        o_edge = {
            client_id: {t: float(offloading.edge[c, j]) for j, t in enumerate(ix.task_ids)}
            for c, client_id in enumerate(ix.client_ids)
        }
        return cls(x=x, z=z, o_client=o_client, o_edge=o_edge)

    def decisions(self, s: Scenario) -> Tuple[Onloading, Offloading]:
        """Index-form view; raises PlanError when an id does not resolve."""
        ix = s.index
        nodes = set(ix.client_ids) | set(ix.edge_ids)

        for node_id in list(self.x) + list(self.z):
            if node_id not in nodes:
                raise PlanError(f"unknown node id in plan: {node_id}")
        for client_id in list(self.o_client) + list(self.o_edge):
            if client_id not in ix.client_pos:
                raise PlanError(f"unknown client id in plan offloading: {client_id}")

        def model_index(model_id: str) -> int:
            if model_id == NULL_MODEL:
                return -1
            if model_id not in ix.model_pos:
                raise PlanError(f"unknown model id in plan: {model_id}")
            return ix.model_pos[model_id]

        def task_index(task_id: str) -> int:
            if task_id not in ix.task_pos:
                raise PlanError(f"unknown task id in plan: {task_id}")
            return ix.task_pos[task_id]

        def sets_for(node_ids: Sequence[str]) -> Tuple[Tuple[int, ...], ...]:
            out = []
            for node_id in node_ids:
                ms = [model_index(m) for m in self.x.get(node_id, [])]
                if any(m < 0 for m in ms):
                    raise PlanError(f"null model cannot be listed in x for node {node_id}")
                out.append(tuple(sorted(set(ms))))
            return tuple(out)

        def assign_for(node_ids: Sequence[str]) -> np.ndarray:
            z = np.full((len(node_ids), ix.n_tasks), -1, dtype=np.int64)
            for i, node_id in enumerate(node_ids):
                for task_id, model_id in self.z.get(node_id, {}).items():
                    z[i, task_index(task_id)] = model_index(model_id)
            return z

        def fractions(table: Dict[str, Dict[str, float]]) -> np.ndarray:
            out = np.zeros((ix.n_clients, ix.n_tasks))
            for client_id, per_task in table.items():
                for task_id, value in per_task.items():
                    out[ix.client_pos[client_id], task_index(task_id)] = float(value)
            return out

        onloading = Onloading(
            client_models=sets_for(ix.client_ids),
            edge_models=sets_for(ix.edge_ids),
            client_assign=_frozen(assign_for(ix.client_ids)),
            edge_assign=_frozen(assign_for(ix.edge_ids)),
        )
        return onloading, Offloading.of(fractions(self.o_client), fractions(self.o_edge))


# ----- constraint report -----


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    node: str
    slack: float
    budget: float

    @property
    def relative_violation(self) -> float:
        violation = max(0.0, -self.slack)
        return violation / self.budget if self.budget > 0 else violation


@dataclass(frozen=True)
class ConstraintReport:
    checks: Tuple[ConstraintCheck, ...]

    def by_name(self, name: str) -> Dict[str, float]:
        return {c.node: c.slack for c in self.checks if c.name == name}

    def slack(self, name: str, node: str) -> float:
        for check in self.checks:
            if check.name == name and check.node == node:
                return check.slack
        raise KeyError(f"no constraint {name} for {node}")

    @property
    def max_violation(self) -> float:
        return max((c.relative_violation for c in self.checks), default=0.0)

    def feasible(self, tol: float = FEASIBILITY_TOL) -> bool:
        return self.max_violation <= tol

    def violations(self, tol: float = FEASIBILITY_TOL) -> List[ConstraintCheck]:
        return [c for c in self.checks if c.relative_violation > tol]

    def to_rows(self) -> List[Dict[str, Any]]:
        return [
            {"constraint": c.name, "node": c.node, "slack": c.slack, "budget": c.budget}
            for c in self.checks
        ]


def edge_loads(ix: ScenarioIndex, offloading: Offloading) -> np.ndarray:
    """Offloaded job rate arriving at each edge, [edge, task]."""
    per_client = ix.rates * (offloading.client - offloading.edge)
    loads = np.zeros((ix.n_edges, ix.n_tasks))
    np.add.at(loads, ix.client_edge, per_client)
    return np.maximum(loads, 0.0)


def check_constraints(s: Scenario, onloading: Onloading, offloading: Offloading) -> ConstraintReport:
    ix = s.index
    checks: List[ConstraintCheck] = []

    for c, client_id in enumerate(ix.client_ids):
        used = float(np.sum(ix.mem_client[list(onloading.client_models[c])])) if onloading.client_models[c] else 0.0
        checks.append(ConstraintCheck("client_memory", client_id, ix.client_memory[c] - used, ix.client_memory[c]))
    for e, edge_id in enumerate(ix.edge_ids):
        used = float(np.sum(ix.mem_edge[list(onloading.edge_models[e])])) if onloading.edge_models[e] else 0.0
        checks.append(ConstraintCheck("edge_memory", edge_id, ix.edge_memory[e] - used, ix.edge_memory[e]))

    for c, client_id in enumerate(ix.client_ids):
        local = ix.rates[c] * (1.0 - offloading.client[c])
        load = float(np.sum(local * assigned_compute(ix, onloading.client_assign[c])))
        checks.append(ConstraintCheck("client_compute", client_id, ix.client_compute[c] - load, ix.client_compute[c]))

    loads = edge_loads(ix, offloading)
    if s.mode == "batching":
        if ix.batching_interval is None:
            raise BatchingParametersMissing("batching parameters missing: scenario has no batching interval")
        for e, edge_id in enumerate(ix.edge_ids):
            total = float(np.sum(task_latencies(ix, onloading, loads, e)))
            checks.append(
                ConstraintCheck("batching_latency", edge_id, ix.batching_interval - total, ix.batching_interval)
            )
    else:
        for e, edge_id in enumerate(ix.edge_ids):
            load = float(np.sum(loads[e] * assigned_compute(ix, onloading.edge_assign[e])))
            checks.append(ConstraintCheck("edge_compute", edge_id, ix.edge_compute[e] - load, ix.edge_compute[e]))

    for e, edge_id in enumerate(ix.edge_ids):
        members = list(ix.edge_clients[e])
        sent = float(np.sum(ix.rates[members] * offloading.client[members] * ix.input_bytes)) if members else 0.0
        checks.append(ConstraintCheck("edge_uplink", edge_id, ix.edge_uplink[e] - sent, ix.edge_uplink[e]))
    forwarded = float(np.sum(ix.rates * offloading.edge * ix.input_bytes))
    checks.append(ConstraintCheck("cloud_uplink", "cloud", ix.cloud_uplink - forwarded, ix.cloud_uplink))

    node_sets = list(zip(ix.client_ids, onloading.client_models, onloading.client_assign)) + list(
        zip(ix.edge_ids, onloading.edge_models, onloading.edge_assign)
    )
    for node_id, models, assign in node_sets:
        allowed = set(models)
        bad = [int(m) for m in assign if m >= 0 and int(m) not in allowed]
        checks.append(ConstraintCheck("assignment", node_id, -1.0 if bad else 0.0, 1.0))

    for c, client_id in enumerate(ix.client_ids):
        for j, task_id in enumerate(ix.task_ids):
            oc = float(offloading.client[c, j])
            oce = float(offloading.edge[c, j])
            node = f"{client_id}/{task_id}"
            checks.append(ConstraintCheck("offloading_consistency", node, oc - oce, 1.0))
            checks.append(ConstraintCheck("offloading_bounds", node, min(oce, 1.0 - oc), 1.0))

    return ConstraintReport(tuple(checks))


def task_latencies(ix: ScenarioIndex, onloading: Onloading, loads: np.ndarray, e: int) -> np.ndarray:
    """Per-task batch time: setup cost when the task has edge traffic plus linear batch compute time."""
    assign = onloading.edge_assign[e]
    active = (loads[e] > 0.0) & (assign >= 0)
    setup = np.where(active, assigned_setup(ix, e, assign), 0.0)
    per_query = assigned_compute(ix, assign) / ix.edge_compute[e]
    return setup + per_query * loads[e] * (ix.batching_interval or 0.0)


def validate_plan(s: Scenario, p: Plan) -> ConstraintReport:
    onloading, offloading = p.decisions(s)
    return check_constraints(s, onloading, offloading)


# ----- serialization -----


def canonical_hash(s: Scenario) -> str:
    payload = json.dumps(s.model_dump(mode="json"), sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _first_error(exc: ValidationError) -> str:
    errors = exc.errors()
    if not errors:
        return str(exc)
    first = errors[0]
    loc = ".".join(str(part) for part in first.get("loc", ())) or "scenario"
    return f"{loc}: {first.get('msg', 'invalid value')}"


def parse_scenario(data: Any) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioParseError("scenario document must be a mapping")
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        raise ScenarioValidationError(_first_error(exc)) from exc


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as exc:
        raise ScenarioParseError(f"cannot read scenario file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"malformed scenario file {path}: {exc}") from exc
    return parse_scenario(data)


def dump_scenario(s: Scenario, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(s.model_dump(mode="json"), f, indent=2)
    return path


def dump_plan(p: Plan, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(p.model_dump(mode="json"), f, indent=2, sort_keys=True)
    return path


def load_plan(path: str | Path) -> Plan:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise PlanError(f"cannot read plan file {path}: {exc}") from exc
    try:
        return Plan.model_validate(data)
    except ValidationError as exc:
        raise PlanError(_first_error(exc)) from exc
