from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Literal, Tuple

import numpy as np

from .errors import PlanError
from .model import (
    Offloading,
    Onloading,
    Plan,
    Scenario,
    ScenarioIndex,
    assigned_accuracy,
    edge_loads,
)


@dataclass(frozen=True)
class ObjectiveBreakdown:
    # F (kind="acc") or 1 - F (kind="loss").
    total: float
    # Per client id.
    client_terms: Dict[str, float]
    # Per client id; the edge is the client's assigned edge.
    edge_terms: Dict[str, float]
    cloud_terms: Dict[str, float]
    # Edge load and its share of the total rate, per edge id and task id.
    edge_loads: Dict[str, Dict[str, float]]
    edge_loads_normalized: Dict[str, Dict[str, float]]
    kind: Literal["acc", "loss"] = "acc"


def tier_accuracies(ix: ScenarioIndex, onloading: Onloading) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Client, edge and cloud accuracy seen by each (client, task), all [client, task]."""
    client_acc = np.zeros((ix.n_clients, ix.n_tasks))
    edge_acc = np.zeros((ix.n_clients, ix.n_tasks))
    for c in range(ix.n_clients):
        e = int(ix.client_edge[c])
        client_acc[c] = assigned_accuracy(ix.client_accuracy(c), onloading.client_assign[c])
        edge_acc[c] = assigned_accuracy(ix.edge_accuracy(e), onloading.edge_assign[e])
    cloud_acc = np.broadcast_to(ix.accuracy.cloud, (ix.n_clients, ix.n_tasks))
    return client_acc, edge_acc, cloud_acc


def objective_terms(
    ix: ScenarioIndex, onloading: Onloading, offloading: Offloading
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    client_acc, edge_acc, cloud_acc = tier_accuracies(ix, onloading)
    w = ix.weights
    client = w * (1.0 - offloading.client) * client_acc
    edge = w * (offloading.client - offloading.edge) * edge_acc
    cloud = w * offloading.edge * cloud_acc
    return client, edge, cloud


def objective_value(ix: ScenarioIndex, onloading: Onloading, offloading: Offloading) -> float:
    client, edge, cloud = objective_terms(ix, onloading, offloading)
    return float(np.sum(np.concatenate([client.ravel(), edge.ravel(), cloud.ravel()])))


def evaluate(s: Scenario, onloading: Onloading, offloading: Offloading) -> ObjectiveBreakdown:
    ix = s.index
    client, edge, cloud = objective_terms(ix, onloading, offloading)
    loads = edge_loads(ix, offloading)
    return ObjectiveBreakdown(
        total=float(np.sum(np.concatenate([client.ravel(), edge.ravel(), cloud.ravel()]))),
        client_terms={cid: float(np.sum(client[c])) for c, cid in enumerate(ix.client_ids)},
        edge_terms={cid: float(np.sum(edge[c])) for c, cid in enumerate(ix.client_ids)},
        cloud_terms={cid: float(np.sum(cloud[c])) for c, cid in enumerate(ix.client_ids)},
        edge_loads=_per_edge(ix, loads),
        edge_loads_normalized=_per_edge(ix, loads / ix.total_rate),
    )


def _per_edge(ix: ScenarioIndex, table: np.ndarray) -> Dict[str, Dict[str, float]]:
    return {
        edge_id: {task_id: float(table[e, j]) for j, task_id in enumerate(ix.task_ids)}
        for e, edge_id in enumerate(ix.edge_ids)
    }


def eval_objective(s: Scenario, p: Plan) -> ObjectiveBreakdown:
    onloading, offloading = p.decisions(s)
    return evaluate(s, onloading, offloading)


def eval_loss_objective(s: Scenario, p: Plan) -> ObjectiveBreakdown:
    """Loss form 1 - F with per-term losses weight * share * (1 - accuracy)."""
    ix = s.index
    onloading, offloading = p.decisions(s)
    client_acc, edge_acc, cloud_acc = tier_accuracies(ix, onloading)
    w = ix.weights
    client = w * (1.0 - offloading.client) * (1.0 - client_acc)
    edge = w * (offloading.client - offloading.edge) * (1.0 - edge_acc)
    cloud = w * offloading.edge * (1.0 - cloud_acc)
    loads = edge_loads(ix, offloading)
    return ObjectiveBreakdown(
        total=float(np.sum(np.concatenate([client.ravel(), edge.ravel(), cloud.ravel()]))),
        client_terms={cid: float(np.sum(client[c])) for c, cid in enumerate(ix.client_ids)},
        edge_terms={cid: float(np.sum(edge[c])) for c, cid in enumerate(ix.client_ids)},
        cloud_terms={cid: float(np.sum(cloud[c])) for c, cid in enumerate(ix.client_ids)},
        edge_loads=_per_edge(ix, loads),
        edge_loads_normalized=_per_edge(ix, loads / ix.total_rate),
        kind="loss",
    )


def effective_edge_load(s: Scenario, p: Plan, e: str) -> Dict[str, float]:
    ix = s.index
    if e not in ix.edge_pos:
        raise PlanError(f"unknown edge id: {e}")
    _, offloading = p.decisions(s)
    loads = edge_loads(ix, offloading)
    return {task_id: float(loads[ix.edge_pos[e], j]) for j, task_id in enumerate(ix.task_ids)}


def offloading_gap(s: Scenario, onloading: Onloading, reference: Offloading, other: Offloading) -> float:
    """F(x, reference) - F(x, other), written as weighted deviations of both offloading tiers."""
    ix = s.index
    client_acc, edge_acc, cloud_acc = tier_accuracies(ix, onloading)
    w = ix.weights
    client_part = w * (client_acc - edge_acc) * (other.client - reference.client)
    cloud_part = w * (edge_acc - cloud_acc) * (other.edge - reference.edge)
    return float(np.sum(np.concatenate([client_part.ravel(), cloud_part.ravel()])))


def max_offloading_deviation(a: Offloading, b: Offloading) -> float:
    return float(max(np.max(np.abs(a.client - b.client)), np.max(np.abs(a.edge - b.edge))))
