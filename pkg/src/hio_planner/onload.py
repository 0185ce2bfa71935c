from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, OracleTooLargeError
from .model import (
    FEASIBILITY_TOL,
    Offloading,
    Onloading,
    Scenario,
    ScenarioIndex,
    assigned_accuracy,
    best_assignment,
    edge_loads,
)
from .objective import objective_value

if TYPE_CHECKING:
    from .batching import SurrogateCoefficients

logger = logging.getLogger(__name__)

NodeKind = Literal["client", "edge"]
TerminalReason = Literal["budget", "exhausted", "singleton"]

EXHAUSTIVE_LIMIT = 1 << 16


@dataclass(frozen=True, eq=False)
class NodeProblem:
    """One node's onloading subproblem with the offloading held fixed."""

    kind: NodeKind
    index: int
    node_id: str
    # [model, task]; clients already include the client accuracy factor.
    accuracy: np.ndarray
    # Coverage weight per task: normalized rate kept local on clients, normalized edge load on edges.
    weights: np.ndarray
    # Jobs per second executed here per task.
    rates: np.ndarray
    memory: np.ndarray
    memory_budget: float
    compute: np.ndarray
    capacity: float
    # nu per model; zeros outside batching mode.
    setup: np.ndarray
    # Batching interval when the edge runs under the batching constraint.
    interval: Optional[float] = None
    # Whether the task has edge load, and its surrogate value, per task.
    active: Optional[np.ndarray] = None
    surrogate_active: Optional[np.ndarray] = None

    @property
    def n_models(self) -> int:
        return int(self.memory.shape[0])

    def assignment(self, models: Sequence[int]) -> np.ndarray:
        return best_assignment(self.accuracy, models)

    def coverage(self, models: Sequence[int]) -> float:
        z = self.assignment(models)
        return float(np.sum(self.weights * assigned_accuracy(self.accuracy, z)))

    def memory_used(self, models: Sequence[int]) -> float:
        return float(sum(self.memory[m] for m in models))

    def fits(self, models: Sequence[int]) -> bool:
        return self.memory_used(models) <= self.memory_budget * (1 + 1e-12)

    def usage(self, z: np.ndarray, *, exact: bool = True) -> float:
        """Compute (or batching-latency) load as a fraction of the node's budget."""
        served = z >= 0
        safe = np.where(served, z, 0)
        per_query = np.where(served, self.compute[safe], 0.0)
        if self.interval is None:
            return float(np.sum(self.rates * per_query)) / self.capacity
        indicator = self.active if exact else self.surrogate_active
        nu = np.where(served, self.setup[safe], 0.0)
        busy = nu * indicator + (per_query / self.capacity) * self.rates * self.interval
        return float(np.sum(busy)) / self.interval

    def lagrangian(self, models: Sequence[int], alpha: float) -> float:
        return self.coverage(models) - alpha * self.usage(self.assignment(models), exact=False)


def build_node_problems(
    s: Scenario,
    offloading: Offloading,
    *,
    surrogate: Optional["SurrogateCoefficients"] = None,
) -> List[NodeProblem]:
    """Clients first, then edges, in scenario order."""
    ix = s.index
    problems: List[NodeProblem] = []
    for c, client_id in enumerate(ix.client_ids):
        local = ix.rates[c] * (1.0 - offloading.client[c])
        problems.append(
            NodeProblem(
                kind="client",
                index=c,
                node_id=client_id,
                accuracy=ix.client_accuracy(c),
                weights=local / ix.total_rate,
                rates=local,
                memory=ix.mem_client,
                memory_budget=float(ix.client_memory[c]),
                compute=ix.compute,
                capacity=float(ix.client_compute[c]),
                setup=np.zeros(ix.n_models),
            )
        )
    loads = edge_loads(ix, offloading)
    batching = s.mode == "batching"
    for e, edge_id in enumerate(ix.edge_ids):
        active = (loads[e] > 0).astype(float)
        surrogate_active = surrogate.value(loads)[e] if surrogate is not None else active
        problems.append(
            NodeProblem(
                kind="edge",
                index=e,
                node_id=edge_id,
                accuracy=ix.edge_accuracy(e),
                weights=loads[e] / ix.total_rate,
                rates=loads[e],
                memory=ix.mem_edge,
                memory_budget=float(ix.edge_memory[e]),
                compute=ix.compute,
                capacity=float(ix.edge_compute[e]),
                setup=ix.setup[e] if batching else np.zeros(ix.n_models),
                interval=ix.batching_interval if batching else None,
                active=active if batching else None,
                surrogate_active=surrogate_active if batching else None,
            )
        )
    return problems


def coverage_value(weights: Sequence[Any], accuracy: Sequence[Sequence[Any]], models: Sequence[int]) -> Any:
    """f(M) = sum_t weight_t * max_{m in M} a_{m,t}, with 0 for an empty M.

    Plain Python arithmetic, so exact rational inputs stay exact.
    """
    total = 0
    for t, weight in enumerate(weights):
        best = 0
        for m in models:
            if accuracy[m][t] > best:
                best = accuracy[m][t]
        total = total + weight * best
    return total


def marginal_gain(node: NodeProblem, candidate: int, current: Sequence[int], alpha: float = 0.0) -> float:
    """Change of the node-local Lagrangian when `candidate` joins `current`."""
    if candidate in current:
        raise ValueError(f"model {candidate} already selected at {node.node_id}")
    return node.lagrangian(list(current) + [candidate], alpha) - node.lagrangian(current, alpha)


@dataclass(frozen=True)
class GreedyStep:
    model: int
    gain: float
    ratio: float


@dataclass(frozen=True)
class GreedyTrace:
    node: str
    steps: Tuple[GreedyStep, ...]
    reason: TerminalReason

    def to_record(self, model_ids: Sequence[str]) -> Dict[str, Any]:
        return {
            "node": self.node,
            "steps": [
                {"model": model_ids[step.model], "gain": step.gain, "ratio": step.ratio} for step in self.steps
            ],
            "reason": self.reason,
        }


@dataclass(frozen=True, eq=False)
class NodeSelection:
    models: Tuple[int, ...]
    z: np.ndarray
    trace: GreedyTrace


def greedy_node_select(node: NodeProblem, alpha: float = 0.0) -> NodeSelection:
    """Ratio greedy on Lagrangian gain per byte, then a best-singleton check."""
    selected: List[int] = []
    steps: List[GreedyStep] = []
    used = 0.0
    current = node.lagrangian(selected, alpha)
    reason: TerminalReason = "budget"
    while True:
        best: Optional[Tuple[int, float, float]] = None
        for m in range(node.n_models):
            if m in selected or used + node.memory[m] > node.memory_budget * (1 + 1e-12):
                continue
            gain = node.lagrangian(selected + [m], alpha) - current
            ratio = gain / node.memory[m]
            if best is None or ratio > best[2]:
                best = (m, gain, ratio)
        if best is None:
            reason = "budget"
            break
        m, gain, ratio = best
        if gain <= 0:
            reason = "exhausted"
            break
        selected.append(m)
        steps.append(GreedyStep(model=m, gain=float(gain), ratio=float(ratio)))
        used += float(node.memory[m])
        current += gain

    best_single: Optional[Tuple[int, float]] = None
    for m in range(node.n_models):
        if node.memory[m] > node.memory_budget * (1 + 1e-12):
            continue
        value = node.lagrangian([m], alpha)
        if best_single is None or value > best_single[1]:
            best_single = (m, value)
    if best_single is not None and best_single[1] > node.lagrangian(selected, alpha) + 1e-12:
        selected = [best_single[0]]
        reason = "singleton"

    models = tuple(sorted(selected))
    return NodeSelection(models=models, z=node.assignment(models), trace=GreedyTrace(node.node_id, tuple(steps), reason))


def feasible_subsets(memory: np.ndarray, budget: float, *, limit: Optional[int] = None) -> List[Tuple[int, ...]]:
    """Every memory-feasible model subset in depth-first lexicographic order, empty set first."""
    out: List[Tuple[int, ...]] = []
    n = int(memory.shape[0])
    cap = budget * (1 + 1e-12)

    def grow(start: int, chosen: List[int], used: float) -> None:
        out.append(tuple(chosen))
        if limit is not None and len(out) > limit:
            raise OracleTooLargeError(f"instance too large for oracle: more than {limit} subsets at one node")
        for m in range(start, n):
            if used + memory[m] <= cap:
                chosen.append(m)
                grow(m + 1, chosen, used + float(memory[m]))
                chosen.pop()

    grow(0, [], 0.0)
    return out


def exhaustive_node_select(
    node: NodeProblem,
    alpha: float = 0.0,
    *,
    exact_compute: bool = False,
    limit: int = EXHAUSTIVE_LIMIT,
) -> NodeSelection:
    """Best memory-feasible subset for one node.

    With exact_compute the true compute (or batching) constraint at the fixed offloading is
    enforced and plain coverage is maximized; otherwise the Lagrangian is.
    """
    best_models: Tuple[int, ...] = ()
    best_value = float("-inf")
    for subset in feasible_subsets(node.memory, node.memory_budget, limit=limit):
        if exact_compute:
            if node.usage(node.assignment(subset), exact=True) > 1.0 + FEASIBILITY_TOL:
                continue
            value = node.coverage(subset)
        else:
            value = node.lagrangian(subset, alpha)
        if value > best_value:
            best_models, best_value = subset, value
    return NodeSelection(
        models=best_models,
        z=node.assignment(best_models),
        trace=GreedyTrace(node.node_id, (), "exhausted"),
    )


@dataclass(frozen=True)
class GreedyLrOptions:
    # Stop once every node's relaxed violation is below this.
    eps: float = 1e-5
    max_iterations: int = 50
    eta_client: float = 1.0
    eta_edge: float = 1.0

    def __post_init__(self) -> None:
        if self.eps <= 0:
            raise ConfigError(f"eps must be > 0, got {self.eps}")
        if self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be >= 1, got {self.max_iterations}")


@dataclass
class DualState:
    """Multipliers for every node, clients first then edges."""

    alpha: np.ndarray
    eta_client: float = 1.0
    eta_edge: float = 1.0
    iteration: int = 0
    # Relaxed violation of the latest iterate.
    violation: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def start(cls, n_nodes: int, opts: GreedyLrOptions) -> "DualState":
        return cls(alpha=np.zeros(n_nodes), eta_client=opts.eta_client, eta_edge=opts.eta_edge)

    def update(self, violation: np.ndarray, problems: Sequence[NodeProblem]) -> None:
        """alpha <- max(0, alpha + eta * mass / sqrt(k) * violation), where mass is the node's total coverage weight."""
        self.iteration += 1
        eta = np.array([self.eta_client if p.kind == "client" else self.eta_edge for p in problems])
        mass = np.array([float(np.sum(p.weights)) for p in problems])
        step = eta * mass / math.sqrt(self.iteration)
        self.alpha = np.maximum(self.alpha + step * violation, 0.0)
        self.violation = violation


@dataclass(frozen=True, eq=False)
class OnloadResult:
    onloading: Onloading
    # True compute (or batching) constraints hold at the fixed offloading.
    feasible: bool
    objective: float
    iterations: int
    duals: DualState
    traces: Tuple[Tuple[GreedyTrace, ...], ...]


def _onloading_from(ix: ScenarioIndex, problems: Sequence[NodeProblem], selections: Sequence[NodeSelection]) -> Onloading:
    client_sets = [sel.models for p, sel in zip(problems, selections) if p.kind == "client"]
    edge_sets = [sel.models for p, sel in zip(problems, selections) if p.kind == "edge"]
    return Onloading.from_sets(ix, client_sets, edge_sets)


def _log_traces(ix: ScenarioIndex, iteration: int, traces: Sequence[GreedyTrace]) -> None:
    if not logger.isEnabledFor(logging.DEBUG):
        return
    for trace in traces:
        record = {"phase": "greedy", "iteration": iteration, **trace.to_record(ix.model_ids)}
        logger.debug(json.dumps(record, sort_keys=True))


def greedy_lr(
    s: Scenario,
    offloading: Offloading,
    opts: Optional[GreedyLrOptions] = None,
    *,
    surrogate: Optional["SurrogateCoefficients"] = None,
) -> OnloadResult:
    """Greedy onloading inside a subgradient loop on the compute multipliers."""
    opts = opts or GreedyLrOptions()
    ix = s.index
    problems = build_node_problems(s, offloading, surrogate=surrogate)
    duals = DualState.start(len(problems), opts)

    best: Optional[Tuple[bool, float, float, Onloading]] = None
    traces: List[Tuple[GreedyTrace, ...]] = []
    iterations = 0
    for k in range(1, opts.max_iterations + 1):
        iterations = k
        selections = [greedy_node_select(p, float(duals.alpha[i])) for i, p in enumerate(problems)]
        onloading = _onloading_from(ix, problems, selections)
        traces.append(tuple(sel.trace for sel in selections))
        _log_traces(ix, k, traces[-1])

        true_excess = max(
            (max(0.0, p.usage(sel.z, exact=True) - 1.0) for p, sel in zip(problems, selections)), default=0.0
        )
        feasible = true_excess <= FEASIBILITY_TOL
        value = objective_value(ix, onloading, offloading)
        if best is None or _better(feasible, value, true_excess, best):
            best = (feasible, value, true_excess, onloading)

        violation = np.array([p.usage(sel.z, exact=False) - 1.0 for p, sel in zip(problems, selections)])
        if np.all(violation < opts.eps):
            duals.violation = violation
            break
        duals.update(violation, problems)

    assert best is not None
    feasible, value, _, onloading = best
    logger.debug(
        "greedy_lr finished: iterations=%d feasible=%s objective=%.6f max_alpha=%.6g",
        iterations,
        feasible,
        value,
        float(np.max(duals.alpha)) if duals.alpha.size else 0.0,
    )
    return OnloadResult(
        onloading=onloading,
        feasible=feasible,
        objective=value,
        iterations=iterations,
        duals=duals,
        traces=tuple(traces),
    )


def _better(feasible: bool, value: float, excess: float, incumbent: Tuple[bool, float, float, Onloading]) -> bool:
    inc_feasible, inc_value, inc_excess, _ = incumbent
    if feasible != inc_feasible:
        return feasible
    if feasible:
        return value > inc_value
    if excess != inc_excess:
        return excess < inc_excess
    return value > inc_value


def memory_greedy(
    s: Scenario,
    offloading: Offloading,
    *,
    surrogate: Optional["SurrogateCoefficients"] = None,
) -> Onloading:
    """Single ratio-greedy pass per node under memory only."""
    ix = s.index
    problems = build_node_problems(s, offloading, surrogate=surrogate)
    return _onloading_from(ix, problems, [greedy_node_select(p, 0.0) for p in problems])


def exhaustive_onloading(
    s: Scenario,
    offloading: Offloading,
    *,
    limit: int = EXHAUSTIVE_LIMIT,
    nodes: Literal["all", "clients"] = "all",
) -> Onloading:
    """Per-node exhaustive selection under memory and the true compute constraint at fixed o."""
    ix = s.index
    problems = build_node_problems(s, offloading)
    selections = []
    for p in problems:
        if nodes == "clients" and p.kind == "edge":
            selections.append(NodeSelection((), p.assignment(()), GreedyTrace(p.node_id, (), "exhausted")))
        else:
            selections.append(exhaustive_node_select(p, exact_compute=True, limit=limit))
    return _onloading_from(ix, problems, selections)
