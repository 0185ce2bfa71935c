from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import BatchingParametersMissing, OffloadingInfeasibleError, PlanError
from .lp import LinearProgram, build_offloading_lp, edge_var, client_var, offloading_from_solution, solve_lp
from .model import (
    FEASIBILITY_TOL,
    Offloading,
    Onloading,
    Plan,
    Scenario,
    ScenarioIndex,
    edge_loads,
    task_latencies,
)
from .objective import objective_value

logger = logging.getLogger(__name__)

REPAIR_STEPS = 40


@dataclass(frozen=True, eq=False)
class SurrogateCoefficients:
    """Affine stand-in theta * load + psi for the per-task batch indicator, [edge, task]."""

    theta: np.ndarray
    psi: np.ndarray
    smoothing: float
    # Edge loads the coefficients were linearized at.
    point: np.ndarray

    def value(self, loads: np.ndarray) -> np.ndarray:
        return self.theta * loads + self.psi


@dataclass(frozen=True)
class BatchLatency:
    edge: str
    # Batch time per task id, seconds.
    per_task: Dict[str, float]
    # Mean batch size (load times interval) per task id.
    batch_sizes: Dict[str, float]
    total: float
    interval: float

    @property
    def slack(self) -> float:
        return self.interval - self.total


def require_batching(s: Scenario) -> float:
    ix = s.index
    if ix.batching_interval is None:
        raise BatchingParametersMissing("batching parameters missing: scenario has no batching interval")
    if not ix.has_setup:
        raise BatchingParametersMissing("batching parameters missing: every model needs a setup cost per edge")
    return ix.batching_interval


def smoothing_parameter(ix: ScenarioIndex, loads: np.ndarray) -> float:
    positive = loads[loads > 0]
    if positive.size:
        return 1e-3 * float(np.median(positive))
    return 1e-3 * ix.total_rate / (ix.n_edges * ix.n_tasks)


def compute_surrogate(
    s: Scenario, offloading: Offloading, *, smoothing: Optional[float] = None
) -> SurrogateCoefficients:
    """Tangent of g(l) = l / (l + eps) at the current edge loads."""
    ix = s.index
    loads = edge_loads(ix, offloading)
    eps = smoothing if smoothing is not None else smoothing_parameter(ix, loads)
    theta = eps / (loads + eps) ** 2
    psi = loads / (loads + eps) - theta * loads
    return SurrogateCoefficients(theta=theta, psi=psi, smoothing=eps, point=loads)


def edge_latency_total(ix: ScenarioIndex, onloading: Onloading, offloading: Offloading, e: int) -> float:
    loads = edge_loads(ix, offloading)
    return float(np.sum(task_latencies(ix, onloading, loads, e)))


def batch_latency(s: Scenario, p: Plan, e: str) -> BatchLatency:
    if s.mode != "batching":
        raise PlanError("batch latency is only defined for batching-mode scenarios")
    ix = s.index
    interval = ix.batching_interval
    if interval is None:
        raise BatchingParametersMissing("batching parameters missing: scenario has no batching interval")
    if e not in ix.edge_pos:
        raise PlanError(f"unknown edge id: {e}")
    onloading, offloading = p.decisions(s)
    loads = edge_loads(ix, offloading)
    pos = ix.edge_pos[e]
    tau = task_latencies(ix, onloading, loads, pos)
    return BatchLatency(
        edge=e,
        per_task={t: float(tau[j]) for j, t in enumerate(ix.task_ids)},
        batch_sizes={t: float(loads[pos, j] * interval) for j, t in enumerate(ix.task_ids)},
        total=float(np.sum(tau)),
        interval=interval,
    )


def _scaled(offloading: Offloading, members: List[int], scale: float) -> Offloading:
    client = np.array(offloading.client)
    edge = offloading.edge
    client[members] = edge[members] + scale * (client[members] - edge[members])
    return Offloading.of(client, edge)


def repair_batching(s: Scenario, onloading: Onloading, offloading: Offloading) -> Offloading:
    """Shrink the edge-served share at every edge that breaks the true batching constraint.

    One scale per edge multiplies all of its (o^c - o^{c,e}) mass; bisection keeps the largest
    scale whose indicator-form latency fits the batching interval. Scale 0 always fits.
    """
    ix = s.index
    interval = ix.batching_interval
    if interval is None:
        raise BatchingParametersMissing("batching parameters missing: scenario has no batching interval")
    repaired = offloading
    for e in range(ix.n_edges):
        total = edge_latency_total(ix, onloading, repaired, e)
        if total - interval <= FEASIBILITY_TOL * interval:
            continue
        members = list(ix.edge_clients[e])
        lo, hi = 0.0, 1.0
        for _ in range(REPAIR_STEPS):
            mid = 0.5 * (lo + hi)
            trial = _scaled(repaired, members, mid)
            if edge_latency_total(ix, onloading, trial, e) - interval <= FEASIBILITY_TOL * interval:
                lo = mid
            else:
                hi = mid
        logger.debug("batching repair at edge %s: latency %.6g > %.6g, scale %.6g", ix.edge_ids[e], total, interval, lo)
        repaired = _scaled(repaired, members, lo)
    return repaired


def _support_surrogate(ix: ScenarioIndex, supports: Tuple[Tuple[int, ...], ...]) -> SurrogateCoefficients:
    psi = np.zeros((ix.n_edges, ix.n_tasks))
    for e, support in enumerate(supports):
        psi[e, list(support)] = 1.0
    zeros = np.zeros_like(psi)
    return SurrogateCoefficients(theta=zeros, psi=psi, smoothing=0.0, point=zeros)


def _with_idle_rows(
    lp: LinearProgram, ix: ScenarioIndex, onloading: Onloading, supports: Tuple[Tuple[int, ...], ...]
) -> LinearProgram:
    rows = [lp.rows]
    rhs = [lp.rhs]
    names = list(lp.row_names)
    for e, support in enumerate(supports):
        for j in range(ix.n_tasks):
            if j in support or onloading.edge_assign[e, j] < 0:
                continue
            coeffs = np.zeros(lp.n_vars)
            for c in ix.edge_clients[e]:
                coeffs[client_var(ix, c, j)] = ix.rates[c, j]
                coeffs[edge_var(ix, c, j)] = -ix.rates[c, j]
            if not np.any(coeffs):
                continue
            rows.append(coeffs[None, :])
            rhs.append(np.zeros(1))
            names.append(f"idle[{ix.edge_ids[e]}][{ix.task_ids[j]}]")
    return LinearProgram(
        costs=lp.costs,
        rows=np.vstack(rows),
        rhs=np.concatenate(rhs),
        lower=lp.lower,
        upper=lp.upper,
        names=lp.names,
        row_names=tuple(names),
        constant=lp.constant,
        flags=lp.flags,
    )


def solve_batching_exact(s: Scenario, onloading: Onloading) -> Tuple[Optional[Offloading], float]:
    """Optimal offloading under the indicator-form batching constraint for fixed onloading.

    Enumerates which served tasks carry edge traffic at each edge; on a fixed support the
    constraint is linear, and tasks outside the support are held at zero edge load.
    """
    ix = s.index
    require_batching(s)
    per_edge: List[List[Tuple[int, ...]]] = []
    for e in range(ix.n_edges):
        members = list(ix.edge_clients[e])
        served = [
            j
            for j in range(ix.n_tasks)
            if onloading.edge_assign[e, j] >= 0 and members and float(np.sum(ix.rates[members, j])) > 0
        ]
        per_edge.append(
            [combo for size in range(len(served) + 1) for combo in itertools.combinations(served, size)]
        )

    best: Optional[Offloading] = None
    best_value = float("-inf")
    for supports in itertools.product(*per_edge):
        try:
            lp = build_offloading_lp(s, onloading, mode="batching", surrogate=_support_surrogate(ix, supports))
        except OffloadingInfeasibleError:
            continue
        solution = solve_lp(_with_idle_rows(lp, ix, onloading, supports))
        if not solution.optimal:
            continue
        candidate = offloading_from_solution(ix, solution)
        value = objective_value(ix, onloading, candidate)
        if value > best_value + 1e-12:
            best, best_value = candidate, value
    return best, best_value
