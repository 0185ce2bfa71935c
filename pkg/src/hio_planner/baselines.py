from __future__ import annotations

import itertools
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .batching import SurrogateCoefficients, solve_batching_exact
from .errors import OffloadingInfeasibleError, OracleTooLargeError
from .j3o import AoConfig, AoOutcome, AoTrace, run_alternating
from .lp import LinearProgram, build_offloading_lp, offloading_from_solution, solve_lp, solve_offloading
from .model import (
    Offloading,
    Onloading,
    Plan,
    Scenario,
    ScenarioIndex,
    assigned_accuracy,
    assigned_compute,
    assigned_setup,
    best_assignment,
)
from .objective import objective_value
from .onload import EXHAUSTIVE_LIMIT, build_node_problems, exhaustive_onloading, feasible_subsets, memory_greedy
from .tools.rng import CounterRng

logger = logging.getLogger(__name__)

ORACLE_LIMIT = 200_000
# Skip a configuration only when its bound trails the incumbent by more than this.
PRUNE_MARGIN = 1e-9
# Row prices kept from the most recent improving LPs.
DUAL_POOL = 4


@dataclass(frozen=True, eq=False)
class BaselineResult:
    method: str
    plan: Plan
    objective: float
    runtime_ms: float
    onloading: Onloading
    offloading: Offloading
    # Onloading configurations the oracle enumerated, and how many of them were bounded out.
    configurations: Optional[int] = None
    pruned: Optional[int] = None
    trace: Optional[AoTrace] = None

    @classmethod
    def from_outcome(cls, method: str, outcome: AoOutcome, runtime_ms: float) -> "BaselineResult":
        return cls(
            method=method,
            plan=outcome.plan,
            objective=outcome.objective,
            runtime_ms=runtime_ms,
            onloading=outcome.onloading,
            offloading=outcome.offloading,
            trace=outcome.trace,
        )

    @property
    def outer_iterations(self) -> int:
        return self.trace.outer_iterations if self.trace is not None else 0


# ----- exhaustive oracle -----


@dataclass(frozen=True)
class _Candidate:
    models: Tuple[int, ...]
    accuracy: Tuple[float, ...]
    compute: Tuple[float, ...]
    setup: Tuple[float, ...]

    def dominates(self, other: "_Candidate") -> bool:
        return (
            all(a >= b for a, b in zip(self.accuracy, other.accuracy))
            and all(a <= b for a, b in zip(self.compute, other.compute))
            and all(a <= b for a, b in zip(self.setup, other.setup))
        )


def _node_candidates(
    ix: ScenarioIndex,
    accuracy: np.ndarray,
    memory: np.ndarray,
    budget: float,
    *,
    edge: Optional[int],
    batching: bool,
    limit: int,
) -> List[Tuple[int, ...]]:
    """Memory-feasible subsets that survive deduplication and dominance pruning."""
    seen: Dict[Tuple, _Candidate] = {}
    for subset in feasible_subsets(memory, budget, limit=limit):
        z = best_assignment(accuracy, subset)
        setup = assigned_setup(ix, edge, z) if (batching and edge is not None) else np.zeros(ix.n_tasks)
        cand = _Candidate(
            models=subset,
            accuracy=tuple(assigned_accuracy(accuracy, z).tolist()),
            compute=tuple(assigned_compute(ix, z).tolist()),
            setup=tuple(setup.tolist()),
        )
        key = (cand.accuracy, cand.compute, cand.setup)
        if key not in seen:
            seen[key] = cand
    pool = list(seen.values())
    kept = [c for c in pool if not any(o is not c and o.dominates(c) for o in pool)]
    return [c.models for c in kept]


def _client_groups(ix: ScenarioIndex) -> List[List[int]]:
    groups: Dict[Tuple, List[int]] = {}
    for c in range(ix.n_clients):
        key = (
            int(ix.client_edge[c]),
            float(ix.client_memory[c]),
            float(ix.client_compute[c]),
            tuple(ix.rates[c].tolist()),
        )
        groups.setdefault(key, []).append(c)
    return list(groups.values())


def _evaluate(s: Scenario, onloading: Onloading) -> Tuple[float, Optional[Offloading]]:
    if s.mode == "batching":
        offloading, _ = solve_batching_exact(s, onloading)
    else:
        offloading, _ = solve_offloading(s, onloading)
    if offloading is None:
        return float("-inf"), None
    return objective_value(s.index, onloading, offloading), offloading


def dual_bound(lp: LinearProgram, duals: Sequence[Dict[str, float]]) -> float:
    """Smallest weak-duality bound on max costs @ x (plus the constant) over the given row prices.

    Prices are matched by row name; rows without a price get zero. Any non-negative prices
    give a valid bound, so duals taken from a neighbouring configuration's LP can be reused.
    """
    if not duals:
        return float("inf")
    table = np.array([[d.get(name, 0.0) for name in lp.row_names] for d in duals], dtype=float)
    prices = np.maximum(table.reshape(len(duals), lp.n_rows), 0.0)
    reduced = lp.costs[None, :] - prices @ lp.rows
    unbounded_up = ~np.isfinite(lp.upper)[None, :] & (reduced > 0)
    unbounded_down = ~np.isfinite(lp.lower)[None, :] & (reduced < 0)
    finite_upper = np.where(np.isfinite(lp.upper), lp.upper, 0.0)
    finite_lower = np.where(np.isfinite(lp.lower), lp.lower, 0.0)
    bounds = (
        lp.constant
        + prices @ lp.rhs
        + np.maximum(reduced, 0.0) @ finite_upper
        + np.minimum(reduced, 0.0) @ finite_lower
    )
    bounds[np.any(unbounded_up | unbounded_down, axis=1)] = np.inf
    return float(np.min(bounds))


class _Incumbent:
    """Best objective seen by any worker, plus the row prices of the latest improvements."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.value = float("-inf")
        self.duals: Tuple[Dict[str, float], ...] = ()

    def offer(self, value: float, duals: Optional[Dict[str, float]]) -> None:
        with self._lock:
            if value <= self.value:
                return
            self.value = value
            if duals is not None:
                self.duals = ((duals,) + self.duals)[:DUAL_POOL]


def _solve_plain(
    s: Scenario, onloading: Onloading, incumbent: _Incumbent
) -> Tuple[float, Optional[Offloading], Optional[Dict[str, float]], bool]:
    """(value, offloading, row prices, pruned) for one plain-mode configuration."""
    try:
        lp = build_offloading_lp(s, onloading)
    except OffloadingInfeasibleError:
        return float("-inf"), None, None, False
    floor = incumbent.value
    if np.isfinite(floor) and dual_bound(lp, incumbent.duals) < floor - PRUNE_MARGIN:
        return float("-inf"), None, None, True
    solution = solve_lp(lp)
    if not solution.optimal:
        return float("-inf"), None, None, False
    offloading = offloading_from_solution(s.index, solution)
    duals = dict(zip(lp.row_names, np.maximum(solution.duals, 0.0).tolist()))
    return objective_value(s.index, onloading, offloading), offloading, duals, False


def minlp_oracle(s: Scenario, limit: int = ORACLE_LIMIT, *, threads: int = 1) -> BaselineResult:
    """Exhaustive joint optimum: every pruned onloading configuration with its optimal offloading.

    Configurations are visited in decreasing order of an accuracy ceiling that ignores every
    budget. A configuration is skipped when that ceiling, or in plain mode a dual bound built
    from earlier LPs, is below the incumbent by more than PRUNE_MARGIN. Nothing that could tie
    the optimum is skipped, so the answer matches full enumeration.
    """
    started = time.perf_counter()
    ix = s.index
    batching = s.mode == "batching"

    client_options = [
        _node_candidates(
            ix, ix.client_accuracy(c), ix.mem_client, float(ix.client_memory[c]), edge=None, batching=False, limit=limit
        )
        for c in range(ix.n_clients)
    ]
    edge_options = [
        _node_candidates(
            ix, ix.edge_accuracy(e), ix.mem_edge, float(ix.edge_memory[e]), edge=e, batching=batching, limit=limit
        )
        for e in range(ix.n_edges)
    ]
    groups = _client_groups(ix)

    count = 1
    for group in groups:
        options = len(client_options[group[0]])
        count *= math.comb(options + len(group) - 1, len(group))
    for options in edge_options:
        count *= len(options)
    if count > limit:
        raise OracleTooLargeError(f"instance too large for oracle: {count} configurations > limit {limit}")
    logger.info("oracle enumerating %d onloading configurations", count)

    group_choices = [
        list(itertools.combinations_with_replacement(range(len(client_options[g[0]])), len(g))) for g in groups
    ]
    configs = list(itertools.product(*group_choices, *[range(len(options)) for options in edge_options]))

    def build(config: Tuple) -> Onloading:
        client_sets: List[Tuple[int, ...]] = [()] * ix.n_clients
        for group, picks in zip(groups, config[: len(groups)]):
            for c, pick in zip(group, picks):
                client_sets[c] = client_options[c][pick]
        edge_sets = [edge_options[e][pick] for e, pick in enumerate(config[len(groups) :])]
        return Onloading.from_sets(ix, client_sets, edge_sets)

    ceilings = _accuracy_ceilings(ix, groups, client_options, edge_options, configs)
    order = sorted(range(len(configs)), key=lambda i: (-ceilings[i], i))
    incumbent = _Incumbent()

    def run_chunk(chunk: Sequence[int]) -> Tuple[float, int, Optional[Onloading], Optional[Offloading], int]:
        best: Tuple[float, int, Optional[Onloading], Optional[Offloading]] = (float("-inf"), -1, None, None)
        pruned = 0
        for position, index in enumerate(chunk):
            if ceilings[index] < incumbent.value - PRUNE_MARGIN:
                # Sorted by ceiling, so nothing later in the chunk can do better.
                pruned += len(chunk) - position
                break
            onloading = build(configs[index])
            if batching:
                value, offloading = _evaluate(s, onloading)
                duals = None
            else:
                value, offloading, duals, skipped = _solve_plain(s, onloading, incumbent)
                pruned += int(skipped)
            if offloading is None:
                continue
            incumbent.offer(value, duals)
            if value > best[0] or (value == best[0] and index < best[1]):
                best = (value, index, onloading, offloading)
        return best + (pruned,)

    n_chunks = max(1, threads * 4) if threads > 1 else 1
    chunks = [order[k::n_chunks] for k in range(n_chunks) if order[k::n_chunks]]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_chunk, chunks))
    else:
        results = [run_chunk(chunk) for chunk in chunks]

    best = (float("-inf"), -1, None, None)
    pruned = 0
    for value, index, onloading, offloading, skipped in results:
        pruned += skipped
        if onloading is None:
            continue
        if value > best[0] or (value == best[0] and index < best[1]):
            best = (value, index, onloading, offloading)
    value, _, onloading, offloading = best
    if onloading is None or offloading is None:
        # The empty onloading with zero offloading is always feasible.
        onloading = Onloading.empty(ix)
        offloading = Offloading.zeros(ix)
        value = objective_value(ix, onloading, offloading)
    logger.info("oracle solved %d of %d configurations", len(configs) - pruned, len(configs))

    return BaselineResult(
        method="oracle",
        plan=Plan.from_decisions(s, onloading, offloading),
        objective=float(value),
        runtime_ms=(time.perf_counter() - started) * 1000.0,
        onloading=onloading,
        offloading=offloading,
        configurations=len(configs),
        pruned=pruned,
    )


def _accuracy_ceilings(
    ix: ScenarioIndex,
    groups: Sequence[Sequence[int]],
    client_options: Sequence[Sequence[Tuple[int, ...]]],
    edge_options: Sequence[Sequence[Tuple[int, ...]]],
    configs: Sequence[Tuple],
) -> np.ndarray:
    """Per configuration: weighted best accuracy any reachable tier offers, with no budget applied."""
    client_acc = [
        np.array([assigned_accuracy(ix.client_accuracy(c), best_assignment(ix.client_accuracy(c), o)) for o in options])
        for c, options in enumerate(client_options)
    ]
    edge_acc = [
        np.array([assigned_accuracy(ix.edge_accuracy(e), best_assignment(ix.edge_accuracy(e), o)) for o in options])
        for e, options in enumerate(edge_options)
    ]
    # A task with no input bytes never touches the uplink rows.
    reach_edge = (ix.edge_uplink[ix.client_edge] > 0)[:, None] | (ix.input_bytes <= 0)[None, :]
    cloud = np.where(reach_edge & (ix.cloud_uplink > 0), ix.accuracy.cloud[None, :], 0.0)
    ceilings = np.empty(len(configs))
    ceiling = np.empty((ix.n_clients, ix.n_tasks))
    for i, config in enumerate(configs):
        edge_picks = config[len(groups) :]
        for group, picks in zip(groups, config[: len(groups)]):
            for c, pick in zip(group, picks):
                ceiling[c] = client_acc[c][pick]
        for c in range(ix.n_clients):
            e = int(ix.client_edge[c])
            reachable = np.where(reach_edge[c], edge_acc[e][edge_picks[e]], 0.0)
            np.maximum(ceiling[c], reachable, out=ceiling[c])
        np.maximum(ceiling, cloud, out=ceiling)
        ceilings[i] = float(np.sum(ix.weights * ceiling))
    return ceilings


# ----- alternating baselines -----


def _ao_config(s: Scenario, cfg: Optional[AoConfig]) -> AoConfig:
    cfg = cfg or AoConfig()
    return replace(cfg, batching=s.mode == "batching", swap_search=bool(cfg.swap_search))


def greedy_ao(s: Scenario, cfg: Optional[AoConfig] = None) -> BaselineResult:
    """AO with one memory-only ratio-greedy pass per node as the onloading step."""
    started = time.perf_counter()
    cfg = _ao_config(s, cfg)

    def step(offloading: Offloading, surrogate: Optional[SurrogateCoefficients], _k: int) -> Onloading:
        return memory_greedy(s, offloading, surrogate=surrogate)

    outcome = run_alternating(s, step, cfg, method="greedy_ao")
    return BaselineResult.from_outcome("greedy_ao", outcome, (time.perf_counter() - started) * 1000.0)


def opt_ao(s: Scenario, cfg: Optional[AoConfig] = None, *, limit: int = EXHAUSTIVE_LIMIT) -> BaselineResult:
    """AO with per-node exhaustive onloading under the true compute constraint."""
    started = time.perf_counter()
    cfg = _ao_config(s, cfg)

    def step(offloading: Offloading, _surrogate: Optional[SurrogateCoefficients], _k: int) -> Onloading:
        return exhaustive_onloading(s, offloading, limit=limit)

    outcome = run_alternating(s, step, cfg, method="opt_ao")
    return BaselineResult.from_outcome("opt_ao", outcome, (time.perf_counter() - started) * 1000.0)


def random_prefix_fit(rng: CounterRng, memory: np.ndarray, budget: float) -> Tuple[int, ...]:
    """Random permutation, random target size, then the longest prefix that fits."""
    n = int(memory.shape[0])
    order = rng.permutation(n)
    target = rng.integers(0, n + 1)
    chosen: List[int] = []
    used = 0.0
    for m in order[:target]:
        if used + memory[m] > budget * (1 + 1e-12):
            break
        chosen.append(int(m))
        used += float(memory[m])
    return tuple(sorted(chosen))


def rand_ao(s: Scenario, cfg: Optional[AoConfig] = None, seed: Optional[int] = None) -> BaselineResult:
    """AO with a random memory-feasible prefix per node; `seed` overrides `cfg.seed`."""
    started = time.perf_counter()
    cfg = _ao_config(s, cfg)
    ix = s.index
    rng = CounterRng(cfg.seed if seed is None else seed)

    def step(offloading: Offloading, _surrogate: Optional[SurrogateCoefficients], _k: int) -> Onloading:
        problems = build_node_problems(s, offloading)
        client_sets = [random_prefix_fit(rng, p.memory, p.memory_budget) for p in problems if p.kind == "client"]
        edge_sets = [random_prefix_fit(rng, p.memory, p.memory_budget) for p in problems if p.kind == "edge"]
        return Onloading.from_sets(ix, client_sets, edge_sets)

    outcome = run_alternating(s, step, cfg, method="rand_ao")
    return BaselineResult.from_outcome("rand_ao", outcome, (time.perf_counter() - started) * 1000.0)


def full_local(s: Scenario) -> BaselineResult:
    """No offloading; each client picks its best subset under memory and compute."""
    started = time.perf_counter()
    ix = s.index
    offloading = Offloading.zeros(ix)
    onloading = exhaustive_onloading(s, offloading, nodes="clients")
    return BaselineResult(
        method="full_local",
        plan=Plan.from_decisions(s, onloading, offloading),
        objective=objective_value(ix, onloading, offloading),
        runtime_ms=(time.perf_counter() - started) * 1000.0,
        onloading=onloading,
        offloading=offloading,
    )
