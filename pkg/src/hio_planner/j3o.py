from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Literal, Optional, Tuple

import numpy as np

from .batching import SurrogateCoefficients, compute_surrogate, repair_batching, require_batching
from .errors import ConfigError
from .lp import solve_offloading
from .model import Offloading, Onloading, Plan, Scenario, ScenarioIndex, check_constraints
from .objective import max_offloading_deviation, objective_value
from .onload import GreedyLrOptions, greedy_lr

logger = logging.getLogger(__name__)

Decision = Literal["accepted", "retained", "reverted", "swapped"]
OnloadStep = Callable[[Offloading, Optional[SurrogateCoefficients], int], Onloading]


@dataclass(frozen=True)
class AoConfig:
    # Stop once an outer iteration gains less than this (absolute F units).
    tolerance: float = 1e-4
    max_iterations: int = 20
    batching: bool = False
    # Indicator smoothing; None picks it from the current loads.
    smoothing: Optional[float] = None
    greedy: GreedyLrOptions = field(default_factory=GreedyLrOptions)
    acceptance_tol: float = 1e-9
    # Seed for randomized onloading steps.
    seed: int = 0
    # Single-node swaps scored by the offloading step before convergence is declared.
    # None turns them on in batching mode when some model has a setup cost.
    swap_search: Optional[bool] = None

    def __post_init__(self) -> None:
        if self.tolerance <= 0:
            raise ConfigError(f"tolerance must be > 0, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.smoothing is not None and self.smoothing <= 0:
            raise ConfigError(f"smoothing must be > 0, got {self.smoothing}")


@dataclass(frozen=True)
class AoIteration:
    iteration: int
    # F(x_k, z_k; o_{k-1}) after the onloading step.
    f_onload: float
    # F after the offloading step (the kept iterate).
    f_offload: float
    decision: Decision
    runtime_ms: float
    onload_ms: float
    lp_status: str
    repaired: bool = False


@dataclass
class AoTrace:
    method: str
    initial_objective: float
    iterations: List[AoIteration] = field(default_factory=list)
    status: Literal["converged", "max-iters"] = "max-iters"

    @property
    def outer_iterations(self) -> int:
        return len(self.iterations)

    @property
    def final_objective(self) -> float:
        return self.iterations[-1].f_offload if self.iterations else self.initial_objective

    def is_monotone(self, tol: float = 1e-9) -> bool:
        values = [self.initial_objective] + [it.f_offload for it in self.iterations]
        return all(b >= a - tol for a, b in zip(values, values[1:]))

    def trace_records(self) -> List[Dict[str, Any]]:
        records: List[Dict[str, Any]] = []
        for it in self.iterations:
            records.append(
                {
                    "method": self.method,
                    "iteration": it.iteration,
                    "phase": "onload",
                    "F": it.f_onload,
                    "decision": it.decision,
                    "runtime_ms": it.onload_ms,
                }
            )
            records.append(
                {
                    "method": self.method,
                    "iteration": it.iteration,
                    "phase": "offload",
                    "F": it.f_offload,
                    "lp_status": it.lp_status,
                    "repaired": it.repaired,
                    "runtime_ms": it.runtime_ms - it.onload_ms,
                }
            )
        return records

    def write_jsonl(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            for record in self.trace_records():
                f.write(json.dumps(record, sort_keys=True) + "\n")
        return path


@dataclass(frozen=True, eq=False)
class AoOutcome:
    plan: Plan
    onloading: Onloading
    offloading: Offloading
    objective: float
    trace: AoTrace


def initial_offloading(s: Scenario) -> Offloading:
    """Every client sends min(1, edge uplink / edge demand) of each task to its edge; nothing goes to the cloud."""
    ix = s.index
    client = np.zeros((ix.n_clients, ix.n_tasks))
    for e in range(ix.n_edges):
        members = list(ix.edge_clients[e])
        if not members:
            continue
        demand = float(np.sum(ix.rates[members] * ix.input_bytes))
        share = 1.0 if demand <= 0 else min(1.0, float(ix.edge_uplink[e]) / demand)
        client[members] = share
    client[ix.rates <= 0] = 0.0
    return Offloading.of(client, np.zeros_like(client))


def _offloading_step(
    s: Scenario,
    onloading: Onloading,
    surrogate: Optional[SurrogateCoefficients],
    batching: bool,
) -> Tuple[Optional[Offloading], str, bool]:
    offloading, solution = solve_offloading(s, onloading, surrogate=surrogate if batching else None)
    status = solution.status.value if solution is not None else "rejected"
    if offloading is None or not batching:
        return offloading, status, False
    repaired = repair_batching(s, onloading, offloading)
    changed = bool(np.any(repaired.client != offloading.client))
    if not check_constraints(s, onloading, repaired).feasible():
        return None, status, changed
    return repaired, status, changed


def _single_node_moves(ix: ScenarioIndex, onloading: Onloading) -> Iterator[Onloading]:
    """Onloadings that differ at one node: cleared, swapped to one model, or grown by one model."""
    nodes = (
        (0, onloading.client_models, ix.mem_client, ix.client_memory),
        (1, onloading.edge_models, ix.mem_edge, ix.edge_memory),
    )
    for tier, sets, memory, budgets in nodes:
        for i, current in enumerate(sets):
            options = [()] + [(m,) for m in range(ix.n_models)]
            options += [tuple(sorted(current + (m,))) for m in range(ix.n_models) if m not in current]
            seen = {tuple(current)}
            for option in options:
                if option in seen or float(np.sum(memory[list(option)])) > float(budgets[i]) * (1 + 1e-12):
                    continue
                seen.add(option)
                tiers = [list(onloading.client_models), list(onloading.edge_models)]
                tiers[tier][i] = option
                yield Onloading.from_sets(ix, tiers[0], tiers[1])


def _swap_search(
    s: Scenario,
    onloading: Onloading,
    offloading: Offloading,
    f_best: float,
    cfg: AoConfig,
) -> Optional[Tuple[Onloading, Offloading, float, str, bool]]:
    """Best single-node move once its offloading step is solved, if it beats f_best."""
    ix = s.index
    surrogate = compute_surrogate(s, offloading, smoothing=cfg.smoothing) if cfg.batching else None
    best: Optional[Tuple[Onloading, Offloading, float, str, bool]] = None
    tried = 0
    for trial in _single_node_moves(ix, onloading):
        tried += 1
        next_offloading, lp_status, repaired = _offloading_step(s, trial, surrogate, cfg.batching)
        if next_offloading is None:
            continue
        value = objective_value(ix, trial, next_offloading)
        floor = best[2] if best is not None else f_best + cfg.acceptance_tol
        if value > floor:
            best = (trial, next_offloading, value, lp_status, repaired)
    logger.debug("swap search tried %d moves, improved=%s", tried, best is not None)
    return best


def _swap_enabled(s: Scenario, cfg: AoConfig) -> bool:
    if cfg.swap_search is not None:
        return cfg.swap_search
    return cfg.batching and bool(np.any(s.index.setup > 0))


def run_alternating(
    s: Scenario,
    onload_step: OnloadStep,
    cfg: AoConfig,
    *,
    method: str,
) -> AoOutcome:
    """Outer loop shared by J3O, BAJ3O and the AO baselines.

    A new onloading is accepted only if it beats the previous one at the previous offloading.
    An offloading step that is infeasible or lowers the objective is reverted, so the
    recorded objective never decreases. With the swap search on, an iteration that would
    end the loop first tries every single-node move and keeps the best improving one.
    """
    ix = s.index
    swap = _swap_enabled(s, cfg)
    offloading = initial_offloading(s)
    onloading = Onloading.empty(ix)
    f_best = objective_value(ix, onloading, offloading)
    trace = AoTrace(method=method, initial_objective=f_best)

    for k in range(1, cfg.max_iterations + 1):
        started = time.perf_counter()
        surrogate = compute_surrogate(s, offloading, smoothing=cfg.smoothing) if cfg.batching else None
        candidate = onload_step(offloading, surrogate, k)
        f_old = objective_value(ix, onloading, offloading)
        f_new = objective_value(ix, candidate, offloading)
        if f_new > f_old + cfg.acceptance_tol:
            next_onloading, decision = candidate, "accepted"
        else:
            next_onloading, decision = onloading, "retained"
        f_onload = objective_value(ix, next_onloading, offloading)
        onload_ms = (time.perf_counter() - started) * 1000.0

        next_offloading, lp_status, repaired = _offloading_step(s, next_onloading, surrogate, cfg.batching)
        f_prev = f_best
        if next_offloading is None:
            decision = "reverted"
        else:
            f_lp = objective_value(ix, next_onloading, next_offloading)
            if f_lp < f_best - cfg.acceptance_tol:
                decision = "reverted"
            else:
                onloading, offloading = next_onloading, next_offloading
                f_best = max(f_best, f_lp)

        if swap and f_best - f_prev < cfg.tolerance:
            moved = _swap_search(s, onloading, offloading, f_best, cfg)
            if moved is not None:
                onloading, offloading, f_best, lp_status, repaired = moved
                decision = "swapped"

        trace.iterations.append(
            AoIteration(
                iteration=k,
                f_onload=f_onload,
                f_offload=f_best,
                decision=decision,
                runtime_ms=(time.perf_counter() - started) * 1000.0,
                onload_ms=onload_ms,
                lp_status=lp_status,
                repaired=repaired,
            )
        )
        logger.info(
            "%s iteration %d: decision=%s F_onload=%.6f F=%.6f lp=%s",
            method,
            k,
            decision,
            f_onload,
            f_best,
            lp_status,
        )
        if f_best - f_prev < cfg.tolerance:
            trace.status = "converged"
            break

    report = check_constraints(s, onloading, offloading)
    if not report.feasible():
        worst = max(report.violations(), key=lambda c: c.relative_violation)
        logger.warning("%s returned an infeasible plan: %s at %s", method, worst.name, worst.node)
    return AoOutcome(
        plan=Plan.from_decisions(s, onloading, offloading),
        onloading=onloading,
        offloading=offloading,
        objective=objective_value(ix, onloading, offloading),
        trace=trace,
    )


def _greedy_lr_step(s: Scenario, cfg: AoConfig) -> OnloadStep:
    def step(offloading: Offloading, surrogate: Optional[SurrogateCoefficients], _k: int) -> Onloading:
        return greedy_lr(s, offloading, cfg.greedy, surrogate=surrogate).onloading

    return step


def j3o(s: Scenario, cfg: Optional[AoConfig] = None) -> AoOutcome:
    cfg = cfg or AoConfig()
    if s.mode != "plain":
        raise ConfigError("j3o needs a plain-mode scenario; use baj3o for batching mode")
    if cfg.batching:
        raise ConfigError("j3o does not take a batching config; use baj3o")
    return run_alternating(s, _greedy_lr_step(s, cfg), cfg, method="j3o")


def baj3o(s: Scenario, cfg: Optional[AoConfig] = None) -> AoOutcome:
    if s.mode != "batching":
        raise ConfigError("baj3o needs a batching-mode scenario")
    require_batching(s)
    cfg = cfg or AoConfig()
    if not cfg.batching:
        cfg = replace(cfg, batching=True)
    return run_alternating(s, _greedy_lr_step(s, cfg), cfg, method="baj3o")


def measured_offloading_gap(a: Offloading, b: Offloading) -> float:
    return max_offloading_deviation(a, b)


def theorem_bound(f_opt: float, eps_gap: float) -> float:
    """(1 - 1/e) * (f_opt - eps_gap): the floor every final J3O iterate must clear."""
    return (1.0 - 1.0 / math.e) * (f_opt - eps_gap)
