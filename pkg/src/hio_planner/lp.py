from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, List, Optional, Tuple

import numpy as np

from .errors import BatchingParametersMissing, OffloadingInfeasibleError
from .model import Offloading, Onloading, Scenario, ScenarioIndex, assigned_compute, assigned_setup
from .objective import tier_accuracies

if TYPE_CHECKING:
    from .batching import SurrogateCoefficients

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-10
OPTIMALITY_TOL = 1e-9
FEASIBILITY_TOL = 1e-9
BLAND_AFTER_DEGENERATE = 50
REFACTOR_EVERY = 50


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """maximize costs @ x + constant  s.t.  rows @ x <= rhs,  lower <= x <= upper."""

    costs: np.ndarray
    rows: np.ndarray
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    names: Tuple[str, ...]
    row_names: Tuple[str, ...]
    constant: float = 0.0
    # Rows whose fixed part alone already exceeds the budget at the origin.
    flags: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        n = self.costs.shape[0]
        if self.rows.shape != (self.rhs.shape[0], n):
            raise ValueError(f"row width {self.rows.shape} does not match {n} variables")
        if self.lower.shape != (n,) or self.upper.shape != (n,) or len(self.names) != n:
            raise ValueError("bounds and names must have one entry per variable")
        if len(self.row_names) != self.rhs.shape[0]:
            raise ValueError("row_names must have one entry per row")
        if not np.all(np.isfinite(self.lower)):
            raise ValueError("lower bounds must be finite")
        if np.any(self.lower > self.upper):
            bad = int(np.flatnonzero(self.lower > self.upper)[0])
            raise ValueError(f"lower bound exceeds upper bound for {self.names[bad]}")

    @property
    def n_vars(self) -> int:
        return int(self.costs.shape[0])

    @property
    def n_rows(self) -> int:
        return int(self.rhs.shape[0])


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: LpStatus
    x: np.ndarray
    # costs @ x, without the LP's constant.
    objective: float
    duals: np.ndarray
    reduced_costs: np.ndarray
    dual_objective: float
    iterations: int

    @property
    def optimal(self) -> bool:
        return self.status == LpStatus.OPTIMAL


class _BoundedSimplex:
    """Revised simplex on  M z = b,  lo <= z <= hi  with an explicit basis inverse."""

    def __init__(
        self,
        M: np.ndarray,
        b: np.ndarray,
        lo: np.ndarray,
        hi: np.ndarray,
        basis: List[int],
        max_iterations: int,
    ) -> None:
        self.M = M
        self.b = b
        self.lo = lo
        self.hi = hi
        self.m, self.total = M.shape
        self.basis = np.array(basis, dtype=np.int64)
        self.is_basic = np.zeros(self.total, dtype=bool)
        self.is_basic[self.basis] = True
        self.at_upper = np.zeros(self.total, dtype=bool)
        self.max_iterations = max_iterations
        self.iterations = 0
        self._refactor()

    def _nonbasic_values(self) -> np.ndarray:
        z = np.where(self.at_upper, self.hi, self.lo)
        z[self.is_basic] = 0.0
        return z

    def _refactor(self) -> None:
        self.B_inv = np.linalg.inv(self.M[:, self.basis])
        self.x_B = self.B_inv @ (self.b - self.M @ self._nonbasic_values())
        self.since_refactor = 0

    def values(self) -> np.ndarray:
        z = self._nonbasic_values()
        z[self.basis] = self.x_B
        return z

    def duals(self, costs: np.ndarray) -> np.ndarray:
        return costs[self.basis] @ self.B_inv

    def run(self, costs: np.ndarray) -> LpStatus:
        degenerate = 0
        bland = False
        movable = self.hi > self.lo
        while True:
            if self.iterations >= self.max_iterations:
                return LpStatus.ITERATION_LIMIT

            y = self.duals(costs)
            d = costs - y @ self.M
            can_increase = ~self.is_basic & ~self.at_upper & movable & (d > OPTIMALITY_TOL)
            can_decrease = ~self.is_basic & self.at_upper & movable & (d < -OPTIMALITY_TOL)
            candidates = np.flatnonzero(can_increase | can_decrease)
            if candidates.size == 0:
                return LpStatus.OPTIMAL

            if bland:
                j = int(candidates[0])
            else:
                j = int(candidates[np.argmax(np.abs(d[candidates]))])
            direction = 1.0 if can_increase[j] else -1.0

            alpha = self.B_inv @ self.M[:, j]
            delta = -direction * alpha
            lo_B = self.lo[self.basis]
            hi_B = self.hi[self.basis]

            ratios = np.full(self.m, np.inf)
            falling = delta < -PIVOT_TOL
            ratios[falling] = (self.x_B[falling] - lo_B[falling]) / -delta[falling]
            rising = (delta > PIVOT_TOL) & np.isfinite(hi_B)
            ratios[rising] = (hi_B[rising] - self.x_B[rising]) / delta[rising]
            ratios = np.maximum(ratios, 0.0)

            flip = self.hi[j] - self.lo[j]
            best = float(ratios.min()) if self.m else np.inf
            if not np.isfinite(flip) and not np.isfinite(best):
                return LpStatus.UNBOUNDED

            if flip <= best:
                step = flip
                self.x_B = self.x_B + step * delta
                self.at_upper[j] = not self.at_upper[j]
            else:
                step = best
                ties = np.flatnonzero(ratios <= best + 1e-12)
                if bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(alpha[ties]))])
                leaving = int(self.basis[r])
                self.x_B = self.x_B + step * delta
                self.at_upper[leaving] = bool(delta[r] > 0)
                self.is_basic[leaving] = False
                entering_value = self.lo[j] + step if direction > 0 else self.hi[j] - step
                self.basis[r] = j
                self.is_basic[j] = True
                self.at_upper[j] = False
                self.x_B[r] = entering_value

                pivot_row = self.B_inv[r] / alpha[r]
                self.B_inv = self.B_inv - np.outer(alpha, pivot_row)
                self.B_inv[r] = pivot_row
                self.since_refactor += 1
                if self.since_refactor >= REFACTOR_EVERY:
                    self._refactor()

            self.iterations += 1
            if step <= 1e-12:
                degenerate += 1
                if degenerate >= BLAND_AFTER_DEGENERATE and not bland:
                    logger.debug("switching to Bland's rule after %d degenerate pivots", degenerate)
                    bland = True
            else:
                degenerate = 0


def _dual_objective(lp: LinearProgram, duals: np.ndarray, reduced: np.ndarray) -> float:
    total = float(lp.rhs @ duals)
    for j in range(lp.n_vars):
        d = float(reduced[j])
        if abs(d) <= OPTIMALITY_TOL:
            continue
        bound = lp.upper[j] if d > 0 else lp.lower[j]
        # At an optimum a nonzero reduced cost never meets an infinite bound.
        if np.isfinite(bound):
            total += d * float(bound)
    return float(total)


def _solve_without_rows(lp: LinearProgram) -> LpSolution:
    x = lp.lower.copy()
    status = LpStatus.OPTIMAL
    for j in range(lp.n_vars):
        if lp.costs[j] > 0:
            if not np.isfinite(lp.upper[j]):
                status = LpStatus.UNBOUNDED
                break
            x[j] = lp.upper[j]
    objective = float(lp.costs @ x)
    return LpSolution(status, x, objective, np.zeros(0), lp.costs.copy(), objective, 0)


def solve_lp(lp: LinearProgram, *, max_iterations: Optional[int] = None) -> LpSolution:
    """Bounded-variable revised simplex, two phases, Dantzig pricing with a Bland fallback."""
    n, k = lp.n_vars, lp.n_rows
    if k == 0:
        return _solve_without_rows(lp)
    limit = max_iterations if max_iterations is not None else 50 * (n + k) + 500

    # Row equilibration; duals are mapped back below.
    scale = np.maximum(np.max(np.abs(lp.rows), axis=1), np.abs(lp.rhs))
    scale[scale == 0] = 1.0
    A = lp.rows / scale[:, None]
    b = lp.rhs / scale - A @ lp.lower
    width = lp.upper - lp.lower

    needs_artificial = np.flatnonzero(b < 0)
    r = needs_artificial.size
    total = n + k + r
    M = np.zeros((k, total))
    M[:, :n] = A
    M[:, n : n + k] = np.eye(k)
    M[needs_artificial, n + k + np.arange(r)] = -1.0
    lo = np.zeros(total)
    hi = np.concatenate([width, np.full(k + r, np.inf)])

    basis = list(range(n, n + k))
    for i, row in enumerate(needs_artificial):
        basis[row] = n + k + i
    simplex = _BoundedSimplex(M, b, lo, hi, basis, limit)

    if r:
        phase_one = np.zeros(total)
        phase_one[n + k :] = -1.0
        status = simplex.run(phase_one)
        if status == LpStatus.ITERATION_LIMIT:
            return _failed(lp, status, simplex.iterations)
        residual = float(np.sum(simplex.values()[n + k :]))
        if residual > FEASIBILITY_TOL * max(1.0, float(np.max(np.abs(b)))):
            return _failed(lp, LpStatus.INFEASIBLE, simplex.iterations)
        # Artificials are pinned to zero from here on.
        simplex.hi[n + k :] = 0.0

    costs = np.concatenate([lp.costs, np.zeros(k + r)])
    status = simplex.run(costs)
    if status != LpStatus.OPTIMAL:
        return _failed(lp, status, simplex.iterations)

    z = simplex.values()
    x = np.clip(lp.lower + z[:n], lp.lower, lp.upper)
    duals = simplex.duals(costs) / scale
    reduced = lp.costs - lp.rows.T @ duals
    objective = float(lp.costs @ x)
    return LpSolution(
        status=LpStatus.OPTIMAL,
        x=x,
        objective=objective,
        duals=duals,
        reduced_costs=reduced,
        dual_objective=_dual_objective(lp, duals, reduced),
        iterations=simplex.iterations,
    )


def _failed(lp: LinearProgram, status: LpStatus, iterations: int) -> LpSolution:
    return LpSolution(
        status=status,
        x=np.full(lp.n_vars, np.nan),
        objective=float("nan"),
        duals=np.full(lp.n_rows, np.nan),
        reduced_costs=np.full(lp.n_vars, np.nan),
        dual_objective=float("nan"),
        iterations=iterations,
    )


# ----- offloading subproblem -----


def client_var(ix: ScenarioIndex, c: int, j: int) -> int:
    return c * ix.n_tasks + j


def edge_var(ix: ScenarioIndex, c: int, j: int) -> int:
    return ix.n_clients * ix.n_tasks + c * ix.n_tasks + j


def build_offloading_lp(
    s: Scenario,
    onloading: Onloading,
    *,
    mode: Optional[str] = None,
    surrogate: Optional["SurrogateCoefficients"] = None,
) -> LinearProgram:
    ix = s.index
    mode = mode or s.mode
    C, T = ix.n_clients, ix.n_tasks
    n = 2 * C * T
    client_acc, edge_acc, cloud_acc = tier_accuracies(ix, onloading)
    w = ix.weights

    costs = np.zeros(n)
    costs[: C * T] = (w * (edge_acc - client_acc)).ravel()
    costs[C * T :] = (w * (cloud_acc - edge_acc)).ravel()
    constant = float(np.sum(w * client_acc))

    lower = np.zeros(n)
    upper = np.ones(n)
    idle = (ix.rates <= 0).ravel()
    upper[: C * T][idle] = 0.0
    upper[C * T :][idle] = 0.0
    if ix.cloud_uplink <= 0:
        upper[C * T :] = 0.0

    names = tuple(f"o_client[{ix.client_ids[c]}][{ix.task_ids[j]}]" for c in range(C) for j in range(T)) + tuple(
        f"o_edge[{ix.client_ids[c]}][{ix.task_ids[j]}]" for c in range(C) for j in range(T)
    )

    rows: List[np.ndarray] = []
    rhs: List[float] = []
    row_names: List[str] = []
    flags: List[str] = []

    def add_row(name: str, coeffs: np.ndarray, bound: float) -> None:
        if not np.any(coeffs):
            if bound < -FEASIBILITY_TOL * max(1.0, abs(bound)):
                raise OffloadingInfeasibleError(f"{name}: fixed load exceeds budget by {-bound:.6g}")
            return
        best_case = float(np.sum(np.minimum(coeffs * lower, coeffs * upper)))
        if best_case > bound + FEASIBILITY_TOL * max(1.0, abs(bound)):
            raise OffloadingInfeasibleError(f"{name}: infeasible for every offloading choice")
        if bound < 0:
            flags.append(name)
        rows.append(coeffs)
        rhs.append(bound)
        row_names.append(name)

    for c in range(C):
        per_query = assigned_compute(ix, onloading.client_assign[c])
        load = ix.rates[c] * per_query
        coeffs = np.zeros(n)
        coeffs[client_var(ix, c, 0) : client_var(ix, c, 0) + T] = -load
        add_row(f"client_compute[{ix.client_ids[c]}]", coeffs, float(ix.client_compute[c] - np.sum(load)))

    if mode == "batching":
        if ix.batching_interval is None:
            raise BatchingParametersMissing("batching parameters missing: scenario has no batching interval")
        interval = ix.batching_interval
        for e in range(ix.n_edges):
            assign = onloading.edge_assign[e]
            served = assign >= 0
            per_query = assigned_compute(ix, assign) / ix.edge_compute[e]
            setup = assigned_setup(ix, e, assign)
            theta = surrogate.theta[e] if surrogate is not None else np.zeros(T)
            psi = surrogate.psi[e] if surrogate is not None else np.where(served, 1.0, 0.0)
            slope = np.where(served, setup * theta + per_query * interval, 0.0)
            fixed = float(np.sum(np.where(served, setup * psi, 0.0)))
            coeffs = np.zeros(n)
            for c in ix.edge_clients[e]:
                for j in range(T):
                    coeffs[client_var(ix, c, j)] = ix.rates[c, j] * slope[j]
                    coeffs[edge_var(ix, c, j)] = -ix.rates[c, j] * slope[j]
            add_row(f"batching_latency[{ix.edge_ids[e]}]", coeffs, interval - fixed)
    else:
        for e in range(ix.n_edges):
            per_query = assigned_compute(ix, onloading.edge_assign[e])
            coeffs = np.zeros(n)
            for c in ix.edge_clients[e]:
                for j in range(T):
                    coeffs[client_var(ix, c, j)] = ix.rates[c, j] * per_query[j]
                    coeffs[edge_var(ix, c, j)] = -ix.rates[c, j] * per_query[j]
            add_row(f"edge_compute[{ix.edge_ids[e]}]", coeffs, float(ix.edge_compute[e]))

    for e in range(ix.n_edges):
        coeffs = np.zeros(n)
        for c in ix.edge_clients[e]:
            for j in range(T):
                coeffs[client_var(ix, c, j)] = ix.rates[c, j] * ix.input_bytes[j]
        add_row(f"edge_uplink[{ix.edge_ids[e]}]", coeffs, float(ix.edge_uplink[e]))

    if ix.cloud_uplink > 0:
        coeffs = np.zeros(n)
        coeffs[C * T :] = (ix.rates * ix.input_bytes).ravel()
        add_row("cloud_uplink", coeffs, float(ix.cloud_uplink))

    for c in range(C):
        for j in range(T):
            if upper[edge_var(ix, c, j)] <= 0:
                continue
            coeffs = np.zeros(n)
            coeffs[edge_var(ix, c, j)] = 1.0
            coeffs[client_var(ix, c, j)] = -1.0
            add_row(f"consistency[{ix.client_ids[c]}][{ix.task_ids[j]}]", coeffs, 0.0)

    return LinearProgram(
        costs=costs,
        rows=np.array(rows).reshape(len(rows), n),
        rhs=np.array(rhs, dtype=float),
        lower=lower,
        upper=upper,
        names=names,
        row_names=tuple(row_names),
        constant=constant,
        flags=tuple(flags),
    )


def offloading_from_solution(ix: ScenarioIndex, solution: LpSolution) -> Offloading:
    C, T = ix.n_clients, ix.n_tasks
    client = np.clip(solution.x[: C * T].reshape(C, T), 0.0, 1.0)
    edge = np.clip(solution.x[C * T :].reshape(C, T), 0.0, 1.0)
    return Offloading.of(client, np.minimum(edge, client))


def solve_offloading(
    s: Scenario,
    onloading: Onloading,
    *,
    surrogate: Optional["SurrogateCoefficients"] = None,
) -> Tuple[Optional[Offloading], Optional[LpSolution]]:
    """Optimal offloading for fixed onloading, or (None, solution) when the LP has no optimum."""
    try:
        lp = build_offloading_lp(s, onloading, surrogate=surrogate)
    except OffloadingInfeasibleError as exc:
        logger.debug("offloading LP rejected before solving: %s", exc)
        return None, None
    solution = solve_lp(lp)
    if not solution.optimal:
        return None, solution
    return offloading_from_solution(s.index, solution), solution


def write_mps(lp: LinearProgram, path: str | Path, *, name: str = "OFFLOAD") -> Path:
    """Free-format MPS dump at full double precision; the maximization is written as minimizing the negated costs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = [f"X{j:07d}" for j in range(lp.n_vars)]
    row_ids = [f"R{i:07d}" for i in range(lp.n_rows)]
    lines = [f"NAME          {name[:8]}"]
    lines.append(f"* objective constant {lp.constant!r}")
    lines.extend(f"* {col} {label}" for col, label in zip(cols, lp.names))
    lines.extend(f"* {rid} {label}" for rid, label in zip(row_ids, lp.row_names))
    lines.append("ROWS")
    lines.append(" N  COST")
    lines.extend(f" L  {rid}" for rid in row_ids)
    lines.append("COLUMNS")
    for j, col in enumerate(cols):
        entries = [("COST", -lp.costs[j])] + [
            (row_ids[i], lp.rows[i, j]) for i in range(lp.n_rows) if lp.rows[i, j] != 0.0
        ]
        for row_id, value in entries:
            lines.append(f"    {col:<8}  {row_id:<8}  {value:.17g}")
    lines.append("RHS")
    for i, rid in enumerate(row_ids):
        lines.append(f"    RHS       {rid:<8}  {lp.rhs[i]:.17g}")
    lines.append("BOUNDS")
    for j, col in enumerate(cols):
        if lp.lower[j] != 0.0:
            lines.append(f" LO BND       {col:<8}  {lp.lower[j]:.17g}")
        if np.isfinite(lp.upper[j]):
            lines.append(f" UP BND       {col:<8}  {lp.upper[j]:.17g}")
    lines.append("ENDATA")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
