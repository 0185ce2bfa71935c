from __future__ import annotations

import itertools
import tempfile
import unittest
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from src.hio_planner.errors import OffloadingInfeasibleError
from src.hio_planner.lp import (
    LinearProgram,
    LpStatus,
    build_offloading_lp,
    edge_var,
    solve_lp,
    solve_offloading,
    write_mps,
)
from src.hio_planner.model import Onloading, check_constraints, parse_scenario
from src.hio_planner.objective import objective_value


def make_lp(costs, rows, rhs, upper, lower=None) -> LinearProgram:
    costs = np.asarray(costs, dtype=float)
    n = costs.shape[0]
    rows = np.asarray(rows, dtype=float).reshape(-1, n)
    return LinearProgram(
        costs=costs,
        rows=rows,
        rhs=np.asarray(rhs, dtype=float),
        lower=np.zeros(n) if lower is None else np.asarray(lower, dtype=float),
        upper=np.asarray(upper, dtype=float),
        names=tuple(f"x{j}" for j in range(n)),
        row_names=tuple(f"r{i}" for i in range(rows.shape[0])),
    )


def brute_force_2d(costs, rows, rhs, upper) -> float:
    """Best objective over every vertex of a bounded two-variable polytope."""
    lines = [(np.asarray(r, dtype=float), float(b)) for r, b in zip(rows, rhs)]
    lines += [
        (np.array([-1.0, 0.0]), 0.0),
        (np.array([0.0, -1.0]), 0.0),
        (np.array([1.0, 0.0]), float(upper[0])),
        (np.array([0.0, 1.0]), float(upper[1])),
    ]
    best = -np.inf
    for (a1, b1), (a2, b2) in itertools.combinations(lines, 2):
        matrix = np.vstack([a1, a2])
        if abs(np.linalg.det(matrix)) < 1e-12:
            continue
        point = np.linalg.solve(matrix, np.array([b1, b2]))
        if all(a @ point <= b + 1e-9 for a, b in lines):
            best = max(best, float(np.asarray(costs) @ point))
    return best


@st.composite
def bounded_lps(draw):
    """Up to six variables, finite or infinite upper bounds, kept bounded by a sum row."""
    n = draw(st.integers(2, 6))
    m = draw(st.integers(1, 4))
    costs = draw(st.lists(st.integers(-5, 5), min_size=n, max_size=n))
    rows = draw(st.lists(st.lists(st.integers(-5, 5), min_size=n, max_size=n), min_size=m, max_size=m))
    rhs = draw(st.lists(st.integers(0, 10), min_size=m, max_size=m))
    upper = draw(st.lists(st.one_of(st.integers(1, 10).map(float), st.just(np.inf)), min_size=n, max_size=n))
    return costs, rows + [[1] * n], rhs + [20], upper


class SimplexTests(unittest.TestCase):
    def test_small_lp_optimum_and_duals(self):
        lp = make_lp([3, 2], [[1, 1], [1, 3]], [4, 7], [3, np.inf])
        sol = solve_lp(lp)
        self.assertEqual(sol.status, LpStatus.OPTIMAL)
        self.assertAlmostEqual(sol.objective, 11.0, places=9)
        self.assertAlmostEqual(float(sol.x[0]), 3.0, places=9)
        self.assertAlmostEqual(float(sol.x[1]), 1.0, places=9)
        self.assertAlmostEqual(float(sol.duals[0]), 2.0, places=9)
        self.assertAlmostEqual(float(sol.duals[1]), 0.0, places=9)
        self.assertAlmostEqual(sol.dual_objective, sol.objective, places=9)

    def test_infeasible_rows(self):
        lp = make_lp([1, 1], [[1, 1]], [-1], [5, 5])
        self.assertEqual(solve_lp(lp).status, LpStatus.INFEASIBLE)

    def test_unbounded_direction(self):
        lp = make_lp([1, 0], [[-1, 1]], [1], [np.inf, 5])
        self.assertEqual(solve_lp(lp).status, LpStatus.UNBOUNDED)

    def test_negative_rhs_goes_through_phase_one(self):
        lp = make_lp([-1, -1], [[-1, -1]], [-2], [5, 5])
        sol = solve_lp(lp)
        self.assertTrue(sol.optimal)
        self.assertAlmostEqual(sol.objective, -2.0, places=9)
        self.assertAlmostEqual(float(np.sum(sol.x)), 2.0, places=9)

    def test_duplicated_rows_are_handled(self):
        lp = make_lp([1, 1], [[1, 1], [1, 1], [1, 1], [0, 1]], [2, 2, 2, 1], [2, 2])
        sol = solve_lp(lp)
        self.assertTrue(sol.optimal)
        self.assertAlmostEqual(sol.objective, 2.0, places=9)

    def test_no_rows_uses_bounds(self):
        lp = make_lp([1, -1], np.zeros((0, 2)), [], [3, 4])
        sol = solve_lp(lp)
        self.assertTrue(sol.optimal)
        self.assertEqual(sol.x.tolist(), [3.0, 0.0])

    def test_inconsistent_shapes_are_rejected(self):
        with self.assertRaises(ValueError):
            LinearProgram(
                costs=np.zeros(2),
                rows=np.zeros((1, 3)),
                rhs=np.zeros(1),
                lower=np.zeros(2),
                upper=np.ones(2),
                names=("a", "b"),
                row_names=("r",),
            )

    @settings(max_examples=500, deadline=None)
    @given(
        costs=st.lists(st.integers(-5, 5), min_size=2, max_size=2),
        rows=st.lists(st.lists(st.integers(-5, 5), min_size=2, max_size=2), min_size=1, max_size=3),
        rhs=st.lists(st.integers(0, 10), min_size=3, max_size=3),
        upper=st.lists(st.integers(1, 10), min_size=2, max_size=2),
    )
    def test_matches_vertex_enumeration(self, costs, rows, rhs, upper):
        rhs = rhs[: len(rows)]
        sol = solve_lp(make_lp(costs, rows, rhs, upper))
        self.assertTrue(sol.optimal)
        expected = brute_force_2d(costs, rows, rhs, upper)
        self.assertAlmostEqual(sol.objective, expected, delta=1e-6 * max(1.0, abs(expected)))
        self.assertTrue(np.all(np.asarray(rows, dtype=float) @ sol.x <= np.asarray(rhs) + 1e-7))

    @settings(max_examples=500, deadline=None)
    @given(bounded_lps())
    def test_optimality_certificate_with_mixed_bounds(self, case):
        costs, rows, rhs, upper = case
        sol = solve_lp(make_lp(costs, rows, rhs, upper))
        self.assertTrue(sol.optimal)
        A = np.asarray(rows, dtype=float)
        b = np.asarray(rhs, dtype=float)
        u = np.asarray(upper, dtype=float)
        self.assertTrue(np.all(A @ sol.x <= b + 1e-7))
        self.assertTrue(np.all(sol.x >= -1e-9))
        self.assertTrue(np.all(sol.x <= u + 1e-9))
        self.assertTrue(np.all(sol.duals >= -1e-7))
        for j, d in enumerate(sol.reduced_costs):
            if d > 1e-7:
                self.assertAlmostEqual(float(sol.x[j]), float(u[j]), delta=1e-7)
            elif d < -1e-7:
                self.assertAlmostEqual(float(sol.x[j]), 0.0, delta=1e-7)
        self.assertTrue(np.isfinite(sol.dual_objective))
        self.assertLessEqual(abs(sol.objective - sol.dual_objective), 1e-6)

    def test_roundoff_reduced_costs_keep_the_dual_objective_finite(self):
        for seed in range(25):
            rng = np.random.default_rng(seed)
            n = 10
            base = rng.uniform(0.1, 1.0, size=(13, n))
            base_rhs = rng.uniform(1.0, 2.0, size=13)
            # Two scaled copies make the system redundant.
            rows = np.vstack([base, 2.0 * base[:2]])
            rhs = np.concatenate([base_rhs, 2.0 * base_rhs[:2]])
            sol = solve_lp(make_lp(rng.normal(size=n), rows, rhs, np.full(n, np.inf)))
            self.assertTrue(sol.optimal, msg=f"seed {seed}")
            self.assertTrue(np.isfinite(sol.dual_objective), msg=f"seed {seed}")
            self.assertLessEqual(abs(sol.objective - sol.dual_objective), 1e-6, msg=f"seed {seed}")


def knapsack_document(edge_uplink: float = 2e7, cloud_uplink: float = 0.0) -> Dict[str, Any]:
    tasks = [("t0", 1e6), ("t1", 2e6), ("t2", 0.5e6)]
    return {
        "models": [
            {"id": "m0", "memory_bytes": 1e7, "compute_per_query": 1e6, "supported_tasks": ["t0", "t1", "t2"]}
        ],
        "tasks": [{"id": t, "input_bytes": size} for t, size in tasks],
        "clients": [{"id": "c0", "edge": "e0", "memory_bytes": 1e6, "compute_capacity": 1e12}],
        "edges": [
            {
                "id": "e0",
                "memory_bytes": 1e8,
                "compute_capacity": 1e13,
                "uplink_bytes_per_s": edge_uplink,
                "accuracy": [[0.9, 0.8, 0.6]],
            }
        ],
        "cloud": {"uplink_bytes_per_s": cloud_uplink, "accuracy": {"t0": 1.0, "t1": 1.0, "t2": 1.0}},
        "workload": {"rates": {"c0": {"t0": 10.0, "t1": 10.0, "t2": 10.0}}},
    }


class OffloadingLpTests(unittest.TestCase):
    def test_binding_uplink_matches_fractional_knapsack(self):
        s = parse_scenario(knapsack_document())
        onloading = Onloading.from_sets(s.index, [()], [(0,)])
        offloading, solution = solve_offloading(s, onloading)
        self.assertIsNotNone(offloading)
        # Value per byte orders t2, t0, t1; t1 gets the last 5e6 bytes/s of 2e7.
        np.testing.assert_allclose(offloading.client[0], [1.0, 0.25, 1.0], atol=1e-9)
        np.testing.assert_allclose(offloading.edge[0], [0.0, 0.0, 0.0], atol=1e-12)
        self.assertAlmostEqual(objective_value(s.index, onloading, offloading), 1.7 / 3.0, places=9)
        self.assertAlmostEqual(solution.objective + build_offloading_lp(s, onloading).constant, 1.7 / 3.0, places=9)
        self.assertTrue(check_constraints(s, onloading, offloading).feasible())

    def test_zero_cloud_uplink_pins_edge_to_cloud_shares(self):
        s = parse_scenario(knapsack_document())
        lp = build_offloading_lp(s, Onloading.from_sets(s.index, [()], [(0,)]))
        ix = s.index
        for j in range(ix.n_tasks):
            self.assertEqual(lp.upper[edge_var(ix, 0, j)], 0.0)
        self.assertNotIn("cloud_uplink", lp.row_names)

    def test_idle_client_task_has_zero_upper_bounds(self):
        document = knapsack_document(cloud_uplink=1e9)
        document["workload"]["rates"]["c0"]["t1"] = 0.0
        s = parse_scenario(document)
        ix = s.index
        lp = build_offloading_lp(s, Onloading.from_sets(ix, [()], [(0,)]))
        self.assertEqual(lp.upper[1], 0.0)
        self.assertEqual(lp.upper[edge_var(ix, 0, 1)], 0.0)
        self.assertIn("cloud_uplink", lp.row_names)

    def test_overloaded_client_row_is_flagged(self):
        document = knapsack_document()
        document["clients"][0]["memory_bytes"] = 1e8
        document["clients"][0]["compute_capacity"] = 1e6
        s = parse_scenario(document)
        lp = build_offloading_lp(s, Onloading.from_sets(s.index, [(0,)], [(0,)]))
        self.assertIn("client_compute[c0]", lp.flags)

    def test_setup_cost_above_interval_is_infeasible(self):
        document = knapsack_document()
        document["mode"] = "batching"
        document["batching"] = {"interval_s": 0.5}
        document["models"][0]["setup_cost"] = {"e0": 1.0}
        s = parse_scenario(document)
        onloading = Onloading.from_sets(s.index, [()], [(0,)])
        with self.assertRaises(OffloadingInfeasibleError):
            build_offloading_lp(s, onloading)
        self.assertEqual(solve_offloading(s, onloading), (None, None))

    def test_mps_dump_lists_every_row(self):
        s = parse_scenario(knapsack_document(cloud_uplink=1e9))
        lp = build_offloading_lp(s, Onloading.from_sets(s.index, [()], [(0,)]))
        with tempfile.TemporaryDirectory() as tmpdir:
            path = write_mps(lp, Path(tmpdir) / "lp" / "offload.mps")
            lines: List[str] = path.read_text(encoding="utf-8").splitlines()
        self.assertTrue(lines[0].startswith("NAME"))
        self.assertEqual(lines[-1], "ENDATA")
        self.assertEqual(sum(1 for line in lines if line.startswith(" L  ")), lp.n_rows)

    def test_mps_values_round_trip_exactly(self):
        s = parse_scenario(knapsack_document(cloud_uplink=1e9))
        lp = build_offloading_lp(s, Onloading.from_sets(s.index, [()], [(0,)]))
        with tempfile.TemporaryDirectory() as tmpdir:
            lines = write_mps(lp, Path(tmpdir) / "offload.mps").read_text(encoding="utf-8").splitlines()
        columns = lines.index("COLUMNS")
        rhs_at = lines.index("RHS")
        costs = {}
        for line in lines[columns + 1 : rhs_at]:
            col, row_id, value = line.split()
            if row_id == "COST":
                costs[int(col[1:])] = float(value)
        self.assertEqual(sorted(costs), list(range(lp.n_vars)))
        for j, value in costs.items():
            self.assertEqual(value, -lp.costs[j])
        rhs = [float(line.split()[2]) for line in lines[rhs_at + 1 : lines.index("BOUNDS")]]
        self.assertEqual(rhs, lp.rhs.tolist())


if __name__ == "__main__":
    unittest.main()
