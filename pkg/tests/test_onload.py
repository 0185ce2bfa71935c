from __future__ import annotations

import math
import unittest
from fractions import Fraction
from typing import Any, Dict, List, Sequence

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from src.hio_planner.errors import ConfigError, OracleTooLargeError
from src.hio_planner.model import Offloading, parse_scenario
from src.hio_planner.objective import objective_value
from src.hio_planner.onload import (
    DualState,
    GreedyLrOptions,
    NodeProblem,
    build_node_problems,
    coverage_value,
    exhaustive_node_select,
    exhaustive_onloading,
    feasible_subsets,
    greedy_lr,
    greedy_node_select,
    marginal_gain,
    memory_greedy,
)

MB = 1e6


def node(accuracy, memory, budget: float, weights=None, compute=None, capacity: float = 1e30) -> NodeProblem:
    accuracy = np.asarray(accuracy, dtype=float)
    n_models, n_tasks = accuracy.shape
    weights = np.ones(n_tasks) if weights is None else np.asarray(weights, dtype=float)
    return NodeProblem(
        kind="edge",
        index=0,
        node_id="e0",
        accuracy=accuracy,
        weights=weights,
        rates=weights,
        memory=np.asarray(memory, dtype=float),
        memory_budget=budget,
        compute=np.ones(n_models) if compute is None else np.asarray(compute, dtype=float),
        capacity=capacity,
        setup=np.zeros(n_models),
    )


def two_model_document() -> Dict[str, Any]:
    """m0 is accurate but too heavy for the edge at full offloading; m1 is light."""
    return {
        "models": [
            {"id": "m0", "memory_bytes": 1e7, "compute_per_query": 1e10, "supported_tasks": ["t0"]},
            {"id": "m1", "memory_bytes": 1e7, "compute_per_query": 1e8, "supported_tasks": ["t0"]},
        ],
        "tasks": [{"id": "t0", "input_bytes": 1e3}],
        "clients": [{"id": "c0", "edge": "e0", "memory_bytes": 1e6, "compute_capacity": 1e9}],
        "edges": [
            {
                "id": "e0",
                "memory_bytes": 1e8,
                "compute_capacity": 1e11,
                "uplink_bytes_per_s": 1e9,
                "accuracy": [[0.9], [0.6]],
            }
        ],
        "cloud": {"uplink_bytes_per_s": 1e9, "accuracy": {"t0": 1.0}},
        "workload": {"rates": {"c0": {"t0": 100.0}}},
    }


fractions = st.fractions(min_value=0, max_value=1, max_denominator=20)


class CoverageTests(unittest.TestCase):
    @settings(max_examples=10_000, deadline=None)
    @given(
        n_models=st.integers(2, 6),
        n_tasks=st.integers(1, 4),
        data=st.data(),
    )
    def test_coverage_is_monotone_and_submodular(self, n_models, n_tasks, data):
        weights = data.draw(st.lists(fractions, min_size=n_tasks, max_size=n_tasks))
        accuracy = data.draw(
            st.lists(st.lists(fractions, min_size=n_tasks, max_size=n_tasks), min_size=n_models, max_size=n_models)
        )
        extra = data.draw(st.integers(0, n_models - 1))
        others = st.sampled_from([m for m in range(n_models) if m != extra])
        inner = data.draw(st.sets(others))
        outer = inner | data.draw(st.sets(others))

        def f(models: Sequence[int]) -> Fraction:
            return coverage_value(weights, accuracy, sorted(models))

        self.assertGreaterEqual(f(outer), f(inner))
        gain_small = f(inner | {extra}) - f(inner)
        gain_large = f(outer | {extra}) - f(outer)
        self.assertGreaterEqual(gain_small, gain_large)

    def test_empty_set_has_zero_coverage(self):
        self.assertEqual(coverage_value([Fraction(1, 2)], [[Fraction(3, 4)]], []), 0)

    def test_marginal_gain_rejects_selected_model(self):
        p = node([[0.5], [0.7]], [1, 1], 2)
        self.assertAlmostEqual(marginal_gain(p, 1, [0]), 0.2)
        with self.assertRaises(ValueError):
            marginal_gain(p, 0, [0])


class GreedySelectTests(unittest.TestCase):
    def test_variants_fill_a_96mb_client_with_five_models(self):
        n = 7
        p = node(np.eye(n) * 0.8, [18.415 * MB] * n, 96 * MB)
        selection = greedy_node_select(p)
        self.assertEqual(len(selection.models), 5)
        self.assertEqual(selection.trace.reason, "budget")
        self.assertTrue(p.fits(selection.models))

    def test_best_singleton_replaces_greedy_pick(self):
        p = node([[0.2], [0.9]], [1, 10], 10)
        selection = greedy_node_select(p)
        self.assertEqual(selection.models, (1,))
        self.assertEqual(selection.trace.reason, "singleton")
        self.assertEqual([step.model for step in selection.trace.steps], [0])

    def test_redundant_model_exhausts_gains(self):
        p = node([[0.7], [0.7]], [1, 1], 5)
        selection = greedy_node_select(p)
        self.assertEqual(selection.models, (0,))
        self.assertEqual(selection.trace.reason, "exhausted")
        self.assertEqual(selection.z.tolist(), [0])

    @settings(max_examples=500, deadline=None)
    @given(
        n_models=st.integers(2, 6),
        n_tasks=st.integers(1, 4),
        budget=st.integers(1, 3),
        data=st.data(),
    )
    def test_unit_sizes_reach_the_cardinality_bound(self, n_models, n_tasks, budget, data):
        accuracy = data.draw(
            st.lists(
                st.lists(st.integers(0, 10), min_size=n_tasks, max_size=n_tasks), min_size=n_models, max_size=n_models
            )
        )
        weights = data.draw(st.lists(st.integers(1, 5), min_size=n_tasks, max_size=n_tasks))
        p = node(np.asarray(accuracy) / 10.0, [1.0] * n_models, float(budget), weights=weights)
        best = exhaustive_node_select(p)
        greedy = greedy_node_select(p)
        self.assertGreaterEqual(p.coverage(greedy.models), (1 - 1 / math.e) * p.coverage(best.models) - 1e-12)

    @settings(max_examples=500, deadline=None)
    @given(
        n_models=st.integers(2, 6),
        n_tasks=st.integers(1, 4),
        data=st.data(),
    )
    def test_knapsack_sizes_keep_half_the_bound(self, n_models, n_tasks, data):
        accuracy = data.draw(
            st.lists(
                st.lists(st.integers(0, 10), min_size=n_tasks, max_size=n_tasks), min_size=n_models, max_size=n_models
            )
        )
        memory = data.draw(st.lists(st.integers(1, 8), min_size=n_models, max_size=n_models))
        budget = data.draw(st.integers(1, 12))
        p = node(np.asarray(accuracy) / 10.0, memory, float(budget))
        best = exhaustive_node_select(p)
        greedy = greedy_node_select(p)
        self.assertTrue(p.fits(greedy.models))
        bound = 0.5 * (1 - 1 / math.e) * p.coverage(best.models)
        self.assertGreaterEqual(p.coverage(greedy.models), bound - 1e-12)


class SubsetEnumerationTests(unittest.TestCase):
    def test_feasible_subsets_in_lexicographic_order(self):
        subsets = feasible_subsets(np.array([1.0, 1.0, 1.0]), 2.0)
        self.assertEqual(subsets, [(), (0,), (0, 1), (0, 2), (1,), (1, 2), (2,)])

    def test_limit_raises_oracle_too_large(self):
        with self.assertRaises(OracleTooLargeError) as ctx:
            feasible_subsets(np.ones(4), 4.0, limit=5)
        self.assertTrue(str(ctx.exception).startswith("instance too large for oracle"))


class DualTests(unittest.TestCase):
    def test_options_are_validated(self):
        with self.assertRaises(ConfigError):
            GreedyLrOptions(eps=0.0)
        with self.assertRaises(ConfigError):
            GreedyLrOptions(max_iterations=0)

    def test_update_is_projected_and_scaled_by_weight_mass(self):
        problems: List[NodeProblem] = [node([[0.5]], [1], 1, weights=[0.25]), node([[0.5]], [1], 1, weights=[0.75])]
        duals = DualState.start(2, GreedyLrOptions(eta_edge=2.0))
        duals.update(np.array([-1.0, 0.5]), problems)
        self.assertEqual(duals.alpha[0], 0.0)
        self.assertAlmostEqual(duals.alpha[1], 2.0 * 0.75 * 0.5)
        duals.update(np.array([0.0, -10.0]), problems)
        self.assertEqual(duals.alpha.tolist(), [0.0, 0.0])
        self.assertEqual(duals.iteration, 2)


class OnloadingTests(unittest.TestCase):
    def setUp(self):
        self.s = parse_scenario(two_model_document())
        self.offloading = Offloading.of(np.array([[1.0]]), np.array([[0.0]]))

    def test_memory_greedy_ignores_compute(self):
        onloading = memory_greedy(self.s, self.offloading)
        self.assertEqual(onloading.edge_models, ((0,),))

    def test_greedy_lr_moves_to_the_light_model(self):
        result = greedy_lr(self.s, self.offloading, GreedyLrOptions(eta_edge=0.01))
        self.assertTrue(result.feasible)
        self.assertEqual(result.onloading.edge_models, ((1,),))
        self.assertEqual(result.onloading.client_models, ((),))
        self.assertAlmostEqual(result.objective, 0.6)
        self.assertEqual(result.iterations, 2)
        self.assertGreater(result.duals.alpha[1], 0.0)
        self.assertEqual(len(result.traces), 2)

    def test_exhaustive_respects_true_compute(self):
        edge_problem = build_node_problems(self.s, self.offloading)[1]
        self.assertEqual(edge_problem.kind, "edge")
        self.assertEqual(exhaustive_node_select(edge_problem, exact_compute=True).models, (1,))
        self.assertEqual(exhaustive_onloading(self.s, self.offloading).edge_models, ((1,),))
        self.assertEqual(exhaustive_onloading(self.s, self.offloading, nodes="clients").edge_models, ((),))

    def test_unconstrained_compute_keeps_the_multipliers_at_zero(self):
        document = two_model_document()
        document["edges"][0]["compute_capacity"] = 1e20
        s = parse_scenario(document)
        result = greedy_lr(s, self.offloading)
        self.assertEqual(result.iterations, 1)
        self.assertTrue(np.all(result.duals.alpha == 0.0))
        self.assertEqual(result.onloading.edge_models, ((0,),))


def tight_client_document() -> Dict[str, Any]:
    """Local-only traffic; the client can afford m1 exactly and m0 only at twice its compute."""
    return {
        "models": [
            {"id": "m0", "memory_bytes": 1e7, "compute_per_query": 2e8, "supported_tasks": ["t0"]},
            {"id": "m1", "memory_bytes": 1e7, "compute_per_query": 1e8, "supported_tasks": ["t0"]},
        ],
        "tasks": [{"id": "t0", "input_bytes": 1e3}],
        "clients": [{"id": "c0", "edge": "e0", "memory_bytes": 1.5e7, "compute_capacity": 1e10}],
        "edges": [
            {
                "id": "e0",
                "memory_bytes": 1e8,
                "compute_capacity": 1e11,
                "uplink_bytes_per_s": 1e9,
                "accuracy": [[0.9], [0.6]],
            }
        ],
        "cloud": {"uplink_bytes_per_s": 1e9, "accuracy": {"t0": 1.0}},
        "workload": {"rates": {"c0": {"t0": 100.0}}},
    }


def small_fleet_document(seed: int) -> Dict[str, Any]:
    """Two clients on one edge, four equal-size models over two tasks, compute to spare."""
    rng = np.random.default_rng(seed)
    accuracy = np.round(rng.uniform(0.1, 0.95, size=(4, 2)), 3)
    return {
        "models": [
            {"id": f"m{m}", "memory_bytes": 1e7, "compute_per_query": 1e6, "supported_tasks": ["t0", "t1"]}
            for m in range(4)
        ],
        "tasks": [{"id": "t0", "input_bytes": 1e3}, {"id": "t1", "input_bytes": 1e3}],
        "clients": [
            {"id": "c0", "edge": "e0", "memory_bytes": 2.5e7, "compute_capacity": 1e12},
            {"id": "c1", "edge": "e0", "memory_bytes": 2.5e7, "compute_capacity": 1e12},
        ],
        "edges": [
            {
                "id": "e0",
                "memory_bytes": 3.5e7,
                "compute_capacity": 1e13,
                "uplink_bytes_per_s": 1e9,
                "accuracy": accuracy.tolist(),
            }
        ],
        "cloud": {"uplink_bytes_per_s": 1e9, "accuracy": {"t0": 1.0, "t1": 1.0}},
        "workload": {"rates": {"c0": {"t0": 30.0, "t1": 10.0}, "c1": {"t0": 5.0, "t1": 25.0}}},
    }


class GreedyLrTests(unittest.TestCase):
    def test_tight_client_compute_ends_complementary(self):
        s = parse_scenario(tight_client_document())
        local = Offloading.of(np.array([[0.0]]), np.array([[0.0]]))
        result = greedy_lr(s, local, GreedyLrOptions(eta_client=0.1))
        self.assertTrue(result.feasible)
        self.assertEqual(result.onloading.client_models, ((1,),))
        self.assertGreater(result.iterations, 1)
        self.assertGreater(result.duals.alpha[0], 0.0)
        self.assertEqual(result.duals.violation.shape, result.duals.alpha.shape)
        self.assertLessEqual(float(np.max(np.abs(result.duals.alpha * result.duals.violation))), 1e-5)

    def test_stays_within_the_greedy_bound_of_exhaustive_onloading(self):
        offloading = Offloading.of(np.full((2, 2), 0.5), np.zeros((2, 2)))
        for seed in range(10):
            s = parse_scenario(small_fleet_document(seed))
            result = greedy_lr(s, offloading)
            best = objective_value(s.index, exhaustive_onloading(s, offloading), offloading)
            self.assertTrue(result.feasible)
            self.assertGreaterEqual(result.objective, (1 - 1 / math.e) * best - 1e-5, msg=f"seed {seed}")
            self.assertLessEqual(result.objective, best + 1e-12)


if __name__ == "__main__":
    unittest.main()
