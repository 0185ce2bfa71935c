from __future__ import annotations

import unittest

import numpy as np
from pydantic import ValidationError

from src.hio_planner.model import canonical_hash
from src.hio_planner.tools.generator import CITY_MODELS, GB, MB, GeneratorConfig, desk_config, generate_scenario
from src.hio_planner.tools.rng import CounterRng


class CounterRngTests(unittest.TestCase):
    def test_same_seed_same_stream(self):
        a, b = CounterRng(5), CounterRng(5)
        self.assertEqual([a.raw() for _ in range(4)], [b.raw() for _ in range(4)])
        self.assertNotEqual(CounterRng(6).raw(), CounterRng(5).raw())

    def test_draw_ranges(self):
        rng = CounterRng(1)
        for _ in range(200):
            u = rng.uniform()
            self.assertGreaterEqual(u, 0.0)
            self.assertLess(u, 1.0)
            self.assertIn(rng.integers(2, 5), (2, 3, 4))
        self.assertEqual(sorted(rng.permutation(9)), list(range(9)))
        self.assertAlmostEqual(float(np.sum(rng.dirichlet([0.5, 1.0, 2.0]))), 1.0)

    def test_invalid_arguments(self):
        with self.assertRaises(ValueError):
            CounterRng(-1)
        with self.assertRaises(ValueError):
            CounterRng(0).integers(3, 3)
        with self.assertRaises(ValueError):
            CounterRng(0).dirichlet([1.0, 0.0])


class GeneratorTests(unittest.TestCase):
    def test_seed_determines_the_scenario(self):
        first = generate_scenario(GeneratorConfig(seed=4))
        again = generate_scenario(GeneratorConfig(seed=4))
        other = generate_scenario(GeneratorConfig(seed=5))
        self.assertEqual(canonical_hash(first), canonical_hash(again))
        self.assertNotEqual(canonical_hash(first), canonical_hash(other))

    def test_large_concentration_spreads_load_evenly(self):
        cfg = GeneratorConfig(preset="custom", num_clients=10, client_concentration=1e6, task_concentration=1e6)
        s = generate_scenario(cfg)
        rates = s.index.rates
        expected = cfg.total_rate / rates.size
        self.assertAlmostEqual(s.index.total_rate, cfg.total_rate, places=6)
        np.testing.assert_allclose(rates, expected, rtol=0.01)

    def test_edge_uplink_is_a_share_of_demand(self):
        cfg = GeneratorConfig(preset="domainnet", edge_uplink_scale=0.4, seed=2)
        s = generate_scenario(cfg)
        ix = s.index
        for e in range(ix.n_edges):
            members = list(ix.edge_clients[e])
            demand = float(np.sum(ix.rates[members] * ix.input_bytes))
            self.assertAlmostEqual(float(ix.edge_uplink[e]), 0.4 * demand, delta=1e-6 * demand)

    def test_taskonomy_library_and_budgets(self):
        s = generate_scenario(GeneratorConfig(preset="taskonomy", seed=1))
        self.assertEqual(s.objective_kind, "loss")
        self.assertEqual(len(s.tasks), 5)
        self.assertEqual(len(s.models), 5 + 10 + 10)
        self.assertEqual(s.clients[4].memory_bytes, 96 * MB)
        self.assertAlmostEqual(s.models[0].client_memory, 73.66 * MB * 0.25)

    def test_cityscape_uses_the_tabulated_library(self):
        s = generate_scenario(GeneratorConfig(preset="cityscape", num_clients=6, num_edges=2, seed=0))
        self.assertEqual(len(s.models), len(CITY_MODELS))
        by_tasks = {tuple(m.supported_tasks): m for m in s.models}
        detection = by_tasks[("detection",)]
        self.assertAlmostEqual(detection.memory_bytes, 1.10 * GB)
        self.assertAlmostEqual(detection.client_memory, 0.80 * GB)

    def test_accuracy_only_on_supported_tasks(self):
        s = generate_scenario(desk_config(9))
        task_ids = [t.id for t in s.tasks]
        for edge in s.edges:
            for model, row in zip(s.models, edge.accuracy):
                for task_id, value in zip(task_ids, row):
                    if task_id not in model.supported_tasks:
                        self.assertEqual(value, 0.0)

    def test_batching_interval_adds_the_batching_block(self):
        s = generate_scenario(desk_config(0, mode="batching", batching_interval=0.25))
        self.assertEqual(s.mode, "batching")
        self.assertEqual(s.batching_interval, 0.25)
        self.assertTrue(s.index.has_setup)

    def test_invalid_configs_are_rejected(self):
        with self.assertRaises(ValidationError):
            GeneratorConfig(mode="batching")
        with self.assertRaises(ValidationError):
            GeneratorConfig(preset="imagenet")
        with self.assertRaises(ValidationError):
            GeneratorConfig(compute_scale=0.0)


if __name__ == "__main__":
    unittest.main()
