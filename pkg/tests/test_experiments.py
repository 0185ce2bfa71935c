from __future__ import annotations

import math
import tempfile
import unittest
from pathlib import Path
from typing import Any, Dict

from pydantic import ValidationError

from src.harness.experiments import (
    SweepSpec,
    json_safe,
    load_sweep_spec,
    read_results_csv,
    result_row,
    run_method,
    run_sweep,
    scenario_for,
    solve_recorded,
)
from src.harness.run_store import JsonRunStore, RunState
from src.hio_planner.errors import ConfigError, UnknownMethodError
from src.hio_planner.j3o import baj3o, j3o
from src.hio_planner.model import canonical_hash, check_constraints, load_scenario, parse_scenario
from src.hio_planner.tools.generator import desk_config, generate_scenario

SCENARIOS = Path(__file__).resolve().parents[1] / "scripts" / "scenarios"


def cloud_document(kind: str = "acc") -> Dict[str, Any]:
    return {
        "objective_kind": kind,
        "client_accuracy_factor": 0.625,
        "models": [{"id": "m0", "memory_bytes": 1e7, "compute_per_query": 1e9, "supported_tasks": ["t0"]}],
        "tasks": [{"id": "t0", "input_bytes": 1e6}],
        "clients": [{"id": "c0", "edge": "e0", "memory_bytes": 1e8, "compute_capacity": 1e12}],
        "edges": [
            {
                "id": "e0",
                "memory_bytes": 1e8,
                "compute_capacity": 1e13,
                "uplink_bytes_per_s": 1e9,
                "accuracy": [[0.8]],
            }
        ],
        "cloud": {"uplink_bytes_per_s": 1e9, "accuracy": {"t0": 1.0}},
        "workload": {"rates": {"c0": {"t0": 10.0}}},
    }


class RunMethodTests(unittest.TestCase):
    def test_unknown_method(self):
        s = parse_scenario(cloud_document())
        with self.assertRaises(UnknownMethodError):
            run_method(s, "simulated_annealing")

    def test_rows_report_accuracy_or_loss(self):
        acc = parse_scenario(cloud_document())
        row = result_row(acc, run_method(acc, "full_local"), seed=3)
        self.assertAlmostEqual(row.objective, 0.5)
        self.assertEqual(row.objective_kind, "acc")
        self.assertEqual(row.seed, 3)
        self.assertEqual(row.scenario_digest, canonical_hash(acc))
        self.assertLessEqual(row.max_violation, 0.0)

        loss = parse_scenario(cloud_document("loss"))
        loss_row = result_row(loss, run_method(loss, "j3o"))
        self.assertAlmostEqual(loss_row.objective, 0.0, places=6)
        self.assertEqual(loss_row.objective_kind, "loss")


class SweepSpecTests(unittest.TestCase):
    def test_unknown_methods_are_rejected(self):
        with self.assertRaises(ValidationError):
            SweepSpec(param="p_a", values=[0.5], methods=["j3o", "tabu"])
        with self.assertRaises(ValidationError):
            SweepSpec(param="p_a", values=[], methods=["j3o"])

    def test_points_are_in_grid_order(self):
        spec = SweepSpec(param="compute_scale", values=[1.0, 2.0], seeds=2, seed_offset=10, methods=["j3o", "oracle"])
        points = spec.points()
        self.assertEqual(len(points), 8)
        self.assertEqual(points[0], (1.0, 10, "j3o"))
        self.assertEqual(points[1], (1.0, 10, "oracle"))
        self.assertEqual(points[2], (1.0, 11, "j3o"))
        self.assertEqual(points[-1], (2.0, 11, "oracle"))

    def test_scenario_for_each_parameter(self):
        spec = SweepSpec(param="batching_interval", values=[0.2], methods=["baj3o"])
        s = scenario_for(spec, 0.2, seed=4)
        self.assertEqual(s.mode, "batching")
        self.assertEqual(s.batching_interval, 0.2)

        nu = SweepSpec(param="nu_a", values=[0.5], methods=["baj3o"], p_a=0.4)
        self.assertEqual(scenario_for(nu, 0.5, seed=0).models[0].setup_cost, {"e0": 0.5})

        mix = SweepSpec(param="p_a", values=[0.3], methods=["j3o"])
        self.assertAlmostEqual(scenario_for(mix, 0.3, seed=0).workload.rates["c1"]["A"], 3.0)


class UplinkSweepTests(unittest.TestCase):
    def test_objective_grows_with_the_edge_uplink(self):
        shares = (0.1, 0.25, 0.5, 0.75, 1.0)
        for seed in range(5):
            for method in ("j3o", "greedy_ao", "full_local"):
                values = [
                    run_method(generate_scenario(desk_config(seed, edge_uplink_scale=share)), method).objective
                    for share in shares
                ]
                for earlier, later in zip(values, values[1:]):
                    self.assertGreaterEqual(later, earlier - 1e-9, msg=f"{method} seed {seed}: {values}")


class RunSweepTests(unittest.TestCase):
    def test_sweep_writes_one_row_per_point(self):
        spec = SweepSpec(param="p_a", values=[0.3, 0.7], methods=["j3o", "full_local"])
        with tempfile.TemporaryDirectory() as tmpdir:
            out = Path(tmpdir) / "nested" / "results.csv"
            results = run_sweep(spec, out, threads=2)
            rows = read_results_csv(out)

        self.assertEqual(len(results), 4)
        self.assertEqual([r["method"] for r in rows], ["j3o", "full_local", "j3o", "full_local"])
        self.assertEqual([r["sweep_value"] for r in rows], [0.3, 0.3, 0.7, 0.7])
        self.assertTrue(all(r["status"] == "ok" for r in rows))
        for j3o_row, local_row in (rows[0:2], rows[2:4]):
            self.assertGreaterEqual(j3o_row["objective"], local_row["objective"] - 1e-9)
            self.assertEqual(local_row["outer_iters"], 0)

    def test_failing_point_becomes_an_error_row(self):
        # baj3o refuses a plain-mode scenario.
        spec = SweepSpec(param="p_a", values=[0.5], methods=["baj3o", "full_local"])
        results = run_sweep(spec)
        self.assertEqual(results[0].status, "error:ConfigError")
        self.assertTrue(math.isnan(results[0].objective))
        self.assertEqual(results[1].status, "ok")
        self.assertIsNone(json_safe(results[0].to_row())["objective"])


class SolveRecordedTests(unittest.TestCase):
    def test_succeeded_run_is_reused(self):
        s = parse_scenario(cloud_document())
        with tempfile.TemporaryDirectory() as tmpdir:
            store = JsonRunStore(root_dir=tmpdir)
            run, result = solve_recorded(store, s, "j3o")
            self.assertIsNotNone(result)
            self.assertEqual(run.state, RunState.SUCCEEDED)
            self.assertAlmostEqual(run.result["objective"], 1.0, places=6)
            self.assertEqual(sorted(run.plan["o_client"]), ["c0"])
            self.assertTrue(run.trace)

            again, reused = solve_recorded(store, s, "j3o")
            self.assertIsNone(reused)
            self.assertEqual(again.run_id, run.run_id)
            self.assertEqual(len(store.list_runs()), 1)

    def test_failure_marks_the_run_failed(self):
        s = parse_scenario(cloud_document())
        with tempfile.TemporaryDirectory() as tmpdir:
            store = JsonRunStore(root_dir=tmpdir)
            with self.assertRaises(ConfigError):
                solve_recorded(store, s, "baj3o")
            [failed] = store.list_runs()
            self.assertEqual(failed.state, RunState.FAILED)
            self.assertIn("ConfigError", failed.error)


class BundledFixtureTests(unittest.TestCase):
    def test_toy_scenario_solves_in_both_modes(self):
        s = load_scenario(SCENARIOS / "toy.json")
        plain = j3o(s)
        self.assertTrue(check_constraints(s, plain.onloading, plain.offloading).feasible())

        batched = s.with_mode("batching")
        outcome = baj3o(batched)
        self.assertTrue(check_constraints(batched, outcome.onloading, outcome.offloading).feasible())
        self.assertTrue(outcome.trace.is_monotone())

    def test_sweep_specs_load(self):
        expected = {
            "sweep_edge_uplink.json": 5 * 5 * 5,
            "sweep_batching_interval.json": 5 * 3 * 4,
            "sweep_motivating.json": 9 * 1 * 2,
        }
        for name, count in expected.items():
            self.assertEqual(len(load_sweep_spec(SCENARIOS / name).points()), count, msg=name)


if __name__ == "__main__":
    unittest.main()
