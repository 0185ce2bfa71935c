from __future__ import annotations

import tempfile
import unittest
from pathlib import Path

from scripts.summarize_results import format_report, load_result_rows
from src.harness.experiments import ExperimentResult, write_results
from src.harness.metrics import build_results_summary


def row(method: str, objective: float, runtime_ms: float, *, seed: int = 0, status: str = "ok", digest: str = "d1"):
    return {
        "scenario_digest": digest,
        "method": method,
        "seed": seed,
        "objective": objective,
        "objective_kind": "acc",
        "runtime_ms": runtime_ms,
        "max_violation": 0.0,
        "status": status,
    }


class ResultsSummaryTests(unittest.TestCase):
    def test_ratios_are_matched_on_scenario_and_seed(self):
        rows = [
            row("oracle", 0.80, 1000.0, seed=0),
            row("oracle", 0.50, 2000.0, seed=1),
            row("j3o", 0.78, 10.0, seed=0),
            row("j3o", 0.50, 20.0, seed=1),
            row("j3o", 0.10, 5.0, seed=2),
            row("rand_ao", float("nan"), 5.0, seed=0, status="error:ValueError"),
        ]
        summary = build_results_summary(rows)
        self.assertEqual(summary["rows_total"], 6)
        self.assertEqual(summary["status_counts"], {"ok": 5, "error:ValueError": 1})

        j3o_stats = summary["methods"]["j3o"]
        self.assertEqual(j3o_stats["rows"], 3)
        self.assertAlmostEqual(j3o_stats["median_objective"], 0.5)
        self.assertAlmostEqual(j3o_stats["median_ratio_to_oracle"], (0.975 + 1.0) / 2)
        self.assertAlmostEqual(j3o_stats["median_runtime_ratio_to_oracle"], 0.01)
        self.assertAlmostEqual(j3o_stats["median_gap_to_oracle"], -0.01)

        self.assertEqual(summary["methods"]["rand_ao"]["errors"], 1)
        self.assertIsNone(summary["methods"]["rand_ao"]["median_objective"])
        self.assertIsNone(summary["methods"]["oracle"]["median_ratio_to_oracle"])

    def test_loss_rows_report_gaps_but_no_ratio(self):
        rows = [row("oracle", 0.2, 100.0), row("j3o", 0.25, 1.0)]
        for r in rows:
            r["objective_kind"] = "loss"
        stats = build_results_summary(rows)["methods"]["j3o"]
        self.assertIsNone(stats["median_ratio_to_oracle"])
        self.assertAlmostEqual(stats["median_gap_to_oracle"], 0.05)

    def test_csv_round_trip_and_report(self):
        results = [
            ExperimentResult("d1", "oracle", 0, "p_a", 0.5, 0.8, "acc", 900.0, 0.0, 0),
            ExperimentResult("d1", "j3o", 0, "p_a", 0.5, 0.76, "acc", 9.0, 0.0, 3),
        ]
        with tempfile.TemporaryDirectory() as tmpdir:
            path = write_results(results, Path(tmpdir) / "results.csv")
            rows = load_result_rows([path, Path(tmpdir) / "missing.csv"])
        self.assertEqual(len(rows), 2)
        self.assertEqual(rows[1]["outer_iters"], 3)

        report = format_report(build_results_summary(rows))
        self.assertIn("Results Report", report)
        self.assertIn("Per Method (medians)", report)
        self.assertIn("vs_oracle=0.9500", report)


if __name__ == "__main__":
    unittest.main()
