#!/usr/bin/env python3
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

# Ensure project root is on sys.path when running from ./scripts
PROJECT_ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(PROJECT_ROOT))

from src.harness.experiments import read_results_csv  # noqa: E402
from src.harness.metrics import build_results_summary  # noqa: E402


def load_result_rows(paths: List[Path]) -> List[Dict[str, Any]]:
    rows: List[Dict[str, Any]] = []
    for path in paths:
        if not path.exists():
            continue
        rows.extend(read_results_csv(path))
    return rows


def _fmt(value: Optional[float], digits: int = 4) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


def _format_two_col_table(rows: List[Tuple[str, str]], *, left_label: str, right_label: str) -> str:
    left_w = max([len(left_label)] + [len(r[0]) for r in rows]) if rows else len(left_label)
    right_w = max([len(right_label)] + [len(r[1]) for r in rows]) if rows else len(right_label)
    sep = f"+-{'-' * left_w}-+-{'-' * right_w}-+"
    out = [sep, f"| {left_label.ljust(left_w)} | {right_label.ljust(right_w)} |", sep]
    for left, right in rows:
        out.append(f"| {left.ljust(left_w)} | {right.ljust(right_w)} |")
    out.append(sep)
    return "\n".join(out)


def format_report(summary: Dict[str, Any]) -> str:
    lines: List[str] = ["Results Report", f"rows_total={summary['rows_total']}", ""]

    status_rows = [(k, str(v)) for k, v in sorted(summary["status_counts"].items(), key=lambda x: (-x[1], x[0]))]
    lines.append("Row Status")
    lines.append(_format_two_col_table(status_rows, left_label="status", right_label="count") if status_rows else "(no data)")
    lines.append("")

    method_rows: List[Tuple[str, str]] = []
    for method, stats in summary["methods"].items():
        method_rows.append(
            (
                method,
                f"rows={stats['rows']}, errors={stats['errors']}, "
                f"objective={_fmt(stats['median_objective'])}, "
                f"vs_oracle={_fmt(stats['median_ratio_to_oracle'])}, "
                f"runtime_ms={_fmt(stats['median_runtime_ms'], 1)}, "
                f"runtime_vs_oracle={_fmt(stats['median_runtime_ratio_to_oracle'], 3)}",
            )
        )
    lines.append("Per Method (medians)")
    lines.append(_format_two_col_table(method_rows, left_label="method", right_label="stats") if method_rows else "(no methods)")
    return "\n".join(lines)


def main() -> int:
    parser = argparse.ArgumentParser(description="Summarize sweep result CSV files per method.")
    parser.add_argument("results", nargs="+", help="One or more result CSV files.")
    parser.add_argument("--json", action="store_true", help="Print JSON report instead of table output.")
    args = parser.parse_args()

    rows = load_result_rows([Path(p) for p in args.results])
    summary = build_results_summary(rows)

    if args.json:
        print(json.dumps(summary, indent=2))
    else:
        print(format_report(summary))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
