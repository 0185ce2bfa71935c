from __future__ import annotations

import math
from collections import Counter, defaultdict
from datetime import datetime, timezone
from statistics import median
from typing import Any, Dict, List, Optional, Tuple


def _utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def _finite(value: Any) -> Optional[float]:
    try:
        number = float(value)
    except (TypeError, ValueError):
        return None
    return number if math.isfinite(number) else None


def _median(values: List[float]) -> Optional[float]:
    return round(float(median(values)), 6) if values else None


def build_results_summary(rows: List[Dict[str, Any]]) -> Dict[str, Any]:
    """Per-method medians, plus ratios to the oracle on rows that share a scenario and seed."""
    status_counts: Counter[str] = Counter()
    methods: Dict[str, Dict[str, Any]] = defaultdict(
        lambda: {"rows": 0, "errors": 0, "objectives": [], "runtimes": [], "violations": []}
    )
    oracle: Dict[Tuple[str, int], Tuple[float, float, str]] = {}

    for row in rows:
        if not isinstance(row, dict):
            continue
        status = str(row.get("status", "ok"))
        status_counts[status] += 1
        method = str(row.get("method", "unknown"))
        bucket = methods[method]
        bucket["rows"] += 1
        if status != "ok":
            bucket["errors"] += 1
            continue

        objective = _finite(row.get("objective"))
        runtime = _finite(row.get("runtime_ms"))
        violation = _finite(row.get("max_violation"))
        if objective is not None:
            bucket["objectives"].append(objective)
        if runtime is not None:
            bucket["runtimes"].append(runtime)
        if violation is not None:
            bucket["violations"].append(violation)
        if method == "oracle" and objective is not None and runtime is not None:
            key = (str(row.get("scenario_digest", "")), int(row.get("seed", 0)))
            oracle[key] = (objective, runtime, str(row.get("objective_kind", "acc")))

    ratios: Dict[str, List[float]] = defaultdict(list)
    gaps: Dict[str, List[float]] = defaultdict(list)
    runtime_ratios: Dict[str, List[float]] = defaultdict(list)
    for row in rows:
        if not isinstance(row, dict) or str(row.get("status", "ok")) != "ok":
            continue
        method = str(row.get("method", "unknown"))
        if method == "oracle":
            continue
        key = (str(row.get("scenario_digest", "")), int(row.get("seed", 0)))
        if key not in oracle:
            continue
        best, best_runtime, kind = oracle[key]
        objective = _finite(row.get("objective"))
        runtime = _finite(row.get("runtime_ms"))
        if objective is None:
            continue
        gaps[method].append(objective - best)
        if kind == "acc" and best > 0:
            ratios[method].append(objective / best)
        if runtime is not None and best_runtime > 0:
            runtime_ratios[method].append(runtime / best_runtime)

    summary: Dict[str, Dict[str, Any]] = {}
    for method, bucket in sorted(methods.items()):
        summary[method] = {
            "rows": bucket["rows"],
            "errors": bucket["errors"],
            "median_objective": _median(bucket["objectives"]),
            "median_runtime_ms": _median(bucket["runtimes"]),
            "max_violation": round(max(bucket["violations"]), 9) if bucket["violations"] else None,
            "median_ratio_to_oracle": _median(ratios.get(method, [])),
            "median_gap_to_oracle": _median(gaps.get(method, [])),
            "median_runtime_ratio_to_oracle": _median(runtime_ratios.get(method, [])),
        }

    return {
        "generated_at_utc": _utc_now_iso(),
        "rows_total": sum(status_counts.values()),
        "status_counts": dict(status_counts),
        "methods": summary,
    }
