#!/usr/bin/env python3
from __future__ import annotations

import argparse
import asyncio
import json
from pathlib import Path
from typing import Any, Dict

import httpx
from dotenv import load_dotenv

# Ensure project root is on sys.path when running from ./scripts
import sys

PROJECT_ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(PROJECT_ROOT))


def load_scenario_document(path: Path) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def main() -> int:
    load_dotenv()

    parser = argparse.ArgumentParser(description="Run a one-command planning API smoke demo.")
    parser.add_argument("--mode", choices=["inprocess", "http"], default="inprocess")
    parser.add_argument("--base-url", default="http://127.0.0.1:8000", help="FastAPI base URL (http mode only)")
    parser.add_argument("--scenario", default=str(PROJECT_ROOT / "scripts" / "scenarios" / "toy.json"))
    parser.add_argument("--method", default="j3o")
    parser.add_argument("--print-summary-json", action="store_true")
    args = parser.parse_args()

    document = load_scenario_document(Path(args.scenario))

    if args.mode == "inprocess":
        from src.harness.server import (
            PlanValidateRequest,
            ScenarioRequest,
            SolveRequest,
            api_get_metrics_summary,
            api_solve,
            api_validate_plan,
            api_validate_scenario,
        )

        checked = asyncio.run(api_validate_scenario(ScenarioRequest(scenario=document)))
        print(f"digest={checked['digest']}")
        solved = api_solve(SolveRequest(scenario=document, method=args.method))
        run = solved["run"]
        print(f"run_id={run['run_id']} reused={solved['reused']} state={run['state']}")
        validation = asyncio.run(api_validate_plan(PlanValidateRequest(scenario=document, plan=run["plan"])))
        summary = asyncio.run(api_get_metrics_summary())
    else:
        with httpx.Client(timeout=120.0) as client:
            checked_resp = client.post(f"{args.base_url}/scenarios/validate", json={"scenario": document})
            if checked_resp.status_code != 200:
                print(f"ERROR /scenarios/validate [{checked_resp.status_code}]: {checked_resp.text}")
                return 1
            print(f"digest={checked_resp.json()['digest']}")

            solve_resp = client.post(f"{args.base_url}/solve", json={"scenario": document, "method": args.method})
            if solve_resp.status_code != 200:
                print(f"ERROR /solve [{solve_resp.status_code}]: {solve_resp.text}")
                return 1
            solved = solve_resp.json()
            run = solved["run"]
            print(f"run_id={run['run_id']} reused={solved['reused']} state={run['state']}")

            plan_resp = client.post(f"{args.base_url}/plans/validate", json={"scenario": document, "plan": run["plan"]})
            if plan_resp.status_code != 200:
                print(f"ERROR /plans/validate [{plan_resp.status_code}]: {plan_resp.text}")
                return 1
            validation = plan_resp.json()

            summary_resp = client.get(f"{args.base_url}/metrics/summary")
            if summary_resp.status_code != 200:
                print(f"ERROR /metrics/summary [{summary_resp.status_code}]: {summary_resp.text}")
                return 1
            summary = summary_resp.json()

    result = run.get("result") or {}
    print(
        "result:",
        f"objective={result.get('objective')},",
        f"objective_kind={result.get('objective_kind')},",
        f"runtime_ms={result.get('runtime_ms')},",
        f"feasible={validation['feasible']}",
    )
    print(f"persisted_file=runtime/runs/{run['run_id']}.json")

    if args.print_summary_json:
        print(json.dumps(summary, indent=2))

    return 0 if validation["feasible"] else 1


if __name__ == "__main__":
    raise SystemExit(main())
