from dataclasses import asdict
from typing import Any, Dict, Optional
import sys
from pathlib import Path

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Add project root to path
PROJECT_ROOT = Path(__file__).resolve().parents[2]
sys.path.append(str(PROJECT_ROOT))

from src.harness.experiments import METHODS, json_safe, solve_recorded
from src.harness.metrics import build_results_summary
from src.harness.run_store import JsonRunStore, RunState, SolveRun
from src.hio_planner.config import configure_logging, load_settings
from src.hio_planner.errors import HioError, UnknownMethodError
from src.hio_planner.model import Plan, canonical_hash, parse_scenario, validate_plan
from src.hio_planner.objective import eval_objective

settings = load_settings(use_dotenv=False)
configure_logging(settings)

app = FastAPI(title="HIO Planner API")
run_store = JsonRunStore(settings.runtime_dir / "runs")


class ScenarioRequest(BaseModel):
    scenario: Dict[str, Any]


class SolveRequest(BaseModel):
    scenario: Dict[str, Any]
    method: str = "j3o"
    seed: int = Field(default=0, ge=0)


class PlanValidateRequest(BaseModel):
    scenario: Dict[str, Any]
    plan: Dict[str, Any]


def _serialize_run(run: SolveRun, *, include_plan: bool = True) -> Dict[str, Any]:
    row = asdict(run)
    row["state"] = run.state.value
    if not include_plan:
        row.pop("plan", None)
        row.pop("trace", None)
    return row


@app.post("/scenarios/validate")
async def api_validate_scenario(request: ScenarioRequest):
    try:
        s = parse_scenario(request.scenario)
        return {"valid": True, "digest": canonical_hash(s), "summary": s.summary()}
    except HTTPException:
        raise
    except HioError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))


@app.post("/solve")
def api_solve(request: SolveRequest):
    try:
        if request.method not in METHODS:
            raise UnknownMethodError(f"unknown method: {request.method} (expected one of {', '.join(METHODS)})")
        s = parse_scenario(request.scenario)
        run, result = solve_recorded(run_store, s, request.method, seed=request.seed, threads=settings.threads)
        return {"reused": result is None, "run": _serialize_run(run)}
    except HTTPException:
        raise
    except HioError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))


@app.post("/plans/validate")
async def api_validate_plan(request: PlanValidateRequest):
    try:
        s = parse_scenario(request.scenario)
        try:
            plan = Plan.model_validate(request.plan)
        except ValueError as e:
            raise HTTPException(status_code=422, detail=f"Invalid plan payload: {e}")
        report = validate_plan(s, plan)
        breakdown = eval_objective(s, plan)
        return {
            "feasible": report.feasible(),
            "max_violation": report.max_violation,
            "objective": breakdown.total,
            "objective_kind": breakdown.kind,
            "violations": [
                {"constraint": c.name, "node": c.node, "slack": c.slack, "budget": c.budget}
                for c in report.violations()
            ],
        }
    except HTTPException:
        raise
    except HioError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))


@app.get("/runs")
async def api_list_runs(state: Optional[str] = None, method: Optional[str] = None, limit: int = 50):
    try:
        state_filter: Optional[RunState] = None
        if state:
            try:
                state_filter = RunState(state)
            except ValueError:
                valid = ", ".join(s.value for s in RunState)
                raise HTTPException(status_code=422, detail=f"Invalid state '{state}'. Valid values: {valid}")

        runs = run_store.list_runs(state=state_filter, method=method)
        if limit > 0:
            runs = runs[:limit]
        return {"count": len(runs), "runs": [_serialize_run(run, include_plan=False) for run in runs]}
    except HTTPException:
        raise
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))


@app.get("/runs/{run_id}")
async def api_get_run(run_id: str):
    try:
        return _serialize_run(run_store.get_run(run_id))
    except HTTPException:
        raise
    except FileNotFoundError as e:
        raise HTTPException(status_code=404, detail=str(e))
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))


@app.get("/metrics/summary")
async def api_get_metrics_summary():
    try:
        rows = [json_safe(run.result) for run in run_store.list_runs(state=RunState.SUCCEEDED) if run.result]
        return build_results_summary(rows)
    except HTTPException:
        raise
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(app, host="0.0.0.0", port=8000)
