from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.harness.run_store import JsonRunStore, RunState, SolveRun
from src.hio_planner.baselines import (
    ORACLE_LIMIT,
    BaselineResult,
    full_local,
    greedy_ao,
    minlp_oracle,
    opt_ao,
    rand_ao,
)
from src.hio_planner.errors import UnknownMethodError
from src.hio_planner.j3o import AoConfig, baj3o, j3o
from src.hio_planner.model import Scenario, canonical_hash, check_constraints
from src.hio_planner.tools.generator import GeneratorConfig, generate_scenario
from src.hio_planner.tools.presets import motivating_preset

logger = logging.getLogger(__name__)

METHODS = ("j3o", "baj3o", "oracle", "greedy_ao", "opt_ao", "rand_ao", "full_local")
CSV_COLUMNS = (
    "scenario_digest",
    "method",
    "seed",
    "sweep_param",
    "sweep_value",
    "objective",
    "objective_kind",
    "runtime_ms",
    "max_violation",
    "outer_iters",
    "status",
)

SweepParam = Literal["edge_uplink_scale", "compute_scale", "batching_interval", "p_a", "nu_a"]


def run_method(
    s: Scenario,
    method: str,
    *,
    seed: int = 0,
    cfg: Optional[AoConfig] = None,
    oracle_limit: int = ORACLE_LIMIT,
    threads: int = 1,
) -> BaselineResult:
    if method == "j3o":
        outcome = j3o(s, cfg)
        return BaselineResult.from_outcome("j3o", outcome, _trace_ms(outcome.trace))
    if method == "baj3o":
        outcome = baj3o(s, cfg)
        return BaselineResult.from_outcome("baj3o", outcome, _trace_ms(outcome.trace))
    if method == "oracle":
        return minlp_oracle(s, oracle_limit, threads=threads)
    if method == "greedy_ao":
        return greedy_ao(s, cfg)
    if method == "opt_ao":
        return opt_ao(s, cfg)
    if method == "rand_ao":
        return rand_ao(s, cfg, seed=seed)
    if method == "full_local":
        return full_local(s)
    raise UnknownMethodError(f"unknown method: {method} (expected one of {', '.join(METHODS)})")


def _trace_ms(trace: Any) -> float:
    return float(sum(it.runtime_ms for it in trace.iterations))


@dataclass(frozen=True)
class ExperimentResult:
    scenario_digest: str
    method: str
    seed: int
    sweep_param: str
    sweep_value: float
    objective: float
    objective_kind: str
    runtime_ms: float
    max_violation: float
    outer_iters: int
    status: str = "ok"

    def to_row(self) -> Dict[str, Any]:
        return asdict(self)


def result_row(
    s: Scenario,
    result: BaselineResult,
    *,
    seed: int = 0,
    sweep_param: str = "",
    sweep_value: float = float("nan"),
) -> ExperimentResult:
    report = check_constraints(s, result.onloading, result.offloading)
    objective = result.objective if s.objective_kind == "acc" else 1.0 - result.objective
    return ExperimentResult(
        scenario_digest=canonical_hash(s),
        method=result.method,
        seed=seed,
        sweep_param=sweep_param,
        sweep_value=sweep_value,
        objective=objective,
        objective_kind=s.objective_kind,
        runtime_ms=result.runtime_ms,
        max_violation=report.max_violation,
        outer_iters=result.outer_iterations,
    )


class SweepSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    param: SweepParam
    values: List[float] = Field(min_length=1)
    seeds: int = Field(default=1, ge=1)
    seed_offset: int = Field(default=0, ge=0)
    methods: List[str] = Field(min_length=1)
    # Base instance for generator-driven sweeps.
    generator: GeneratorConfig = Field(default_factory=GeneratorConfig)
    # Motivating-preset sweeps (p_a, nu_a).
    p_a: float = Field(default=0.6, gt=0, lt=1)
    hot_client: bool = False
    oracle_limit: int = Field(default=ORACLE_LIMIT, ge=1)

    @field_validator("methods")
    @classmethod
    def _known_methods(cls, value: List[str]) -> List[str]:
        unknown = [m for m in value if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown method: {unknown[0]} (expected one of {', '.join(METHODS)})")
        return value

    def points(self) -> List[Tuple[float, int, str]]:
        return [
            (value, self.seed_offset + k, method)
            for value in self.values
            for k in range(self.seeds)
            for method in self.methods
        ]


def load_sweep_spec(path: str | Path) -> SweepSpec:
    with open(path, "r", encoding="utf-8") as f:
        return SweepSpec.model_validate(json.load(f))


def scenario_for(spec: SweepSpec, value: float, seed: int) -> Scenario:
    if spec.param == "p_a":
        return motivating_preset(value, hot_client=spec.hot_client)
    if spec.param == "nu_a":
        return motivating_preset(spec.p_a, hot_client=spec.hot_client, nu_a=value)
    base = spec.generator.model_dump()
    base["seed"] = seed
    if spec.param == "batching_interval":
        base.update(mode="batching", batching_interval=value)
    else:
        base[spec.param] = value
    return generate_scenario(GeneratorConfig(**base))


def _run_point(spec: SweepSpec, point: Tuple[float, int, str]) -> ExperimentResult:
    value, seed, method = point
    digest = ""
    try:
        s = scenario_for(spec, value, seed)
        digest = canonical_hash(s)
        result = run_method(s, method, seed=seed, oracle_limit=spec.oracle_limit)
        return result_row(s, result, seed=seed, sweep_param=spec.param, sweep_value=value)
    except Exception as exc:
        logger.exception("sweep point failed: %s=%s seed=%d method=%s", spec.param, value, seed, method)
        return ExperimentResult(
            scenario_digest=digest,
            method=method,
            seed=seed,
            sweep_param=spec.param,
            sweep_value=value,
            objective=float("nan"),
            objective_kind="",
            runtime_ms=float("nan"),
            max_violation=float("nan"),
            outer_iters=0,
            status=f"error:{type(exc).__name__}",
        )


def iter_sweep(spec: SweepSpec, *, threads: int = 1) -> Iterator[ExperimentResult]:
    """Results in grid order (value, seed, method) regardless of the worker count."""
    points = spec.points()
    if threads <= 1:
        for point in points:
            yield _run_point(spec, point)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        yield from pool.map(lambda point: _run_point(spec, point), points)


def _format(value: Any) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


class CsvResultWriter:
    """Single writer that appends rows as they arrive."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._file = open(self.path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._file)
        self._writer.writerow(CSV_COLUMNS)

    def write(self, result: ExperimentResult) -> None:
        row = result.to_row()
        self._writer.writerow([_format(row[col]) for col in CSV_COLUMNS])
        self._file.flush()

    def close(self) -> None:
        self._file.close()

    def __enter__(self) -> "CsvResultWriter":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()


def run_sweep(spec: SweepSpec, out: Optional[str | Path] = None, *, threads: int = 1) -> List[ExperimentResult]:
    results: List[ExperimentResult] = []
    writer = CsvResultWriter(out) if out is not None else None
    try:
        for result in iter_sweep(spec, threads=threads):
            results.append(result)
            if writer is not None:
                writer.write(result)
            logger.info(
                "[%s] %s=%s seed=%d method=%s objective=%s",
                "ok" if result.status == "ok" else "error",
                result.sweep_param,
                result.sweep_value,
                result.seed,
                result.method,
                _format(result.objective),
            )
    finally:
        if writer is not None:
            writer.close()
    return results


def write_results(results: Iterable[ExperimentResult], path: str | Path, *, fmt: str = "csv") -> Path:
    path = Path(path)
    if fmt == "json":
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump([r.to_row() for r in results], f, indent=2)
        return path
    with CsvResultWriter(path) as writer:
        for result in results:
            writer.write(result)
    return path


def read_results_csv(path: str | Path) -> List[Dict[str, Any]]:
    rows: List[Dict[str, Any]] = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        for row in csv.DictReader(f):
            rows.append(
                {
                    **row,
                    "seed": int(row["seed"]),
                    "sweep_value": float(row["sweep_value"]),
                    "objective": float(row["objective"]),
                    "runtime_ms": float(row["runtime_ms"]),
                    "max_violation": float(row["max_violation"]),
                    "outer_iters": int(row["outer_iters"]),
                }
            )
    return rows


def json_safe(row: Dict[str, Any]) -> Dict[str, Any]:
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in row.items()}


def solve_recorded(
    store: JsonRunStore,
    s: Scenario,
    method: str,
    *,
    seed: int = 0,
    cfg: Optional[AoConfig] = None,
    oracle_limit: int = ORACLE_LIMIT,
    threads: int = 1,
) -> Tuple[SolveRun, Optional[BaselineResult]]:
    """Solve once per (scenario, method, seed); a succeeded run is returned without solving."""
    digest = canonical_hash(s)
    run, created = store.create_run(scenario_digest=digest, method=method, seed=seed)
    if not created and run.state == RunState.SUCCEEDED:
        logger.info("reusing run %s for method=%s seed=%d", run.run_id, method, seed)
        return run, None
    if not created:
        store.mark_failed(run.run_id, error="superseded by a new solve")
        run, _ = store.create_run(scenario_digest=digest, method=method, seed=seed)

    store.mark_running(run.run_id)
    try:
        result = run_method(s, method, seed=seed, cfg=cfg, oracle_limit=oracle_limit, threads=threads)
        row = result_row(s, result, seed=seed)
    except Exception as exc:
        store.mark_failed(run.run_id, error=f"{type(exc).__name__}: {exc}")
        raise
    run = store.mark_succeeded(
        run.run_id,
        result=json_safe(row.to_row()),
        plan=result.plan.model_dump(mode="json"),
        trace=result.trace.trace_records() if result.trace is not None else [],
    )
    return run, result
