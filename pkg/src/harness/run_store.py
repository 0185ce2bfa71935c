from __future__ import annotations

import hashlib
import json
import uuid
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from threading import Lock
from typing import Any, Dict, List, Optional, Tuple


class RunState(str, Enum):
    QUEUED = "queued"
    RUNNING = "running"
    SUCCEEDED = "succeeded"
    FAILED = "failed"


class RunEvent(str, Enum):
    START = "start"
    SUCCEED = "succeed"
    FAIL = "fail"


RUN_TRANSITIONS: Dict[Tuple[RunState, RunEvent], RunState] = {
    (RunState.QUEUED, RunEvent.START): RunState.RUNNING,
    (RunState.QUEUED, RunEvent.FAIL): RunState.FAILED,
    (RunState.RUNNING, RunEvent.SUCCEED): RunState.SUCCEEDED,
    (RunState.RUNNING, RunEvent.FAIL): RunState.FAILED,
}


def transition_state(current: RunState, event: RunEvent) -> RunState:
    key = (current, event)
    if key not in RUN_TRANSITIONS:
        raise ValueError(f"Invalid transition: state={current.value}, event={event.value}")
    return RUN_TRANSITIONS[key]


def _utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def build_run_key(*, scenario_digest: str, method: str, seed: int) -> str:
    digest = hashlib.sha256(f"{scenario_digest}|{method}|{seed}".encode("utf-8")).hexdigest()
    return f"run_{digest[:24]}"


@dataclass
class SolveRun:
    run_id: str
    run_key: str
    scenario_digest: str
    method: str
    seed: int
    state: RunState
    created_at_utc: str
    updated_at_utc: str
    result: Optional[Dict[str, Any]] = None
    plan: Optional[Dict[str, Any]] = None
    trace: List[Dict[str, Any]] = field(default_factory=list)
    error: Optional[str] = None


def _run_to_row(run: SolveRun) -> Dict[str, Any]:
    row = asdict(run)
    row["state"] = run.state.value
    return row


def _run_from_row(row: Dict[str, Any]) -> SolveRun:
    return SolveRun(
        run_id=str(row["run_id"]),
        run_key=str(row["run_key"]),
        scenario_digest=str(row["scenario_digest"]),
        method=str(row["method"]),
        seed=int(row.get("seed", 0)),
        state=RunState(str(row["state"])),
        created_at_utc=str(row.get("created_at_utc", "")),
        updated_at_utc=str(row.get("updated_at_utc", "")),
        result=row.get("result"),
        plan=row.get("plan"),
        trace=list(row.get("trace") or []),
        error=row.get("error"),
    )


class JsonRunStore:
    """Persist solve runs as one JSON file each under runtime/runs."""

    def __init__(self, root_dir: str | Path = "runtime/runs") -> None:
        self.root_dir = Path(root_dir)
        self.root_dir.mkdir(parents=True, exist_ok=True)
        self._lock = Lock()

    def generate_run_id(self) -> str:
        return f"run_{uuid.uuid4().hex}"

    def _path_for(self, run_id: str) -> Path:
        return self.root_dir / f"{run_id}.json"

    def create_run(self, *, scenario_digest: str, method: str, seed: int = 0) -> Tuple[SolveRun, bool]:
        """Return (run, created); a finished run with the same key is returned as is."""
        key = build_run_key(scenario_digest=scenario_digest, method=method, seed=seed)
        with self._lock:
            existing = self._find_by_key_locked(key)
            if existing is not None and existing.state != RunState.FAILED:
                return existing, False
            now = _utc_now_iso()
            run = SolveRun(
                run_id=self.generate_run_id(),
                run_key=key,
                scenario_digest=scenario_digest,
                method=method,
                seed=seed,
                state=RunState.QUEUED,
                created_at_utc=now,
                updated_at_utc=now,
            )
            self._write_locked(run)
            return run, True

    def mark_running(self, run_id: str) -> SolveRun:
        with self._lock:
            run = self._read_locked(run_id)
            run.state = transition_state(run.state, RunEvent.START)
            run.updated_at_utc = _utc_now_iso()
            self._write_locked(run)
            return run

    def mark_succeeded(
        self,
        run_id: str,
        *,
        result: Dict[str, Any],
        plan: Dict[str, Any],
        trace: Optional[List[Dict[str, Any]]] = None,
    ) -> SolveRun:
        with self._lock:
            run = self._read_locked(run_id)
            run.state = transition_state(run.state, RunEvent.SUCCEED)
            run.result = result
            run.plan = plan
            run.trace = list(trace or [])
            run.updated_at_utc = _utc_now_iso()
            self._write_locked(run)
            return run

    def mark_failed(self, run_id: str, *, error: str) -> SolveRun:
        with self._lock:
            run = self._read_locked(run_id)
            run.state = transition_state(run.state, RunEvent.FAIL)
            run.error = error
            run.updated_at_utc = _utc_now_iso()
            self._write_locked(run)
            return run

    def get_run(self, run_id: str) -> SolveRun:
        with self._lock:
            return self._read_locked(run_id)

    def list_runs(self, *, state: Optional[RunState] = None, method: Optional[str] = None) -> List[SolveRun]:
        with self._lock:
            runs = self._load_all_locked()
            if state is not None:
                runs = [r for r in runs if r.state == state]
            if method:
                runs = [r for r in runs if r.method == method]
            runs.sort(key=lambda r: r.created_at_utc)
            return runs

    def _find_by_key_locked(self, run_key: str) -> Optional[SolveRun]:
        matches = [r for r in self._load_all_locked() if r.run_key == run_key]
        if not matches:
            return None
        matches.sort(key=lambda r: r.created_at_utc)
        return matches[-1]

    def _load_all_locked(self) -> List[SolveRun]:
        runs: List[SolveRun] = []
        for path in sorted(self.root_dir.glob("*.json")):
            try:
                with open(path, "r", encoding="utf-8") as f:
                    runs.append(_run_from_row(json.load(f)))
            except Exception:
                continue
        return runs

    def _read_locked(self, run_id: str) -> SolveRun:
        path = self._path_for(run_id)
        if not path.exists():
            raise FileNotFoundError(f"Unknown run_id: {run_id}")
        with open(path, "r", encoding="utf-8") as f:
            return _run_from_row(json.load(f))

    def _write_locked(self, run: SolveRun) -> None:
        with open(self._path_for(run.run_id), "w", encoding="utf-8") as f:
            json.dump(_run_to_row(run), f, indent=2)
