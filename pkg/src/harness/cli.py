from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from pydantic import ValidationError

from src.harness.experiments import (
    CSV_COLUMNS,
    METHODS,
    json_safe,
    load_sweep_spec,
    read_results_csv,
    result_row,
    run_sweep,
    solve_recorded,
)
from src.harness.metrics import build_results_summary
from src.harness.run_store import JsonRunStore
from src.hio_planner.baselines import ORACLE_LIMIT, minlp_oracle
from src.hio_planner.config import Settings, configure_logging, load_settings
from src.hio_planner.errors import ConfigError, HioError
from src.hio_planner.model import Plan, Scenario, dump_plan, dump_scenario, load_plan, load_scenario, validate_plan
from src.hio_planner.objective import eval_objective
from src.hio_planner.tools.generator import PRESET_NAMES, GeneratorConfig, generate_scenario
from src.hio_planner.tools.presets import motivating_preset


def _ok(message: str) -> None:
    print(f"[ok] {message}", file=sys.stderr)


def _error(message: str) -> None:
    print(f"[error] {message}", file=sys.stderr)


def _format_row(row: Dict[str, Any], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(row, indent=2)
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(CSV_COLUMNS), extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    writer.writerow({k: ("nan" if v is None else v) for k, v in row.items()})
    return buffer.getvalue().rstrip("\n")


def _load(args: argparse.Namespace) -> Scenario:
    s = load_scenario(args.scenario)
    if getattr(args, "mode", None):
        s = s.with_mode(args.mode)
    return s


def _cmd_solve(args: argparse.Namespace, settings: Settings) -> int:
    s = _load(args)
    store = JsonRunStore(settings.runtime_dir / "runs")
    run, result = solve_recorded(store, s, args.method, seed=args.seed, threads=settings.threads)
    row = run.result or {}
    if result is None:
        _ok(f"reused run_id={run.run_id}")
    if args.out and run.plan is not None:
        dump_plan(Plan.model_validate(run.plan), args.out)
    if args.trace:
        if result is not None and result.trace is not None:
            result.trace.write_jsonl(args.trace)
        else:
            Path(args.trace).parent.mkdir(parents=True, exist_ok=True)
            with open(args.trace, "w", encoding="utf-8") as f:
                for record in run.trace:
                    f.write(json.dumps(record, sort_keys=True) + "\n")
    print(_format_row(row, args.format))
    _ok(
        f"run_id={run.run_id} method={args.method} objective={row.get('objective')} "
        f"runtime_ms={row.get('runtime_ms')} max_violation={row.get('max_violation')}"
    )
    return 0


def _cmd_oracle(args: argparse.Namespace, settings: Settings) -> int:
    s = _load(args)
    result = minlp_oracle(s, args.limit, threads=settings.threads)
    if args.out:
        dump_plan(result.plan, args.out)
    row = json_safe(result_row(s, result, seed=args.seed).to_row())
    print(_format_row(row, args.format))
    _ok(f"configurations={result.configurations} pruned={result.pruned} objective={result.objective:.6f}")
    return 0


def _cmd_sweep(args: argparse.Namespace, settings: Settings) -> int:
    try:
        spec = load_sweep_spec(args.spec)
    except ValidationError as exc:
        raise ConfigError(f"invalid sweep spec {args.spec}: {exc.errors()[0].get('msg', exc)}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read sweep spec {args.spec}: {exc}") from exc
    threads = args.threads or settings.threads
    results = run_sweep(spec, args.out, threads=threads)
    errors = sum(1 for r in results if r.status != "ok")
    _ok(f"rows={len(results)} errors={errors} out={args.out}")
    if args.summary:
        summary = build_results_summary(read_results_csv(args.out))
        print(json.dumps(summary, indent=2))
    return 0


def _cmd_validate(args: argparse.Namespace, settings: Settings) -> int:
    s = _load(args)
    plan = load_plan(args.plan)
    report = validate_plan(s, plan)
    breakdown = eval_objective(s, plan)
    for check in report.violations():
        _error(f"{check.name} {check.node} slack={check.slack:.6g} budget={check.budget:.6g}")
    if not report.feasible():
        _error(f"plan infeasible: max_violation={report.max_violation:.6g}")
        return 1
    _ok(f"plan feasible objective={breakdown.total:.6f} max_violation={report.max_violation:.3g}")
    return 0


def _generator_config(args: argparse.Namespace) -> GeneratorConfig:
    fields: Dict[str, Any] = {"preset": args.preset, "seed": args.seed}
    for name in ("total_rate", "edge_uplink_scale", "cloud_uplink_scale", "compute_scale", "batching_interval"):
        value = getattr(args, name)
        if value is not None:
            fields[name] = value
    if args.mode:
        fields["mode"] = args.mode
    elif args.batching_interval is not None:
        fields["mode"] = "batching"
    try:
        return GeneratorConfig(**fields)
    except ValidationError as exc:
        raise ConfigError(str(exc.errors()[0].get("msg", exc))) from exc


def _cmd_gen(args: argparse.Namespace, settings: Settings) -> int:
    if args.motivating is not None:
        extra: Dict[str, Any] = {}
        if args.batching_interval is not None:
            extra["batching_interval"] = args.batching_interval
        s = motivating_preset(args.motivating, hot_client=args.hot_client, nu_a=args.nu_a, mode=args.mode, **extra)
    else:
        s = generate_scenario(_generator_config(args))
    if args.out:
        dump_scenario(s, args.out)
        _ok(f"scenario={s.name} out={args.out}")
    else:
        print(json.dumps(s.model_dump(mode="json"), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hio", description="Onloading/offloading planner for client-edge-cloud inference.")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--scenario", required=True, help="Scenario JSON file.")
        p.add_argument("--mode", choices=["plain", "batching"], default=None, help="Override the scenario mode.")
        p.add_argument("--seed", type=int, default=0)

    solve = sub.add_parser("solve", help="Solve one scenario with one method.")
    scenario_flags(solve)
    solve.add_argument("--method", choices=METHODS, default="j3o")
    solve.add_argument("--out", default=None, help="Plan JSON output path.")
    solve.add_argument("--format", choices=["csv", "json"], default="csv")
    solve.add_argument("--trace", default=None, help="Write the outer-loop trace as JSON lines.")
    solve.set_defaults(handler=_cmd_solve)

    oracle = sub.add_parser("oracle", help="Exhaustive onloading enumeration with an LP per configuration.")
    scenario_flags(oracle)
    oracle.add_argument("--limit", type=int, default=ORACLE_LIMIT)
    oracle.add_argument("--out", default=None)
    oracle.add_argument("--format", choices=["csv", "json"], default="csv")
    oracle.set_defaults(handler=_cmd_oracle)

    sweep = sub.add_parser("sweep", help="Run a sweep spec and write one CSV row per (value, seed, method).")
    sweep.add_argument("spec", help="Sweep spec JSON file.")
    sweep.add_argument("--out", default="runtime/results.csv")
    sweep.add_argument("--threads", type=int, default=None)
    sweep.add_argument("--summary", action="store_true", help="Print the per-method summary after the sweep.")
    sweep.set_defaults(handler=_cmd_sweep)

    validate = sub.add_parser("validate", help="Check a plan against a scenario.")
    scenario_flags(validate)
    validate.add_argument("--plan", required=True)
    validate.set_defaults(handler=_cmd_validate)

    gen = sub.add_parser("gen", help="Emit a generated scenario.")
    gen.add_argument("--preset", choices=PRESET_NAMES, default="taskonomy")
    gen.add_argument("--total-rate", dest="total_rate", type=float, default=None)
    gen.add_argument("--edge-uplink-scale", dest="edge_uplink_scale", type=float, default=None)
    gen.add_argument("--cloud-uplink-scale", dest="cloud_uplink_scale", type=float, default=None)
    gen.add_argument("--compute-scale", dest="compute_scale", type=float, default=None)
    gen.add_argument("--batching-interval", dest="batching_interval", type=float, default=None)
    gen.add_argument("--mode", choices=["plain", "batching"], default=None)
    gen.add_argument("--motivating", type=float, default=None, metavar="P_A", help="Two-task toy system with task-A share P_A.")
    gen.add_argument("--hot-client", dest="hot_client", action="store_true")
    gen.add_argument("--nu-a", dest="nu_a", type=float, default=None)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", default=None)
    gen.set_defaults(handler=_cmd_gen)

    return parser


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        settings = load_settings()
    except ConfigError as exc:
        _error(str(exc))
        return 1
    configure_logging(settings)

    try:
        return int(args.handler(args, settings))
    except HioError as exc:
        _error(str(exc))
        return 1
    except FileNotFoundError as exc:
        _error(str(exc))
        return 1


def main() -> int:
    return cli_main(sys.argv[1:])


if __name__ == "__main__":
    raise SystemExit(main())
