"""Command-line entry point: single runs, batch evaluation, horizon sweeps,
and scenario generation.

Exit codes: 0 success, 1 terminal collision or solver failure, 2 config or
input error. All outputs are plain CSV/JSON; column schemas are documented
in the README so external plotters can reproduce boundary and trajectory
figures without the package.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .corridor import CorridorConfig, write_corridor_csv
from .dynamics import VehicleLimits
from .errors import CorridorMpcError
from .mpc import MpcConfig, run
from .reasoner import LlmConfig
from .sim import (
    MetricsReport,
    Scenario,
    evaluate,
    generate_scenarios,
    run_suite,
    write_trace_csv,
)

logger = logging.getLogger("corridor_mpc")


def _parse_weights(text: str) -> tuple[float, float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("expected four comma-separated weights w1,w2,w3,w4")
    return tuple(parts)  # type: ignore[return-value]


def _parse_horizons(text: str) -> list[int]:
    return [int(p) for p in text.split(",")]


def build_config(args: argparse.Namespace) -> MpcConfig:
    """Merge built-ins, an optional JSON config file, and CLI flags."""
    base: dict = {}
    if getattr(args, "config", None):
        base = json.loads(Path(args.config).read_text())
    horizon = args.horizon if args.horizon is not None else base.get("horizon", 40)
    dt = args.dt if args.dt is not None else base.get("dt", 0.25)
    weights = (
        args.weights
        if args.weights is not None
        else tuple(base.get("weights", (0.4, 1.0, 0.6, 1.2)))
    )
    limits = VehicleLimits(T=dt, **base.get("limits", {}))
    margins = CorridorConfig(**base.get("margins", {}))
    reasoner = args.reasoner if args.reasoner is not None else base.get("reasoner", "rules")
    llm = None
    if reasoner == "llm":
        llm_cfg = dict(base.get("llm", {}))
        if getattr(args, "llm_endpoint", None):
            llm_cfg["endpoint"] = args.llm_endpoint
        if getattr(args, "llm_model", None):
            llm_cfg["model"] = args.llm_model
        if "endpoint" not in llm_cfg or "model" not in llm_cfg:
            raise CorridorMpcError(
                "reasoner mode 'llm' needs --llm-endpoint and --llm-model "
                "(or an 'llm' section in the config file)"
            )
        llm = LlmConfig(**llm_cfg)
    return MpcConfig(
        horizon=horizon,
        dt=dt,
        weights=weights,
        limits=limits,
        margins=margins,
        reasoner=reasoner,
        llm=llm,
    )


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    try:
        scenario = Scenario.load(args.scenario)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        logger.error("cannot load scenario %s: %s", args.scenario, exc)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace = run(scenario, cfg)
    write_trace_csv(trace, out / "trace.csv")
    # corridor snapshots of the first planned cycle at a few horizon steps
    first = next((c for c in trace.corridors if c is not None), None)
    if first is not None:
        span = (scenario.ego.x - 20.0, scenario.ego.x + 180.0)
        for k in sorted({0, cfg.horizon // 4, cfg.horizon // 2, 3 * cfg.horizon // 4, cfg.horizon}):
            write_corridor_csv(first.step(k), span, 400, out / f"corridor_k{k}.csv")
    summary = {
        "scenario": scenario.name or str(args.scenario),
        "status": trace.status,
        "cycles": len(trace.records),
        "mean_vx": trace.mean_vx(),
        "solve_ms_mean": (
            sum(r.solve_ms for r in trace.records) / max(1, len(trace.records))
        ),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    logger.info("run finished: %s (%d cycles)", trace.status, len(trace.records))
    return 1 if trace.status in ("collision", "solver-failure") else 0


def _cmd_batch(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    scenarios = generate_scenarios(
        lanes=args.lanes,
        n_obstacles=args.obstacles,
        n_scenarios=args.n,
        seed=args.seed,
        duration=args.duration,
    )
    report = evaluate(scenarios, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    logger.info(
        "batch: success rate %.3f, %d collisions, solve %.2f ms mean",
        report.success_rate,
        report.n_collisions,
        report.solve_ms_mean,
    )
    return 1 if report.n_collisions or report.n_solver_failure else 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    scenarios = generate_scenarios(
        lanes=args.lanes,
        n_obstacles=args.obstacles,
        n_scenarios=args.n,
        seed=args.seed,
        duration=args.duration,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports: list[MetricsReport] = []
    for horizon in args.horizons:
        sweep_cfg = replace(cfg, horizon=horizon)
        reports.append(evaluate(scenarios, sweep_cfg))
        logger.info("horizon %d: %.2f ms mean per cycle", horizon, reports[-1].solve_ms_mean)
    with open(out / "sweep.csv", "w") as fh:
        fh.write("horizon,horizon_s,solve_ms_mean,solve_ms_p95,solve_ms_max,success_rate\n")
        for r in reports:
            fh.write(
                f"{r.horizon},{r.horizon * r.dt:.2f},{r.solve_ms_mean:.3f},"
                f"{r.solve_ms_p95:.3f},{r.solve_ms_max:.3f},{r.success_rate:.4f}\n"
            )
    (out / "sweep.json").write_text(
        json.dumps([r.to_dict() for r in reports], indent=2) + "\n"
    )
    bad = any(r.n_collisions or r.n_solver_failure for r in reports)
    return 1 if bad else 0


def _cmd_gen(args: argparse.Namespace) -> int:
    scenarios = generate_scenarios(
        lanes=args.lanes,
        n_obstacles=args.obstacles,
        n_scenarios=args.n,
        seed=args.seed,
        duration=args.duration,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, sc in enumerate(scenarios):
        sc.save(out / f"scenario_{i:03d}.json")
    logger.info("wrote %d scenario files to %s", len(scenarios), out)
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file (flags override it)")
    parser.add_argument("--horizon", type=int, default=None, help="planning horizon K [steps]")
    parser.add_argument("--dt", type=float, default=None, help="step duration T [s]")
    parser.add_argument(
        "--weights", type=_parse_weights, default=None, help="w1,w2,w3,w4 cost weights"
    )
    parser.add_argument(
        "--reasoner", choices=("rules", "llm"), default=None, help="lambda decision mode"
    )
    parser.add_argument("--llm-endpoint", default=None, help="chat-completion endpoint URL")
    parser.add_argument("--llm-model", default=None, help="model identifier")
    parser.add_argument("-v", "--verbose", action="store_true")


def _add_suite_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lanes", type=int, default=2, choices=(2, 3))
    parser.add_argument("--obstacles", type=int, default=5)
    parser.add_argument("--n", type=int, default=20, help="number of scenarios")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--duration", type=float, default=15.0, help="run length [s]")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corridor-mpc",
        description="Sigmoid-corridor trajectory planning and simulation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario, write trace and corridor CSVs")
    p_run.add_argument("--scenario", required=True, help="scenario JSON file")
    p_run.add_argument("--out", required=True, help="output directory")
    _add_common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_batch = sub.add_parser("batch", help="run a generated suite and write metrics")
    p_batch.add_argument("--out", required=True)
    _add_suite_args(p_batch)
    _add_common(p_batch)
    p_batch.set_defaults(func=_cmd_batch)

    p_sweep = sub.add_parser("sweep", help="per-cycle timing across planning horizons")
    p_sweep.add_argument(
        "--horizons", type=_parse_horizons, default=[24, 32, 40, 48], help="e.g. 24,32,40,48"
    )
    p_sweep.add_argument("--out", required=True)
    _add_suite_args(p_sweep)
    _add_common(p_sweep)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_gen = sub.add_parser("gen", help="write generated scenario JSON files")
    p_gen.add_argument("--out", required=True)
    _add_suite_args(p_gen)
    p_gen.set_defaults(func=_cmd_gen)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except CorridorMpcError as exc:
        logger.error("%s", exc)
        return 2
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        logger.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
