"""Command-line interface: classify, simulate, design, verify, sweep.

Exit codes: 0 success, 1 a verification check failed, 2 parse error,
3 design rejected, 4 integration failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, TextIO

import numpy as np

from .analysis import DEFAULT_P_GRID, DEFAULT_Q_GRID, RunMetrics, Scenario, metrics, sweep
from .config import ConfigError, ScenarioConfig, load_config
from .control import (
    ControllerSpec,
    DesignError,
    DesignResult,
    GuardVerdict,
    Proportional,
    design,
    guard_impossible,
    rate_params,
)
from .dynamics import SystemState, Terminal, Trajectory, integrate_controlled, integrate_uncontrolled
from .game import GameTag, PayoffMatrix, UnsupportedGameError, classify, uncontrolled_limit
from .verify import (
    UnsupportedConfigurationError,
    audit_lyapunov,
    equilibria_controlled,
    negative_test,
    setpoint_frame,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_PARSE = 2
EXIT_REJECTED = 3
EXIT_INTEGRATION = 4

SAMPLE_SHARES = (0.1, 0.3, 0.7, 0.9)
SWEEP_COLUMNS = ("p", "q", "J_g", "g_max", "g_final", "x_final", "converged", "settle_time")


class Rejected(Exception):
    """The requested controller is ruled out; maps to exit code 3."""


def fmt(v: float) -> str:
    """Decimal notation with 12 significant digits."""
    return np.format_float_positional(v, precision=12, unique=True, fractional=False, trim="-")


def write_trajectory_csv(traj: Trajectory, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("t", "x", "g"))
    for t, x, g in zip(traj.t, traj.x, traj.g):
        w.writerow((fmt(t), fmt(x), fmt(g)))


def metrics_json(m: RunMetrics) -> str:
    return json.dumps(m.to_dict(), indent=2) + "\n"


def _emit(text: str, path: Optional[Path]) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# controller resolution


def resolve_controller(cfg: ScenarioConfig, force: bool) -> tuple[Optional[ControllerSpec], Optional[DesignResult], GuardVerdict]:
    choice = cfg.controller
    cls = classify(cfg.payoff)
    if choice.mode == "none":
        return None, None, GuardVerdict(False)
    if choice.mode == "auto":
        if cfg.problem is None:
            raise ConfigError(f"{cfg.source}: [controller] mode = auto needs a [problem] section")
        try:
            result = design(cfg.payoff, cfg.problem, conformity=choice.conformity, p=choice.p, q=choice.q)
        except DesignError as e:
            raise Rejected(str(e)) from None
        return result.spec, result, GuardVerdict(False)
    spec = choice.spec
    verdict = GuardVerdict(False)
    if cfg.problem is not None:
        verdict = guard_impossible(cfg.problem, spec, cls)
        if verdict.rejected and not force:
            raise Rejected(f"impossible by {verdict.citation}: {verdict.reason} (use --force to run it anyway)")
    return spec, None, verdict


def metrics_target(cfg: ScenarioConfig, spec: Optional[ControllerSpec]) -> float:
    if cfg.problem is not None:
        return float(cfg.problem.target)
    if spec is not None and hasattr(spec.rate, "xbar"):
        return spec.rate.xbar
    if spec is None:
        try:
            return uncontrolled_limit(cfg.payoff, cfg.x0)
        except UnsupportedGameError as e:
            raise ConfigError(f"{cfg.source}: {e}") from None
    raise ConfigError(f"{cfg.source}: metrics need a target; add a [problem] section")


def run_scenario(cfg: ScenarioConfig, spec: Optional[ControllerSpec], target: float) -> Trajectory:
    icfg = replace(cfg.integrator, convergence=replace(cfg.integrator.convergence, target_x=target))
    if spec is None:
        return integrate_uncontrolled(cfg.payoff, cfg.x0, icfg)
    return integrate_controlled(cfg.payoff, spec, SystemState(cfg.x0, cfg.g0), icfg)


# ---------------------------------------------------------------------------
# subcommands


def class_line(m: PayoffMatrix) -> str:
    cls = classify(m)
    if cls.tag is GameTag.DOMINANT_ACTION1:
        return "dominant-strategy, NE = all action 1"
    if cls.tag is GameTag.DOMINANT_ACTION2:
        return "dominant-strategy, NE = all action 2"
    if cls.tag is GameTag.COORDINATION:
        return f"coordination, x* = {cls.mixed_ne:g}"
    if cls.tag is GameTag.ANTI_COORDINATION:
        return f"anti-coordination, x* = {cls.mixed_ne:g}"
    return "degenerate (a = c or d = b), no strict class"


def cmd_classify(args) -> int:
    m = PayoffMatrix(args.a, args.b, args.c, args.d)
    print(class_line(m))
    if not classify(m).is_degenerate:
        for x0 in SAMPLE_SHARES:
            print(f"  uncontrolled limit from x0 = {x0:g}: {uncontrolled_limit(m, x0):g}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    spec, _, _ = resolve_controller(cfg, args.force)
    target = metrics_target(cfg, spec)
    traj = run_scenario(cfg, spec, target)
    buf = io.StringIO()
    write_trajectory_csv(traj, buf)
    traj_path = args.trajectory or cfg.output.trajectory
    if traj_path is not None:
        _emit(buf.getvalue(), Path(traj_path))
    _emit(metrics_json(metrics(traj, target, cfg.integrator.convergence.eps_x)), args.metrics or cfg.output.metrics)
    if traj.reason is Terminal.STEP_FAILURE:
        print(f"integration failed: {traj.message}", file=sys.stderr)
        return EXIT_INTEGRATION
    return EXIT_OK


def design_dict(result: DesignResult) -> dict:
    out = {"matrix": result.spec.matrix.value, "rate": result.spec.rate.name}
    out.update(rate_params(result.spec.rate))
    if result.predicted_gbar is not None:
        out["gbar"] = result.predicted_gbar
    out["theorem"] = result.theorem.value
    out["conditions"] = result.certificate.to_dict()
    return out


def cmd_design(args) -> int:
    cfg = load_config(args.config)
    if cfg.problem is None:
        raise ConfigError(f"{cfg.source}: design needs a [problem] section")
    c = cfg.controller
    try:
        result = design(cfg.payoff, cfg.problem, conformity=c.conformity, p=c.p, q=c.q)
    except DesignError as e:
        raise Rejected(str(e)) from None
    print(json.dumps(design_dict(result), indent=2))
    return EXIT_OK


def _complex_pair(z: complex) -> list[float]:
    return [z.real, z.imag]


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    spec, _, verdict = resolve_controller(cfg, force=True)
    if spec is None:
        raise ConfigError(f"{cfg.source}: verify needs a controller")
    report: dict = {"controller": {"matrix": spec.matrix.value, "rate": spec.rate.name, **rate_params(spec.rate)}}
    ok = True
    if verdict.rejected:
        res = negative_test(cfg.problem, spec, cfg.payoff, cfg.integrator, SystemState(cfg.x0, cfg.g0))
        report["negative_test"] = {
            "citation": verdict.citation,
            "verdict": res.verdict.value,
            "terminal_reason": res.trajectory.reason.value,
            "distance_to_target": res.distance,
        }
        ok = res.verdict.value == "FailsAsPredicted"
    else:
        try:
            eqs = equilibria_controlled(cfg.payoff, spec)
        except UnsupportedConfigurationError as e:
            report["equilibria"] = None
            report["equilibria_note"] = str(e)
        else:
            report["equilibria"] = [
                {"x": e.point.x, "g": e.point.g, "eigenvalues": [_complex_pair(z) for z in e.eigenvalues], "tag": e.tag.value}
                for e in eqs
            ]
        if isinstance(spec.rate, Proportional):
            try:
                setpoint_frame(cfg.payoff, spec)
            except UnsupportedConfigurationError:
                pass
            else:
                target = spec.rate.xbar
                traj = run_scenario(cfg, spec, target)
                audit = audit_lyapunov(traj, cfg.payoff, target, spec.rate.p)
                report["lyapunov"] = {
                    "max_increase": audit.max_increase,
                    "slack": audit.slack,
                    "K": audit.K,
                    "V_initial": float(audit.values[0]),
                    "V_final": float(audit.values[-1]),
                    "passed": audit.passed,
                }
                ok = audit.passed
    report["passed"] = ok
    print(json.dumps(report, indent=2))
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def _grid(text: Optional[str], default) -> tuple[float, ...]:
    if text is None:
        return tuple(default)
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"grid {text!r} is not a comma-separated list of numbers") from None
    if not vals:
        raise ConfigError("grid must not be empty")
    return vals


def sweep_scenario(cfg: ScenarioConfig, spec: ControllerSpec, target: float) -> Scenario:
    params = rate_params(spec.rate)
    if "p" not in params or "q" not in params:
        raise ConfigError(f"{cfg.source}: rate '{spec.rate.name}' has no (p, q) pair to sweep")
    fixed = {k: v for k, v in params.items() if k not in ("p", "q")}
    icfg = replace(cfg.integrator, convergence=replace(cfg.integrator.convergence, target_x=target))
    return Scenario(
        cfg.payoff,
        spec.matrix,
        spec.rate.name,
        target,
        fixed,
        SystemState(cfg.x0, cfg.g0),
        icfg,
        cfg.integrator.convergence.eps_x,
    )


def sweep_csv(result) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for cell in result.cells:
        m = cell.metrics
        if m is None:
            w.writerow((fmt(cell.p), fmt(cell.q), "", "", "", "", "false", ""))
            continue
        settle = "" if m.settle_time is None else fmt(m.settle_time)
        row = (cell.p, cell.q, m.J_g, m.g_max, m.g_final, m.x_final)
        w.writerow((*map(fmt, row), "true" if m.converged else "false", settle))
    return buf.getvalue()


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    spec, _, _ = resolve_controller(cfg, args.force)
    if spec is None:
        raise ConfigError(f"{cfg.source}: sweep needs a controller")
    target = metrics_target(cfg, spec)
    scenario = sweep_scenario(cfg, spec, target)
    result = sweep(
        scenario,
        _grid(args.p_grid, DEFAULT_P_GRID),
        _grid(args.q_grid, DEFAULT_Q_GRID),
        args.workers or os.cpu_count() or 1,
    )
    _emit(sweep_csv(result), args.output or cfg.output.sweep)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eqselect",
        description="Adaptive-gain control of replicator dynamics in 2x2 games.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="classify a game and print its uncontrolled limits")
    for name in "abcd":
        p.add_argument(name, type=float)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("simulate", help="run a scenario file; write trajectory CSV and metrics JSON")
    p.add_argument("config")
    p.add_argument("--force", action="store_true", help="run controllers the impossibility guard rejects")
    p.add_argument("--trajectory", type=Path, help="trajectory CSV path ('-' for stdout)")
    p.add_argument("--metrics", type=Path, help="metrics JSON path (default stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("design", help="design a controller for the scenario's problem")
    p.add_argument("config")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("verify", help="equilibria, Lyapunov audit, or negative test for a scenario")
    p.add_argument("config")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="sweep the rate's (p, q) over a grid")
    p.add_argument("config")
    p.add_argument("--p-grid", help="comma-separated p values")
    p.add_argument("--q-grid", help="comma-separated q values")
    p.add_argument("--workers", type=int, help="worker processes (default: all cores)")
    p.add_argument("--force", action="store_true")
    p.add_argument("--output", type=Path, help="CSV path (default stdout)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except Rejected as e:
        print(f"rejected: {e}", file=sys.stderr)
        return EXIT_REJECTED


if __name__ == "__main__":
    sys.exit(main())
