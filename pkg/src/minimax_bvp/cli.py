"""Command-line front end.

Exit codes: 0 success (feasible, finite error, all checks pass), 2 negative
verdict (infeasible, infinite error, failed checks), 1 error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, format_number, observation_source
from .expr import ExprDomainError
from .observer import (
    IncompatibleProblem,
    NumericalConsistencyError,
    check_feasibility,
    simulate_observation,
    solve_estimator,
    solve_reconstruction,
)
from .ode import DivergenceError, TimeVector, l2_norm
from .scenarios import ALIASES, BUILTIN, resolve_name, run_scenario

log = logging.getLogger("minimax_bvp")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NEGATIVE = 2


class UsageError(Exception):
    pass


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def _table(header: list[str], t: np.ndarray, *blocks: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    data = np.column_stack([t, *blocks])
    for row in data:
        writer.writerow([format_number(v) for v in row])
    return buf.getvalue()


def _columns(prefix: str, k: int) -> list[str]:
    return [f"{prefix}{i + 1}" for i in range(k)]


def _flatten(report: dict, prefix: str = "") -> list[tuple[str, object]]:
    out = []
    for key, value in report.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.extend(_flatten(value, f"{name}."))
        elif isinstance(value, list) and value and isinstance(value[0], (list, dict)):
            for i, v in enumerate(value):
                out.extend(_flatten({f"[{i}]": v}, name))
        elif isinstance(value, list):
            out.extend((f"{name}[{i}]", v) for i, v in enumerate(value))
        else:
            out.append((name, value))
    return out


class Outcome:
    """A report plus optional CSV tables, keyed by output filename."""

    def __init__(self, report: dict, code: int, tables: dict[str, str] | None = None):
        self.report = _jsonable(report)
        self.code = code
        self.tables = tables or {}

    def render(self, fmt: str) -> str:
        if fmt == "json":
            return json.dumps(self.report, indent=2)
        if self.tables:
            return next(iter(self.tables.values()))
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["quantity", "value"])
        for key, value in _flatten(self.report):
            writer.writerow([key, format_number(value) if isinstance(value, float) else value])
        return buf.getvalue()

    def write(self, out: Path) -> None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(self.report, indent=2) + "\n")
        for name, text in self.tables.items():
            (out / name).write_text(text)


def _require_functional(cfg: ExperimentConfig) -> list[str]:
    if cfg.functional is None:
        raise ConfigError("functional", "missing; this command needs a functional")
    return list(cfg.functional)


def _simulate(cfg: ExperimentConfig):
    obs = cfg.observation
    if obs is None or obs.simulate is None:
        raise ConfigError("observation.simulate", "missing; this command needs a simulation block")
    s = obs.simulate
    return simulate_observation(
        cfg.system(),
        list(s.input),
        s.noise.model(),
        cfg.grid(),
        seed=s.seed,
        kernel_component=None if s.kernel_component is None else list(s.kernel_component),
        initial_state=s.initial_state,
        rtol=cfg.tolerances.rank_tol,
        tol=cfg.tolerances.bvp_tol,
    )


def cmd_check(cfg: ExperimentConfig) -> Outcome:
    tol = cfg.tolerances
    rep = check_feasibility(cfg.system(), _require_functional(cfg), cfg.grid(), tol.rank_tol, tol.feas_tol)
    report = {
        "command": "check",
        "feasible": rep.feasible,
        "defect": rep.defect,
        "threshold": rep.threshold,
        "P": rep.P,
        "W": rep.W,
        "h_end": rep.h_end,
        "Ph_end": rep.Ph_end,
        "W_nullity": rep.W_nullspace.shape[1],
    }
    return Outcome(report, EXIT_OK if rep.feasible else EXIT_NEGATIVE)


def cmd_estimate(cfg: ExperimentConfig) -> Outcome:
    grid, tol = cfg.grid(), cfg.tolerances
    est = solve_estimator(cfg.system(), _require_functional(cfg), grid, tol.rank_tol, tol.bvp_tol)
    report = {
        "command": "estimate",
        "estimable": est.estimable,
        "sigma_hat": est.sigma_hat,
        "compatibility_residual": est.compatibility_residual,
        "coupled_kernel_dim": len(est.kernel_basis),
        "notes": list(est.notes),
    }
    if not est.estimable:
        return Outcome(report, EXIT_NEGATIVE)
    n, m = cfg.n, cfg.m
    header = ["t"] + _columns("u", m) + _columns("z", n) + _columns("p", n)
    table = _table(header, grid.nodes, est.u_hat.values, est.z_hat.values, est.p_hat.values)
    return Outcome(report, EXIT_OK, {"trajectory.csv": table})


def cmd_reconstruct(cfg: ExperimentConfig) -> Outcome:
    grid, tol = cfg.grid(), cfg.tolerances
    y = observation_source(cfg, grid)
    source = "configured"
    if y is None:
        if cfg.observation is None:
            raise ConfigError("observation", "missing; reconstruction needs an observation")
        y = _simulate(cfg).y
        source = "simulated"
    ell = None if cfg.functional is None else list(cfg.functional)
    est = solve_reconstruction(cfg.system(), y, grid, ell=ell, rtol=tol.rank_tol, tol=tol.bvp_tol)
    report = {
        "command": "reconstruct",
        "observation": source,
        "compatibility_residual": est.compatibility_residual,
        "coupled_kernel_dim": len(est.kernel_basis),
    }
    if est.functional_value is not None:
        report["functional_value"] = est.functional_value
    if cfg.truth is not None:
        truth = TimeVector(list(cfg.truth)).sample(grid.nodes)
        report["error_norm"] = l2_norm(truth - est.x_hat.values, grid)
    n = cfg.n
    header = ["t"] + _columns("x_hat", n) + _columns("p_hat", n)
    table = _table(header, grid.nodes, est.x_hat.values, est.p_hat.values)
    return Outcome(report, EXIT_OK, {"trajectory.csv": table})


def cmd_simulate(cfg: ExperimentConfig) -> Outcome:
    sim = _simulate(cfg)
    report = {
        "command": "simulate",
        "input_norm": sim.input_norm,
        "input_bound": 1.0,
        "input_admissible": sim.input_admissible,
        "noise_trace_integral": sim.noise_trace_integral,
        "noise_bound": 1.0,
        "noise_admissible": sim.noise_admissible,
        "periodicity_gap": sim.periodicity_gap,
        "kernel_component_defect": sim.kernel_component_defect,
    }
    table = _table(["t"] + _columns("y", cfg.m), cfg.grid().nodes, sim.y.values)
    return Outcome(report, EXIT_OK, {"observation.csv": table})


def cmd_examples(name: str, steps: int | None = None) -> Outcome:
    try:
        name = resolve_name(name)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    rows = run_scenario(name, steps)
    report = {
        "command": "examples",
        "example": name,
        "passed": all(r.passed for r in rows),
        "rows": [
            {"quantity": r.quantity, "computed": r.computed, "expected": r.expected,
             "tolerance": r.tolerance, "pass": r.passed}
            for r in rows
        ],
    }
    return Outcome(report, EXIT_OK if report["passed"] else EXIT_NEGATIVE)


def format_rows(report: dict) -> str:
    """Plain-text pass/fail table for the examples command."""
    def short(v):
        if isinstance(v, float):
            return f"{v:.10g}"
        if isinstance(v, list):
            return json.dumps(v)[:48]
        return str(v)

    lines = [f"{'quantity':<34} {'computed':<26} {'expected':<26} result"]
    for r in report["rows"]:
        lines.append(
            f"{r['quantity']:<34} {short(r['computed']):<26} {short(r['expected']):<26} "
            f"{'PASS' if r['pass'] else 'FAIL'}  ({r['tolerance']})"
        )
    lines.append("all passed" if report["passed"] else "some checks FAILED")
    return "\n".join(lines)


SCENARIO_NAMES = sorted(BUILTIN) + sorted(ALIASES)

COMMANDS = {
    "check": cmd_check,
    "estimate": cmd_estimate,
    "reconstruct": cmd_reconstruct,
    "simulate": cmd_simulate,
}

HELP = {
    "check": "feasibility of the functional (P, W, h, verdict)",
    "estimate": "minimax estimator and its guaranteed error",
    "reconstruct": "state estimate from an observation",
    "simulate": "generate an observation y = Hx + noise",
}


class _Parser(argparse.ArgumentParser):
    # exit status 2 is reserved for negative verdicts
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(
        prog="minimax-bvp",
        description="Minimax observation of linear periodic systems.",
    )
    common = _Parser(add_help=False)
    common.add_argument("--grid-steps", type=int, help="even number of RK4 steps on [0, omega]")
    common.add_argument("--out", type=Path, help="directory for report.json and CSV outputs")
    common.add_argument("--format", choices=("json", "csv"), help="stdout format (default json; examples print a table)")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=HELP[name])
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", type=Path, help="experiment config JSON")
        src.add_argument("--example", choices=SCENARIO_NAMES, metavar="NAME", help="builtin scenario config")
        p.add_argument("--rank-tol", type=float, help="relative rank tolerance for SVDs")
        p.add_argument("--feas-tol", type=float, help="feasibility threshold factor")
        p.add_argument("--seed", type=int, help="overrides the simulation seed")
    p = sub.add_parser("examples", parents=[common], help="reproduce a builtin scenario")
    p.add_argument("name", choices=SCENARIO_NAMES, metavar="NAME", help=", ".join(BUILTIN))
    return ap


def _load(args) -> ExperimentConfig:
    if args.config is not None:
        try:
            cfg = ExperimentConfig.load(args.config)
        except OSError as exc:
            raise ConfigError("config", f"cannot read {args.config}: {exc.strerror}") from None
    else:
        cfg = ExperimentConfig.from_dict(BUILTIN[resolve_name(args.example)])
    return cfg.with_overrides(args.grid_steps, args.rank_tol, args.feas_tol, args.seed)


def run(argv: list[str] | None = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        if args.command == "examples":
            if args.grid_steps is not None and (args.grid_steps < 2 or args.grid_steps % 2):
                raise ConfigError("grid.steps", "must be an even integer >= 2")
            outcome = cmd_examples(args.name, args.grid_steps)
        else:
            outcome = COMMANDS[args.command](_load(args))
    except (ConfigError, UsageError, IncompatibleProblem) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (DivergenceError, NumericalConsistencyError, ExprDomainError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.out is not None:
        outcome.write(args.out)
    if args.command == "examples" and args.format is None:
        text = format_rows(outcome.report)
    else:
        text = outcome.render(args.format or "json")
    stdout.write(text if text.endswith("\n") else text + "\n")
    return outcome.code


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        code = run()
        sys.stdout.flush()
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        code = EXIT_OK
    sys.exit(code)
