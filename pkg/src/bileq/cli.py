"""Command-line experiment runner.

Subcommands::

    bileq run      one method on one problem, one CSV trace
    bileq sweep    vary one schedule parameter over a list, CSV per member,
                   ranked summary and a gnuplot script
    bileq validate regime check of a schedule only
    bileq problems list the built-in problems

Configuration comes from an optional JSON file (``--config``) and flags;
flags win. Exit codes: 0 success, 2 configuration error, 3 solver failure.

Config file (``schema_version`` 1)::

    {
      "schema_version": 1,
      "problem": "paper-r5" | {problem definition, see bileq.problems},
      "method": "ipsa" | "psm" | "inertial_prox" | "ppm_penalization" | "rppm",
      "schedule": {"lambda": "1/n", "beta": "1+n", "alpha": "0.1-1/n",
                   "clamp_alpha": true},
      "budget": 1000,
      "stop": {"step_tol": 0, "residual_tol": 0},
      "seed": 0,
      "inner_tol": 1e-10,
      "output": "trace.csv",
      "diagnostics": {"residual": true, "summability": false, "energy": false}
    }
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .algorithms import Method, Schedule, SolverError, StepOptions, StopRule, run, validate_regime
from .diagnostics import EnergyCheckContext, energy_check_strong, summability_report
from .problems import REGISTRY, get_problem, problem_from_dict
from .schedule_expr import ExpressionError, compile_expression, split_top_level

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "emit_trace", "build_schedule", "main"]

SCHEMA_VERSION = 1
CSV_FIELDS = ("n", "lambda", "beta", "alpha", "step_norm", "err_to_ref", "ep_residual")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    problem: object = "paper-r5"
    method: str = "ipsa"
    schedule: dict = field(default_factory=lambda: {
        "lambda": "1/n", "beta": "1+n", "alpha": "0.1-1/n", "clamp_alpha": True})
    budget: int = 1000
    stop: dict = field(default_factory=lambda: {"step_tol": 0.0, "residual_tol": 0.0})
    seed: int = 0
    inner_tol: float = 1e-10
    output: str = "trace.csv"
    diagnostics: dict = field(default_factory=lambda: {
        "residual": True, "summability": False, "energy": False})

    def validate(self):
        try:
            Method(self.method)
        except ValueError:
            raise ConfigError(
                f"unknown method {self.method!r}; choose from {[m.value for m in Method]}"
            ) from None
        if not isinstance(self.budget, int) or self.budget < 0:
            raise ConfigError("budget must be a nonnegative integer")
        if isinstance(self.problem, str) and self.problem not in REGISTRY:
            raise ConfigError(f"unknown problem {self.problem!r}; known: {', '.join(sorted(REGISTRY))}")
        build_schedule(self.schedule)
        return self


def build_schedule(spec) -> Schedule:
    try:
        return Schedule(
            compile_expression(str(spec.get("lambda", "1/n"))),
            compile_expression(str(spec.get("beta", "1+n"))),
            compile_expression(str(spec.get("alpha", "0"))),
            bool(spec.get("clamp_alpha", True)),
        )
    except ExpressionError as exc:
        raise ConfigError(f"schedule: {exc}") from None


def load_config(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    version = data.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}")
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return data


def _config_from_args(args) -> ExperimentConfig:
    base = load_config(args.config) if args.config else {}
    cfg = ExperimentConfig(**base)
    sched = dict(cfg.schedule)
    for key in ("lambda", "beta", "alpha"):
        val = getattr(args, key)
        if val is not None:
            sched[key] = val
    if args.no_clamp_alpha:
        sched["clamp_alpha"] = False
    stop = dict(cfg.stop)
    if args.step_tol is not None:
        stop["step_tol"] = args.step_tol
    if args.residual_tol is not None:
        stop["residual_tol"] = args.residual_tol
    diag = dict(cfg.diagnostics)
    if args.no_residual:
        diag["residual"] = False
    if args.summability:
        diag["summability"] = True
    if args.energy:
        diag["energy"] = True
    updates = {"schedule": sched, "stop": stop, "diagnostics": diag}
    for attr, key in (("problem", "problem"), ("method", "method"), ("iters", "budget"),
                      ("seed", "seed"), ("inner_tol", "inner_tol"), ("out", "output")):
        val = getattr(args, attr, None)
        if val is not None:
            updates[key] = val
    return replace(cfg, **updates).validate()


def _problem(cfg):
    if isinstance(cfg.problem, dict):
        try:
            return problem_from_dict(cfg.problem)
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"bad inline problem: {exc}") from None
    return get_problem(cfg.problem)


# ---------------------------------------------------------------------------
# CSV


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return format(float(v), ".16e")


def emit_trace(trace, path):
    """Write a trace as CSV: n, lambda, beta, alpha, step_norm, err_to_ref,
    ep_residual, x_0 .. x_{d-1}. Floats carry 17 significant digits; missing
    values are empty fields."""
    header = list(CSV_FIELDS) + [f"x_{i}" for i in range(trace.dim)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in trace:
            w.writerow([str(r.n), _fmt(r.lam), _fmt(r.beta), _fmt(r.alpha), _fmt(r.step_norm),
                        _fmt(r.err_to_ref), _fmt(r.ep_residual)] + [_fmt(v) for v in r.x])


# ---------------------------------------------------------------------------
# commands


def _execute(cfg: ExperimentConfig, out=sys.stdout):
    problem = _problem(cfg)
    schedule = build_schedule(cfg.schedule)
    stop = StopRule(float(cfg.stop.get("step_tol", 0.0)), float(cfg.stop.get("residual_tol", 0.0)))
    trace = run(problem, cfg.method, schedule, cfg.budget, stop, seed=cfg.seed,
                opts=StepOptions(inner_tol=cfg.inner_tol, seed=cfg.seed),
                track_residual=bool(cfg.diagnostics.get("residual", True)))
    emit_trace(trace, cfg.output)
    lines = []
    if cfg.diagnostics.get("summability") and len(trace) > 64:
        rep = summability_report(trace, problem.x_ref, problem.f)
        lines.append(f"summability tails decreasing: {rep.passed}")
    if cfg.diagnostics.get("energy") and problem.x_ref is not None and len(trace) > 3:
        alphas = np.nan_to_num(trace.column("alpha"))
        bound = float(alphas.max())
        b = 1.0 if bound == 0 else 0.5 * (2 * bound + 1 / (4 * bound) - 1)
        viol = energy_check_strong(EnergyCheckContext(problem.x_ref, b, bound), trace, problem.g)
        lines.append(f"energy inequality max violation: {viol.max(initial=0.0):.3e}")
    return trace, lines


def _report_regime(cfg, out):
    rep = validate_regime(build_schedule(cfg.schedule), max(100, min(cfg.budget, 10_000)))
    print(rep.summary(), file=out)
    return rep


def cmd_run(args, out):
    cfg = _config_from_args(args)
    _report_regime(cfg, out)
    trace, lines = _execute(cfg, out)
    fin = trace.final
    err = "n/a" if fin.err_to_ref is None else f"{fin.err_to_ref:.6e}"
    print(f"{cfg.method}: {len(trace) - 1} steps, final error {err} -> {cfg.output}", file=out)
    for line in lines:
        print(line, file=out)
    return 0


def _threads():
    raw = os.environ.get("BEQ_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ConfigError("BEQ_THREADS must be an integer") from None
    return os.cpu_count() or 1


_GNUPLOT = """\
# generated by bileq sweep
set logscale y
set xlabel "n"
set ylabel "||x_n - x_ref||"
set datafile separator ","
set key outside
plot {plots}
"""


def cmd_sweep(args, out):
    cfg = _config_from_args(args)
    param = args.vary[0]
    values = split_top_level(args.vary[1])
    if param not in ("lambda", "beta", "alpha"):
        raise ConfigError("--vary takes lambda, beta or alpha")
    if not values:
        raise ConfigError("--vary needs at least one value")
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    members = []
    for i, val in enumerate(values):
        sched = dict(cfg.schedule, **{param: val})
        members.append(replace(cfg, schedule=sched,
                               output=str(outdir / f"run_{i:02d}_{param}.csv")).validate())
    _report_regime(cfg, out)
    with ThreadPoolExecutor(max_workers=min(_threads(), len(members))) as pool:
        results = list(pool.map(lambda c: _execute(c, out)[0], members))

    rows = []
    for i, (m, tr) in enumerate(zip(members, results)):
        err = tr.final.err_to_ref
        rows.append((math.inf if err is None else err, i, m.schedule[param], m.output))
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(outdir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", param, "final_err_to_ref", "file"])
        for rank, (err, _, val, path) in enumerate(rows, 1):
            w.writerow([rank, val, _fmt(err), Path(path).name])
    plots = ", \\\n     ".join(
        f"'{Path(m.output).name}' using 1:6 skip 1 with lines title '{param} = {m.schedule[param]}'"
        for m in members
    )
    (outdir / "plot.gp").write_text(_GNUPLOT.format(plots=plots))
    print(f"{'rank':>4}  {param:<20} final err_to_ref", file=out)
    for rank, (err, _, val, _) in enumerate(rows, 1):
        print(f"{rank:>4}  {val:<20} {err:.6e}", file=out)
    return 0


def cmd_validate(args, out):
    cfg = _config_from_args(args)
    rep = validate_regime(build_schedule(cfg.schedule), args.horizon)
    print(rep.summary(), file=out)
    print(f"regime: {rep.regime.value}", file=out)
    return 0


def cmd_problems(args, out):
    for name in sorted(REGISTRY):
        p = REGISTRY[name]()
        ref = "yes" if p.x_ref is not None else "no"
        print(f"{name:<24} dim={p.K.dim}  reference={ref}  {p.description}", file=out)
    return 0


def _add_common(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--problem", help="registry name (see `problems`)")
    p.add_argument("--method", choices=[m.value for m in Method])
    p.add_argument("--lambda", dest="lambda", metavar="EXPR", help="step size lambda_n, e.g. 1/n")
    p.add_argument("--beta", metavar="EXPR", help="penalization beta_n, e.g. 1+n")
    p.add_argument("--alpha", metavar="EXPR", help="inertia alpha_n, e.g. 0.1-1/n")
    p.add_argument("--no-clamp-alpha", action="store_true",
                   help="use alpha_n as given instead of clamping to [0, (sqrt(3)-1)/4)")
    p.add_argument("--iters", type=int, help="iteration budget")
    p.add_argument("--step-tol", type=float)
    p.add_argument("--residual-tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--inner-tol", type=float)
    p.add_argument("--no-residual", action="store_true", help="skip the per-step EP residual")
    p.add_argument("--summability", action="store_true")
    p.add_argument("--energy", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="bileq", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment")
    _add_common(p_run)
    p_run.add_argument("--out", help="output CSV path")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="vary one schedule parameter")
    _add_common(p_sweep)
    p_sweep.add_argument("--vary", nargs=2, metavar=("PARAM", "VALUES"), required=True,
                         help='e.g. --vary beta "1+n,n^2,n*log(n+1)"')
    p_sweep.add_argument("--out-dir", default="sweep")
    p_sweep.set_defaults(func=cmd_sweep)

    p_val = sub.add_parser("validate", help="check schedule hypotheses only")
    _add_common(p_val)
    p_val.add_argument("--horizon", type=int, default=10_000)
    p_val.set_defaults(func=cmd_validate)

    p_list = sub.add_parser("problems", help="list built-in problems")
    p_list.set_defaults(func=cmd_problems)
    return parser


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, out)
    except (ConfigError, ExpressionError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        if exc.trace is not None and len(exc.trace):
            path = getattr(args, "out", None) or "trace.partial.csv"
            emit_trace(exc.trace, path)
            print(f"partial trace written to {path}", file=sys.stderr)
        return 3
    except ValueError as exc:
        # schedule values out of range surface while running
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
