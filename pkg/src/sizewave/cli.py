"""Command line entry point ``sizewave``.

Exit codes: 0 success, 2 validation failure (or any solver-side error
other than non-convergence), 3 non-convergence, 4 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .characteristics import dividing_curve, trace
from .conditions import estimate_M, p_bound, validate_conditions
from .config import load_config
from .errors import ConfigError, NonConvergenceError, SizewaveError
from .field import Field
from .free_boundary import solve_boundary
from .io import emit_boundary, emit_outputs, write_csv, write_json
from .monotone import solve_global
from .transform import ReferenceFrame
from .verification import (
    compare_on_oracle_grid,
    comparison_check,
    mass_balance_residual,
    upwind_oracle,
    weak_residual,
)

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED, EXIT_CONFIG = 0, 2, 3, 4
SEED_SLACK_TOL = 1e-8


def _out_dir(args, config):
    return args.out or config.output.directory


def _prepare(args):
    config = load_config(args.config)
    if getattr(args, "estimate_M", False):
        traj = solve_boundary(config.spec, config.numerics.dt_max, config.numerics.rtol)
        config = config.with_M(estimate_M(config.spec, p_bound(config.spec, traj)))
    return config


def _boundary(config):
    return solve_boundary(config.spec, config.numerics.dt_max, config.numerics.rtol)


def _validate(config, traj):
    return validate_conditions(config.spec, samples=config.numerics.samples, traj=traj)


def _print(payload):
    print(json.dumps(payload, indent=2, sort_keys=True))


def cmd_validate(args):
    config = _prepare(args)
    report = _validate(config, None)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_json(os.path.join(args.out, "validation.json"),
                   {"config": config.to_dict(), "validation": report.to_dict()})
    _print(report.to_dict())
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_boundary(args):
    config = _prepare(args)
    traj = _boundary(config)
    out = _out_dir(args, config)
    os.makedirs(out, exist_ok=True)
    emit_boundary(out, traj)
    print(f"h({config.spec.T:g}) = {traj.h[-1]:.17g}")
    return EXIT_OK


def _solve(config, traj, threads, callback=None, keep_results=False):
    n = config.numerics
    frame = ReferenceFrame(config.spec, traj)
    return frame, solve_global(frame, n.N_xi, n.N_t, n.tol, n.k_max, samples=min(n.samples, 128),
                               callback=callback, threads=threads, keep_results=keep_results)


def cmd_solve(args):
    config = _prepare(args)
    traj = _boundary(config)
    validation = _validate(config, traj)
    if not validation.ok and not args.skip_validation:
        _print(validation.to_dict())
        return EXIT_INVALID
    frame, (field_, report) = _solve(config, traj, args.threads)
    out = _out_dir(args, config)
    emit_outputs(out, config, traj, field_, report, frame, {"validation": validation.to_dict()})
    print(f"converged: {report.iterations} iterations over {len(report.slabs)} slab(s), "
          f"final gap {report.final_gap:.3e}")
    return EXIT_OK


def _oracle_steps(frame, n_xi, n_t, T, cfl=0.8):
    xi = np.linspace(0.0, 1.0, 65)
    t = np.linspace(0.0, T, 65)
    w_max = float(np.max(np.abs(frame.velocity(xi[None, :], t[:, None]))))
    need = max(n_t, math.ceil(T * w_max * n_xi / cfl))
    return n_t * math.ceil(need / n_t)


def cmd_verify(args):
    config = _prepare(args)
    spec = config.spec
    traj = _boundary(config)
    validation = _validate(config, traj)
    if not validation.ok and not args.skip_validation:
        _print(validation.to_dict())
        return EXIT_INVALID
    worst = {"violation": 0.0, "location": {}}

    def on_iterate(slab, state):
        xi = np.linspace(0.0, 1.0, state.lower.shape[1])
        t = np.arange(state.lower.shape[0], dtype=float)
        res = comparison_check(Field(xi, t, state.lower), Field(xi, t, state.upper))
        if res.worst_violation > worst["violation"]:
            worst.update(violation=res.worst_violation, location={"slab": slab, "k": state.k, **res.location})

    frame, (field_, report) = _solve(config, traj, args.threads, on_iterate, keep_results=True)

    seed_checks = []
    for res in report.results:
        p = res.problem
        rows = p.slab_rows
        upper0 = Field(p.xi, rows, res.seeds.upper(p.xi[None, :], rows[:, None]))
        lower0 = Field(p.xi, rows, np.zeros_like(upper0.values))
        init = p.history.U[p.a]
        up = weak_residual(upper0, "upper", lower0, spec, traj, initial=init)
        lo = weak_residual(lower0, "lower", upper0, spec, traj, initial=init)
        seed_checks.append({"slab": res.record["slab"], "upper_min_slack": up.min_slack,
                            "lower_min_slack": lo.min_slack})

    mass = mass_balance_residual(field_, spec, traj)
    weak_up = weak_residual(field_, "upper", field_, spec, traj)
    weak_lo = weak_residual(field_, "lower", field_, spec, traj)
    n = config.numerics
    oracle_nt = _oracle_steps(frame, n.N_xi, n.N_t, spec.T)
    oracle = upwind_oracle(spec, n.N_xi, oracle_nt, traj)
    oracle_diff = compare_on_oracle_grid(field_, oracle)

    checks = {
        "sandwich": report.sandwich_ok,
        "comparison": worst["violation"] <= 1e-9,
        "seed_validity": all(min(c["upper_min_slack"], c["lower_min_slack"]) >= -SEED_SLACK_TOL
                             for c in seed_checks),
        "nonnegative": bool(np.min(field_.values) >= -1e-10),
    }
    verdict = {
        "ok": all(checks.values()),
        "checks": checks,
        "comparison_worst": worst,
        "seed_slack": seed_checks,
        "mass_balance": mass.to_dict(),
        "weak_residual": {"upper": weak_up.to_dict(), "lower": weak_lo.to_dict()},
        "oracle": {"N_xi": n.N_xi, "N_t": oracle_nt, "linf_difference": oracle_diff},
    }
    out = _out_dir(args, config)
    emit_outputs(out, config, traj, field_, report, frame, {"verify": verdict})
    write_json(os.path.join(out, "verify.json"), verdict)
    write_csv(os.path.join(out, "mass_balance.csv"), ["t", "residual"],
              zip(map(float, mass.t), map(float, mass.values)))
    names = list(weak_up.series)
    header = ["t"] + [f"{role}_{k}" for role in ("upper", "lower") for k in names]
    cols = [weak_up.series[k].values for k in names] + [weak_lo.series[k].values for k in names]
    write_csv(os.path.join(out, "weak_residual.csv"), header,
              ([float(t)] + [float(c[i]) for c in cols] for i, t in enumerate(field_.t)))
    _print({"ok": verdict["ok"], "checks": checks})
    return EXIT_OK if verdict["ok"] else EXIT_INVALID


def cmd_characteristics(args):
    config = _prepare(args)
    spec = config.spec
    traj = _boundary(config)
    frame = ReferenceFrame(spec, traj)
    rows = []
    for c, xi_hat in enumerate(np.linspace(0.0, 1.0, args.curves)):
        curve = trace(frame, float(xi_hat), spec.T, 0.0)
        foot = curve.foot or ""
        for t, x in zip(curve.t, curve.X):
            rows.append((c, float(xi_hat), float(spec.T), float(t), float(x), foot))
    out = _out_dir(args, config)
    os.makedirs(out, exist_ok=True)
    write_csv(os.path.join(out, "characteristics.csv"), ["curve", "xi_hat", "t_hat", "t", "X", "foot"], rows)
    grid = np.linspace(0.0, 1.0, 65)
    G = dividing_curve(frame, grid, spec.T)
    write_csv(os.path.join(out, "dividing_curve.csv"), ["xi", "G"], zip(map(float, grid), map(float, G.G)))
    print(f"{args.curves} curves written to {out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="sizewave", description="Solve and verify free-boundary size-structured population models.")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "validate": (cmd_validate, "check the standing assumptions on the configured problem"),
        "boundary": (cmd_boundary, "solve the free boundary and write boundary.csv"),
        "solve": (cmd_solve, "run the monotone solver and write all outputs"),
        "verify": (cmd_verify, "solve and run the verification suite"),
        "characteristics": (cmd_characteristics, "dump characteristic curves and the dividing curve"),
    }
    for name, (func, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the JSON run configuration")
        p.add_argument("--threads", type=int, default=1, help="worker threads (1 gives byte-identical output)")
        p.add_argument("--out", default=None, help="output directory (overrides output.directory)")
        p.add_argument("--estimate-M", dest="estimate_M", action="store_true",
                       help="replace M by a sampled estimate of max(-m_P) plus 10%%")
        if name in ("solve", "verify"):
            p.add_argument("--skip-validation", action="store_true", help="run even if a condition fails")
        if name == "characteristics":
            p.add_argument("--curves", type=int, default=11, help="number of anchors at t = T")
        p.set_defaults(func=func)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except SizewaveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
