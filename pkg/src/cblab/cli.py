"""cb-lab: solve cumulant flows, simulate paths, evaluate moment criteria,
and run spec-file experiments from the command line."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import load_immigration, load_mechanism, load_moment_function
from .cumulant import solve_v
from .errors import CBLabError
from .lab import run_experiment
from .moments import cb_f_moment_finite, cbi_f_moment_finite, integer_moment
from .simulate import (
    SimConfig,
    path_rng,
    simulate_cb,
    simulate_cb_ensemble,
    simulate_cbi,
    simulate_cbi_ensemble,
)


def _writer(out_dir: str | None, name: str):
    if out_dir is None:
        return sys.stdout
    os.makedirs(out_dir, exist_ok=True)
    return open(os.path.join(out_dir, name), "w")


def _cmd_solve_v(args) -> int:
    mech = load_mechanism(args.mechanism)
    lambdas = [float(v) for v in args.lambdas.split(",")]
    fh = _writer(args.out, "solve_v.csv")
    fh.write("lambda,t,v,est_error\n")
    for lam in lambdas:
        sol = solve_v(mech, lam, args.t_max, rtol=args.tol, atol=args.tol * 1e-2)
        for t, v, err in zip(sol.t_grid, sol.v_values, sol.est_error):
            fh.write(f"{lam!r},{t!r},{v!r},{err!r}\n")
    if fh is not sys.stdout:
        fh.close()
    return 0


def _cmd_simulate(args) -> int:
    mech = load_mechanism(args.mechanism)
    imm = load_immigration(args.immigration) if args.immigration else None
    cfg = SimConfig(
        dt=args.dt,
        eps=args.eps,
        t_max=args.t_max,
        seed=args.seed if args.seed is not None else 0,
        scheme=args.scheme,
        record_jumps=args.jumps,
        gaussian_correction=not args.no_gaussian_correction,
    )
    if args.aggregate:
        if imm is None:
            res = simulate_cb_ensemble(mech, args.x0, cfg, args.paths, threads=args.threads)
        else:
            res = simulate_cbi_ensemble(mech, imm, args.x0, cfg, args.paths, threads=args.threads)
        fh = _writer(args.out, "terminal.csv")
        fh.write("path_id,state\n")
        for i, v in enumerate(res.terminal()):
            fh.write(f"{i},{v!r}\n")
        if fh is not sys.stdout:
            fh.close()
        return 0
    fh = _writer(args.out, "paths.csv")
    fh.write("path_id,t,state\n")
    jump_rows = []
    for pid in range(args.paths):
        rng = path_rng(cfg.seed, pid)
        if imm is None:
            rec = simulate_cb(mech, args.x0, cfg, rng)
        else:
            rec = simulate_cbi(mech, imm, args.x0, cfg, rng)
        for t, s in zip(rec.times, rec.states):
            fh.write(f"{pid},{t!r},{s!r}\n")
        jump_rows.extend((pid, t, z, src.value) for t, z, src in rec.big_jumps)
    if fh is not sys.stdout:
        fh.close()
    if args.jumps:
        jh = _writer(args.out, "jumps.csv")
        jh.write("path_id,time,size,source\n")
        for pid, t, z, src in jump_rows:
            jh.write(f"{pid},{t!r},{z!r},{src}\n")
        if jh is not sys.stdout:
            jh.close()
    return 0


def _cmd_moments(args) -> int:
    mech = load_mechanism(args.mechanism)
    ts = [float(v) for v in args.t.split(",")]
    fh = _writer(args.out, "moments.csv")
    fh.write("n,t,value\n")
    for n in range(1, args.n_max + 1):
        for t in ts:
            res = integer_moment(mech, args.x0, n, t)
            fh.write(f"{n},{t!r},{res.value!r if res.is_finite else 'inf'}\n")
    if fh is not sys.stdout:
        fh.close()
    return 0


def _cmd_criterion(args) -> int:
    mech = load_mechanism(args.mechanism)
    f = load_moment_function(args.f)
    if args.immigration:
        imm = load_immigration(args.immigration)
        res = cbi_f_moment_finite(mech, imm, f)
    else:
        res = cb_f_moment_finite(mech, f)
    verdict = {"finite": True, "infinite": False, "undetermined": None}[res.verdict]
    doc = {"finite": verdict, "reason": res.reason}
    if res.integral is not None and res.integral.is_finite:
        doc["integral_value"] = res.integral.value
    fh = _writer(args.out, "criterion.json")
    json.dump(doc, fh, indent=2, sort_keys=True)
    fh.write("\n")
    if fh is not sys.stdout:
        fh.close()
    return 0


def _cmd_experiment(args) -> int:
    return run_experiment(args.spec, out_dir=args.out, seed=args.seed)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cb-lab",
        description="continuous-state branching processes: cumulants, paths, moments",
    )
    parser.add_argument("--seed", type=int, default=None, help="global RNG seed")
    parser.add_argument("--threads", type=int, default=1, help="worker count for ensembles")
    parser.add_argument("--out", default=None, help="output directory (default: stdout)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-v", help="solve the cumulant ODE and emit CSV")
    p.add_argument("mechanism", help="mechanism config file")
    p.add_argument("--lambdas", default="1.0", help="comma-separated initial values")
    p.add_argument("--t-max", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(fn=_cmd_solve_v)

    p = sub.add_parser("simulate", help="simulate CB/CBI paths")
    p.add_argument("mechanism")
    p.add_argument("--immigration", default=None)
    p.add_argument("--x0", type=float, default=1.0)
    p.add_argument("--paths", type=int, default=10)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--eps", type=float, default=1e-2)
    p.add_argument("--t-max", type=float, default=1.0)
    p.add_argument("--scheme", default="euler_thinning", choices=["euler_thinning", "exact_feller"])
    p.add_argument("--no-gaussian-correction", action="store_true")
    p.add_argument("--aggregate", action="store_true", help="terminal states only")
    p.add_argument("--jumps", action="store_true", help="also write the big-jump log")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("moments", help="integer moments via the sensitivity system")
    p.add_argument("mechanism")
    p.add_argument("--x0", type=float, default=1.0)
    p.add_argument("--n-max", type=int, default=3)
    p.add_argument("--t", default="1.0", help="comma-separated times")
    p.set_defaults(fn=_cmd_moments)

    p = sub.add_parser("criterion", help="f-moment finiteness verdict as JSON")
    p.add_argument("mechanism")
    p.add_argument("--immigration", default=None)
    p.add_argument("--f", required=True, help="moment function config file")
    p.set_defaults(fn=_cmd_criterion)

    p = sub.add_parser("experiment", help="run an experiment spec file")
    p.add_argument("spec")
    p.set_defaults(fn=_cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (CBLabError, ValueError, OSError) as exc:
        print(f"cb-lab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
