"""Command-line interface: ``rcar analyze | sweep | simulate | verify | fig``.

Exit codes: 0 ok, 1 verification failure, 2 input error, 3 internal
inconsistency.  Output goes to stdout unless ``--out PATH`` is given.
"""
from __future__ import annotations

import argparse
import math
import sys

from . import first_moment, pair_sum, simulate, solve, spectral, verify
from .io import InputError, dump_report, load_model, parse_dist, region_csv, sweep_csv
from .model import build_oracle

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3


def _emit(text: str, out):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def parse_grid(text: str):
    """``"0.1,0.2,0.5"`` or ``"start:stop:step"`` (stop included)."""
    try:
        if ":" in text:
            a, b, h = (float(x) for x in text.split(":"))
            if h <= 0 or b < a:
                raise ValueError
            n = int(math.floor((b - a) / h + 1e-9)) + 1
            return [round(a + i * h, 12) for i in range(n)]
        vals = [float(x) for x in text.split(",") if x.strip()]
        if not vals:
            raise ValueError
        return vals
    except ValueError:
        raise InputError(f"bad grid {text!r}; use 'a,b,c' or 'start:stop:step'") from None


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def analyze_report(spec, thetas):
    """Verdicts and criterion values for every ``theta``."""
    oracle = build_oracle(spec)
    out = {"model": spec.to_dict(), "results": []}
    finite_dense = oracle.finite and oracle.order <= spectral.MAX_ORDER
    if finite_dense:
        out["hypotheses"] = spectral.hypotheses(oracle)
    out["mean"] = first_moment.mean_exact(oracle)
    for th in thetas:
        t1 = first_moment.theorem1_verdict(oracle, th)
        t2 = pair_sum.theorem2_verdict(oracle, th)
        entry = {"theta": th, "theorem1": t1.to_dict(), "theorem2": t2.to_dict()}
        extra = []
        if th == 2.0 and finite_dense:
            nq = spectral.nq_criterion(oracle)
            entry["nq"] = nq.to_dict()
            extra.append(nq)
        entry["combined"] = pair_sum.combined_verdict(oracle, th, extra=extra).to_dict()
        out["results"].append(entry)
    return out


def cmd_analyze(args):
    spec = load_model(args.model)
    _emit(dump_report(analyze_report(spec, args.theta or [2.0])), args.out)
    return EXIT_OK


def cmd_sweep(args):
    Z = parse_dist(args.z)
    thetas = parse_grid(args.thetas) if args.thetas else solve.default_thetas()
    if any(not 0 < t <= 3 for t in thetas):
        raise InputError("thetas must lie in (0, 3]")
    _emit(sweep_csv(solve.theta_sweep(thetas, Z, args.method)), args.out)
    return EXIT_OK


def cmd_simulate(args):
    spec = load_model(args.model)
    try:
        cfg = simulate.SimConfig(horizon=args.horizon, replicas=args.reps, burn_in=args.burn_in, seed=args.seed,
                                 thetas=tuple(args.theta or (1.0, 2.0)), mode=args.mode, threads=args.threads,
                                 tail_fraction=args.tail_fraction)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    rep = simulate.simulate(spec, cfg)
    d = {"model": spec.to_dict(), **rep.to_dict()}
    _emit(dump_report(d), args.out)
    return EXIT_OK


def cmd_verify(args):
    spec = load_model(args.model)
    oracle = build_oracle(spec)
    checks = verify.run_all(oracle, m_max=args.m_max)
    failed = [c.name for c in checks if c.status == verify.FAIL]
    d = {"model": spec.to_dict(), "checks": checks, "passed": not failed}
    if not oracle.finite:
        d["note"] = "infinite order: checks use the truncated weights"
    _emit(dump_report(d), args.out)
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_fig(args):
    if args.which == "phis":
        text = sweep_csv(solve.theta_sweep(solve.default_thetas(), None, args.method))
    else:
        n = int(round(1.0 / args.step))
        if n < 1 or abs(n * args.step - 1.0) > 1e-9:
            raise InputError("--step must divide 1")
        grid = [round(i / n, 12) for i in range(n + 1)]
        text = region_csv(solve.garch_region_scan(grid, grid))
    _emit(text, args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="rcar", description="Moment criteria for random-coefficient AR recursions.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", metavar="PATH", help="write to PATH instead of stdout")

    a = sub.add_parser("analyze", help="verdicts and criterion values for a model file")
    a.add_argument("model")
    a.add_argument("--theta", type=float, action="append", help="moment order (repeatable; default 2)")
    common(a)
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("sweep", help="critical beta per criterion over a theta grid (CSV)")
    s.add_argument("--z", default="chisquare1", help="factor law: JSON object or parameterless kind")
    s.add_argument("--thetas", help="'a,b,c' or 'start:stop:step' inside (0, 3]")
    s.add_argument("--method", choices=("machinery", "closed"), default="machinery")
    common(s)
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("simulate", help="Monte Carlo moment estimates (JSON)")
    m.add_argument("model")
    m.add_argument("--theta", type=float, action="append", help="moment order (repeatable; default 1 and 2)")
    m.add_argument("--horizon", type=int, default=300)
    m.add_argument("--reps", type=int, default=10_000)
    m.add_argument("--burn-in", type=int, default=0)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--mode", choices=(simulate.ENSEMBLE, simulate.TIME_AVERAGE), default=simulate.ENSEMBLE)
    m.add_argument("--threads", type=int, default=1)
    m.add_argument("--tail-fraction", type=float, default=None, help="also report a Hill tail index")
    common(m)
    m.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="cross-oracle checks (exit 1 on failure)")
    v.add_argument("model")
    v.add_argument("--m-max", type=int, default=30, help="largest brute-force endpoint")
    common(v)
    v.set_defaults(func=cmd_verify)

    f = sub.add_parser("fig", help="figure data as CSV")
    f.add_argument("which", choices=("phis", "garch"))
    f.add_argument("--method", choices=("machinery", "closed"), default="machinery")
    f.add_argument("--step", type=float, default=0.01, help="grid step for 'garch'")
    common(f)
    f.set_defaults(func=cmd_fig)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"rcar: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except pair_sum.InternalInconsistency as exc:
        print(f"rcar: internal inconsistency: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
