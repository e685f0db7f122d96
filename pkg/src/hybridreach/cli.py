"""Command-line front end.

Exit codes: 0 success, 1 verdict differs from --expect, 2 usage, parse or
simulation error.  Reports and data go to standard output (or --out files);
diagnostics go to standard error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import fixtures
from .closeness import closeness_margin, tau_eps_close
from .core import HybridArc, PerturbationFamily
from .definitions import dump_definition, load_definition, shipped, shipped_names
from .errors import DefinitionError, SimError
from .expr import ExprError, parse_expr
from .reach import (PROBE_CONFIG, ReachConfig, doubling_approx, inflation_approx, isc_probe, osc_probe,
                    reach, reach_interval)
from .report import FAIL, INCONCLUSIVE
from .schedule import ProbeSchedule
from .sets import Ball, Box, Union
from .simulate import SolvePolicy, solve
from .wellposedness import CheckConfig, check_B, check_C, check_V, check_W_P


class UsageError(Exception):
    pass


def _vec(text, what="vector"):
    try:
        v = [float(s) for s in str(text).split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"cannot read {what} {text!r}; expected comma-separated numbers") from None
    if not v or not all(math.isfinite(a) for a in v):
        raise UsageError(f"bad {what} {text!r}")
    return np.array(v)


def _floats(text, what):
    return [float(a) for a in _vec(text, what)]


def _load(arg):
    p = Path(arg)
    if not p.exists():
        name = p.name[:-5] if p.name.endswith(".json") else p.name
        if name in shipped_names():
            p = shipped(name)
        else:
            raise UsageError(f"no such system file {arg!r} (shipped examples: {', '.join(shipped_names())})")
    return load_definition(p)


def _check_dim(x, d, what="x0"):
    if len(x) != d.system.dim:
        raise UsageError(f"{what} has dimension {len(x)}, system has {d.system.dim}")
    return x


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    return v


def _emit(obj, out=None):
    text = json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"
    _write(text, out)


def _write(text, out=None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _expect(verdict, args):
    if args.expect is None:
        return 0
    ok = verdict == args.expect
    if not ok:
        print(f"expected {args.expect}, got {verdict}", file=sys.stderr)
    return 0 if ok else 1


def _schedule(args):
    kw = {"samples": args.samples}
    radii = _floats(args.schedule, "schedule") if args.schedule else list(ProbeSchedule().radii)
    kw["radii"] = tuple(radii)
    if getattr(args, "deltas", None):
        kw["deltas"] = tuple(_floats(args.deltas, "deltas"))
    if getattr(args, "tol", None) is not None:
        kw["tol"] = args.tol
    try:
        return ProbeSchedule(**kw)
    except ValueError as e:
        raise UsageError(str(e)) from None


# subcommands

def cmd_simulate(args):
    d = _load(args.system)
    x0 = _check_dim(_vec(args.x0, "x0"), d)
    pol = SolvePolicy(priority=args.priority, h=args.h, T_max=args.T_max, J_max=args.J_max,
                      tau_max=args.tau if args.tau is not None else float("inf"),
                      flow_selection=("vertex", args.flow_vertex), jump_selection=("vertex", args.jump_vertex))
    arc = solve(d.system, x0, pol, args.seed)
    _write(arc.to_csv(), args.out)
    print(f"stop: {arc.stop_reason}; end (t, j) = ({arc.end[0]:.9g}, {arc.end[1]})", file=sys.stderr)
    return 0


def _x0_set(args, d):
    if args.x0_ball:
        c, r = args.x0_ball
        return Ball(_check_dim(_vec(c, "ball centre"), d), float(r))
    if args.x0_box:
        lo, hi = (_check_dim(_vec(v, "box corner"), d) for v in args.x0_box)
        return Box(lo, hi)
    if not args.x0:
        raise UsageError("give --x0 (repeatable), --x0-ball or --x0-box")
    return np.array([_check_dim(_vec(v, "x0"), d) for v in args.x0])


def cmd_reach(args):
    d = _load(args.system)
    X0 = _x0_set(args, d)
    cfg = ReachConfig(policy=SolvePolicy(priority="branch", h=args.h), branch_budget=args.budget,
                      n_samples=args.samples, n_grid=args.grid)
    if args.interval:
        lo, hi = args.interval
        cloud = reach_interval(d.system, X0, lo, hi, args.J, cfg, args.seed)
    else:
        if args.T is None:
            raise UsageError("give --T or --interval")
        cloud = reach(d.system, X0, args.T, args.J, cfg, args.seed)
    if args.json:
        _emit(cloud.to_json(), args.out)
    else:
        _write(cloud.to_csv(), args.out)
    for n in cloud.notes:
        print(n, file=sys.stderr)
    print(f"{len(cloud)} point(s){' (partial)' if cloud.partial else ''}", file=sys.stderr)
    return 0


def _default_points(S, n, seed):
    """Seeded points of [-2, 2]^n projected onto S."""
    if S.is_empty():
        return []
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        z, _ = S.project(rng.uniform(-2, 2, size=S.dim))
        if not any(np.allclose(z, q, atol=1e-12) for q in out):
            out.append(z)
    return out


def cmd_check(args):
    d = _load(args.system)
    H, fam = d.system, d.family
    sched = _schedule(args)
    cfg = CheckConfig(schedule=sched, seed=args.seed, delegate=args.delegate)
    kind = args.list
    if kind == "V":
        S = H.C
    elif kind == "C":
        S = H.D if not H.D.is_empty() else H.C
    elif kind in ("W", "P"):
        S = H.C
    else:
        S = Union([H.C, H.D])
    if args.points:
        pts = [_check_dim(_vec(p, "point"), d, "point") for p in args.points.split(";") if p.strip()]
    else:
        pts = _default_points(S, args.n_points, args.seed)
    if not pts:
        raise UsageError("no sample points (the relevant set is empty); pass --points")
    if fam is None and kind in ("C", "W", "P"):
        fam = PerturbationFamily.constant(H)
        print("no family section: using the unperturbed system as its own family", file=sys.stderr)
    terminal = d.X if d.X is not None else H.D
    if kind == "V":
        rep = check_V((H.C, H.F), terminal, pts, cfg)
    elif kind == "B":
        rep = check_B(H, pts, cfg)
    elif kind == "C":
        rep = check_C(fam, H, pts, cfg)
    else:
        full = check_W_P(fam, (H.C, H.F), terminal, None, pts, cfg)
        rep = type(full)([e for e in full.entries if e.id.startswith(kind)], full.notes)
    summary = rep.summary()
    verdicts = set(summary.values())
    verdict = FAIL if FAIL in verdicts else (INCONCLUSIVE if INCONCLUSIVE in verdicts else "pass")
    if args.json:
        _emit({"verdict": verdict, "points": [p.tolist() for p in pts], **rep.to_json()}, args.out)
    else:
        lines = [f"{cid}: {v}" for cid, v in summary.items()]
        fails = [e for e in rep.entries if e.verdict == FAIL]
        for e in fails[:5]:
            lines.append(f"  {e.id} fails at {_plain(e.point)}: {_plain(e.witness)}")
        if len(fails) > 5:
            lines.append(f"  ... and {len(fails) - 5} more failures (see --json)")
        lines.append(f"verdict: {verdict}")
        _write("\n".join(lines) + "\n", args.out)
    return _expect(verdict, args)


def cmd_closeness(args):
    if len(args.arc) != 2:
        raise UsageError("give exactly two --arc files")
    arcs = []
    for a in args.arc:
        try:
            arcs.append(HybridArc.from_csv(Path(a).read_text()))
        except OSError as e:
            raise UsageError(f"cannot read {a}: {e.strerror}") from None
        except (ValueError, IndexError):
            raise UsageError(f"{a}: not an arc CSV (columns j, t, x1..xn)") from None
    x, y = arcs
    if x.dim != y.dim:
        raise UsageError("arcs have different dimensions")
    m = closeness_margin(x, y, args.tau)
    out = {"tau": args.tau, "margin": m}
    if args.eps is not None:
        out["eps"] = args.eps
        out["close"] = tau_eps_close(x, y, args.tau, args.eps)
    if args.json:
        _emit(out, args.out)
    else:
        text = f"margin: {m!r}\n"
        if args.eps is not None:
            text += f"({args.tau}, {args.eps})-close: {out['close']}\n"
        _write(text, args.out)
    if args.expect is not None and args.eps is not None:
        return _expect("pass" if out["close"] else "fail", args)
    return 0


def cmd_probe(args):
    d = _load(args.system)
    H = d.system
    x0 = _check_dim(_vec(args.x0, "x0"), d)
    sched = _schedule(args)
    cfg = ReachConfig(policy=PROBE_CONFIG.policy.with_(h=args.h), branch_budget=args.budget)
    fam = d.family
    eps = _floats(args.eps, "eps") if args.eps else None
    if args.kind == "osc":
        rho = parse_expr(args.rho, H.dim) if args.rho else (d.rho or parse_expr("1", H.dim))
        rep = osc_probe(H, rho, x0, args.T, args.J, sched, args.seed, cfg)
    elif args.kind == "isc":
        rep = isc_probe(fam, H, x0, args.T, args.J, sched, args.seed, cfg)
    elif args.kind == "inflate":
        rho = parse_expr(args.rho, H.dim) if args.rho else d.rho
        rep = inflation_approx(fam, H, x0, args.T, args.J, sched, args.seed, cfg, eps=eps,
                               rho=rho if fam is not None else None)
    else:
        rep = doubling_approx(fam, H, x0, args.T, args.J, sched, args.seed, cfg, eps=eps)
    verdict = {"consistent": "pass", "inconsistent": "fail"}.get(rep.verdict, rep.verdict)
    if args.json:
        _emit(rep.to_json(), args.out)
    else:
        lines = [f"probe: {rep.kind}", f"gauge: {rep.gauge}",
                 "distances: " + ", ".join(f"{v:.6g}" for v in rep.distances)]
        if rep.hypothesis:
            lines.append(f"hypothesis: {json.dumps(_plain(rep.hypothesis), sort_keys=True)}")
        lines += [f"note: {n}" for n in rep.notes]
        lines.append(f"verdict: {rep.verdict}")
        _write("\n".join(lines) + "\n", args.out)
    return _expect(verdict, args)


def cmd_examples(args):
    if args.action == "list":
        rows = []
        for n in shipped_names():
            d = load_definition(shipped(n))
            rows.append(f"{n}\t{d.name}\t{'family' if d.family is not None else 'system'}")
        rows += [f"(fixture) {n}" for n in sorted(fixtures.FIXTURES)]
        _write("\n".join(rows) + "\n", args.out)
        return 0
    if not args.name:
        raise UsageError("examples dump needs a NAME")
    if args.name in shipped_names():
        doc = json.loads(shipped(args.name).read_text())
    elif args.name in fixtures.FIXTURES:
        doc = fixtures.get(args.name).doc
    else:
        raise UsageError(f"unknown example {args.name!r}")
    if args.normalized:
        from .definitions import parse_definition
        doc = dump_definition(parse_definition(doc))
    _emit(doc, args.out)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="hybridreach", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp, seed=True, expect=False, json_flag=True):
        sp.add_argument("--out", help="write data to this file instead of standard output")
        if seed:
            sp.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
        if json_flag:
            sp.add_argument("--json", action="store_true", help="machine-readable JSON report")
        if expect:
            sp.add_argument("--expect", choices=["pass", "fail"],
                            help="exit 1 unless the verdict is this one")

    s = sub.add_parser("simulate", help="one solution, written as CSV (j, t, x1..xn)")
    s.add_argument("--system", required=True, help="definition file or shipped example name")
    s.add_argument("--x0", required=True, help="initial state, e.g. 1,0")
    s.add_argument("--tau", type=float, help="stop when t + j reaches tau")
    s.add_argument("--T-max", dest="T_max", type=float, default=10.0, help="ordinary-time budget")
    s.add_argument("--J-max", dest="J_max", type=int, default=50, help="jump budget")
    s.add_argument("--h", type=float, default=1e-3, help="RK4 step")
    s.add_argument("--priority", choices=["flow-first", "jump-first"], default="flow-first",
                   help="what to do where both flowing and jumping are possible")
    s.add_argument("--flow-vertex", type=int, default=0, help="vertex of F(x) to follow")
    s.add_argument("--jump-vertex", type=int, default=0, help="vertex of G(x) to jump to")
    common(s, json_flag=False)
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("reach", help="sampled reachable set as CSV (or JSON)")
    r.add_argument("--system", required=True)
    r.add_argument("--x0", action="append", help="initial state; repeat for several")
    r.add_argument("--x0-ball", nargs=2, metavar=("CENTRE", "RADIUS"), help="initial ball")
    r.add_argument("--x0-box", nargs=2, metavar=("LO", "HI"), help="initial box")
    r.add_argument("--T", type=float, help="ordinary time")
    r.add_argument("--J", type=int, default=0, help="jump count (default 0)")
    r.add_argument("--interval", nargs=2, type=float, metavar=("T_LO", "T_HI"),
                   help="union over a time grid of [T_LO, T_HI]")
    r.add_argument("--budget", type=int, default=8, help="solution-tree leaves per initial condition")
    r.add_argument("--samples", type=int, default=16, help="random initial conditions from a ball or box")
    r.add_argument("--grid", type=int, default=21, help="time grid size for --interval")
    r.add_argument("--h", type=float, default=1e-3, help="RK4 step")
    common(r)
    r.set_defaults(func=cmd_reach)

    c = sub.add_parser("check-conditions", help="sampled check of a condition list")
    c.add_argument("--system", required=True)
    c.add_argument("--list", required=True, choices=["B", "C", "V", "W", "P"])
    c.add_argument("--points", help="sample points separated by ';', e.g. '0,0;0,1'")
    c.add_argument("--n-points", type=int, default=20, help="default sample count when --points is absent")
    c.add_argument("--schedule", help="probe radii, comma-separated (default 0.2*2^-k, k=0..6)")
    c.add_argument("--samples", type=int, default=12, help="samples per probe level")
    c.add_argument("--delegate", action="store_true",
                   help="also run the viability checks that B3/B4 delegate to")
    common(c, expect=True)
    c.set_defaults(func=cmd_check)

    k = sub.add_parser("closeness", help="(tau, eps)-closeness of two arc CSV files")
    k.add_argument("--arc", action="append", required=True, help="arc CSV from simulate (give twice)")
    k.add_argument("--tau", type=float, required=True)
    k.add_argument("--eps", type=float, help="also decide (tau, eps)-closeness")
    common(k, seed=False, expect=True)
    k.set_defaults(func=cmd_closeness)

    q = sub.add_parser("probe", help="reachable-set semicontinuity and approximation probes")
    q.add_argument("--kind", required=True, choices=["osc", "isc", "inflate", "double"])
    q.add_argument("--system", required=True)
    q.add_argument("--x0", required=True)
    q.add_argument("--T", type=float, required=True)
    q.add_argument("--J", type=int, default=0)
    q.add_argument("--schedule", help="radii r_k (osc/isc) or eps_k (inflate/double), comma-separated")
    q.add_argument("--deltas", help="perturbation sizes delta_k for osc/isc (default r_k^2)")
    q.add_argument("--eps", help="eps_k for inflate/double (default: the schedule radii)")
    q.add_argument("--rho", help="inflation function for osc (default: the file's rho, else 1)")
    q.add_argument("--samples", type=int, default=12, help="random initial conditions per level")
    q.add_argument("--tol", type=float, help="verdict tolerance (default 1e-2)")
    q.add_argument("--budget", type=int, default=8, help="solution-tree leaves per start")
    q.add_argument("--h", type=float, default=1e-2, help="RK4 step")
    common(q, expect=True)
    q.set_defaults(func=cmd_probe)

    e = sub.add_parser("examples", help="list shipped examples or dump a definition file")
    e.add_argument("action", nargs="?", choices=["list", "dump"], default="list")
    e.add_argument("name", nargs="?")
    e.add_argument("--normalized", action="store_true", help="dump after load (parameters substituted)")
    e.add_argument("--out")
    e.set_defaults(func=cmd_examples)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2
    try:
        return args.func(args)
    except (UsageError, DefinitionError, ExprError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (SimError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    return run(argv)
