"""Numerical solutions of hybrid systems: single arcs, solution trees, arcs to a target,
and the flows-possible classifier."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cones import INCONCLUSIVE, INSIDE, OUTSIDE, ConeConfig, ConeVerdict, bouligand_contains
from .core import HybridArc, HybridSystem, Segment
from .errors import SimError
from .expr import DomainError
from .maps import MapBase, sample_map
from .sets import SetSpec, is_interior, sample_near

FLOW_FIRST, JUMP_FIRST, BRANCH = "flow-first", "jump-first", "branch"


@dataclass(frozen=True)
class SolvePolicy:
    """Selection and stopping rules for the simulator.

    Selections are ("vertex", i), ("weights", (w1, ...)) or ("random", seed).
    """
    flow_selection: tuple = ("vertex", 0)
    jump_selection: tuple = ("vertex", 0)
    priority: str = BRANCH
    h: float = 1e-3
    event_tol: float = 1e-12
    T_max: float = 10.0
    J_max: int = 50
    tau_max: float = float("inf")
    escape: float = 1e8
    set_tol: float = 1e-9
    edge_tol: float = 1e-12
    min_flow: float = 1e-9
    max_stall: int = 50

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("step h must be positive")
        if not self.event_tol > 0:
            raise ValueError("event tolerance must be positive")
        if not 0 <= self.edge_tol <= self.set_tol:
            raise ValueError("edge_tol must lie in [0, set_tol]")
        if self.T_max < 0 or self.J_max < 0 or self.tau_max < 0:
            raise ValueError("budgets must be nonnegative")
        if self.priority not in (FLOW_FIRST, JUMP_FIRST, BRANCH):
            raise ValueError(f"unknown priority {self.priority!r}")
        for sel in (self.flow_selection, self.jump_selection):
            if not (isinstance(sel, tuple) and len(sel) == 2 and sel[0] in ("vertex", "weights", "random")):
                raise ValueError(f"bad selection {sel!r}")

    def with_(self, **kw):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(kw)
        return SolvePolicy(**d)


def _vertices(M: MapBase, x):
    out, seen = [], set()
    for p in M.pieces(x):
        for v in np.asarray(p.V, dtype=float):
            key = (v + 0.0).tobytes()
            if key not in seen:
                seen.add(key)
                out.append(v)
    return out


def _select(vs, sel, rng):
    kind, arg = sel
    if kind == "vertex":
        return vs[min(int(arg), len(vs) - 1)]
    if kind == "weights":
        w = np.asarray(arg, dtype=float)
        if len(w) < len(vs):
            w = np.concatenate([w, np.zeros(len(vs) - len(w))])
        w = w[: len(vs)]
        if w.sum() <= 0:
            w = np.ones(len(vs))
        return (w / w.sum()) @ np.array(vs)
    w = rng.dirichlet(np.ones(len(vs)))
    return w @ np.array(vs)


def _flow_options(vs, sel):
    # the policy's own selection first, then remaining vertices, then the centroid
    opts = [sel]
    if len(vs) > 1:
        first = min(int(sel[1]), len(vs) - 1) if sel[0] == "vertex" else None
        opts += [("vertex", i) for i in range(len(vs)) if i != first]
        if sel != ("weights", tuple([1.0] * len(vs))):
            opts.append(("weights", tuple([1.0] * len(vs))))
    return opts


class _Chooser:
    """Replays a prefix of choices and records new decision points (taking option 0)."""

    def __init__(self, prefix=()):
        self.prefix = list(prefix)
        self.log = []

    def __call__(self, kind, n, t, j, x):
        k = len(self.log)
        c = self.prefix[k] if k < len(self.prefix) else 0
        if c >= n:
            raise SimError("replayed choice out of range")
        self.log.append({"kind": kind, "options": n, "choice": c, "t": t, "j": j, "x": list(map(float, x))})
        return c


def _tol_ladder(lo, hi):
    out, e = [], max(lo, 1e-15)
    while e < hi:
        out.append(e)
        e *= 10
    return out + [hi]


def _rk4(f, x, s):
    k1 = f(x)
    k2 = f(x + 0.5 * s * k1)
    k3 = f(x + 0.5 * s * k2)
    k4 = f(x + s * k3)
    return x + s / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _run(H: HybridSystem, x0, policy: SolvePolicy, seed: int, chooser=None):
    x = np.asarray(x0, dtype=float).copy()
    if len(x) != H.dim:
        raise ValueError(f"initial state has dimension {len(x)}, system has {H.dim}")
    tol = policy.set_tol
    if not H.in_closure_C_or_D(x, tol):
        raise SimError(f"initial state {x.tolist()!r} is outside closure(C) union D")
    rng = np.random.default_rng(seed)
    t, j = 0.0, 0
    segs = [Segment(0, [t], [x.copy()])]
    stop, escape_time = "", None

    def in_C(z):
        return H.C.contains(z, tol)

    def in_D(z):
        return H.D.contains(z, tol)

    edge = [policy.edge_tol]

    def in_C_edge(z):
        # flows are followed with a tighter tolerance than the entry test, so that
        # drifting through the tolerance band does not count as a flow
        return H.C.contains(z, edge[0])

    def finish(reason, complete=False):
        out = [Segment(s.j, np.array(s.ts, dtype=float), np.array(s.xs, dtype=float).reshape(-1, H.dim))
               for s in segs]
        meta = {"seed": seed, "policy": policy.priority}
        if chooser is not None:
            meta["decisions"] = list(chooser.log)
        return HybridArc(out, H.dim, complete, reason, escape_time, meta)

    def budget_left():
        return min(policy.T_max - t, policy.tau_max - t - j)

    flow_sel = None  # selection used in the current flow phase
    stall = 0
    while True:
        if budget_left() < max(policy.event_tol, policy.min_flow):
            return finish("budget")
        # one trial flow step under the current selection
        can_jump = j < policy.J_max and in_D(x) and len(sample_map(H.G, x, max(1, H.G.vertex_count(x)), seed).points) > 0
        if flow_sel is None:
            vs0 = _vertices(H.F, x) if in_C(x) else []
            flow_sel = policy.flow_selection
            if chooser is not None and len(vs0) > 1:
                opts = _flow_options(vs0, policy.flow_selection)
                flow_sel = opts[chooser("flow-selection", len(opts), t, j, x)]
        sel = flow_sel

        def f(z):
            vs = _vertices(H.F, z)
            if not vs:
                raise SimError("empty flow map value")
            return _select(vs, sel, rng)

        s_max = min(policy.h, budget_left())
        s_star, x_new, escaped = 0.0, x, False
        if in_C(x):
            edge[0] = policy.edge_tol if H.C.contains(x, policy.edge_tol) else tol
            try:
                trial = _rk4(f, x, s_max)
                if not np.all(np.isfinite(trial)) or np.linalg.norm(trial) > policy.escape:
                    escaped = True
                elif in_C_edge(trial):
                    s_star, x_new = s_max, trial
                else:
                    lo, hi, xlo = 0.0, s_max, x
                    while hi - lo > policy.event_tol:
                        mid = 0.5 * (lo + hi)
                        xm = _rk4(f, x, mid)
                        if in_C_edge(xm):
                            lo, xlo = mid, xm
                        else:
                            hi = mid
                    s_star, x_new = lo, xlo
            except (DomainError, FloatingPointError, OverflowError):
                escaped = True
            except SimError:
                s_star = 0.0
        if escaped:
            escape_time = t + s_max
            return finish("escape")
        can_flow = s_star >= max(policy.event_tol, policy.min_flow)

        # jump-first: stop the flow where it enters D
        if can_flow and policy.priority == JUMP_FIRST and not in_D(x) and in_D(x_new):
            # bisect against the tightest tolerance the endpoint meets; the loose band
            # alone would trigger every jump about tol/|x'| early
            dtol = next(e for e in _tol_ladder(policy.edge_tol, tol) if H.D.contains(x_new, e))
            lo, hi, xhi = 0.0, s_star, x_new
            while hi - lo > policy.event_tol:
                mid = 0.5 * (lo + hi)
                xm = _rk4(f, x, mid)
                if H.D.contains(xm, dtol):
                    hi, xhi = mid, xm
                else:
                    lo = mid
            s_star, x_new = hi, xhi

        if can_flow and can_jump:
            if policy.priority == FLOW_FIRST:
                do = "flow"
            elif policy.priority == JUMP_FIRST:
                do = "jump"
            elif chooser is None:
                raise SimError(f"flow and jump are both possible at {x.tolist()!r} (t={t}, j={j}); "
                               "use flow-first or jump-first, or solve_tree")
            else:
                do = ("flow", "jump")[chooser("flow-or-jump", 2, t, j, x)]
        elif can_flow:
            do = "flow"
        elif can_jump:
            do = "jump"
        else:
            if in_D(x) and j >= policy.J_max:
                return finish("budget")
            return finish("no continuation found at this resolution")

        if do == "flow":
            stall = stall + 1 if s_star < 1e-3 * policy.h else 0
            if stall > policy.max_stall:
                return finish("stalled: flow steps collapsed at the boundary")
            t += s_star
            x = x_new
            segs[-1].ts.append(t)
            segs[-1].xs.append(x.copy())
            continue

        vals = sample_map(H.G, x, max(1, H.G.vertex_count(x)), seed).points
        vs = [np.asarray(v, dtype=float) for v in vals]
        jsel = policy.jump_selection
        if chooser is not None and len(vs) > 1:
            opts = [jsel] + [("vertex", i) for i in range(len(vs))
                             if not (jsel[0] == "vertex" and min(int(jsel[1]), len(vs) - 1) == i)]
            jsel = opts[chooser("jump-selection", len(opts), t, j, x)]
        y = _select(vs, jsel, rng)
        if not np.all(np.isfinite(y)) or np.linalg.norm(y) > policy.escape:
            escape_time = t
            return finish("escape")
        j += 1
        x = np.asarray(y, dtype=float)
        segs.append(Segment(j, [t], [x.copy()]))
        flow_sel, stall = None, 0


def solve(H: HybridSystem, x0, policy: SolvePolicy = SolvePolicy(priority=FLOW_FIRST), seed: int = 0) -> HybridArc:
    """One solution from x0 under a fixed selection policy."""
    # under "branch" priority an error is raised only if a flow/jump choice comes up
    return _run(H, x0, policy, seed)


@dataclass
class SolutionTree:
    arcs: list
    branches: list = field(default_factory=list)
    exhausted: bool = True

    def __len__(self):
        return len(self.arcs)

    def to_json(self):
        return {"leaves": len(self.arcs), "exhausted": self.exhausted,
                "arcs": [{"domain": a.domain.to_json(), "stop": a.stop_reason, "decisions": b}
                         for a, b in zip(self.arcs, self.branches)]}


def solve_tree(H: HybridSystem, x0, policy: SolvePolicy = SolvePolicy(), branch_budget: int = 16,
               seed: int = 0) -> SolutionTree:
    """Depth-first enumeration of decision sequences, at most branch_budget leaves.

    Leaves come out in lexicographic order of their choice sequences, so the
    first leaf is the arc that solve would return with flow before jump.
    """
    if branch_budget < 1:
        raise ValueError("branch_budget must be at least 1")
    arcs, branches = [], []
    prefix = []
    while True:
        ch = _Chooser(prefix)
        arc = _run(H, x0, policy, seed, ch)
        arcs.append(arc)
        branches.append(ch.log)
        # next prefix: bump the deepest decision that still has untried options
        log = ch.log
        k = len(log) - 1
        while k >= 0 and log[k]["choice"] + 1 >= log[k]["options"]:
            k -= 1
        if k < 0:
            return SolutionTree(arcs, branches, True)
        if len(arcs) >= branch_budget:
            return SolutionTree(arcs, branches, False)
        prefix = [d["choice"] for d in log[:k]] + [log[k]["choice"] + 1]


def solve_to_target(H: HybridSystem, x0, X: SetSpec, policy: SolvePolicy = SolvePolicy(),
                    branch_budget: int = 16, seed: int = 0, at: str = "first", tol: float = 1e-9):
    """Tree arcs cut at their first sample in X (at="all": one cut per sample in X)."""
    if at not in ("first", "all"):
        raise ValueError("at must be 'first' or 'all'")
    out = []
    for arc in solve_tree(H, x0, policy, branch_budget, seed).arcs:
        for t, j, x in arc.samples():
            if X.contains(x, tol):
                cut = arc.truncate(t, j)
                cut.stop_reason = "reached target"
                out.append(cut)
                if at == "first":
                    break
    return out


def flows_possible(H: HybridSystem, x, cfg: ConeConfig = ConeConfig(), n_values: int = 8,
                   local_radius: float = 1e-2, n_local: int = 6) -> ConeVerdict:
    """Classify x against the set of points from which a nontrivial flow starts."""
    x = np.asarray(x, dtype=float)
    if not H.C.contains(x, cfg.tol):
        return ConeVerdict(OUTSIDE, "membership", {"reason": "x not in C"})
    if is_interior(H.C, x):
        return ConeVerdict(INSIDE, "interior", notes="ball probe stays in C")
    vals = sample_map(H.F, x, max(n_values, H.F.vertex_count(x)), cfg.seed).points
    if len(vals) == 0:
        return ConeVerdict(OUTSIDE, "empty-map", {"reason": "F(x) is empty"})
    verdicts = [bouligand_contains(H.C, x, v, cfg) for v in vals]
    hit = next((k for k, vd in enumerate(verdicts) if vd.inside), None)
    if hit is None:
        if all(vd.outside for vd in verdicts):
            return ConeVerdict(OUTSIDE, "cones", {"values": vals.tolist(),
                                                  "reason": "every sampled F value leaves the tangent cone"})
        return ConeVerdict(INCONCLUSIVE, "cones", {"values": vals.tolist()})
    # local sufficiency: nearby boundary points also admit a tangent flow direction
    rng = np.random.default_rng(cfg.seed)
    near = sample_near(H.C, x, local_radius, n_local, rng, boundary=True)
    for xp in near:
        if not H.C.contains(xp, cfg.tol) or is_interior(H.C, xp):
            continue
        vp = sample_map(H.F, xp, max(n_values, H.F.vertex_count(xp)), cfg.seed).points
        if not any(bouligand_contains(H.C, xp, v, cfg).inside for v in vp):
            return ConeVerdict(INCONCLUSIVE, "cones", {"value": vals[hit].tolist(), "x_prime": xp.tolist()},
                               "a nearby boundary point has no sampled tangent flow direction")
    return ConeVerdict(INSIDE, "cones", {"value": vals[hit].tolist(), "checked_nearby": len(near)})


def flow_trial(H: HybridSystem, x, lengths=(1e-3, 1e-4, 1e-5), steps: int = 10, edge_tol: float = 1e-12) -> bool:
    """Does some constant selection of F (a vertex or the centroid) keep a short RK4 flow in C?

    Shorter trials catch flows that leave C soon after starting; the shortest length
    sets the resolution (a drift of order length^2 must still exceed edge_tol).
    """
    x = np.asarray(x, dtype=float)
    if not H.C.contains(x, 1e-9):
        return False
    vs = _vertices(H.F, x)
    if not vs:
        return False
    sels = [("vertex", i) for i in range(len(vs))] + ([("weights", tuple([1.0] * len(vs)))] if len(vs) > 1 else [])
    rng = np.random.default_rng(0)
    return any(_trial(H, x, sel, L / steps, steps, edge_tol, rng) for L in lengths for sel in sels)


def _trial(H, x, sel, s, steps, edge_tol, rng):
    def f(z):
        return _select(_vertices(H.F, z), sel, rng)
    z = x
    try:
        for _ in range(steps):
            z = _rk4(f, z, s)
            if not H.C.contains(z, edge_tol):
                return False
    except (DomainError, SimError, ValueError):
        return False
    return True


def classify_flow_point(H: HybridSystem, x, cfg: ConeConfig = ConeConfig()) -> ConeVerdict:
    """flows_possible, with a short simulated flow deciding the cases the cone rules leave open."""
    v = flows_possible(H, x, cfg)
    if v.verdict != INCONCLUSIVE:
        return v
    ok = flow_trial(H, x)
    return ConeVerdict(INSIDE if ok else OUTSIDE, "simulation", {"cones": v.witness},
                       "cone rules inconclusive; decided by a short simulated flow")


def validate_solution(H: HybridSystem, arc: HybridArc, set_tol: float = 1e-6, rate_tol: float = 1e-3,
                      jump_tol: float = 1e-6):
    """Check an arc against H: flow samples in C, chord slopes near F at the chord
    midpoint, jumps from D into G.  Returns (ok, problems)."""
    problems = []
    for s in arc.segments:
        ts, xs = np.asarray(s.ts), np.asarray(s.xs)
        if len(ts) > 1:
            for t, x in zip(ts, xs):
                if not H.C.contains(x, set_tol):
                    problems.append({"j": s.j, "t": float(t), "reason": "flow sample outside C"})
                    break
            for k in range(len(ts) - 1):
                dt = ts[k + 1] - ts[k]
                if dt <= 0:
                    continue
                slope = (xs[k + 1] - xs[k]) / dt
                mid = 0.5 * (xs[k] + xs[k + 1])
                try:
                    g = H.F.distance(slope, mid)
                except DomainError:
                    g = np.inf
                if g > rate_tol * max(1.0, float(np.linalg.norm(slope))):
                    problems.append({"j": s.j, "t": float(ts[k]), "gap": g, "reason": "slope not in F"})
                    break
    for a, b in zip(arc.segments, arc.segments[1:]):
        xe, xn = np.asarray(a.xs[-1]), np.asarray(b.xs[0])
        if not H.D.contains(xe, set_tol):
            problems.append({"j": a.j, "t": a.t_hi, "reason": "jump from outside D"})
        elif H.G.distance(xn, xe) > jump_tol:
            problems.append({"j": a.j, "t": a.t_hi, "reason": "jump value not in G"})
    return not problems, problems


def replay(H: HybridSystem, x0, policy: SolvePolicy, seed: int, decisions) -> HybridArc:
    """Re-run the solve_tree leaf identified by its decision list (dicts or bare choices)."""
    choices = [d["choice"] if isinstance(d, dict) else int(d) for d in decisions]
    return _run(H, x0, policy, seed, _Chooser(choices))
