"""Sampled reachable sets, distances between them, and probes of how they
depend on initial conditions, hybrid time and perturbations."""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .closeness import settles
from .core import HybridSystem, PerturbationFamily, rho_inflate
from .schedule import ProbeSchedule
from .sets import Ball, Box, SetSpec, Union, sample_near
from .simulate import SolvePolicy, classify_flow_point, replay as _replay, solve_tree
from .maps import sample_map, structured_near


@dataclass(frozen=True)
class ReachConfig:
    """Resolution of a sampled reachable set.

    ``policy`` is the base simulator policy; its T_max and J_max are replaced by
    the query's horizon.  ``n_samples`` random initial conditions are drawn from a
    Ball or Box (after its centre and axis points), ``n_grid`` times from an interval.
    """
    policy: SolvePolicy = SolvePolicy(priority="branch")
    branch_budget: int = 8
    n_samples: int = 16
    n_grid: int = 21
    ttol: float = 1e-9
    merge_tol: float = 1e-9

    def __post_init__(self):
        if self.branch_budget < 1 or self.n_samples < 0 or self.n_grid < 2:
            raise ValueError("branch_budget >= 1, n_samples >= 0 and n_grid >= 2 required")

    def to_json(self):
        return {"h": self.policy.h, "priority": self.policy.priority, "branch_budget": self.branch_budget,
                "n_samples": self.n_samples, "n_grid": self.n_grid}


@dataclass
class ReachCloud:
    """Point cloud of states x(T, J) with the provenance needed to re-simulate each one.

    meta[i] holds the source initial condition, the hybrid time and the decision
    sequence of the solve_tree leaf that produced points[i].
    """
    points: np.ndarray
    meta: list
    query: dict
    dim: int
    partial: bool = False
    notes: list = field(default_factory=list)
    policy: SolvePolicy | None = None
    seed: int = 0
    system: HybridSystem | None = field(default=None, repr=False, compare=False)

    def __len__(self):
        return len(self.points)

    @property
    def empty(self):
        return len(self.points) == 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        n = self.dim
        cols = [f"x{i + 1}" for i in range(n)] + ["T", "J"] + [f"source_x{i + 1}" for i in range(n)] + ["branch"]
        buf.write(",".join(cols) + "\n")
        for p, m in zip(self.points, self.meta):
            row = [repr(float(v)) for v in p] + [repr(float(m["T"])), str(m["J"])]
            row += [repr(float(v)) for v in m["source"]] + [":".join(map(str, m["decisions"])) or "-"]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    def to_json(self):
        return {"query": self.query, "partial": self.partial, "notes": list(self.notes),
                "points": [list(map(float, p)) for p in self.points], "meta": self.meta}

    def replay(self, H: HybridSystem | None = None, tol: float = 1e-9):
        """Re-simulate every point from its source and decisions; (ok, worst error)."""
        H = H if H is not None else self.system
        if H is None:
            raise ValueError("no system to replay against")
        worst = 0.0
        for p, m in zip(self.points, self.meta):
            pol = self.policy.with_(T_max=m["horizon"][0], J_max=m["horizon"][1])
            arc = _replay(H, m["source"], pol, self.seed, m["decisions"])
            if not arc.in_domain(m["T"], m["J"], 1e-9):
                return False, np.inf
            worst = max(worst, float(np.linalg.norm(arc(m["T"], m["J"]) - p)))
        return worst <= tol, worst


def initial_points(x0_set, dim: int, n: int = 16, seed: int = 0):
    """Concrete initial conditions for a point, a list of points, a Ball or a Box.

    Random draws come from one seeded stream, so a larger n only adds points.
    """
    if isinstance(x0_set, (Ball, Box)):
        if x0_set.dim != dim:
            raise ValueError(f"initial set has dimension {x0_set.dim}, system has {dim}")
        if isinstance(x0_set, Ball):
            c, r = x0_set.center, x0_set.radius
            pts = [c] + [c + s * r * e for e in np.eye(dim) for s in (1, -1)]
        else:
            lo, hi = x0_set.lo, x0_set.hi
            if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
                raise ValueError("initial box must be bounded")
            c = 0.5 * (lo + hi)
            pts = [c] + [np.where(np.array([(k >> i) & 1 for i in range(dim)]) == 1, hi, lo)
                         for k in range(2 ** dim)] if dim <= 6 else [c, lo, hi]
        rng = np.random.default_rng(seed)
        for _ in range(n):
            if isinstance(x0_set, Ball):
                u = rng.normal(size=dim)
                u /= max(np.linalg.norm(u), 1e-300)
                pts.append(c + r * rng.uniform() ** (1.0 / dim) * u)
            else:
                pts.append(lo + (hi - lo) * rng.uniform(size=dim))
        return _unique(pts)
    if isinstance(x0_set, SetSpec):
        raise ValueError("initial sets must be a point, a list of points, a Ball or a Box")
    a = np.asarray(x0_set, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != dim:
        raise ValueError(f"initial points must have dimension {dim}")
    return _unique(list(a))


def _unique(pts):
    out = []
    for p in pts:
        p = np.asarray(p, dtype=float)
        if not any(np.array_equal(p, q) for q in out):
            out.append(p)
    return out


def _collect(H: HybridSystem, starts, times, J: int, cfg: ReachConfig, seed: int, query: dict) -> ReachCloud:
    """Cloud over starts; ``times`` is one list shared by all starts or, when None,
    each start is a pair (x0, times)."""
    if J < 0 or int(J) != J:
        raise ValueError("J must be a nonnegative integer")
    jobs = [(s, times) for s in starts] if times is not None else list(starts)
    pts, meta, notes, partial = [], [], [], False
    skipped = 0
    policy = cfg.policy
    for i, (x0, ts) in enumerate(jobs):
        ts = sorted(set(float(t) for t in ts))
        if ts[0] < 0:
            raise ValueError("T must be nonnegative")
        horizon = (ts[-1], int(J))
        policy = cfg.policy.with_(T_max=horizon[0], J_max=horizon[1], tau_max=float("inf"))
        if not H.in_closure_C_or_D(x0, policy.set_tol):
            skipped += 1
            continue
        tree = solve_tree(H, x0, policy, cfg.branch_budget, seed)
        if not tree.exhausted:
            partial = True
        for b, (arc, log) in enumerate(zip(tree.arcs, tree.branches)):
            if arc.stop_reason.startswith("stalled"):
                partial = True
            for T in ts:
                if arc.in_domain(T, J, cfg.ttol):
                    pts.append(arc(T, J))
                    meta.append({"source": list(map(float, x0)), "start": i, "branch": b, "T": T, "J": int(J),
                                 "decisions": [d["choice"] for d in log], "horizon": list(horizon)})
    if skipped:
        notes.append(f"{skipped} initial condition(s) outside closure(C) union D skipped")
    if partial:
        notes.append("branch budget exhausted or a flow stalled before the horizon; cloud may be partial")
    P = np.array(pts, dtype=float).reshape(-1, H.dim)
    keep = _merge(P, cfg.merge_tol)
    return ReachCloud(P[keep], [meta[k] for k in keep], query, H.dim, partial, notes, cfg.policy, seed, H)


def _merge(P, tol):
    """Indices of points kept after dropping later duplicates within tol."""
    if len(P) == 0:
        return []
    gone = set()
    tree = cKDTree(P)
    keep = []
    for i in range(len(P)):
        if i in gone:
            continue
        keep.append(i)
        gone.update(k for k in tree.query_ball_point(P[i], tol) if k > i)
    return keep


def reach(H: HybridSystem, x0_set, T: float, J: int, cfg: ReachConfig = ReachConfig(), seed: int = 0) -> ReachCloud:
    """Values x(T, J) over sampled initial conditions and solve_tree leaves whose
    domain contains (T, J).  An empty cloud is a valid answer."""
    if T < 0 or J < 0:
        raise ValueError("T and J must be nonnegative")
    starts = initial_points(x0_set, H.dim, cfg.n_samples, seed)
    return _collect(H, starts, [T], J, cfg, seed, {"x0": _describe(x0_set), "T": float(T), "J": int(J)})


def reach_interval(H: HybridSystem, x0_set, T_lo: float, T_hi: float, J: int,
                   cfg: ReachConfig = ReachConfig(), seed: int = 0) -> ReachCloud:
    """Union of reach over an n_grid time grid of [T_lo, T_hi] (endpoints included) at fixed J."""
    if not 0 <= T_lo <= T_hi:
        raise ValueError("need 0 <= T_lo <= T_hi")
    starts = initial_points(x0_set, H.dim, cfg.n_samples, seed)
    times = np.linspace(T_lo, T_hi, cfg.n_grid) if T_hi > T_lo else [T_lo]
    return _collect(H, starts, times, J, cfg, seed,
                    {"x0": _describe(x0_set), "T": [float(T_lo), float(T_hi)], "J": int(J)})


def _describe(x0_set):
    if isinstance(x0_set, SetSpec):
        return x0_set.to_json()
    return np.asarray(x0_set, dtype=float).tolist()


def merge_clouds(clouds, tol: float = 1e-9) -> ReachCloud:
    clouds = list(clouds)
    if not clouds:
        raise ValueError("nothing to merge")
    P = np.vstack([c.points for c in clouds]) if clouds else np.zeros((0, 0))
    meta = [m for c in clouds for m in c.meta]
    keep = _merge(P, tol)
    c0 = clouds[0]
    return ReachCloud(P[keep], [meta[k] for k in keep], {"union": [c.query for c in clouds]}, c0.dim,
                      any(c.partial for c in clouds), sorted({n for c in clouds for n in c.notes}),
                      c0.policy, c0.seed, c0.system)


# coarser step for the probes, which simulate many starts per level
PROBE_CONFIG = ReachConfig(policy=SolvePolicy(priority="branch", h=1e-2))


# distances

def _array(A):
    if isinstance(A, ReachCloud):
        return A.points
    if len(A) == 0:
        return np.zeros((0, 1))
    return np.asarray(A, dtype=float).reshape(len(A), -1)


def directed(A, B) -> float:
    """sup over a in A of dist(a, B); 0 for empty A, inf for empty B."""
    A, B = _array(A), _array(B)
    if len(A) == 0:
        return 0.0
    if len(B) == 0:
        return np.inf
    d, _ = cKDTree(B).query(A)
    return float(np.max(d))


def hausdorff(A, B) -> float:
    """Hausdorff distance between point sets; inf when either one is empty."""
    if len(_array(A)) == 0 or len(_array(B)) == 0:
        return np.inf
    return max(directed(A, B), directed(B, A))


# probes

@dataclass
class ProbeReport:
    kind: str
    levels: list = field(default_factory=list)
    distances: list = field(default_factory=list)
    consistent: bool | None = None
    hypothesis: dict = field(default_factory=dict)
    gauge: str = ""
    notes: list = field(default_factory=list)
    nominal: ReachCloud | None = field(default=None, repr=False)
    clouds: list = field(default_factory=list, repr=False)

    @property
    def verdict(self):
        if self.consistent is None:
            return "not-applicable"
        return "consistent" if self.consistent else "inconsistent"

    @property
    def nonincreasing(self):
        d = self.distances
        return all(b <= a * 1.1 + 1e-12 for a, b in zip(d, d[1:]))

    def to_json(self):
        def num(v):
            return v if np.isfinite(v) else ("inf" if v > 0 else "-inf")
        return {"kind": self.kind, "verdict": self.verdict, "distances": [num(v) for v in self.distances],
                "levels": self.levels, "hypothesis": self.hypothesis, "gauge": self.gauge,
                "notes": self.notes, "nominal": None if self.nominal is None else self.nominal.to_json()["points"]}


def _near_starts(Hs: HybridSystem, x0, r: float, n: int, seed, k: int):
    """x0 (when admissible) plus structured and random points of (x0 + r B) cap (C u D)."""
    x0 = np.asarray(x0, dtype=float)
    S = Union([Hs.C, Hs.D])
    pts = []
    if Hs.in_closure_C_or_D(x0, 1e-9):
        pts.append(x0)
    if r > 0:
        rng = np.random.default_rng([seed, k])
        for p in structured_near(S, x0, r) + sample_near(S, x0, r, n, rng):
            if np.linalg.norm(p - x0) <= r * (1 + 1e-12):
                pts.append(p)
    return _unique(pts)


def _joint_starts(Hs: HybridSystem, x0, T: float, r: float, n: int, seed, k: int):
    """Pairs (x0', [T' ...]) sampling the ball of radius r around (x0, T) in state-time
    space: each admissible x0' gets T' = T and T +- sqrt(r^2 - |x0' - x0|^2)."""
    out = []
    for p in _near_starts(Hs, x0, r, n, seed, k):
        s = np.sqrt(max(r * r - float(np.sum((p - np.asarray(x0, dtype=float)) ** 2)), 0.0))
        out.append((p, sorted({max(0.0, T - s), float(T), T + s})))
    return out


def _nominal(H, x0, T, J, cfg, seed):
    return reach(H, x0, T, J, cfg, seed)


def _family(fam, H):
    if fam is None:
        return PerturbationFamily.constant(H)
    return fam


def osc_probe(H: HybridSystem, rho, x0, T: float, J: int, schedule: ProbeSchedule = ProbeSchedule(),
              seed: int = 0, cfg: ReachConfig = PROBE_CONFIG) -> ProbeReport:
    """Outer limit of perturbed reach sets: at each level (r_k, delta_k) the cloud of
    H^{delta_k rho} from sampled (x0', T') in (x0, T) + r_k B is compared with the
    nominal cloud by the directed distance perturbed -> nominal."""
    nom = _nominal(H, x0, T, J, cfg, seed)
    if nom.empty:
        raise ValueError("nominal reach set is empty")
    rep = ProbeReport("osc", nominal=nom, gauge="(x0', T') within r_k of (x0, T); perturbation delta_k * rho")
    for k, (r, d) in enumerate(schedule.levels()):
        Hd = rho_inflate(H, rho, d, seed=seed) if d > 0 else H
        jobs = _joint_starts(Hd, x0, T, r, schedule.samples, seed, k)
        cloud = _collect(Hd, jobs, None, J, cfg, seed, {"x0": list(map(float, x0)), "T": float(T), "J": J,
                                                        "radius": r})
        dist = directed(cloud, nom)
        bound = float(np.max(np.linalg.norm(cloud.points, axis=1))) if len(cloud) else 0.0
        rep.distances.append(dist)
        rep.levels.append({"radius": r, "delta": d, "starts": len(jobs), "points": len(cloud),
                           "directed": dist, "max_norm": bound, "partial": cloud.partial})
        rep.clouds.append(cloud)
    rep.consistent = settles(rep.distances, schedule.tol)
    return rep


def _witnessed_flow(H, x0, T, J, cfg, seed, eta):
    """Nominal reach points, each flagged by whether some solution through it flows
    on past T at index J and does not arrive at (T, J) by a jump at T."""
    pol = cfg.policy.with_(T_max=T + eta, J_max=J, tau_max=float("inf"))
    rows = []
    for arc in solve_tree(H, x0, pol, cfg.branch_budget, seed).arcs:
        if not arc.in_domain(T, J, cfg.ttol):
            continue
        jumped_at_T = J > 0 and arc.segments[J].t_lo >= T - 1e-9
        flows_past = arc.in_domain(T + eta, J, 0.0)
        rows.append((arc(T, J), flows_past and not jumped_at_T, arc))
    return rows


def isc_probe(fam, H: HybridSystem, x0, T: float, J: int, schedule: ProbeSchedule = ProbeSchedule(),
              seed: int = 0, cfg: ReachConfig = PROBE_CONFIG, eta: float = 1e-3) -> ProbeReport:
    """Inner limit of perturbed reach sets.  The hypothesis (every nominal point is
    reached by a solution that neither jumps nor ends at T) is checked first; then for
    every sampled (x0', T') within r_k of (x0, T) the nominal cloud is compared with
    the cloud of H_{delta_k} by the directed distance nominal -> perturbed.  The level
    value is the worst over samples; an empty perturbed cloud gives inf."""
    fam = _family(fam, H)
    nom = _nominal(H, x0, T, J, cfg, seed)
    rows = _witnessed_flow(H, x0, T, J, cfg, seed, eta)
    good = [p for p, ok, _ in rows if ok]
    unresolved = [p for p in nom.points if not any(np.linalg.norm(p - q) <= 1e-6 for q in good)]
    rep = ProbeReport("isc", nominal=nom, gauge="(x0', T') within r_k of (x0, T); H_delta_k from the family")
    rep.hypothesis = {"holds": not unresolved, "checked_points": len(nom), "eta": eta,
                      "failing_points": [list(map(float, p)) for p in unresolved]}
    if unresolved:
        rep.notes.append("hypothesis fails: some reach points are only attained at a jump or terminal time T")
    for k, (r, d) in enumerate(schedule.levels()):
        Hd = fam(d)
        jobs = _joint_starts(Hd, x0, T, r, schedule.samples, seed, k)
        worst, empties, clouds = 0.0, [], []
        for s, times in jobs:
            c = _collect(Hd, [s], times, J, cfg, seed, {"x0": list(map(float, s)), "T": times, "J": J})
            clouds.append(c)
            for Tp in times:
                # one cloud per (x0', T'); the inner limit must hold along every such sequence
                sel = np.array([m["T"] == Tp for m in c.meta], dtype=bool)
                pts = c.points[sel] if len(c) else c.points
                dist = directed(nom.points, pts)
                if len(pts) == 0 and not nom.empty:
                    empties.append({"x0": list(map(float, s)), "T": Tp})
                worst = max(worst, dist)
        rep.distances.append(worst)
        rep.levels.append({"radius": r, "delta": d, "starts": len(jobs), "directed": worst, "empty": empties})
        rep.clouds.append(merge_clouds(clouds))
        if empties:
            ex = next((e for e in empties if e["T"] == T), empties[0])
            rep.notes.append(f"level {k}: {len(empties)} empty perturbed reach set(s), e.g. from "
                             f"{ex['x0']} at T={ex['T']:.6g}")
    rep.consistent = settles(rep.distances, schedule.tol)
    return rep


def _eps_levels(schedule, eps, delta_of):
    eps = list(schedule.radii if eps is None else eps)
    if delta_of is None:
        dels = [e * e for e in eps]
    else:
        dels = [float(delta_of(e)) for e in eps]
    return eps, dels


def inflation_approx(fam, H: HybridSystem, x0, T: float, J: int, schedule: ProbeSchedule = ProbeSchedule(),
                     seed: int = 0, cfg: ReachConfig = PROBE_CONFIG, eps=None, gauge=None, delta_of=None,
                     rho=None) -> ProbeReport:
    """Reach sets of H_delta over [max(0, T - eps), T + eps] at J, from initial conditions
    within gauge(eps) of x0, compared with the nominal reach set by Hausdorff distance.

    Defaults: eps_k = schedule radii, delta_k = eps_k^2, gauge(eps) = eps.  With ``rho``
    given, domination of the family by the rho-perturbation is sampled and reported.
    """
    fam = _family(fam, H)
    gauge = gauge or (lambda e: e)
    eps, dels = _eps_levels(schedule, eps, delta_of)
    nom = _nominal(H, x0, T, J, cfg, seed)
    rep = ProbeReport("inflate", nominal=nom,
                      gauge="x0' within gauge(eps) of x0, delta = " + ("eps^2" if delta_of is None else "delta_of(eps)"))
    rep.hypothesis = {"nominal_nonempty": not nom.empty}
    if rho is not None:
        rep.hypothesis["dominated"] = _dominated(fam, H, rho, dels, x0, eps[0], seed)
    else:
        rep.notes.append("domination by a rho-perturbation not checked; two-sided convergence is not claimed")
    for k, (e, d) in enumerate(zip(eps, dels)):
        Hd = fam(d)
        g = float(gauge(e))
        starts = _near_starts(Hd, x0, g, schedule.samples, seed, k)
        lo, hi = max(0.0, T - e), T + e
        times = np.linspace(lo, hi, cfg.n_grid) if hi > lo else [lo]
        cloud = _collect(Hd, starts, times, J, cfg, seed, {"x0": list(map(float, x0)), "T": [lo, hi], "J": J})
        dist = hausdorff(cloud, nom)
        rep.distances.append(dist)
        rep.levels.append({"eps": e, "delta": d, "gauge": g, "starts_nonempty": bool(starts),
                           "starts": len(starts), "points": len(cloud), "hausdorff": dist})
        rep.clouds.append(cloud)
        if not starts and not nom.empty:
            rep.notes.append(f"level {k}: no admissible initial condition within {g:.3g} of x0")
    rep.consistent = settles(rep.distances, schedule.tol)
    return rep


def _dominated(fam, H, rho, dels, x0, r, seed):
    from .core import domination_check
    pts = _near_starts(H, x0, r, 8, seed, 0)
    res = domination_check(fam, H, rho, [d for d in dels if 0 < d < 1], pts, seed=seed)
    return res.summary()


def jumps_land_in_flow_set(H: HybridSystem, centers, n: int = 50, radius: float = 1.0, seed: int = 0):
    """Sampled test of G(D) within the flows-possible set: n points of D near the
    given centres, every sampled value of G there classified."""
    if H.D.is_empty():
        return {"holds": True, "samples": 0, "vacuous": True, "violations": []}
    rng = np.random.default_rng(seed)
    pts = []
    for c in centers:
        for p in structured_near(H.D, c, radius):
            pts.append(p)
    i = 0
    while len(pts) < n and i < 4 * n:
        c = centers[i % len(centers)]
        pts += sample_near(H.D, c, radius, 4, rng)[1:]
        i += 1
    pts = _unique(pts)[:n]
    bad = []
    for x in pts:
        for y in sample_map(H.G, x, max(2, H.G.vertex_count(x)), seed).points:
            if not classify_flow_point(H, y).inside:
                bad.append({"x": list(map(float, x)), "g": list(map(float, y))})
    return {"holds": not bad and bool(pts), "samples": len(pts), "vacuous": not pts, "violations": bad[:10]}


def doubling_approx(fam, H: HybridSystem, x0, T: float, J: int, schedule: ProbeSchedule = ProbeSchedule(),
                    seed: int = 0, cfg: ReachConfig = PROBE_CONFIG, eps=None, gauge=None, delta_of=None,
                    n_hyp: int = 50) -> ProbeReport:
    """Two-time version of inflation_approx: S- at max(0, T - eps) and S+ at T + eps,
    both from initial conditions within gauge(eps) of x0."""
    fam = _family(fam, H)
    gauge = gauge or (lambda e: e)
    eps, dels = _eps_levels(schedule, eps, delta_of)
    x0 = np.asarray(x0, dtype=float)
    rep = ProbeReport("double", gauge="x0+-, within gauge(eps) of x0, delta = "
                      + ("eps^2" if delta_of is None else "delta_of(eps)"))
    start_ok = T + J > 0 or (H.C.contains(x0, 1e-9) and classify_flow_point(H, x0).inside)
    if not start_ok:
        rep.hypothesis = {"T+J>0 or x0 in C~": False}
        rep.notes.append("not applicable: T + J = 0 and no flow is possible from x0")
        return rep
    nom = _nominal(H, x0, T, J, cfg, seed)
    rep.nominal = nom
    centers = [x0] + [np.asarray(p) for p in nom.points[:5]]
    hyp = jumps_land_in_flow_set(H, centers, n_hyp, 1.0, seed)
    rep.hypothesis = {"T+J>0 or x0 in C~": True, "G(D) in C~": hyp}
    if not hyp["holds"] and not hyp["vacuous"]:
        rep.notes.append("warning: sampled G(D) leaves the flows-possible set; the two-time limit may fail")
    for k, (e, d) in enumerate(zip(eps, dels)):
        Hd = fam(d)
        g = float(gauge(e))
        starts = _near_starts(Hd, x0, g, schedule.samples, seed, k)
        q = {"x0": x0.tolist(), "J": J}
        lo = _collect(Hd, starts, [max(0.0, T - e)], J, cfg, seed, dict(q, T=max(0.0, T - e)))
        hi = _collect(Hd, starts, [T + e], J, cfg, seed, dict(q, T=T + e))
        both = merge_clouds([lo, hi])
        dist = hausdorff(both, nom)
        rep.distances.append(dist)
        rep.levels.append({"eps": e, "delta": d, "gauge": g, "times": [max(0.0, T - e), T + e],
                           "minus": len(lo), "plus": len(hi), "hausdorff": dist})
        rep.clouds.append(both)
    rep.consistent = settles(rep.distances, schedule.tol)
    return rep
