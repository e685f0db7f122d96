"""Sampled checkers for the sufficient conditions of inner well-posedness and the
viability conditions behind them, plus empirical inner well-posedness probes.

Every check works on finitely many sample points and a finite schedule; a fail
always carries a concrete witness, a pass is evidence only.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .closeness import closeness_margin, point_hausdorff, settles
from .cones import INSIDE, OUTSIDE, ConeConfig, bouligand_contains, dm_contains, inner_sc_probe
from .core import HybridArc, HybridSystem, PerturbationFamily, _osc_probe_map
from .expr import DomainError
from .maps import MapBase, MapSpec, sample_map, structured_near
from .report import FAIL, INCONCLUSIVE, PASS, STRUCTURAL, VACUOUS, ConditionReport
from .schedule import ProbeSchedule
from .sets import Intersection, SetSpec, Union, distance_est, is_interior, sample_near
from .simulate import SolvePolicy, classify_flow_point, solve_tree, validate_solution


@dataclass(frozen=True)
class CheckConfig:
    cone: ConeConfig = ConeConfig()
    radii: tuple = (0.1, 0.05, 0.01)
    n_near: int = 8
    n_values: int = 6
    L_max: float = 1e3
    lip_pairs: int = 500
    lip_radius: float = 0.1
    schedule: ProbeSchedule = ProbeSchedule()
    # perturbation checks use the first levels of the schedule as their delta grid;
    # below that the inward margins of typical families drop under the cone resolution
    pert_levels: int = 3
    tol: float = 1e-6
    seed: int = 0
    delegate: bool = False

    def deltas(self):
        return tuple(self.schedule.deltas[: self.pert_levels])


class Restricted(MapBase):
    """M with values intersected with a set."""

    def __init__(self, M: MapBase, S: SetSpec):
        self.M, self.restrict_to = M, S
        self.dim, self.out_dim = M.dim, M.out_dim

    def pieces(self, x):
        return self.M.pieces(x)


class FlowOrJumpSet(SetSpec):
    """C~ union D, with C~ decided pointwise by classify_flow_point."""

    def __init__(self, H: HybridSystem, cfg: ConeConfig):
        self.H, self.cfg = H, cfg
        self.dim = H.dim
        self._cache = {}

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        if self.H.D.contains(x, tol):
            return True
        key = x.tobytes()
        if key not in self._cache:
            self._cache[key] = classify_flow_point(self.H, x, self.cfg).inside
        return self._cache[key]


def _rng(cfg, *salt):
    return np.random.default_rng([cfg.seed, *salt])


def near_points(S: SetSpec, x, r, n, rng, boundary=False):
    """Deterministic offsets plus random samples of (x + r B) cap S (or its boundary)."""
    if S.is_empty():
        return []
    pts = structured_near(S, x, r) + sample_near(S, x, r, n, rng, boundary=boundary)
    out = []
    for p in pts:
        if np.linalg.norm(p - x) <= r * (1 + 1e-12) and not any(np.array_equal(p, q) for q in out):
            out.append(p)
    if boundary:
        out = [p for p in out if S.contains(p) and not is_interior(S, p)]
    return out


def on_boundary(S: SetSpec, x) -> bool:
    return S.contains(x) and not is_interior(S, x)


def dm_ok(S: SetSpec, x, v, cfg) -> bool:
    """dm_contains, with a second numeric pass at finer neighbourhoods of v when the
    first pass says outside numerically.  The finest radius, 1e-4 |v|, matches the
    analytic margin, so exact ties still come out as outside."""
    r = dm_contains(S, x, v, cfg.cone)
    if r.inside:
        return True
    if r.path != "numeric":
        return False
    fine = replace(cfg.cone, dm_radii=(1e-3, 1e-4))
    return dm_contains(S, x, v, fine).inside


def _values(M: MapBase, x, cfg):
    return sample_map(M, x, max(cfg.n_values, M.vertex_count(x)), cfg.seed).points


def map_gap(M: MapBase, a, b) -> float:
    """Upper bound on the Hausdorff distance between M(a) and M(b)."""
    pa, pb = M.pieces(a), M.pieces(b)
    if len(pa) == 1 and len(pb) == 1 and pa[0].V.shape == pb[0].V.shape:
        return float(np.max(np.linalg.norm(pa[0].V - pb[0].V, axis=1)) + abs(pa[0].radius - pb[0].radius))
    Va = np.vstack([p.V for p in pa])
    Vb = np.vstack([p.V for p in pb])
    ra = max(p.radius for p in pa)
    rb = max(p.radius for p in pb)
    return point_hausdorff(Va, Vb) + abs(ra - rb)


def lipschitz_estimate(M: MapBase, x, radius: float, n_pairs: int, rng):
    """Largest difference quotient of M over random pairs in x + radius B."""
    x = np.asarray(x, dtype=float)
    best, wit = 0.0, None
    for _ in range(n_pairs):
        u = rng.normal(size=(2, len(x)))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        rad = radius * rng.random(2) ** (1 / len(x))
        a, b = x + rad[0] * u[0], x + rad[1] * u[1]
        d = float(np.linalg.norm(a - b))
        if d == 0:
            continue
        try:
            q = map_gap(M, a, b) / d
        except (DomainError, ValueError):
            continue
        if q > best:
            best, wit = q, {"a": a.tolist(), "b": b.tolist(), "quotient": q}
    return best, wit


# ---------------------------------------------------------------- (V1)-(V4)

def _has_tangent_value(C, F, x, cfg):
    return any(bouligand_contains(C, x, v, cfg.cone).inside for v in _values(F, x, cfg))


def check_V(CF, D: SetSpec, pts, cfg: CheckConfig = CheckConfig()) -> ConditionReport:
    """Viability conditions of a continuous-time system (C, F) with terminal set D."""
    C, F = CF
    pts = [np.asarray(p, dtype=float) for p in pts]
    for p in pts:
        if not C.contains(p):
            raise ValueError(f"sample point {p.tolist()!r} is not in C")
    rep = ConditionReport()
    n_pairs = max(10, cfg.lip_pairs // max(1, len(pts)))
    for k, x in enumerate(pts):
        # (V1) Lipschitz extension near x
        L, wit = lipschitz_estimate(F, x, cfg.lip_radius, n_pairs, _rng(cfg, 1, k))
        if L <= cfg.L_max:
            rep.add("V1", PASS, x, notes=f"Lipschitz estimate {L:.4g}")
        else:
            rep.add("V1", FAIL, x, {**wit, "L_max": cfg.L_max, "reason": "difference quotient exceeds L_max"})

        # (V2) F(x') in M_int C(x') near boundary points with a tangent flow direction
        if not on_boundary(C, x):
            rep.add("V2", VACUOUS, x, notes="x is interior to C")
        elif not _has_tangent_value(C, F, x, cfg):
            rep.add("V2", VACUOUS, x, notes="F(x) meets no tangent direction; premise empty")
        else:
            rep.add(*_v2_at(C, F, x, cfg, k))

        # (V3)
        if D.contains(x) and is_interior(C, x) and on_boundary(D, x):
            vals = _values(F, x, cfg)
            if any(dm_ok(D, x, v, cfg) for v in vals):
                rep.add("V3", PASS, x)
            else:
                rep.add("V3", FAIL, x, {"values": vals.tolist(), "reason": "no value of F(x) in the DM cone of int D"})
        else:
            rep.add("V3", VACUOUS, x)

        # (V4)
        if D.contains(x) and on_boundary(C, x) and on_boundary(D, x):
            rep.add(*_v4_at(C, F, D, x, cfg, k))
        else:
            rep.add("V4", VACUOUS, x)
    return rep


def _v2_at(C, F, x, cfg, k):
    # x lies in every neighbourhood, so a failure at x settles all radii
    for v in _values(F, x, cfg):
        if not dm_ok(C, x, v, cfg):
            return "V2", FAIL, x, {"x_prime": x.tolist(), "value": v.tolist(), "radius": 0.0,
                                   "reason": "F(x) not inside the DM cone of int C"}, "fails at x itself"
    worst = None
    for ri, r in enumerate(cfg.radii):
        near = near_points(C, x, r, cfg.n_near, _rng(cfg, 2, k, ri), boundary=True)
        bad = None
        for xp in near:
            for v in _values(F, xp, cfg):
                if not dm_ok(C, xp, v, cfg):
                    bad = {"x_prime": xp.tolist(), "value": v.tolist(), "radius": r,
                           "reason": "F(x') not inside the DM cone of int C"}
                    break
            if bad:
                break
        if bad is None:
            return "V2", PASS, x, None, f"holds on sampled boundary points within r={r}"
        worst = bad
    return "V2", FAIL, x, worst, "fails at every tested radius"


def _v4_at(C, F, D, x, cfg, k):
    clauses = {}
    for ri, r in enumerate(cfg.radii):
        pts = near_points(C, x, r, cfg.n_near, _rng(cfg, 3, k, ri))
        out = next((p for p in pts if not D.contains(p)), None)
        if out is None:
            return "V4", PASS, x, None, f"(x + {r}B) cap C inside D"
        clauses["ball"] = {"point": out.tolist(), "radius": r}
    vals = _values(F, x, cfg)
    CD = Intersection([C, D])
    if any(dm_ok(CD, x, v, cfg) for v in vals):
        return "V4", PASS, x, None, "F(x) meets the DM cone of int(C cap D)"
    clauses["dm"] = {"values": vals.tolist()}
    if not _has_tangent_value(C, F, x, cfg):
        for ri, r in enumerate(cfg.radii):
            pts = near_points(C, x, r, cfg.n_near, _rng(cfg, 4, k, ri), boundary=True)
            out = next((p for p in pts if not D.contains(p)), None)
            if out is None:
                return "V4", PASS, x, None, f"no tangent value and (x + {r}B) cap bd C inside D"
            clauses["boundary"] = {"point": out.tolist(), "radius": r}
    else:
        clauses["boundary"] = {"reason": "F(x) meets the tangent cone"}
    return "V4", FAIL, x, clauses, "no alternative holds"


# ---------------------------------------------------------------- (B1)-(B6)

def _inclusion_over_radii(cid, x, sample_fn, member_fn, cfg):
    """Exists r in cfg.radii with every sampled point member?  (cid, verdict, x, witness, notes)."""
    last_bad, any_points, unsure = None, False, False
    for ri, r in enumerate(cfg.radii):
        pts = sample_fn(r, ri)
        if not pts:
            continue
        any_points = True
        verdicts = []
        bad = None
        for p in pts:
            v = member_fn(p)
            verdicts.append(v.verdict)
            if v.verdict == OUTSIDE:
                bad = {"point": p.tolist(), "radius": r, "path": v.path, "reason": "sampled point outside"}
                break
        if bad is None and all(v == INSIDE for v in verdicts):
            return cid, PASS, x, None, f"all samples within r={r} pass"
        if bad is None:
            unsure = True
        last_bad = bad or last_bad
    if not any_points:
        return cid, VACUOUS, x, None, "no sample points in any neighbourhood"
    if last_bad is not None and not unsure:
        return cid, FAIL, x, last_bad, "fails at every tested radius"
    return cid, INCONCLUSIVE, x, last_bad, "membership undecided at some samples"


def check_B(H: HybridSystem, pts, cfg: CheckConfig = CheckConfig()) -> ConditionReport:
    """Sufficient conditions for nominal inner well-posedness, sampled at pts."""
    rep = ConditionReport()
    pts = [np.asarray(p, dtype=float) for p in pts]
    CD = Union([H.C, H.D])
    cls = {}

    def flows(p):
        key = p.tobytes()
        if key not in cls:
            cls[key] = classify_flow_point(H, p, cfg.cone)
        return cls[key]

    for k, x in enumerate(pts):
        # (B1)
        if H.C.contains(x) and flows(x).inside:
            rep.add(*_inclusion_over_radii(
                "B1", x, lambda r, ri: near_points(CD, x, r, cfg.n_near, _rng(cfg, 5, k, ri)), flows, cfg))
        else:
            rep.add("B1", VACUOUS, x, notes="x not in the flow set C~")
        # (B2)
        if H.D.contains(x):
            def sample(r, ri):
                return [p for p in near_points(H.C, x, r, cfg.n_near, _rng(cfg, 6, k, ri)) if not H.D.contains(p)]
            rep.add(*_inclusion_over_radii("B2", x, sample, flows, cfg))
        else:
            rep.add("B2", VACUOUS, x, notes="x not in D")
    if cfg.delegate:
        cpts = [p for p in pts if H.C.contains(p)]
        v = check_V((H.C, H.F), H.D, cpts, cfg)
        for cid, ids in (("B3", ("V1", "V2")), ("B4", ("V1", "V2", "V3", "V4"))):
            for e in v.entries:
                if e.id in ids:
                    rep.add(cid, e.verdict, e.point, e.witness, f"via {e.id}: {e.notes}")
    else:
        rep.notes.append("B3/B4 delegate to check_V and the iwp probes (set delegate=True to run check_V)")
    dpts = [p for p in pts if H.D.contains(p)]
    if not dpts:
        rep.add("B5", VACUOUS, notes="no sample points in D")
        rep.add("B6", VACUOUS, notes="no sample points in D")
        return rep
    Gt = Restricted(H.G, FlowOrJumpSet(H, cfg.cone))
    for k, x in enumerate(dpts):
        for cid, M in (("B5", H.G), ("B6", Gt)):
            r = inner_sc_probe(M, x, H.D, cfg.schedule, cfg.seed + k)
            if all(r.vacuous):
                rep.add(cid, VACUOUS, x, notes="no samples of D near x")
            elif r.consistent:
                rep.add(cid, PASS, x, notes=f"gaps {r.gaps}")
            else:
                rep.add(cid, FAIL, x, {**r.witness, "gaps": r.gaps}, "inner semicontinuity gap does not shrink")
    return rep


# ---------------------------------------------------------------- (C1)-(C6)

def _tail_ok(results):
    """Existence of delta-bar: every tested delta in the tail of the grid passes."""
    return all(v == PASS for v in results[len(results) // 2:]) if results else False


def check_C(fam: PerturbationFamily, H: HybridSystem, pts, cfg: CheckConfig = CheckConfig()) -> ConditionReport:
    """Sufficient conditions for an inner well-posed perturbation, sampled at pts and
    along the delta grid of the configuration."""
    rep = ConditionReport()
    pts = [np.asarray(p, dtype=float) for p in pts]
    deltas = cfg.deltas()
    systems = [fam(d) for d in deltas]
    cls_nom = {}

    def flows_nom(p):
        key = p.tobytes()
        if key not in cls_nom:
            cls_nom[key] = classify_flow_point(H, p, cfg.cone)
        return cls_nom[key]

    caches = [dict() for _ in systems]

    def flows_d(i):
        def f(p):
            key = p.tobytes()
            if key not in caches[i]:
                caches[i][key] = classify_flow_point(systems[i], p, cfg.cone)
            return caches[i][key]
        return f

    for k, x in enumerate(pts):
        # (C1)
        if H.C.contains(x) and flows_nom(x).inside:
            rep.add(*_per_delta("C1", x, systems, deltas, cfg, lambda Hd, i, r, ri: near_points(
                Union([Hd.C, Hd.D]), x, r, cfg.n_near, _rng(cfg, 7, k, ri, i)), flows_d))
        else:
            rep.add("C1", VACUOUS, x, notes="x not in the flow set C~")
        # (C2)
        if H.D.contains(x):
            def sample(Hd, i, r, ri):
                return [p for p in near_points(Hd.C, x, r, cfg.n_near, _rng(cfg, 8, k, ri, i))
                        if not Hd.D.contains(p)]
            rep.add(*_per_delta("C2", x, systems, deltas, cfg, sample, flows_d))
        else:
            rep.add("C2", VACUOUS, x, notes="x not in D")
    rep.notes.append("C3/C4 delegate to check_W_P and pert_iwp_probe")

    dpts = [p for p in pts if H.D.contains(p)]
    if not dpts:
        for cid in ("C5", "C6", "C6-post"):
            rep.add(cid, VACUOUS, notes="no sample points in D")
        return rep
    # the inner-limit probes run along the whole schedule; they need no cone tests
    lim_deltas = list(cfg.schedule.deltas)
    lim_systems = systems + [fam(d) for d in lim_deltas[len(systems):]]
    caches += [dict() for _ in lim_systems[len(systems):]]
    radii = list(cfg.schedule.radii)
    systems, deltas = lim_systems, lim_deltas
    for k, x in enumerate(dpts):
        rep.add(*_c5_at(H, systems, deltas, radii, x, k, cfg))
        rep.extend(_c6_at(H, systems, deltas, radii, x, k, cfg, flows_nom, flows_d))
    return rep


def _per_delta(cid, x, systems, deltas, cfg, sample_fn, flows_d):
    results, wit = [], None
    for i, Hd in enumerate(systems):
        v = _inclusion_over_radii(cid, x, lambda r, ri: sample_fn(Hd, i, r, ri), flows_d(i), cfg)
        results.append(VACUOUS if v[1] == VACUOUS else v[1])
        if v[1] == FAIL:
            wit = {**v[3], "delta": deltas[i]}
    real = [v for v in results if v != VACUOUS]
    if not real:
        return cid, VACUOUS, x, None, "no samples at any delta"
    tail = real[len(real) // 2:]
    if all(v == PASS for v in tail):
        return cid, PASS, x, None, f"passes for the tested deltas {list(deltas)}"
    if FAIL in tail:
        return cid, FAIL, x, wit, "fails for small delta"
    return cid, INCONCLUSIVE, x, wit, "undecided for small delta"


def _c5_at(H, systems, deltas, radii, x, k, cfg):
    dD = [distance_est(Hd.D, x) for Hd in systems]
    if not settles(dD, cfg.tol):
        return "C5", FAIL, x, {"distances_to_D_delta": dD, "reason": "x not in the inner limit of D_delta"}, ""
    if not H.C.contains(x):
        dC = [distance_est(Hd.C, x) for Hd in systems]
        if settles(dC, cfg.tol):
            return "C5", FAIL, x, {"distances_to_C_delta": dC,
                                   "reason": "x outside cl C but in the outer limit of cl C_delta"}, ""
    gaps = []
    witness = None
    ys = _values(H.G, x, cfg)
    for i, (Hd, r) in enumerate(zip(systems, radii)):
        xis = near_points(Hd.D, x, r, cfg.n_near, _rng(cfg, 9, k, i))
        if not xis:
            gaps.append(None)
            continue
        worst = 0.0
        for xi in xis:
            vals = _values(Hd.G, xi, cfg)
            for y in ys:
                g = float(np.min(np.linalg.norm(vals - y, axis=1))) if len(vals) else np.inf
                g = min(g, Hd.G.distance(y, xi))
                if g > worst:
                    worst = g
                    witness = {"xi": xi.tolist(), "y": y.tolist(), "gap": g, "delta": deltas[i]}
        gaps.append(worst)
    real = [g for g in gaps if g is not None]
    if not real:
        return "C5", VACUOUS, x, None, "no samples of D_delta near x"
    if settles(real, cfg.schedule.tol):
        return "C5", PASS, x, None, f"gaps {gaps}"
    return "C5", FAIL, x, {**witness, "gaps": gaps, "reason": "G(x) not in the inner limit of G_delta"}, ""


def _c6_at(H, systems, deltas, radii, x, k, cfg, flows_nom, flows_d):
    rep = ConditionReport()
    ys = [y for y in _values(H.G, x, cfg) if H.D.contains(y) or flows_nom(y).inside]
    gaps, witness, post_bad, n_xi = [], None, None, 0
    for i, (Hd, r) in enumerate(zip(systems, radii)):
        xis = near_points(Hd.D, x, r, cfg.n_near, _rng(cfg, 10, k, i))
        if not xis:
            gaps.append(None)
            continue
        worst = 0.0
        fd = flows_d(i)
        for xi in xis:
            n_xi += 1
            vals = [v for v in _values(Hd.G, xi, cfg)]
            good = []
            for v in vals:
                ok = fd(v).inside
                if ok or Hd.D.contains(v):
                    good.append(v)
                if not ok and post_bad is None:
                    # the post-jump value cannot flow in H_delta
                    post_bad = {"xi": xi.tolist(), "value": v.tolist(), "delta": deltas[i],
                                "in_D_delta": bool(Hd.D.contains(v)),
                                "reason": "G_delta(xi) is not in the flow set of H_delta"}
            for y in ys:
                g = float(np.min(np.linalg.norm(np.array(good) - y, axis=1))) if good else np.inf
                if g > worst:
                    worst = g
                    witness = {"xi": xi.tolist(), "y": y.tolist(), "gap": g, "delta": deltas[i]}
        gaps.append(worst)
    real = [g for g in gaps if g is not None]
    if not real:
        rep.add("C6", VACUOUS, x, notes="no samples of D_delta near x")
    elif not ys:
        rep.add("C6", VACUOUS, x, notes="G(x) misses C~ union D")
    elif settles(real, cfg.schedule.tol):
        rep.add("C6", PASS, x, notes=f"gaps {gaps}")
    else:
        rep.add("C6", FAIL, x, {**witness, "gaps": gaps, "reason": "restricted jump values not recovered"})
    if n_xi == 0:
        rep.add("C6-post", VACUOUS, x)
    elif post_bad is None:
        rep.add("C6-post", PASS, x, notes=f"every sampled G_delta(xi) lies in the flow set ({n_xi} points xi)")
    else:
        rep.add("C6-post", FAIL, x, post_bad)
    return rep


# ---------------------------------------------------------------- (P1)-(P4), (W1)-(W4)

def check_W_P(fam: PerturbationFamily, CF, D: SetSpec, D_fam, pts, cfg: CheckConfig = CheckConfig()) -> ConditionReport:
    """Basic conditions on a family of continuous-time systems and the viability
    conditions for it to be an inner well-posed perturbation (with terminal sets)."""
    C, F = CF
    rep = ConditionReport()
    pts = [np.asarray(p, dtype=float) for p in pts]
    deltas = cfg.deltas()
    systems = [fam(d) for d in deltas]
    Ds = [D_fam(d) if D_fam is not None else Hd.D for d, Hd in zip(deltas, systems)]
    cpts = [p for p in pts if C.contains(p)]
    n_pairs = max(10, cfg.lip_pairs // max(1, len(pts)))

    # (P1)
    rep.add("P1", STRUCTURAL, notes="set descriptions are closed; map values are convex hulls plus balls")
    for i, Hd in enumerate(systems):
        if isinstance(Hd.F, MapSpec) and Hd.F.continuous():
            rep.add("P1", STRUCTURAL, notes=f"delta={deltas[i]}: continuous flow map")
        else:
            bad = _osc_probe_map(Hd.F, Hd.C, _rng(cfg, 11, i))
            if bad is None:
                rep.add("P1", PASS, notes=f"delta={deltas[i]}: sampled osc probe")
            else:
                rep.add("P1", FAIL, bad["x"], {**bad, "delta": deltas[i]}, "flow map not outer semicontinuous")
        for k, x in enumerate(pts):
            for p in near_points(Hd.C, x, cfg.radii[0], cfg.n_near, _rng(cfg, 12, k, i)):
                if len(_values(Hd.F, p, cfg)) == 0:
                    rep.add("P1", FAIL, p, {"delta": deltas[i], "reason": "C_delta point outside dom F_delta"})
    # (P2), (P3)
    for k, x in enumerate(cpts):
        near = [x] + near_points(C, x, cfg.radii[0], cfg.n_near, _rng(cfg, 13, k))
        bad = next(({"point": p.tolist(), "delta": d} for d, Hd in zip(deltas, systems)
                    for p in near if not Hd.C.contains(p)), None)
        rep.add("P2", FAIL if bad else PASS, x, dict(bad, reason="C point outside C_delta") if bad else None)
        gaps = []
        for Hd in systems:
            g = 0.0
            for p in near:
                for y in _values(F, p, cfg):
                    g = max(g, Hd.F.distance(y, p))
            gaps.append(g)
        if settles(gaps, cfg.tol):
            rep.add("P3", PASS, x, notes=f"sup gaps {gaps}")
        else:
            rep.add("P3", FAIL, x, {"gaps": gaps, "deltas": list(deltas), "reason": "F not within F_delta + eps B"})
    # (P4)
    for k, x in enumerate(pts):
        near = [p for p in [x] + near_points(Intersection([C, D]), x, cfg.radii[0], cfg.n_near, _rng(cfg, 14, k))
                if is_interior(D, p) and C.contains(p)]
        if not near:
            rep.add("P4", VACUOUS, x, notes="no samples of C cap int D")
            continue
        bad = next(({"point": p.tolist(), "delta": d} for d, Dd in zip(deltas, Ds)
                    for p in near if not Dd.contains(p)), None)
        rep.add("P4", FAIL if bad else PASS, x, dict(bad, reason="point of C cap int D outside D_delta") if bad else None)

    # (W1)
    for k, x in enumerate(cpts):
        Ls = [lipschitz_estimate(Hd.F, x, cfg.lip_radius, n_pairs, _rng(cfg, 15, k, i))[0]
              for i, Hd in enumerate(systems)]
        if max(Ls) <= cfg.L_max:
            rep.add("W1", PASS, x, notes=f"per-delta Lipschitz estimates {Ls}; common bound {max(Ls):.4g}")
        else:
            rep.add("W1", FAIL, x, {"estimates": Ls, "deltas": list(deltas), "L_max": cfg.L_max,
                                    "reason": "no common Lipschitz bound"})
    # (W2)
    for k, x in enumerate(cpts):
        if not on_boundary(C, x) or not _has_tangent_value(C, F, x, cfg):
            rep.add("W2", VACUOUS, x, notes="x not in a boundary set with tangent flow directions")
            continue
        rep.add(*_w2_at(x, systems, deltas, cfg, k))
    # (W3), (W4)
    for k, x in enumerate(pts):
        if D.contains(x) and is_interior(C, x) and on_boundary(D, x):
            rep.add(*_w3_at(C, F, D, Ds, deltas, x, cfg, k))
        else:
            rep.add("W3", VACUOUS, x)
        if D.contains(x) and on_boundary(C, x) and on_boundary(D, x):
            rep.add(*_w4_at(C, F, D, systems, Ds, deltas, x, cfg, k))
        else:
            rep.add("W4", VACUOUS, x)
    return rep


def _w2_at(x, systems, deltas, cfg, k):
    wit = None
    for ri, r in enumerate(cfg.radii):
        results = []
        for i, Hd in enumerate(systems):
            bad = None
            for xp in near_points(Hd.C, x, r, cfg.n_near, _rng(cfg, 16, k, ri, i), boundary=True):
                for v in _values(Hd.F, xp, cfg):
                    if not dm_ok(Hd.C, xp, v, cfg):
                        bad = {"x_prime": xp.tolist(), "value": v.tolist(), "delta": deltas[i], "radius": r,
                               "reason": "F_delta(x') not inside the DM cone of int C_delta"}
                        break
                if bad:
                    break
            results.append(FAIL if bad else PASS)
            wit = bad or wit
        if _tail_ok(results):
            return "W2", PASS, x, None, f"holds for the tested deltas at r={r}"
    return "W2", FAIL, x, wit, "fails at every tested radius"


def _ball_in(S, x, r, n, rng):
    pts = [x + r * u for u in np.vstack([np.eye(len(x)), -np.eye(len(x))])]
    for _ in range(n):
        u = rng.normal(size=len(x))
        pts.append(x + r * rng.random() * u / np.linalg.norm(u))
    return next((p for p in pts if not S.contains(p)), None)


def _w3_at(C, F, D, Ds, deltas, x, cfg, k):
    for ri, r in enumerate(cfg.radii):
        outs = [_ball_in(Dd, x, r, cfg.n_near, _rng(cfg, 17, k, ri)) for Dd in Ds]
        if all(o is None for o in outs[len(outs) // 2:]):
            return "W3", PASS, x, None, f"x + {r}B inside D_delta for the tested deltas"
    vals = _values(F, x, cfg)
    if any(dm_ok(D, x, v, cfg) for v in vals):
        L, _ = lipschitz_estimate(F, x, cfg.lip_radius, 50, _rng(cfg, 18, k))
        if L <= cfg.L_max:
            return "W3", PASS, x, None, "F(x) meets the DM cone of int D and F is Lipschitz near x"
    return "W3", FAIL, x, {"values": vals.tolist(), "reason": "neither alternative holds"}, ""


def _w4_at(C, F, D, systems, Ds, deltas, x, cfg, k):
    clauses = {}
    # first alternative: (x + rB) cap C_delta inside D_delta
    for ri, r in enumerate(cfg.radii):
        res = []
        for i, (Hd, Dd) in enumerate(zip(systems, Ds)):
            near = near_points(Hd.C, x, r, cfg.n_near, _rng(cfg, 19, k, ri, i))
            out = next((p for p in near if not Dd.contains(p)), None)
            res.append(PASS if out is None else FAIL)
            if out is not None:
                clauses["first"] = {"point": out.tolist(), "radius": r, "delta": deltas[i]}
        if _tail_ok(res):
            return "W4", PASS, x, None, f"first alternative: (x + {r}B) cap C_delta inside D_delta"
    # second: F(x) meets the DM cone of int(C cap D), F Lipschitz near x
    vals = _values(F, x, cfg)
    if any(dm_ok(Intersection([C, D]), x, v, cfg) for v in vals):
        L, _ = lipschitz_estimate(F, x, cfg.lip_radius, 50, _rng(cfg, 20, k))
        if L <= cfg.L_max:
            return "W4", PASS, x, None, "second alternative: DM cone of int(C cap D)"
    clauses["second"] = {"values": vals.tolist()}
    # third: no tangent value, the thin shell C_delta minus int C near x is inside D_delta,
    # F regular near x, and uniformly Lipschitz F_delta approaching F
    if _has_tangent_value(C, F, x, cfg):
        clauses["third"] = {"reason": "F(x) meets the tangent cone of C"}
        return "W4", FAIL, x, clauses, "no alternative holds"
    for ri, r in enumerate(cfg.radii):
        res = []
        for i, (Hd, Dd) in enumerate(zip(systems, Ds)):
            near = [p for p in near_points(Hd.C, x, r, cfg.n_near, _rng(cfg, 21, k, ri, i))
                    if not is_interior(C, p)]
            out = next((p for p in near if not Dd.contains(p)), None)
            res.append(PASS if out is None else FAIL)
            if out is not None:
                clauses["third"] = {"point": out.tolist(), "radius": r, "delta": deltas[i]}
        if _tail_ok(res):
            Ls = [lipschitz_estimate(Hd.F, x, cfg.lip_radius, 50, _rng(cfg, 22, k, i))[0]
                  for i, Hd in enumerate(systems)]
            gaps = [max(Hd.F.distance(y, x) for y in vals) for Hd in systems]
            if max(Ls) <= cfg.L_max and settles(gaps, cfg.tol):
                return "W4", PASS, x, None, "third alternative"
            clauses["third"] = {"lipschitz": Ls, "gaps": gaps}
            break
    return "W4", FAIL, x, clauses, "no alternative holds"


# ---------------------------------------------------------------- iwp probes

@dataclass
class IWPReport:
    radii: list
    deltas: list
    margins: list = field(default_factory=list)
    nonempty: list = field(default_factory=list)
    starts: list = field(default_factory=list)
    consistent: bool = False
    witness: dict | None = None
    notes: list = field(default_factory=list)
    label: str = "(*)"

    @property
    def verdict(self):
        return f"{'consistent' if self.consistent else 'inconsistent'} with {self.label}"

    def to_json(self):
        return {"radii": self.radii, "deltas": self.deltas, "margins": self.margins,
                "nonempty": self.nonempty, "starts": self.starts, "verdict": self.verdict,
                "witness": self.witness, "notes": self.notes}


def _starts(H, x0, r, n, rng):
    S = Union([H.C, H.D])
    pts = near_points(S, x0, r, n, rng) if r > 0 else []
    if S.contains(x0) and not any(np.array_equal(p, x0) for p in pts):
        pts = [x0] + pts
    return pts


def _level(Hs, target, x0, r, tau, policy, budget, schedule, seed, k):
    pts = _starts(Hs, x0, r, schedule.samples, np.random.default_rng([seed, k]))
    worst, wit, rows = 0.0, None, []
    for xi in pts:
        best = np.inf
        for a in solve_tree(Hs, xi, policy, budget, seed).arcs:
            best = min(best, closeness_margin(a, target, tau))
        rows.append({"xi": xi.tolist(), "margin": best})
        if best >= worst:
            worst, wit = best, {"xi": xi.tolist(), "margin": best, "radius": r}
    return pts, worst, wit, rows


def _iwp(systems, target, x0, schedule, tau, policy, budget, seed, tol, label, deltas):
    rep = IWPReport(list(schedule.radii), deltas, label=label)
    worst_wit = None
    for k, (Hs, r) in enumerate(zip(systems, schedule.radii)):
        pts, m, wit, rows = _level(Hs, target, x0, r, tau, policy, budget, schedule, seed, k)
        rep.nonempty.append(bool(pts))
        rep.starts.append(rows)
        rep.margins.append(m if pts else None)
        if wit is not None and (worst_wit is None or k == len(schedule.radii) - 1):
            worst_wit = wit
    real = [m for m in rep.margins if m is not None]
    tol = schedule.tol if tol is None else tol
    rep.consistent = bool(real) and real[-1] < tol and settles(real, tol)
    if not rep.consistent:
        rep.witness = worst_wit
    if not real:
        rep.notes.append("no initial conditions found at any level")
    return rep


def nominal_iwp_probe(H: HybridSystem, target: HybridArc, schedule: ProbeSchedule = ProbeSchedule(),
                      seed: int = 0, tau: float | None = None, policy: SolvePolicy | None = None,
                      branch_budget: int = 4, tol: float | None = None) -> IWPReport:
    """Best closeness margin to target over solutions from sampled nearby initial
    conditions, along the schedule; worst case over the samples at each level."""
    ok, problems = validate_solution(H, target)
    if not ok:
        raise ValueError(f"target is not a solution: {problems[:3]}")
    tau = _default_tau(target) if tau is None else tau
    policy = policy or _probe_policy(tau)
    x0 = target.x0
    return _iwp([H] * len(schedule.radii), target, x0, schedule, tau, policy, branch_budget, seed, tol,
                "(*) nominal inner well-posedness", [0.0] * len(schedule.radii))


def pert_iwp_probe(fam: PerturbationFamily, H: HybridSystem, target: HybridArc,
                   schedule: ProbeSchedule = ProbeSchedule(), seed: int = 0, tau: float | None = None,
                   policy: SolvePolicy | None = None, branch_budget: int = 4, tol: float | None = None) -> IWPReport:
    """As nominal_iwp_probe, solving in H_delta_k from (x0 + r_k B) cap (cl C_delta_k u D_delta_k)."""
    ok, problems = validate_solution(H, target)
    if not ok:
        raise ValueError(f"target is not a solution: {problems[:3]}")
    tau = _default_tau(target) if tau is None else tau
    policy = policy or _probe_policy(tau)
    systems = [fam(d) for d in schedule.deltas]
    rep = _iwp(systems, target, target.x0, schedule, tau, policy, branch_budget, seed, tol,
               "inner well-posed perturbation", list(schedule.deltas))
    for k, ne in enumerate(rep.nonempty):
        if not ne:
            rep.notes.append(f"level {k}: (x0 + r B) meets no point of cl C_delta u D_delta")
    return rep


def _default_tau(target: HybridArc):
    t, j, _ = target.end
    return t + j


def _probe_policy(tau):
    # a coarser step than the simulator default: margins are compared at the schedule's
    # radii (>= 1e-3), far above the RK4 error at this step
    return SolvePolicy(priority="branch", h=1e-2, tau_max=tau + 0.5, T_max=tau + 0.5, J_max=int(tau) + 5)
