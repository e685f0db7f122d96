"""Tangent-cone membership tests and a probe for inner semicontinuity of maps.

Both cone tests try an analytic rule first (smooth active constraints with
linearly independent gradients) and fall back to a numeric probe on a
geometric step grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .maps import MapBase, sample_map
from .schedule import ProbeSchedule
from .sets import SetSpec, Union, distance_info, sample_near

INSIDE, OUTSIDE, INCONCLUSIVE = "inside", "outside", "inconclusive"


@dataclass(frozen=True)
class ConeConfig:
    tol: float = 1e-7
    margin: float = 1e-4
    deltas: tuple = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
    w_radius: float = 0.05
    dm_radii: tuple = (0.1, 0.05, 0.01)
    n_dirs: int = 16
    active_tol: float = 1e-7
    seed: int = 0
    analytic: bool = True


@dataclass
class ConeVerdict:
    verdict: str
    path: str = "analytic"
    witness: dict | None = None
    notes: str = ""

    @property
    def inside(self):
        return self.verdict == INSIDE

    @property
    def outside(self):
        return self.verdict == OUTSIDE


def active_gradients(S: SetSpec, x, cfg: ConeConfig):
    """(status, rows) for the analytic path.

    status is "ok" with a list of (kind, gradient) for active constraints,
    "outside" when x violates a constraint, or None when the path does not apply.
    """
    cons = S.smooth()
    if cons is None:
        return None, None
    rows = []
    for c in cons:
        val = c.value(x)
        g = np.asarray(c.gradient(x), dtype=float)
        scale = cfg.active_tol * max(1.0, float(np.linalg.norm(g)))
        if c.kind == "eq":
            if abs(val) > scale:
                return "outside", None
            rows.append(("eq", g))
        else:
            if val > scale:
                return "outside", None
            if val >= -scale:
                rows.append(("le", g))
    if rows:
        G = np.array([g for _, g in rows])
        if np.linalg.matrix_rank(G) < len(rows):
            return None, None
    return "ok", rows


def _directions(d, n, rng):
    dirs = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1
        dirs += [e, -e]
    for _ in range(n):
        u = rng.normal(size=d)
        dirs.append(u / np.linalg.norm(u))
    return dirs


def bouligand_contains(S: SetSpec, x, v, cfg: ConeConfig = ConeConfig()) -> ConeVerdict:
    """Is v in the contingent cone T_S(x)?"""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if len(x) != S.dim or len(v) != S.dim:
        raise ValueError("dimension mismatch")
    nv = float(np.linalg.norm(v))
    if nv == 0:
        return ConeVerdict(INSIDE, "analytic", notes="zero direction")
    if cfg.analytic and isinstance(S, Union):
        # the contingent cone of a finite union of closed sets is the union of the
        # cones of the parts that contain x
        parts = [p for p in S.parts if p.contains(x, cfg.active_tol) and not p.is_empty()]
        subs = [bouligand_contains(p, x, v, cfg) for p in parts]
        for r in subs:
            if r.inside:
                return ConeVerdict(INSIDE, r.path, r.witness, "via a part of the union")
        if subs and all(r.outside for r in subs):
            return ConeVerdict(OUTSIDE, subs[0].path, {"parts": [r.witness for r in subs]},
                               "outside the cone of every part containing x")
    if cfg.analytic:
        status, rows = active_gradients(S, x, cfg)
        if status == "outside":
            return ConeVerdict(OUTSIDE, "analytic", {"reason": "x not in S"})
        if status == "ok":
            dots = [float(g @ v) for _, g in rows]
            worst = 0.0
            for (kind, _), dv in zip(rows, dots):
                worst = max(worst, abs(dv) if kind == "eq" else dv)
            if worst <= cfg.tol:
                return ConeVerdict(INSIDE, "analytic", {"max_dot": worst})
            if worst > cfg.margin:
                return ConeVerdict(OUTSIDE, "analytic", {"max_dot": worst})
            # inside the margin band the analytic rule declines; the numeric probe decides
            # or reports inconclusive
    return _bouligand_numeric(S, x, v, cfg)


def _bouligand_numeric(S, x, v, cfg):
    if distance_info(S, x)[0] > cfg.tol:
        return ConeVerdict(OUTSIDE, "numeric", {"reason": "x not in S"})
    rng = np.random.default_rng(cfg.seed)
    nv = float(np.linalg.norm(v))
    dirs = _directions(len(x), cfg.n_dirs, rng)
    d0 = cfg.deltas[0]
    ratios = []
    for delta in cfg.deltas:
        # the perturbation ball shrinks with delta so the test converges to the cone itself
        rad = cfg.w_radius * nv * delta / d0
        ws = [v] + [v + rad * u for u in dirs]
        best = min(distance_info(S, x + delta * w)[0] / delta for w in ws)
        ratios.append(best)
    wit = {"deltas": list(cfg.deltas), "ratios": ratios}
    last, first = ratios[-1], ratios[0]
    decay = np.sqrt(cfg.deltas[-1] / d0)
    if last <= cfg.tol or (last < cfg.margin and last <= first * decay):
        return ConeVerdict(INSIDE, "numeric", wit)
    # coarse deltas use a wide perturbation ball that can reach into the cone, so only
    # the fine tail decides
    if min(ratios[len(ratios) // 2:]) > cfg.margin:
        return ConeVerdict(OUTSIDE, "numeric", wit)
    return ConeVerdict(INCONCLUSIVE, "numeric", wit, "distance ratio neither vanishes nor stays away")


def dm_contains(S: SetSpec, x, v, cfg: ConeConfig = ConeConfig()) -> ConeVerdict:
    """Is v in the Dubovitsky-Miliutin cone M_S(x)?  Membership in S is tested
    without tolerance, so the probe effectively works with the interior."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if len(x) != S.dim or len(v) != S.dim:
        raise ValueError("dimension mismatch")
    if cfg.analytic and isinstance(S, Union):
        # the contingent cone of a finite union of closed sets is the union of the
        # cones of the parts that contain x
        parts = [p for p in S.parts if p.contains(x, cfg.active_tol) and not p.is_empty()]
        subs = [bouligand_contains(p, x, v, cfg) for p in parts]
        for r in subs:
            if r.inside:
                return ConeVerdict(INSIDE, r.path, r.witness, "via a part of the union")
        if subs and all(r.outside for r in subs):
            return ConeVerdict(OUTSIDE, subs[0].path, {"parts": [r.witness for r in subs]},
                               "outside the cone of every part containing x")
    if cfg.analytic:
        status, rows = active_gradients(S, x, cfg)
        if status == "outside":
            return ConeVerdict(OUTSIDE, "analytic", {"reason": "x not in S"})
        if status == "ok":
            if not rows:
                return ConeVerdict(INSIDE, "analytic", notes="x is interior")
            if any(k == "eq" for k, _ in rows):
                return ConeVerdict(OUTSIDE, "analytic", {"reason": "equality constraint active"},
                                   "set has empty interior near x")
            dots = [float(g @ v) for _, g in rows]
            worst = max(dots)
            if worst < -cfg.margin:
                return ConeVerdict(INSIDE, "analytic", {"max_dot": worst})
            if worst > cfg.margin:
                return ConeVerdict(OUTSIDE, "analytic", {"max_dot": worst})
    return _dm_numeric(S, x, v, cfg)


def _dm_numeric(S, x, v, cfg):
    rng = np.random.default_rng(cfg.seed)
    nv = float(np.linalg.norm(v))
    dirs = _directions(len(x), cfg.n_dirs, rng)
    if nv == 0:
        ok = all(S.contains(x + d * u * 1e-3, 0.0) for d in cfg.deltas for u in dirs)
        return ConeVerdict(INSIDE if ok else OUTSIDE, "numeric", notes="zero direction")
    fail = None
    for frac in cfg.dm_radii:
        r = frac * nv
        ws = [v] + [v + r * u for u in dirs]
        # largest grid delta such that every smaller grid delta keeps all w inside
        good = None
        for delta in reversed(cfg.deltas):
            bad = next((w for w in ws if not S.contains(x + delta * w, 0.0)), None)
            if bad is not None:
                if fail is None:
                    fail = {"delta": delta, "w": bad.tolist(), "r": r}
                break
            good = delta
        if good is not None:
            return ConeVerdict(INSIDE, "numeric", {"r": r, "delta_bar": good})
    return ConeVerdict(OUTSIDE, "numeric", fail)


@dataclass
class InnerSCReport:
    radii: list
    gaps: list
    vacuous: list
    consistent: bool
    witness: dict | None = None
    notes: list = field(default_factory=list)

    def to_json(self):
        return {"radii": self.radii, "gaps": self.gaps, "vacuous": self.vacuous,
                "verdict": "consistent with inner semicontinuity" if self.consistent
                else "inconsistent with inner semicontinuity",
                "witness": self.witness, "notes": self.notes}


def inner_sc_probe(M: MapBase, x, X: SetSpec, schedule: ProbeSchedule = ProbeSchedule(),
                   seed: int = 0, n_values: int = 8, gap_tol: float | None = None) -> InnerSCReport:
    """Worst-case gap dist(y, M(x')) over y in M(x) and sampled x' near x in X."""
    x = np.asarray(x, dtype=float)
    gap_tol = schedule.tol if gap_tol is None else gap_tol
    ys = sample_map(M, x, max(n_values, M.vertex_count(x)), seed).points
    rng = np.random.default_rng(seed)
    gaps, vac = [], []
    witness = None
    for r in schedule.radii:
        pts = sample_near(X, x, r, schedule.samples, rng)
        # points on the far side of x are the informative ones; add the extremes along axes
        for i in range(len(x)):
            for s in (1.0, -1.0):
                e = np.zeros(len(x))
                e[i] = s * r
                z = x + e
                if X.contains(z, 0.0):
                    pts.append(z)
        if r == 0:
            pts = [x] if X.contains(x) else []
        if not pts:
            gaps.append(None)
            vac.append(True)
            continue
        vac.append(False)
        worst, where = 0.0, None
        for xp in pts:
            for y in ys:
                if M.restrict_to is None:
                    g = M.distance(y, xp)
                else:
                    vals = sample_map(M, xp, max(n_values, M.vertex_count(xp)), seed).points
                    g = float(np.min(np.linalg.norm(vals - y, axis=1))) if len(vals) else np.inf
                if g > worst:
                    worst, where = g, (xp.tolist(), y.tolist())
        gaps.append(worst)
        if where is not None and (witness is None or worst >= witness["gap"]):
            witness = {"x_prime": where[0], "y": where[1], "gap": worst, "radius": r}
    finite = [g for g in gaps if g is not None]
    if not finite:
        return InnerSCReport(list(schedule.radii), gaps, vac, True, None,
                             ["vacuous at every radius"])
    consistent = finite[-1] <= gap_tol
    return InnerSCReport(list(schedule.radii), gaps, vac, consistent,
                         None if consistent else witness)
