"""Hybrid time domains, hybrid arcs, hybrid systems and perturbation families."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .expr import Expr, bind
from .maps import InflatedFlowMap, InflatedJumpMap, MapBase, MapSpec, sample_map
from .report import FAIL, PASS, STRUCTURAL, ConditionReport
from .sets import Inflated, SetSpec, distance_est, sample_near


@dataclass(frozen=True)
class HybridTimeDomain:
    intervals: tuple  # (j, t_lo, t_hi)
    complete: bool = False

    def to_json(self):
        return {"intervals": [list(iv) for iv in self.intervals], "complete": self.complete}

    @classmethod
    def from_json(cls, obj):
        return cls(tuple((int(j), float(a), float(b)) for j, a, b in obj["intervals"]),
                   bool(obj.get("complete", False)))


def validate_domain(E: HybridTimeDomain, tol: float = 0.0) -> bool:
    ivs = list(E.intervals)
    if not ivs:
        return False
    if ivs[0][0] != 0 or abs(ivs[0][1]) > tol:
        return False
    for k, (j, lo, hi) in enumerate(ivs):
        if j != k or not (lo <= hi + tol) or not (np.isfinite(lo) and np.isfinite(hi)):
            return False
        if k > 0 and abs(ivs[k - 1][2] - lo) > tol:
            return False
    return True


@dataclass
class Segment:
    j: int
    ts: np.ndarray
    xs: np.ndarray

    @property
    def t_lo(self):
        return float(self.ts[0])

    @property
    def t_hi(self):
        return float(self.ts[-1])


@dataclass
class HybridArc:
    """Per-jump-index samples with piecewise-linear interpolation in t."""
    segments: list
    dim: int
    complete: bool = False
    stop_reason: str = ""
    escape_time: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def domain(self) -> HybridTimeDomain:
        return HybridTimeDomain(tuple((s.j, s.t_lo, s.t_hi) for s in self.segments), self.complete)

    @property
    def x0(self):
        return self.segments[0].xs[0]

    @property
    def J(self):
        return self.segments[-1].j

    @property
    def end(self):
        return self.segments[-1].t_hi, self.segments[-1].j, self.segments[-1].xs[-1]

    def in_domain(self, t, j, ttol: float = 1e-9) -> bool:
        if j < 0 or j >= len(self.segments):
            return False
        s = self.segments[j]
        return s.t_lo - ttol <= t <= s.t_hi + ttol

    def __call__(self, t, j, ttol: float = 1e-9):
        if not self.in_domain(t, j, ttol):
            raise ValueError(f"({t}, {j}) is outside the arc domain")
        s = self.segments[j]
        t = min(max(t, s.t_lo), s.t_hi)
        ts = s.ts
        k = int(np.searchsorted(ts, t, side="left"))
        if k < len(ts) and ts[k] == t:
            return s.xs[k].copy()
        if k == 0:
            return s.xs[0].copy()
        if k >= len(ts):
            return s.xs[-1].copy()
        a = (t - ts[k - 1]) / (ts[k] - ts[k - 1])
        return (1 - a) * s.xs[k - 1] + a * s.xs[k]

    def samples(self, tau: float | None = None):
        """(t, j, x) for every stored sample with t + j <= tau."""
        for s in self.segments:
            for t, x in zip(s.ts, s.xs):
                if tau is not None and t + s.j > tau + 1e-12:
                    break
                yield float(t), s.j, x

    def sample_array(self, tau: float | None = None):
        rows = [(t, j, *x) for t, j, x in self.samples(tau)]
        return np.array(rows, dtype=float).reshape(-1, 2 + self.dim)

    def truncate(self, t, j):
        """Arc restricted to hybrid times up to (t, j)."""
        segs = [Segment(s.j, s.ts.copy(), s.xs.copy()) for s in self.segments[: j + 1]]
        last = segs[-1]
        keep = last.ts < t
        x_end = self(t, j)
        last.ts = np.append(last.ts[keep], t)
        last.xs = np.vstack([last.xs[keep], x_end[None, :]])
        return HybridArc(segs, self.dim, False, "truncated", None, dict(self.meta))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "t"] + [f"x{i + 1}" for i in range(self.dim)])
        for t, j, x in self.samples():
            w.writerow([j, repr(float(t))] + [repr(float(v)) for v in x])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, complete: bool = False):
        rows = list(csv.reader(io.StringIO(text)))
        dim = len(rows[0]) - 2
        segs: dict[int, list] = {}
        for r in rows[1:]:
            if not r:
                continue
            segs.setdefault(int(r[0]), []).append([float(v) for v in r[1:]])
        out = []
        for j in sorted(segs):
            a = np.array(segs[j])
            out.append(Segment(j, a[:, 0], a[:, 1:]))
        return cls(out, dim, complete)


def jump_times(x: HybridArc):
    return [(x.segments[k].t_hi, x.segments[k].j) for k in range(len(x.segments) - 1)]


def terminal_time(x: HybridArc):
    """Last hybrid time of a maximal, non-complete arc; None if complete or cut by a budget."""
    if x.complete or x.stop_reason == "budget":
        return None
    s = x.segments[-1]
    return s.t_hi, s.j


@dataclass
class HybridSystem:
    C: SetSpec
    F: MapBase
    D: SetSpec
    G: MapBase
    name: str = ""

    def __post_init__(self):
        dims = {self.C.dim, self.F.dim, self.D.dim, self.G.dim, self.F.out_dim, self.G.out_dim}
        if len(dims) != 1:
            raise ValueError(f"dimension mismatch among C, F, D, G: {sorted(dims)}")

    @property
    def dim(self):
        return self.C.dim

    def bind(self, values):
        return HybridSystem(self.C.bind(values), self.F.bind(values), self.D.bind(values),
                            self.G.bind(values), self.name)

    def in_closure_C_or_D(self, x, tol=1e-9):
        return self.C.contains(x, tol) or self.D.contains(x, tol)


@dataclass
class PerturbationFamily:
    """delta -> HybridSystem; either a template with a free symbol or a callable."""
    template: HybridSystem | None = None
    symbol: str = "delta"
    builder: Callable | None = None
    rho: Expr | None = None
    name: str = ""
    nominal: HybridSystem | None = None

    def __call__(self, delta: float) -> HybridSystem:
        if self.builder is not None:
            return self.builder(delta)
        return self.template.bind({self.symbol: float(delta)})

    @classmethod
    def constant(cls, H: HybridSystem):
        return cls(builder=lambda d: H, name=f"{H.name} (unperturbed)", nominal=H)


def rho_inflate(H: HybridSystem, rho: Expr, delta: float, n_random: int = 0, seed: int = 0) -> HybridSystem:
    """The delta*rho perturbation of H: sets grown by delta*rho, maps sampled and inflated."""
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")
    return HybridSystem(
        Inflated(H.C, rho, delta),
        InflatedFlowMap(H.F, H.C, rho, delta, n_random, seed),
        Inflated(H.D, rho, delta),
        InflatedJumpMap(H.G, H.D, rho, delta, n_random, 4, seed),
        f"{H.name} rho-inflated (delta={delta})",
    )


def _osc_probe_map(M: MapBase, S: SetSpec, rng, n_points=12, radii=(1e-1, 1e-2, 1e-3)):
    # sampled outer semicontinuity + local boundedness of M relative to S
    bad = None
    base = sample_near(S, np.zeros(S.dim), 2.0, n_points, rng) if not S.is_empty() else []
    for x in base:
        gaps = []
        for r in radii:
            worst = 0.0
            for xp in sample_near(S, x, r, 6, rng):
                vals = sample_map(M, xp, max(4, M.vertex_count(xp)), int(rng.integers(2**31))).points
                for y in vals:
                    worst = max(worst, M.distance(y, x))
            gaps.append(worst)
        if gaps[-1] > 10 * radii[-1] + 1e-6:
            if bad is None or gaps[-1] > bad["gaps"][-1]:
                bad = {"x": x.tolist(), "radii": list(radii), "gaps": gaps}
    return bad


def hbc_check(H: HybridSystem, seed: int = 0) -> ConditionReport:
    """Hybrid basic conditions: closed sets, regular flow map, regular jump map."""
    rep = ConditionReport()
    rep.add("A1", STRUCTURAL, notes="every set description denotes a closed set")
    for cid, M, S in (("A2", H.F, H.C), ("A3", H.G, H.D)):
        if isinstance(M, MapSpec) and M.continuous():
            rep.add(cid, STRUCTURAL, notes="continuous vertices and radius: convex, compact, "
                                          "outer semicontinuous and locally bounded values")
            continue
        rng = np.random.default_rng(seed)
        bad = _osc_probe_map(M, S, rng)
        if bad is None:
            rep.add(cid, PASS, notes="sampled: no outer semicontinuity gap found near sampled points")
        else:
            rep.add(cid, FAIL, bad["x"], bad, "sampled outer semicontinuity gap does not shrink")
    return rep


def domination_check(fam: PerturbationFamily, H: HybridSystem, rho: Expr, deltas, samples,
                     tol: float = 1e-6, n_values: int = 6, seed: int = 0) -> ConditionReport:
    """Sampled test that each H_delta sits inside the delta*rho perturbation of H."""
    rep = ConditionReport()
    for delta in deltas:
        Hd = fam(delta)
        Hr = rho_inflate(H, rho, delta, seed=seed)
        for x in samples:
            x = np.asarray(x, dtype=float)
            for cid, Sd, Sr, Md, Mr in (("C", Hd.C, Hr.C, Hd.F, Hr.F), ("D", Hd.D, Hr.D, Hd.G, Hr.G)):
                if not Sd.contains(x):
                    continue
                if not Sr.contains(x, tol):
                    nominal = H.C if cid == "C" else H.D
                    rep.add(f"dom-{cid}", FAIL, x, {
                        "delta": delta, "distance": distance_est(nominal, x),
                        "allowed": delta * rho.eval(x),
                        "reason": f"x in {cid}_delta but not in the inflated {cid}"})
                    continue
                rep.add(f"dom-{cid}", PASS, x)
                mid = "F" if cid == "C" else "G"
                vals = sample_map(Md, x, max(n_values, Md.vertex_count(x)), seed).points
                worst, where = 0.0, None
                for y in vals:
                    g = Mr.distance(y, x)
                    if g > worst:
                        worst, where = g, y
                if worst > tol:
                    rep.add(f"dom-{mid}", FAIL, x, {"delta": delta, "value": where.tolist(), "gap": worst})
                else:
                    rep.add(f"dom-{mid}", PASS, x)
    return rep


def arc_to_json(arc: HybridArc) -> str:
    return json.dumps(arc.domain.to_json(), sort_keys=True)
