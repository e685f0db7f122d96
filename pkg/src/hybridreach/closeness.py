"""Distances between hybrid arcs: (tau, eps)-closeness, graphical distance, and
finite diagnostics for sequences of arcs."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .core import HybridArc


def _segments_upto(x: HybridArc, tau):
    for s in x.segments:
        keep = s.ts + s.j <= tau + 1e-12
        if np.any(keep):
            yield s.j, s.ts[keep], s.xs[keep]


def _refine(tx, X, ty, Y, pieces, iters=40):
    """min over the given pieces k (between nodes k and k+1 of y, one row per sample
    of x) of max(|t - t'|, |x - y(t')|) along the linear interpolant.  Each piece is
    convex in its parameter, so a vectorized ternary search finds its minimum."""
    n, m = pieces.shape
    k = pieces.reshape(-1)
    t = np.repeat(tx, m)
    x = np.repeat(X, m, axis=0)
    t0, dt = ty[k], ty[k + 1] - ty[k]
    Y0, dY = Y[k], Y[k + 1] - Y[k]

    def f(s):
        return np.maximum(np.abs(t - t0 - s * dt), np.linalg.norm(x - Y0 - s[:, None] * dY, axis=1))

    a, b = np.zeros(len(k)), np.ones(len(k))
    for _ in range(iters):
        m1, m2 = a + (b - a) / 3, b - (b - a) / 3
        left = f(m1) <= f(m2)
        b = np.where(left, m2, b)
        a = np.where(left, a, m1)
    return f(0.5 * (a + b)).reshape(n, m).min(axis=1)


def _directed_gap(x: HybridArc, y: HybridArc, tau) -> float:
    """sup over samples (t, j) of x with t + j <= tau of
    min over (t', j) in dom y of max(|t - t'|, |x(t, j) - y(t', j)|).

    Candidates for t': the equal time (clamped, interpolated), every node of y in
    the window that can still improve, and the interpolant pieces next to the best
    node and to the equal time.  The result is an upper bound on the exact value for
    the piecewise-linear reading of y."""
    worst = 0.0
    for j, tx, X in _segments_upto(x, tau):
        if j >= len(y.segments):
            return np.inf
        s = y.segments[j]
        ty, Y = np.asarray(s.ts, dtype=float), np.asarray(s.xs, dtype=float)
        tc = np.clip(tx, ty[0], ty[-1])
        Yc = np.column_stack([np.interp(tc, ty, Y[:, k]) for k in range(Y.shape[1])])
        best = np.maximum(np.abs(tx - tc), np.linalg.norm(X - Yc, axis=1))
        if len(ty) > 1:
            c = np.clip(np.searchsorted(ty, tc), 1, len(ty) - 1)
            node = c.copy()
            lo = np.searchsorted(ty, tx - best, side="left")
            hi = np.searchsorted(ty, tx + best, side="right")
            for i in range(len(tx)):
                if hi[i] > lo[i]:
                    d = np.maximum(np.abs(ty[lo[i]:hi[i]] - tx[i]),
                                   np.linalg.norm(Y[lo[i]:hi[i]] - X[i], axis=1))
                    a = int(d.argmin())
                    if d[a] < best[i]:
                        best[i] = d[a]
                        node[i] = lo[i] + a
            last = len(ty) - 2
            pieces = np.column_stack([np.clip(node - 1, 0, last), np.clip(node, 0, last),
                                      np.clip(c - 1, 0, last), np.clip(c, 0, last)])
            best = np.minimum(best, _refine(tx, X, ty, Y, pieces))
        worst = max(worst, float(best.max()))
    return worst


def closeness_margin(x: HybridArc, y: HybridArc, tau: float) -> float:
    """Least value m such that x and y are (tau, eps)-close for every eps > m.

    Samples of each arc are matched against the piecewise-linear interpolant of
    the other, so the value is an upper bound accurate to the interpolation error.
    """
    if x.dim != y.dim:
        raise ValueError("arcs of different dimension")
    return max(_directed_gap(x, y, tau), _directed_gap(y, x, tau))


def tau_eps_close(x: HybridArc, y: HybridArc, tau: float, eps: float) -> bool:
    """Both bullet conditions with strict inequalities; a tie at eps fails."""
    if eps <= 0:
        return False
    return closeness_margin(x, y, tau) < eps


def sample_resolution(x: HybridArc) -> float:
    """Largest gap between consecutive samples (time and state) of one flow interval."""
    r = 0.0
    for s in x.segments:
        if len(s.ts) > 1:
            r = max(r, float(np.max(np.maximum(np.diff(s.ts), np.linalg.norm(np.diff(s.xs, axis=0), axis=1)))))
    return r


def graph_points(x: HybridArc, tau: float, j_weight: float = 1.0):
    rows = [np.column_stack([ts, np.full(len(ts), j * j_weight), X]) for j, ts, X in _segments_upto(x, tau)]
    if not rows:
        return np.zeros((0, 2 + x.dim))
    return np.vstack(rows)


def point_hausdorff(P, Q) -> float:
    """Hausdorff distance between two finite point sets (rows)."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if len(P) == 0 and len(Q) == 0:
        return 0.0
    if len(P) == 0 or len(Q) == 0:
        return np.inf
    a = cKDTree(Q).query(P)[0].max()
    b = cKDTree(P).query(Q)[0].max()
    return float(max(a, b))


def graph_distance(x: HybridArc, y: HybridArc, tau: float, j_weight: float = 1.0) -> float:
    """Hausdorff distance between the sampled graphs {(t, j*j_weight, x(t, j)) : t + j <= tau}."""
    if x.dim != y.dim:
        raise ValueError("arcs of different dimension")
    return point_hausdorff(graph_points(x, tau, j_weight), graph_points(y, tau, j_weight))


@dataclass
class SequenceReport:
    tau: float
    jumps: list = field(default_factory=list)
    bounds: list = field(default_factory=list)
    tail_bound: float = 0.0
    graph_distances: list = field(default_factory=list)
    margins: list = field(default_factory=list)
    consistent: bool = True
    notes: list = field(default_factory=list)

    @property
    def verdict(self):
        return ("consistent with graphical convergence and local eventual boundedness"
                if self.consistent else
                "inconsistent with graphical convergence and local eventual boundedness")

    def to_json(self):
        return {"tau": self.tau, "jumps": self.jumps, "bounds": self.bounds,
                "tail_bound": self.tail_bound, "graph_distances": self.graph_distances,
                "margins": self.margins, "verdict": self.verdict, "notes": self.notes}


def _interval(arc: HybridArc, j):
    if j >= len(arc.segments):
        return None
    s = arc.segments[j]
    return s.t_lo, s.xs[0], s.t_hi, s.xs[-1]


def settles(seq, tol: float, decay: float = 0.25, slack: float = 0.1) -> bool:
    """Finite-sample trend test: the last value is below tol, or the second half is
    nonincreasing (within slack) and ends below decay times the largest value."""
    if not seq or any(v is None for v in seq[len(seq) // 2:]):
        return False
    last = seq[-1]
    if last <= tol:
        return True
    tail = seq[len(seq) // 2:]
    mono = all(b <= a * (1 + slack) + 1e-12 for a, b in zip(tail, tail[1:]))
    top = max(v for v in seq if v is not None)
    return bool(mono and np.isfinite(last) and last <= decay * top)


def sequence_diagnostics(arcs, target: HybridArc, tau: float, tol: float = 1e-2,
                         j_weight: float = 1.0) -> SequenceReport:
    """Start and end of each flow interval along the sequence versus the target,
    plus a uniform bound over the tail of the sequence.  Arcs are taken in sequence
    order; verdicts are finite-sample trend tests (see settles)."""
    arcs = list(arcs)
    if len(arcs) < 2:
        raise ValueError("need at least two arcs")
    rep = SequenceReport(tau)
    for j, ts, _ in _segments_upto(target, tau):
        t_lo, x_lo, t_hi, x_hi = _interval(target, j)
        row = {"j": j, "target_start": [t_lo, x_lo.tolist()], "starts": [], "start_gaps": [],
               "ends": [], "end_gaps": []}
        ends = t_hi + j <= tau
        for a in arcs:
            iv = _interval(a, j)
            if iv is None:
                row["starts"].append(None)
                row["start_gaps"].append(None)
                row["ends"].append(None)
                row["end_gaps"].append(None)
                continue
            a_lo, ax_lo, a_hi, ax_hi = iv
            row["starts"].append([a_lo, ax_lo.tolist()])
            row["start_gaps"].append(max(abs(a_lo - t_lo), float(np.linalg.norm(ax_lo - x_lo))))
            row["ends"].append([a_hi, ax_hi.tolist()])
            row["end_gaps"].append(max(abs(a_hi - t_hi), float(np.linalg.norm(ax_hi - x_hi)))
                                   if ends and len(target.segments) > j + 1 else None)
        if ends and len(target.segments) > j + 1:
            row["target_end"] = [t_hi, x_hi.tolist()]
        if not settles(row["start_gaps"], tol):
            rep.consistent = False
            rep.notes.append(f"start of interval j={j} does not settle near the target "
                             f"(last gap {row['start_gaps'][-1]})")
        if ends and len(target.segments) > j + 1 and not settles(row["end_gaps"], tol):
            rep.consistent = False
            rep.notes.append(f"end of interval j={j} does not settle near the target "
                             f"(last gap {row['end_gaps'][-1]})")
        rep.jumps.append(row)
    for a in arcs:
        pts = graph_points(a, tau)
        rep.bounds.append(float(np.max(np.linalg.norm(pts[:, 2:], axis=1))) if len(pts) else 0.0)
        rep.graph_distances.append(graph_distance(a, target, tau, j_weight))
        rep.margins.append(closeness_margin(a, target, tau))
    rep.tail_bound = max(rep.bounds[len(arcs) // 2:])
    if not np.isfinite(rep.tail_bound):
        rep.consistent = False
        rep.notes.append("tail of the sequence is not uniformly bounded")
    if not settles(rep.graph_distances, tol):
        rep.consistent = False
        rep.notes.append(f"graphical distances do not settle (last {rep.graph_distances[-1]:.3g})")
    return rep
