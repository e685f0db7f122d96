import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from hybridreach import fixtures
from hybridreach.closeness import graph_distance, tau_eps_close
from hybridreach.cones import ConeConfig, bouligand_contains, dm_contains
from hybridreach.core import HybridArc, Segment, rho_inflate
from hybridreach.expr import DomainError, grad, parse_expr
from hybridreach.maps import MapSpec, check_sample_record, sample_map
from hybridreach.expr import parse_vec
from hybridreach.reach import ReachConfig, directed, hausdorff, reach
from hybridreach.sets import Ball, Box, Intersection, Sublevel

SETTINGS = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
seeds = st.integers(0, 2 ** 32 - 1)


def random_arc(rng, dim=2):
    segs, t = [], 0.0
    for j in range(int(rng.integers(1, 4))):
        n = int(rng.integers(1, 12))
        ts = t + np.cumsum(np.r_[0.0, rng.uniform(0.01, 0.3, n - 1)])
        segs.append(Segment(j, ts, rng.normal(size=(n, dim))))
        t = float(ts[-1])
    return HybridArc(segs, dim)


def nearby_arc(rng, arc, scale):
    return HybridArc([Segment(s.j, s.ts + rng.uniform(0, scale) * (s.ts > 0),
                              s.xs + rng.normal(scale=scale, size=s.xs.shape))
                      for s in arc.segments], arc.dim)


@SETTINGS
@given(seeds, st.floats(0.01, 2.0), st.floats(0.5, 5.0))
def test_closeness_symmetric_and_monotone(seed, eps, tau):
    rng = np.random.default_rng(seed)
    x = random_arc(rng)
    y = nearby_arc(rng, x, 0.05) if rng.uniform() < 0.5 else random_arc(rng)
    a = tau_eps_close(x, y, tau, eps)
    assert a == tau_eps_close(y, x, tau, eps)
    if a:
        assert tau_eps_close(x, y, tau, eps * 1.5)
        assert tau_eps_close(x, y, tau, eps + 1.0)


@SETTINGS
@given(seeds, st.floats(0.5, 5.0))
def test_graph_distance_pseudometric(seed, tau):
    rng = np.random.default_rng(seed)
    x, y, z = random_arc(rng), random_arc(rng), random_arc(rng)
    assert graph_distance(x, x, tau) == 0.0
    assert graph_distance(x, y, tau) == graph_distance(y, x, tau)
    assert graph_distance(x, z, tau) <= graph_distance(x, y, tau) + graph_distance(y, z, tau) + 1e-12


point_sets = st.integers(1, 8).flatmap(
    lambda n: st.lists(st.lists(st.floats(-10, 10), min_size=2, max_size=2), min_size=1, max_size=n))


@SETTINGS
@given(point_sets, point_sets, point_sets)
def test_hausdorff_metric(A, B, C):
    assert hausdorff(A, A) == 0.0
    assert hausdorff(A, B) == hausdorff(B, A)
    assert hausdorff(A, C) <= hausdorff(A, B) + hausdorff(B, C) + 1e-12
    if hausdorff(A, B) == 0.0:
        assert directed(A, B) == 0.0 and directed(B, A) == 0.0


def random_polyhedron(rng):
    k = int(rng.integers(1, 4))
    cons = []
    for _ in range(k):
        a = rng.normal(size=2).tolist()
        cons.append(Sublevel(parse_expr(f"({a[0]!r})*x1 + ({a[1]!r})*x2", 2)))
    return Intersection(cons) if k > 1 else cons[0], k


@SETTINGS
@given(seeds)
def test_dm_inside_implies_bouligand_inside(seed):
    rng = np.random.default_rng(seed)
    S, _ = random_polyhedron(rng)
    # cones through the origin: the origin is on every face
    x = np.zeros(2)
    v = rng.normal(size=2)
    if dm_contains(S, x, v).inside:
        assert bouligand_contains(S, x, v).inside


@SETTINGS
@given(seeds)
def test_cone_paths_agree_on_half_spaces(seed):
    rng = np.random.default_rng(seed)
    a = np.array(rng.normal(size=2).tolist())
    S = Sublevel(parse_expr(f"({float(a[0])!r})*x1 + ({float(a[1])!r})*x2", 2))
    x = np.array([-a[1], a[0]]) * rng.normal()
    v = rng.normal(size=2)
    an = bouligand_contains(S, x, v)
    nu = bouligand_contains(S, x, v, ConeConfig(analytic=False))
    assert {an.verdict, nu.verdict} != {"inside", "outside"}
    g = (a @ v) / np.linalg.norm(a)
    if abs(g) > 2 * ConeConfig().margin * max(1.0, np.linalg.norm(v)):
        assert an.verdict == nu.verdict


BALL = fixtures.bouncing_ball().system


@SETTINGS
@given(st.lists(st.floats(-1.0, 1.0), min_size=2, max_size=2), st.floats(0.0, 0.9), st.floats(0.0, 0.9),
       st.sampled_from(["1", "0.5 + x1^2", "abs(x2)"]))
def test_rho_inflation_monotone_in_delta(x, d1, d2, rho):
    lo, hi = sorted((d1, d2))
    r = parse_expr(rho, 2)
    if rho_inflate(BALL, r, lo).C.contains(x):
        assert rho_inflate(BALL, r, hi).C.contains(x)
    if rho_inflate(BALL, r, lo).D.contains(x):
        assert rho_inflate(BALL, r, hi).D.contains(x)


@SETTINGS
@given(seeds, st.integers(1, 12))
def test_sample_map_members(seed, n):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 4))
    M = MapSpec([parse_vec([repr(float(c)) + "*x1", repr(float(d))], 2) for c, d in rng.normal(size=(k, 2))],
                parse_expr(repr(float(rng.uniform(0, 1))), 2))
    x = rng.normal(size=2)
    s = sample_map(M, x, max(n, k), seed)
    assert len(s) == max(n, k)
    assert check_sample_record(M, x, s)
    for y in s.points:
        assert M.member(y, x, 1e-9)


def expr_text(depth):
    leaf = st.one_of(st.sampled_from(["x1", "x2", "x3"]), st.integers(0, 9).map(str),
                     st.floats(0.1, 5).map(lambda v: f"{v:.3f}"))
    if depth == 0:
        return leaf
    sub = expr_text(depth - 1)
    return st.one_of(
        leaf,
        st.tuples(sub, st.sampled_from(["+", "-", "*", "/", "^"]), sub).map(lambda t: f"({t[0]}) {t[1]} ({t[2]})"),
        sub.map(lambda s: f"-({s})"),
        st.tuples(st.sampled_from(["sin", "cos", "abs", "exp", "sqrt"]), sub).map(lambda t: f"{t[0]}({t[1]})"),
        st.tuples(st.sampled_from(["min", "max"]), sub, sub).map(lambda t: f"{t[0]}({t[1]}, {t[2]})"),
    )


def value_or_error(e, x):
    try:
        return e.eval(x)
    except DomainError:
        return "domain"


@SETTINGS
@given(expr_text(3), seeds)
def test_parse_print_parse(text, seed):
    e = parse_expr(text, 3)
    again = parse_expr(e.print(), 3)
    assert again.print() == e.print()
    rng = np.random.default_rng(seed)
    for x in rng.uniform(-3, 3, size=(100, 3)):
        assert value_or_error(again, x) == value_or_error(e, x)


@SETTINGS
@given(seeds)
def test_grad_on_cubics(seed):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=6).tolist()
    text = (f"({c[0]!r})*x1^3 + ({c[1]!r})*x1*x2^2 + ({c[2]!r})*x2^3 + ({c[3]!r})*x1*x2"
            f" + ({c[4]!r})*x1 + ({c[5]!r})")
    e = parse_expr(text, 2)
    for x1, x2 in rng.uniform(-10, 10, size=(100, 2)):
        g = np.array([3 * c[0] * x1 ** 2 + c[1] * x2 ** 2 + c[3] * x2 + c[4],
                      2 * c[1] * x1 * x2 + 3 * c[2] * x2 ** 2 + c[3] * x1])
        err = np.linalg.norm(grad(e, (x1, x2)) - g)
        assert err <= 1e-5 * max(1.0, np.linalg.norm(g))


@settings(max_examples=15, deadline=None)
@given(seeds, st.floats(0.0, 1.3))
def test_reach_cloud_replays(seed, T):
    c = reach(BALL, Ball((1.0, 0.5), 0.3), T, 0, ReachConfig(n_samples=4), seed=seed)
    ok, worst = c.replay()
    assert ok, worst


THERMO = fixtures.thermostat().system


@settings(max_examples=10, deadline=None)
@given(seeds, st.floats(0.0, 1.0), st.integers(0, 2))
def test_reach_monotone_in_sampling(seed, T, J):
    box = Box((1.1, 0.0), (1.9, 0.0))
    small = reach(THERMO, box, T, J, ReachConfig(n_samples=3, branch_budget=2), seed=seed)
    big = reach(THERMO, box, T, J, ReachConfig(n_samples=6, branch_budget=4), seed=seed)
    assert directed(small, big) <= 1e-9


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_solve_deterministic(seed):
    from hybridreach.simulate import SolvePolicy, solve
    p = SolvePolicy(priority="jump-first", T_max=2.0, flow_selection=("random", 0))
    a = solve(BALL, (1.0, 0.0), p, seed)
    b = solve(BALL, (1.0, 0.0), p, seed)
    assert all(np.array_equal(s.xs, r.xs) and np.array_equal(s.ts, r.ts) for s, r in zip(a.segments, b.segments))
