import numpy as np
import pytest

from hybridreach.core import PerturbationFamily
from hybridreach.expr import parse_expr
from hybridreach.reach import (ReachConfig, directed, doubling_approx, hausdorff, initial_points, isc_probe,
                               merge_clouds, osc_probe, reach, reach_interval)
from hybridreach.schedule import ProbeSchedule
from hybridreach.sets import Ball, Box

R2 = np.sqrt(2.0)
ZERO = ProbeSchedule(radii=(0.0, 0.0), deltas=(0.0, 0.0))


def test_reach_at_zero_is_start(ball):
    for x0 in [(1.0, 0.0), (0.0, -1.0), (2.0, 3.0)]:
        c = reach(ball.system, x0, 0.0, 0)
        assert c.points.tolist() == [list(x0)]


def test_reach_impact_point(ball):
    c = reach(ball.system, (1.0, 0.0), R2, 0)
    assert len(c) == 1
    assert np.allclose(c.points[0], (0.0, -R2), atol=1e-6)
    assert c.replay()[0]


def test_reach_empty_after_early_jump(ball):
    c = reach(ball.system, (0.5, 0.0), R2, 0)
    assert c.empty and not c.partial


def test_interval_degenerate(ball):
    a = reach_interval(ball.system, (1.0, 0.0), 0.7, 0.7, 0)
    b = reach(ball.system, (1.0, 0.0), 0.7, 0)
    assert hausdorff(a, b) == 0.0


def test_interval_pre_jump_segment(ball):
    c = reach_interval(ball.system, (1.0, 0.0), R2 - 0.1, R2 + 0.1, 0)
    # J = 0 points stop at the first jump: T in [sqrt2 - 0.1, sqrt2]
    Ts = [m["T"] for m in c.meta]
    assert max(Ts) <= R2 + 1e-9 and min(Ts) == pytest.approx(R2 - 0.1)
    for p, T in zip(c.points, Ts):
        assert np.allclose(p, ball.oracle((1.0, 0.0), T, 0), atol=1e-9)
    assert c.replay()[0]


def test_hausdorff_examples():
    assert hausdorff([[0.0]], [[3.0]]) == 3.0
    assert hausdorff([[0, 0], [1, 0]], [[0, 1]]) == pytest.approx(R2)
    A = [[0, 0], [1, 2]]
    assert hausdorff(A, A) == 0.0
    assert hausdorff([], A) == np.inf
    assert directed([], A) == 0.0 and directed(A, []) == np.inf


def test_initial_points_sets():
    pts = initial_points(Ball((1.0, 0.0), 0.1), 2, 5, seed=1)
    assert len(pts) == 10
    assert all(np.linalg.norm(p - (1, 0)) <= 0.1 + 1e-12 for p in pts)
    box = initial_points(Box((0, 0), (1, 2)), 2, 3, seed=1)
    assert len(box) == 8
    with pytest.raises(ValueError):
        initial_points(Ball((1.0, 0.0, 0.0), 0.1), 2)


def test_ball_initial_set_replays(ball):
    c = reach(ball.system, Ball((1.0, 0.0), 0.2), 1.0, 0, ReachConfig(n_samples=6))
    assert len(c) == 11
    ok, worst = c.replay()
    assert ok and worst <= 1e-9


def test_sampling_monotone(thermo):
    small = reach(thermo.system, Box((1.2, 0.0), (1.8, 0.0)), 0.5, 1, ReachConfig(n_samples=4, branch_budget=2))
    big = reach(thermo.system, Box((1.2, 0.0), (1.8, 0.0)), 0.5, 1, ReachConfig(n_samples=8, branch_budget=4))
    assert directed(small, big) <= 1e-9


def test_csv_columns(ball):
    c = reach(ball.system, (1.0, 0.0), 1.0, 0)
    head, row = c.to_csv().splitlines()[:2]
    assert head == "x1,x2,T,J,source_x1,source_x2,branch"
    assert row.split(",")[-1] == "-"


def test_merge(ball):
    a = reach(ball.system, (1.0, 0.0), 0.5, 0)
    b = reach(ball.system, (1.0, 0.0), 0.5, 0)
    assert len(merge_clouds([a, b])) == 1


def test_osc_zero_schedule(ball):
    rep = osc_probe(ball.system, parse_expr("1", 2), (1.0, 0.0), 1.0, 0, ZERO)
    assert rep.distances == [0.0, 0.0]


def test_isc_constant_family_zero_schedule(ball):
    fam = PerturbationFamily.constant(ball.system)
    rep = isc_probe(fam, ball.system, (1.0, 0.0), 1.0, 0, ZERO)
    assert rep.distances == [0.0, 0.0]


def test_doubling_not_applicable(ball):
    # (0, -1) cannot flow and T + J = 0
    rep = doubling_approx(None, ball.system, (0.0, -1.0), 0.0, 0, ZERO)
    assert rep.verdict == "not-applicable"


def test_doubling_zero_eps(thermo):
    H = thermo.system
    rep = doubling_approx(None, H, (1.5, 0.0), 0.2, 0, ZERO, eps=[0.0, 0.0])
    nominal = reach(H, (1.5, 0.0), 0.2, 0)
    assert rep.distances == [0.0, 0.0]
    # probes integrate with a coarser step than reach defaults
    assert hausdorff(rep.nominal, nominal) < 1e-8
