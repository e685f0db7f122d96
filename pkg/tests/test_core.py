import numpy as np
import pytest

from hybridreach import fixtures
from hybridreach.core import (HybridArc, HybridSystem, HybridTimeDomain, PerturbationFamily, Segment,
                              domination_check, hbc_check, jump_times, terminal_time, validate_domain)
from hybridreach.expr import parse_expr
from hybridreach.maps import MapSpec
from hybridreach.expr import parse_vec
from hybridreach.sets import Ball
from hybridreach.simulate import SolvePolicy, solve


def dom(*ivs, complete=False):
    return HybridTimeDomain(tuple(ivs), complete)


@pytest.mark.parametrize("E,ok", [
    (dom((0, 0, 1), (1, 1, 2)), True),
    (dom((0, 0, 1), (1, 0.5, 2)), False),
    (dom((0, 0, 0)), True),
    (dom((0, 0.1, 1)), False),
    (dom((0, 0, 1), (2, 1, 2)), False),
    (dom((0, 1, 0.5)), False),
    (dom(), False),
])
def test_validate_domain(E, ok):
    assert validate_domain(E) is ok
    assert validate_domain(HybridTimeDomain.from_json(E.to_json())) is ok


def arc(*segs, complete=False):
    return HybridArc([Segment(j, np.array(ts, float), np.array(xs, float)) for j, ts, xs in segs],
                     1, complete)


def test_terminal_time():
    assert terminal_time(arc((0, [0, 1], [[0], [1]]))) == (1, 0)
    assert terminal_time(arc((0, [0, 1], [[0], [1]]), (1, [1], [[2]]))) == (1, 1)
    assert terminal_time(arc((0, [0, 1], [[0], [1]]), complete=True)) is None


def test_jump_times_continuous():
    assert jump_times(arc((0, [0, 1, 2], [[0], [1], [2]]))) == []


def test_arc_evaluation_reproduces_samples():
    a = arc((0, [0, 0.5, 1], [[0], [3], [1]]), (1, [1, 2], [[5], [6]]))
    for t, j, x in a.samples():
        assert a(t, j).tolist() == x.tolist()
    assert a(0.25, 0)[0] == 1.5
    with pytest.raises(ValueError):
        a(0.5, 1)
    back = HybridArc.from_csv(a.to_csv())
    assert back.to_csv() == a.to_csv()


def test_ball_first_jump(ball):
    x = solve(ball.system, (1, 0), SolvePolicy(priority="jump-first", T_max=2, J_max=1))
    (t, j), = jump_times(x)
    assert j == 0 and t == pytest.approx(np.sqrt(2), abs=1e-9)


def test_thermostat_jumps_at_zero(thermo):
    x = solve(thermo.system, (1.0, 0.0), SolvePolicy(priority="jump-first", T_max=0.5, J_max=1))
    assert jump_times(x)[0] == (0.0, 0)
    assert x(0.0, 1).tolist() == [1.0, 1.0]


def test_hbc_structural(ball, thermo):
    for fx in (ball, thermo):
        rep = hbc_check(fx.system)
        assert rep.summary() == {"A1": "structural-pass", "A2": "structural-pass", "A3": "structural-pass"}


def test_hbc_restrict_to_downgrades():
    H = fixtures.bouncing_ball().system
    G = MapSpec([parse_vec(["0", "-0.5*x2"], 2)], None, Ball((0, 0), 10.0))
    rep = hbc_check(HybridSystem(H.C, H.F, H.D, G, "restricted"))
    assert rep.verdict("A2") == "structural-pass"
    assert rep.verdict("A3") in ("pass", "fail")
    assert rep.verdict("A3") != "structural-pass"
    assert hbc_check(HybridSystem(H.C, H.F, H.D, G), seed=1).summary() == rep.summary()


def test_domination_self(ball):
    H = ball.system
    fam = PerturbationFamily.constant(H)
    pts = [(0.5, 1.0), (0.0, -1.0), (2.0, -3.0)]
    rep = domination_check(fam, H, parse_expr("0", 2), [0.1, 0.01], pts)
    assert all(v == "pass" for v in rep.summary().values())


def test_domination_oscillator(osc_fam):
    fam = osc_fam.family
    H = fam.nominal
    ang = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    pts = [(s * np.cos(a), s * np.sin(a)) for a in ang for s in (0.99, 1.0, 1.01)]
    rep = domination_check(fam, H, parse_expr("3", 2), [0.04, 0.01], pts)
    assert rep.summary() and all(v == "pass" for v in rep.summary().values()), rep.summary()


def test_domination_perturbed_ball_fails():
    fx = fixtures.perturbed_ball_family()
    fam = fx.family
    # the wedge part of C_delta reaches out to (-1, -c2), far from C
    pts = [(-0.9, -0.095), (-0.5, -0.06), (0.5, 0.0)]
    rep = domination_check(fam, fam.nominal, parse_expr("0.1", 2), [0.1], pts)
    assert rep.verdict("dom-C") == "fail"
    w = rep.witnesses("dom-C")[0]
    assert w.witness["distance"] > w.witness["allowed"]


def test_family_binds_delta(osc_fam):
    fam = osc_fam.family
    H1, H2 = fam(0.1), fam(0.1)
    x = (0.5, 0.7)
    assert np.array_equal(H1.F.pieces(x)[0].V, H2.F.pieces(x)[0].V)
    # the extra radial term vanishes on the unit circle
    c = (np.cos(0.3), np.sin(0.3))
    assert np.allclose(fam(0.1).F.pieces(c)[0].V, fam.nominal.F.pieces(c)[0].V)
