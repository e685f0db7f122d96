import numpy as np
import pytest

from hybridreach import fixtures
from hybridreach.core import jump_times
from hybridreach.errors import SimError
from hybridreach.sets import Ball, Box
from conftest import oracle_error
from hybridreach.simulate import (SolvePolicy, flows_possible, replay, solve, solve_to_target, solve_tree,
                                  validate_solution)

JUMP_FIRST = SolvePolicy(priority="jump-first")


def test_ball_matches_oracle(ball):
    arc = solve(ball.system, (1, 0), JUMP_FIRST.with_(T_max=5.0, J_max=10))
    assert len(jump_times(arc)) >= 3
    assert oracle_error(arc, ball) <= 1e-6
    assert validate_solution(ball.system, arc)[0]


def test_thermostat_immediate_jump_then_flow(thermo):
    H = thermo.system
    arc = solve(H, (1.0, 0.0), JUMP_FIRST.with_(T_max=0.5, J_max=1))
    assert jump_times(arc) == [(0.0, 0)]
    for t in (0.1, 0.3, 0.5):
        want = 0.0 + 3.0 + (1.0 - 3.0) * np.exp(-t)
        assert arc(t, 1)[0] == pytest.approx(want, abs=1e-9)


def test_planar_trivial_off_axis(planar):
    arc = solve(planar.system, (0.0, 0.5))
    assert len(arc.segments) == 1 and len(arc.segments[0].ts) == 1
    assert arc.stop_reason not in ("budget",)


def test_outside_start_is_an_error(ball):
    with pytest.raises(SimError):
        solve(ball.system, (-1.0, 0.0))


def test_escape_is_reported():
    from hybridreach.definitions import parse_definition
    H = parse_definition({"dim": 1, "C": {"type": "all"}, "F": {"vertices": [["x1^2"]]},
                          "D": {"type": "empty"}, "G": {"vertices": [["x1"]]}}).system
    arc = solve(H, (1.0,), SolvePolicy(priority="flow-first", T_max=2.0, h=1e-3))
    assert arc.stop_reason == "escape"
    assert arc.escape_time == pytest.approx(1.0, abs=1e-2)


def test_sign_system_tree():
    H = fixtures.sign_system().system
    tree = solve_tree(H, (0.0,), SolvePolicy(T_max=1.0), branch_budget=5)
    ends = sorted(round(float(a.end[2][0]), 9) for a in tree.arcs)
    assert ends == [-1.0, 0.0, 1.0]
    for a in tree.arcs:
        slope = a(1.0, 0)[0]
        assert all(abs(x[0] - slope * t) < 1e-9 for t, _, x in a.samples())


def test_thermostat_tree_unique(thermo):
    for budget in (1, 4, 16):
        tree = solve_tree(thermo.system, (1.0, 0.0), SolvePolicy(T_max=3.0, J_max=3), budget)
        assert len(tree) == 1


def test_budget_one_equals_solve(ball):
    p = SolvePolicy(priority="jump-first", T_max=3.0)
    a = solve_tree(ball.system, (1, 0), p, 1).arcs[0]
    b = solve(ball.system, (1, 0), p)
    assert a.to_csv() == b.to_csv()


def test_replay_reproduces_leaves():
    H = fixtures.sign_system().system
    p = SolvePolicy(T_max=0.5)
    tree = solve_tree(H, (0.0,), p, 5, seed=3)
    for arc, dec in zip(tree.arcs, tree.branches):
        assert replay(H, (0.0,), p, 3, dec).to_csv() == arc.to_csv()


def test_solve_to_target_thermostat(thermo):
    X = Box((1.0, 0.0), (2.0, 1.0))
    arcs = solve_to_target(thermo.system, (3.0, 1.0), X, SolvePolicy(T_max=5.0, J_max=3))
    assert len(arcs) == 1
    assert X.contains(arcs[0].end[2])


def test_solve_to_target_trivial(ball):
    arcs = solve_to_target(ball.system, (1.0, 0.0), Ball((1.0, 0.0), 0.0), SolvePolicy(T_max=2.0))
    assert len(arcs) == 1 and len(list(arcs[0].samples())) == 1


def test_solve_to_target_ball_impact(ball):
    arcs = solve_to_target(ball.system, (1.0, 0.0), ball.system.D, SolvePolicy(T_max=3.0))
    assert len(arcs) == 1
    assert np.allclose(arcs[0].end[2], (0.0, -np.sqrt(2)), atol=1e-6)


@pytest.mark.parametrize("x,want", [((0, 1), "inside"), ((0, -1), "outside"), ((2, -5), "inside")])
def test_flows_possible_ball(ball, x, want):
    assert flows_possible(ball.system, x).verdict == want


def test_flows_possible_on_circle(osc_fam):
    H = osc_fam.family.nominal
    for a in np.linspace(0, 2 * np.pi, 7):
        assert flows_possible(H, (np.cos(a), np.sin(a))).inside


def test_deterministic(ball):
    p = SolvePolicy(priority="jump-first", T_max=4.0, flow_selection=("random", 5))
    assert solve(ball.system, (1, 0), p, seed=2).to_csv() == solve(ball.system, (1, 0), p, seed=2).to_csv()


def test_step_halving_order(thermo):
    # thermostat flow is not polynomial, so RK4 error is visible
    H = thermo.system
    errs = []
    for h in (0.2, 0.1, 0.05):
        arc = solve(H, (1.5, 0.0), JUMP_FIRST.with_(h=h, T_max=3.0, J_max=3))
        errs.append(oracle_error(arc, thermo))
    assert errs[1] <= errs[0] / 4 and errs[2] <= errs[1] / 4
