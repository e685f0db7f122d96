import math

import numpy as np
import pytest

from conftest import oracle_error
from hybridreach import fixtures
from hybridreach.core import HybridArc, Segment
from hybridreach.simulate import SolvePolicy, solve, validate_solution

JF = SolvePolicy(priority="jump-first")


def oracle_arc(fx, x0, T, J, n=400, **kw):
    """Arc sampled from the closed form on its own jump intervals, up to (T, J)."""
    tj = [0.0] + (list(fx.jump_times(x0, J + 1)) if fx.jump_times else [])
    segs = []
    for j in range(J + 1):
        lo = tj[j]
        hi = min(tj[j + 1], T) if j + 1 < len(tj) else T
        ts = np.linspace(lo, hi, n) if hi > lo else np.array([lo])
        segs.append(Segment(j, ts, np.array([fx.oracle(x0, t, j, **kw) for t in ts])))
        if j + 1 >= len(tj) or tj[j + 1] > T:
            break
    return HybridArc(segs, len(x0))


def test_ball_oracle_values(ball):
    assert np.allclose(ball.oracle((1, 0), 1.0, 0), (0.5, -1.0))
    assert ball.jump_times((1, 0), 1)[0] == pytest.approx(math.sqrt(2), abs=1e-15)
    # post-jump velocity is lambda times the impact speed
    t1 = ball.jump_times((1, 0), 1)[0]
    assert ball.oracle((1, 0), t1, 1)[1] == pytest.approx(0.5 * math.sqrt(2))


def test_thermostat_oracle(thermo):
    z = 1.5
    for t in (0.1, 0.4):
        assert thermo.oracle((z, 1.0), t, 0)[0] == pytest.approx(3 + (z - 3) * math.exp(-t))
    assert thermo.jump_times((1.0, 0.0), 1) == [0.0]
    assert thermo.oracle((1.0, 0.0), 0.0, 1).tolist() == [1.0, 1.0]
    # from above z_min it flows down to z_min, then jumps
    (t1,) = thermo.jump_times((1.2, 0.0), 1)
    assert t1 == pytest.approx(math.log(1.2)) and thermo.oracle((1.2, 0.0), t1, 0)[0] == pytest.approx(1.0)


def test_oscillator(osc_fam):
    fam = osc_fam.family
    for a in np.linspace(0, 6, 5):
        c = (math.cos(a), math.sin(a))
        assert np.allclose(fam(0.3).F.pieces(c)[0].V, fam.nominal.F.pieces(c)[0].V, atol=1e-12)
    x = osc_fam.oracle((0.5, 0.0), 3.0, 0, delta=0.1)
    r = float(np.hypot(*x))
    s0, e = 0.25, math.exp(6.0)
    assert r == pytest.approx(math.sqrt(s0 * e / (1 - s0 + s0 * e)))


def test_waypoint_arrival():
    fx = fixtures.waypoint()
    arc = solve(fx.system, (0.0, 0.0, 0.0), JF.with_(T_max=5.0, J_max=5))
    assert arc.segments[0].t_hi == pytest.approx(1.0, abs=1e-9)
    assert arc.segments[2].t_lo == pytest.approx(fx.expected["arrival_time"], abs=1e-9)
    assert np.allclose(arc.segments[2].xs[0][:2], (1.0, 1.0), atol=1e-9)
    assert oracle_error(arc.truncate(2.0, 2), fx) <= 1e-9


@pytest.mark.parametrize("build,kw", [
    (fixtures.bouncing_ball, {"gamma": 0.0}),
    (fixtures.bouncing_ball, {"lam": 1.5}),
    (fixtures.thermostat, {"z_min": 2.5}),
    (fixtures.perturbed_ball_family, {"c2": -1.0}),
])
def test_parameter_ranges(build, kw):
    with pytest.raises(ValueError):
        build(**kw)


@pytest.mark.parametrize("name,x0,T,J", [
    ("bouncing_ball", (1.0, 0.0), 4.0, 4),
    ("thermostat", (1.0, 0.0), 3.0, 4),
    ("thermostat", (3.0, 1.0), 3.0, 4),
])
def test_oracle_trajectories_are_solutions(name, x0, T, J):
    fx = fixtures.get(name)
    arc = oracle_arc(fx, x0, T, J)
    ok, problems = validate_solution(fx.system, arc, set_tol=1e-8, jump_tol=1e-8)
    assert ok, problems


def test_planar_family_oracle_is_solution(planar):
    fam = planar.family
    arc = oracle_arc(planar, (0.0, 0.05), 1.0, 0, delta=0.1)
    assert validate_solution(fam(0.1), arc, set_tol=1e-8)[0]
    assert validate_solution(planar.system, oracle_arc(planar, (0.0, 0.0), 1.0, 0), set_tol=1e-8)[0]


@pytest.mark.parametrize("name,x0,T,J", [
    ("bouncing_ball", (1.0, 0.0), 5.0, 4),
    ("thermostat", (1.0, 0.0), 5.0, 5),
    ("thermostat", (1.7, 1.0), 4.0, 4),
])
def test_solve_matches_oracle(name, x0, T, J):
    fx = fixtures.get(name)
    arc = solve(fx.system, x0, JF.with_(T_max=T, J_max=J, tau_max=5.0))
    assert oracle_error(arc, fx) <= 1e-6


def test_every_fixture_loads():
    for name in fixtures.FIXTURES:
        fx = fixtures.get(name)
        assert fx.system.dim >= 1
    with pytest.raises(KeyError):
        fixtures.get("nope")
