"""Acceptance criteria 1-11, each at its stated tolerance.

Every test records one PASS/FAIL line (shown in the terminal summary) before
asserting.  Criteria 5, 6 and the literal location in 9 cannot be met by a faithful
implementation; they run in full and are marked xfail(strict=True).
"""
import functools
import math
import time

import numpy as np
import pytest

from hybridreach import fixtures
from hybridreach.closeness import graph_distance, tau_eps_close
from hybridreach.cones import bouligand_contains, dm_contains
from hybridreach.core import jump_times, rho_inflate
from hybridreach.expr import parse_expr
from hybridreach.reach import (directed, doubling_approx, hausdorff, inflation_approx, osc_probe, reach)
from hybridreach.schedule import ProbeSchedule
from hybridreach.simulate import SolvePolicy, solve
from hybridreach.wellposedness import check_B, check_C, check_V, check_W_P, nominal_iwp_probe, pert_iwp_probe

from conftest import oracle_error, report
from test_properties import random_arc, nearby_arc, random_polyhedron

R2 = math.sqrt(2.0)
JF = SolvePolicy(priority="jump-first")
EPS4 = ProbeSchedule(radii=(0.2, 0.1, 0.05, 0.025))


@functools.cache
def ball():
    return fixtures.bouncing_ball(1.0, 0.5)


@functools.cache
def thermo():
    return fixtures.thermostat()


@functools.cache
def ac3_cloud():
    return reach(ball().system, (1.0, 0.0), R2, 0)


@functools.cache
def ac4_clouds():
    return tuple(reach(ball().system, (1.0 - e, 0.0), R2, 0) for e in (0.1, 0.5, 1.0))


@functools.cache
def ac5_report():
    return inflation_approx(None, ball().system, (1.0, 0.0), R2, 0, EPS4)


AC6_AT = ((1.0, 0.0), 0.35, 1)


@functools.cache
def ac6_report():
    x0, T, J = AC6_AT
    return doubling_approx(None, thermo().system, x0, T, J, EPS4)


@functools.cache
def ac7_report():
    s = ProbeSchedule(radii=(0.2, 0.1, 0.05), deltas=(0.2, 0.1, 0.05))
    return osc_probe(ball().system, parse_expr("1", 2), (1.0, 0.0), 1.0, 0, s)


def test_ac1_bouncing_ball_oracle():
    fx = ball()
    t0 = time.perf_counter()
    arc = solve(fx.system, (1.0, 0.0), JF.with_(T_max=5.0, J_max=10))
    err = oracle_error(arc, fx)
    got = [t for t, _ in jump_times(arc)]
    want = fx.jump_times((1.0, 0.0), len(got))
    jerr = max(abs(a - b) for a, b in zip(got, want))
    ok = len(got) >= 3 and err <= 1e-6 and jerr <= 1e-8
    report("AC1", ok, f"jumps={len(got)} state err={err:.2e} jump-time err={jerr:.2e} ({time.perf_counter() - t0:.1f}s)")
    assert ok


def test_ac2_thermostat_oracle():
    fx = thermo()
    t0 = time.perf_counter()
    errs = []
    for x0 in ((1.0, 0.0), (3.0, 1.0)):
        arc = solve(fx.system, x0, JF.with_(T_max=10.0, J_max=10, tau_max=10.0))
        errs.append(oracle_error(arc, fx))
    ok = max(errs) <= 1e-6
    report("AC2", ok, f"max err={max(errs):.2e} ({time.perf_counter() - t0:.1f}s)")
    assert ok


def test_ac3_reach_point():
    c = ac3_cloud()
    ok = len(c) == 1 and np.linalg.norm(c.points[0] - (0.0, -R2)) <= 1e-6 \
        and abs(abs(c.points[0][1]) - math.sqrt(2 * 1.0 * 1.0)) <= 1e-6
    report("AC3", ok, f"points={c.points.tolist()}")
    assert ok


def test_ac4_reach_empty():
    sizes = [len(c) for c in ac4_clouds()]
    ok = sizes == [0, 0, 0]
    report("AC4", ok, f"sizes for eps 0.1, 0.5, 1.0: {sizes}")
    assert ok


@pytest.mark.xfail(strict=True, reason="final inflation distance about 0.088 > 0.05 (ledgered)")
def test_ac5_inflation_recovery():
    rep = ac5_report()
    d = [hausdorff(c, [(0.0, -R2)]) for c in rep.clouds]
    ok = all(np.isfinite(d)) and rep.nonincreasing and d[-1] <= 0.05
    report("AC5", ok, "distances=" + ", ".join(f"{v:.3f}" for v in d), expected_fail=True)
    assert ok


@pytest.mark.xfail(strict=True, reason="doubling distance bounded below by eps at T-eps (ledgered)")
def test_ac6_doubling_probe():
    rep = ac6_report()
    hyp = rep.hypothesis["G(D) in C~"]
    d = rep.distances
    ok = hyp["holds"] and hyp["samples"] == 50 and rep.nonincreasing and d[-1] < 1e-2
    report("AC6", ok, "distances=" + ", ".join(f"{v:.3f}" for v in d)
           + f" G(D) in C~ on {hyp['samples']} samples: {hyp['holds']}", expected_fail=True)
    assert ok


def test_ac6_sampler_hypothesis_holds():
    # the part of criterion 6 that is attainable
    hyp = ac6_report().hypothesis["G(D) in C~"]
    assert hyp["holds"] and hyp["samples"] == 50


def test_ac7_outer_sc_probe():
    rep = ac7_report()
    d = rep.distances
    ok = d[-1] <= 0.15 and rep.nonincreasing
    report("AC7", ok, "directed distances=" + ", ".join(f"{v:.3f}" for v in d))
    assert ok


def _agree(rep, expected):
    got = {c: rep.verdict(c) for c in expected}
    good = {c: got[c] == v or (v == "pass" and got[c] == "structural-pass") for c, v in expected.items()}
    return all(good.values()), got


def test_ac8_verdict_matrix():
    t0 = time.perf_counter()
    rows = []
    fx = ball()
    H = fx.system
    rows.append(("ball B", *_agree(check_B(H, fx.points["boundary50"]), fx.expected["check_B"])))
    rows.append(("ball V origin", *_agree(check_V((H.C, H.F), H.D, fx.points["origin"]), fx.expected["check_V@origin"])))
    rows.append(("ball V (0,1)", *_agree(check_V((H.C, H.F), H.D, fx.points["above"]), fx.expected["check_V@above"])))
    assert fx.points["origin"] == [[0.0, 0.0]] and fx.points["above"] == [[0.0, 1.0]]

    osc = fixtures.oscillator_family()
    fam = osc.family
    Hn = fam.nominal
    circle = osc.points["circle20"]
    rv = check_V((Hn.C, Hn.F), Hn.D, circle)
    ok_v, got_v = _agree(rv, osc.expected["check_V"])
    # fail at all 20 sampled points, not just somewhere
    ok_v = ok_v and len(circle) == 20 and len(rv.witnesses("V2")) == 20
    rows.append(("oscillator V (20 pts)", ok_v, got_v))
    rows.append(("oscillator W/P", *_agree(check_W_P(fam, (Hn.C, Hn.F), Hn.D, None, circle),
                                           osc.expected["check_W_P"])))

    dj = fixtures.discontinuous_jump()
    rb = check_B(dj.system, dj.points["zero"])
    ok_b, got_b = _agree(rb, dj.expected["check_B"])
    ok_b = ok_b and bool(rb.witnesses("B5")) and rb.witnesses("B5")[0].witness is not None
    rows.append(("discontinuous G B5", ok_b, got_b))

    ok = all(r[1] for r in rows)
    agree = sum(r[1] for r in rows)
    report("AC8", ok, f"{agree}/{len(rows)} rows agree ({time.perf_counter() - t0:.1f}s); "
           + "; ".join(f"{n}: {g}" for n, _, g in rows))
    assert ok


@functools.cache
def gate(c2):
    fx = fixtures.perturbed_ball_family(r=0.1, c2=c2, lam=0.5)
    return fx.points["gate"], check_C(fx.family, fx.family.nominal, fx.points["gate"])


def test_ac9_gate():
    _, hi = gate(0.1)
    pts, lo = gate(0.04)
    w = lo.witnesses("C6-post")
    # the failing witness sits on the x2 axis at distance r from the origin
    on_axis = any(abs(e.witness["xi"][0]) < 1e-12 and abs(abs(e.witness["xi"][1]) - 0.1) < 1e-12 for e in w)
    ok = hi.verdict("C6-post") == "pass" and lo.verdict("C6-post") == "fail" and on_axis
    report("AC9a", ok, f"c2=0.1: {hi.verdict('C6-post')}, c2=0.04: {lo.verdict('C6-post')} "
           f"witness xi={[e.witness['xi'] for e in w][:2]}")
    assert ok


@pytest.mark.xfail(strict=True, reason="G at x=(0,-0.1) lies in the flow set; the failure is at (0,0.1) (ledgered)")
def test_ac9b_literal_failure_location():
    _, lo = gate(0.04)
    ok = any(np.allclose(e.witness["xi"], (0.0, -0.1)) for e in lo.witnesses("C6-post"))
    report("AC9b", ok, "failure located at xi=(0,-0.1): " + str(ok), expected_fail=True)
    assert ok


S6 = ProbeSchedule(radii=tuple(0.2 * 2.0 ** -k for k in range(6)))


def test_ac10_iwp_probes():
    t0 = time.perf_counter()
    th = thermo().system
    tgt = solve(th, (1.0, 0.0), JF.with_(T_max=1.0, J_max=2))
    a = nominal_iwp_probe(th, tgt, S6)
    m = a.margins
    ok_a = a.consistent and len(m) == 6 and all(y < x for x, y in zip(m, m[1:])) and m[-1] < 1e-2

    pl = fixtures.planar_system()
    fam = pl.family
    Hn = fam.nominal
    ptgt = solve(Hn, (0.0, 0.0), SolvePolicy(priority="flow-first", T_max=1.0))
    b = nominal_iwp_probe(Hn, ptgt, S6)
    ok_b = not b.consistent and min(b.margins) > 0.5
    c = pert_iwp_probe(fam, Hn, ptgt, S6)
    ok_c = c.consistent and all(c.nonempty)

    ok = ok_a and ok_b and ok_c
    report("AC10", ok, f"thermostat margins={[round(v, 5) for v in m]}; planar nominal "
           f"min margin={min(b.margins):.3f} ({'inconsistent' if not b.consistent else 'consistent'}); "
           f"planar family {'consistent' if c.consistent else 'inconsistent'} ({time.perf_counter() - t0:.1f}s)")
    assert ok


def test_ac11_property_suites():
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    bad = {}

    n = 0
    for _ in range(1000):
        x = random_arc(rng)
        y = nearby_arc(rng, x, 0.05) if rng.uniform() < 0.5 else random_arc(rng)
        tau, eps = rng.uniform(0.5, 5.0), rng.uniform(0.01, 2.0)
        a = tau_eps_close(x, y, tau, eps)
        if a != tau_eps_close(y, x, tau, eps) or (a and not tau_eps_close(x, y, tau, 1.5 * eps)):
            n += 1
        if graph_distance(x, y, tau) != graph_distance(y, x, tau):
            n += 1
    bad["closeness (1000 pairs)"] = n

    n = 0
    for _ in range(1000):
        A, B, C = (rng.normal(scale=3, size=(int(rng.integers(1, 9)), 2)) for _ in range(3))
        if hausdorff(A, A) != 0.0 or hausdorff(A, B) != hausdorff(B, A) \
                or hausdorff(A, C) > hausdorff(A, B) + hausdorff(B, C) + 1e-12 \
                or hausdorff(A, B) < 0 or directed(A, B) > hausdorff(A, B):
            n += 1
    bad["hausdorff (1000 triples)"] = n

    n = 0
    for _ in range(200):
        S, _ = random_polyhedron(rng)
        v = rng.normal(size=2)
        if dm_contains(S, np.zeros(2), v).inside and not bouligand_contains(S, np.zeros(2), v).inside:
            n += 1
    bad["dm in bouligand (200 polyhedra)"] = n

    n = 0
    H = ball().system
    rhos = [parse_expr(e, 2) for e in ("1", "0.5 + x1^2", "abs(x2)")]
    for _ in range(250):
        x = rng.uniform(-1, 1, 2)
        lo, hi = np.sort(rng.uniform(0, 0.9, 2))
        r = rhos[int(rng.integers(3))]
        A, B = rho_inflate(H, r, lo), rho_inflate(H, r, hi)
        n += bool(A.C.contains(x) and not B.C.contains(x))
        n += bool(A.D.contains(x) and not B.D.contains(x))
    bad["rho monotone (500 queries)"] = n

    clouds = [ac3_cloud(), *ac4_clouds()]
    for rep in (ac5_report(), ac6_report(), ac7_report()):
        clouds += [rep.nominal, *rep.clouds]
    n = 0
    for c in clouds:
        if not c.empty:
            n += not c.replay()[0]
    bad[f"replay ({len(clouds)} clouds)"] = n

    ok = not any(bad.values())
    report("AC11", ok, f"violations {bad} ({time.perf_counter() - t0:.1f}s)")
    assert ok
