import numpy as np
import pytest

from hybridreach import fixtures


@pytest.fixture(scope="session")
def ball():
    return fixtures.bouncing_ball(1.0, 0.5)


@pytest.fixture(scope="session")
def thermo():
    return fixtures.thermostat()


@pytest.fixture(scope="session")
def planar():
    return fixtures.planar_system()


@pytest.fixture(scope="session")
def osc_fam():
    return fixtures.oscillator_family()


def oracle_error(arc, fx):
    """Max state error against the closed form; sample times are clamped into the
    oracle's own jump intervals so tiny jump-time differences do not count twice."""
    J = arc.J
    tj = [0.0] + list(fx.jump_times(arc.x0, J + 1))
    err = 0.0
    for t, j, x in arc.samples():
        hi = tj[j + 1] if j + 1 < len(tj) else np.inf
        s = min(max(t, tj[j]), hi)
        err = max(err, float(np.max(np.abs(x - fx.oracle(arc.x0, s, j)))))
    return err


# one PASS/FAIL line per acceptance criterion, printed at the end of the run
ACCEPTANCE = []


def report(cid, ok, detail="", expected_fail=False):
    tag = "PASS" if ok else "FAIL"
    if expected_fail and not ok:
        tag += " (known unattainable, xfail)"
    line = f"{cid:<4} {tag}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
