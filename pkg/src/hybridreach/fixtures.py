"""Worked examples: definition documents, closed-form oracles and the verdicts the
condition checkers are expected to reproduce."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import HybridSystem, PerturbationFamily
from .definitions import Definition, parse_definition

# slack on hybrid times when an oracle is queried at simulated event times
DOMAIN_TOL = 1e-9


@dataclass
class ExampleFixture:
    name: str
    params: dict
    doc: dict
    definition: Definition
    oracle: Callable | None = None
    jump_times: Callable | None = None
    expected: dict = field(default_factory=dict)
    points: dict = field(default_factory=dict)
    notes: str = ""

    @property
    def system(self) -> HybridSystem:
        return self.definition.system

    @property
    def family(self) -> PerturbationFamily | None:
        return self.definition.family


def _fixture(name, params, doc, **kw):
    return ExampleFixture(name, dict(params), doc, parse_definition(doc), **kw)


def _le(e):
    return {"type": "le", "expr": e}


def _ge(e):
    return {"type": "ge", "expr": e}


def _eq(e):
    return {"type": "eq", "expr": e}


def _and(*s):
    return {"type": "and", "sets": list(s)}


def _or(*s):
    return {"type": "or", "sets": list(s)}


# ---------------------------------------------------------------- bouncing ball

def ball_doc(gamma=1.0, lam=0.5):
    return {
        "name": "bouncing ball", "dim": 2, "params": {"gamma": gamma, "lam": lam},
        "C": _ge("x1"),
        "F": {"vertices": [["x2", "-gamma"]]},
        "D": _and(_eq("x1"), _le("x2")),
        "G": {"vertices": [["0", "-lam*x2"]]},
        "rho": "1",
    }


def _ball_impact(x, gamma):
    """Time until x1 reaches 0 from x along the ballistic flow."""
    x1, x2 = x
    if x1 == 0 and x2 <= 0:
        return 0.0
    return (x2 + math.sqrt(x2 * x2 + 2 * gamma * x1)) / gamma


def bouncing_ball(gamma: float = 1.0, lam: float = 0.5) -> ExampleFixture:
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if not 0 <= lam <= 1:
        raise ValueError("lambda must lie in [0, 1]")

    def flow(x, s):
        return np.array([x[0] + x[1] * s - gamma * s * s / 2, x[1] - gamma * s])

    def jumps(x0, J):
        """[(t_j, state before, state after)] for the first J jumps."""
        out, x, t = [], np.asarray(x0, dtype=float), 0.0
        for _ in range(J):
            s = _ball_impact(x, gamma)
            pre = flow(x, s)
            pre[0] = 0.0
            t += s
            post = np.array([0.0, -lam * pre[1]])
            out.append((t, pre, post))
            x = post
        return out

    def oracle(x0, t, j):
        js = jumps(x0, j)
        t0, x = (js[-1][0], js[-1][2]) if js else (0.0, np.asarray(x0, dtype=float))
        s = t - t0
        end = _ball_impact(x, gamma)
        if s < -DOMAIN_TOL or s > end + DOMAIN_TOL:
            raise ValueError(f"({t}, {j}) is outside the solution domain")
        return flow(x, min(max(s, 0.0), end))

    pts = {
        "boundary50": [[0.0, float(v)] for v in np.linspace(-2.0, 2.0, 50)],
        "origin": [[0.0, 0.0]],
        "above": [[0.0, 1.0]],
    }
    expected = {
        "check_B": {"B1": "pass", "B2": "pass", "B5": "pass", "B6": "pass"},
        "check_V@origin": {"V2": "fail"},
        "check_V@above": {"V2": "pass"},
        "nominally_iwp": True,
    }
    return _fixture("bouncing_ball", {"gamma": gamma, "lambda": lam}, ball_doc(gamma, lam),
                    oracle=oracle, jump_times=lambda x0, J: [a for a, _, _ in jumps(x0, J)],
                    expected=expected, points=pts)


# ---------------------------------------------------------------- thermostat

def thermostat_doc(z_min=1.0, z_max=2.0, z_o=0.0, z_delta=3.0):
    return {
        "name": "thermostat", "dim": 2,
        "params": {"zmin": z_min, "zmax": z_max, "zo": z_o, "zd": z_delta},
        "C": _or(_and(_ge("x1 - zmin"), _eq("x2")), _and(_le("x1 - zmax"), _eq("x2 - 1"))),
        "F": {"vertices": [["-x1 + zo + x2*zd", "0"]]},
        "D": _or(_and(_le("x1 - zmin"), _eq("x2")), _and(_ge("x1 - zmax"), _eq("x2 - 1"))),
        "G": {"vertices": [["x1", "1 - x2"]]},
        "rho": "1",
    }


def thermostat(z_min: float = 1.0, z_max: float = 2.0, z_o: float = 0.0, z_delta: float = 3.0) -> ExampleFixture:
    # the ordering z_o < z_min < z_max < z_o + z_delta keeps both modes reaching their switch levels
    if not z_o < z_min < z_max < z_o + z_delta:
        raise ValueError("need z_o < z_min < z_max < z_o + z_delta")

    def target(q):
        return z_o + q * z_delta

    def dwell(z, q):
        """Flow time until the switch level, 0 if the state is already in D."""
        if q == 0:
            return 0.0 if z <= z_min else math.log((z - z_o) / (z_min - z_o))
        return 0.0 if z >= z_max else math.log((target(1) - z) / (target(1) - z_max))

    def jumps(x0, J):
        out, (z, q), t = [], (float(x0[0]), int(round(x0[1]))), 0.0
        for _ in range(J):
            s = dwell(z, q)
            zs = target(q) + (z - target(q)) * math.exp(-s)
            if s > 0:
                zs = z_min if q == 0 else z_max
            t += s
            out.append((t, np.array([zs, q]), np.array([zs, 1 - q])))
            z, q = zs, 1 - q
        return out

    def oracle(x0, t, j):
        js = jumps(x0, j)
        t0, x = (js[-1][0], js[-1][2]) if js else (0.0, np.asarray(x0, dtype=float))
        z, q = float(x[0]), int(round(x[1]))
        s = t - t0
        end = dwell(z, q)
        if s < -DOMAIN_TOL or s > end + DOMAIN_TOL:
            raise ValueError(f"({t}, {j}) is outside the solution domain")
        s = min(max(s, 0.0), end)
        return np.array([target(q) + (z - target(q)) * math.exp(-s), float(q)])

    expected = {"nominal_iwp_probe": "consistent", "unique_solutions": True}
    return _fixture("thermostat", {"z_min": z_min, "z_max": z_max, "z_o": z_o, "z_delta": z_delta},
                    thermostat_doc(z_min, z_max, z_o, z_delta), oracle=oracle,
                    jump_times=lambda x0, J: [a for a, _, _ in jumps(x0, J)],
                    expected=expected, points={"start": [[z_min, 0.0]], "hot": [[z_max + 1, 1.0]]})


# ---------------------------------------------------------------- planar system

def planar_doc():
    return {
        "name": "planar system", "dim": 2,
        "C": _and(_eq("x1*x2"), _ge("x1")),
        "F": {"vertices": [["1", "0"]]},
        "D": {"type": "empty"},
        "G": {"vertices": [["x1", "x2"]]},
        "family": {
            "symbol": "delta",
            "C": _and(_ge("x1"), _le("x2 - delta"), _ge("x2 + delta")),
            "F": {"vertices": [["1", "-delta*x2"]]},
        },
    }


def planar_system() -> ExampleFixture:
    def oracle(x0, t, j, delta=None):
        if j != 0:
            raise ValueError("the planar system never jumps")
        x1, x2 = map(float, x0)
        if delta is None:
            if x2 == 0 and x1 >= 0:
                return np.array([x1 + t, 0.0])
            if t != 0:
                raise ValueError("maximal solutions off the x1-axis are trivial")
            return np.array([x1, x2])
        return np.array([x1 + t, x2 * math.exp(-delta * t)])

    expected = {"nominal_iwp_probe": "inconsistent", "pert_iwp_probe": "consistent"}
    return _fixture("planar_system", {}, planar_doc(), oracle=oracle, expected=expected,
                    points={"origin": [[0.0, 0.0]]})


# ---------------------------------------------------------------- oscillators

def oscillator_doc():
    return {
        "name": "harmonic oscillator", "dim": 2,
        "C": _eq("x1^2 + x2^2 - 1"),
        "F": {"vertices": [["x2", "-x1"]]},
        "D": {"type": "empty"},
        "G": {"vertices": [["x1", "x2"]]},
        "family": {
            "symbol": "delta",
            # annulus 1 - delta <= |x|^2 <= 1 + delta around the circle
            "C": _and(_ge("x1^2 + x2^2 - 1 + delta"), _le("x1^2 + x2^2 - 1 - delta")),
            "F": {"vertices": [["x2 + (1 - x1^2 - x2^2)*x1", "-x1 + (1 - x1^2 - x2^2)*x2"]]},
        },
    }


def oscillator_family() -> ExampleFixture:
    def oracle(x0, t, j, delta=None):
        if j != 0:
            raise ValueError("the oscillator never jumps")
        x1, x2 = map(float, x0)
        s0 = x1 * x1 + x2 * x2
        phi = math.atan2(x2, x1) - t
        if delta is None:
            r = math.sqrt(s0)
        else:
            # r' = r (1 - r^2): s = r^2 is logistic, s' = 2 s (1 - s)
            e = math.exp(2 * t)
            r = math.sqrt(s0 * e / (1 - s0 + s0 * e))
        return np.array([r * math.cos(phi), r * math.sin(phi)])

    th = np.linspace(0, 2 * np.pi, 20, endpoint=False)
    circle = [[float(np.cos(a)), float(np.sin(a))] for a in th]
    expected = {"check_V": {"V2": "fail"},
                "check_W_P": {"P1": "pass", "P2": "pass", "P3": "pass", "W1": "pass", "W2": "pass"},
                "pert_iwp_probe": "consistent"}
    return _fixture("oscillator_family", {}, oscillator_doc(), oracle=oracle, expected=expected,
                    points={"circle20": circle, "circle8": circle[::5] + circle[2::5]})


# ---------------------------------------------------------------- perturbed bouncing ball

def perturbed_ball_doc(r=0.1, c1=1.0, c2=0.1, gamma=1.0, lam=0.5):
    doc = ball_doc(gamma, lam)
    doc["name"] = "perturbed bouncing ball"
    doc["params"].update({"r": r, "c1": c1, "c2": c2})
    wedge = _and(_ge("x2 + c2"), _le("c1*x2 - c2*x1"))
    Cd = _or(_ge("x1"), wedge)
    doc["family"] = {
        "symbol": "delta",
        "C": Cd,
        "D": _and({"type": "inflate", "set": doc["D"], "radius": "r"}, Cd),
        "F": {"cases": [
            {"when": _and(_le("c1*x2 - c2*x1"), _le("x1")), "vertices": [["x2 - c2*x1/c1", "-gamma"]]},
            {"when": _and(_le("x2"), _le("x1")), "vertices": [["0", "-gamma"]]},
            {"when": {"type": "all"}, "vertices": [["x2", "-gamma"]]},
        ]},
    }
    return doc


def perturbed_ball_family(r: float = 0.1, c1: float = 1.0, c2: float = 0.1, gamma: float = 1.0,
                          lam: float = 0.5) -> ExampleFixture:
    if min(r, c1, c2, gamma) <= 0:
        raise ValueError("r, c1, c2 and gamma must be positive")
    if not 0 <= lam <= 1:
        raise ValueError("lambda must lie in [0, 1]")
    gate = lam * r < c2
    expected = {"check_C": {"C6-post": "pass" if gate else "fail"},
                "check_W_P@D": {"W4": "pass"},
                "iwp_perturbation": gate}
    return _fixture("perturbed_ball_family", {"r": r, "c1": c1, "c2": c2, "gamma": gamma, "lambda": lam},
                    perturbed_ball_doc(r, c1, c2, gamma, lam), expected=expected,
                    points={"D": [[0.0, -v] for v in np.linspace(0.0, 1.0, 6)],
                            "gate": [[0.0, -r], [0.0, r]]},
                    notes=f"lambda*r = {lam * r:g} versus c2 = {c2:g}")


# ---------------------------------------------------------------- waypoint navigation

def waypoint_doc(points):
    P = [list(map(float, p)) for p in points]
    if len(P) < 2 or any(len(p) != 2 for p in P):
        raise ValueError("need at least two planar waypoints")
    C, F, D = [], [], []
    for q in range(len(P) - 1):
        a, b = np.array(P[q]), np.array(P[q + 1])
        L = float(np.linalg.norm(b - a))
        if L == 0:
            raise ValueError("consecutive waypoints must differ")
        d = [float(v) for v in (b - a) / L]
        a, b = [float(v) for v in a], [float(v) for v in b]
        cross = f"({d[0]!r})*(x2 - ({a[1]!r})) - ({d[1]!r})*(x1 - ({a[0]!r}))"
        along = f"({d[0]!r})*(x1 - ({a[0]!r})) + ({d[1]!r})*(x2 - ({a[1]!r}))"
        mode = _eq(f"x3 - {q}")
        C.append(_and(_eq(cross), _ge(along), _le(f"{along} - {L!r}"), mode))
        F.append({"when": mode, "vertices": [[repr(d[0]), repr(d[1]), "0"]]})
        D.append(_and(_eq(f"x1 - ({b[0]!r})"), _eq(f"x2 - ({b[1]!r})"), mode))
    F.append({"when": {"type": "all"}, "vertices": [["0", "0", "0"]]})
    return {"name": "waypoint navigation", "dim": 3, "C": _or(*C), "F": {"cases": F},
            "D": _or(*D), "G": {"vertices": [["x1", "x2", "x3 + 1"]]}}


def waypoint(points=((0.0, 0.0), (1.0, 0.0), (1.0, 1.0))) -> ExampleFixture:
    """Straight segments between planar waypoints p_0..p_{N+1}, unit speed, mode q in x3."""
    P = np.array(points, dtype=float)
    lengths = np.linalg.norm(np.diff(P, axis=0), axis=1)

    def oracle(x0, t, j):
        if not np.allclose(np.asarray(x0, dtype=float), [*P[0], 0.0]):
            raise ValueError("oracle only covers the solution from (p_0, 0)")
        if j >= len(lengths):
            if j == len(lengths) and abs(t - lengths.sum()) < DOMAIN_TOL:
                return np.array([*P[-1], float(j)])
            raise ValueError("outside the solution domain")
        t0 = float(lengths[:j].sum())
        s = t - t0
        if s < -DOMAIN_TOL or s > lengths[j] + DOMAIN_TOL:
            raise ValueError("outside the solution domain")
        s = min(s, lengths[j])
        d = (P[j + 1] - P[j]) / lengths[j]
        return np.array([*(P[j] + max(s, 0.0) * d), float(j)])

    return _fixture("waypoint", {"points": P.tolist()}, waypoint_doc(P.tolist()), oracle=oracle,
                    jump_times=lambda x0, J: [float(lengths[:k + 1].sum()) for k in range(min(J, len(lengths)))],
                    expected={"arrival_time": float(lengths.sum())})


# ---------------------------------------------------------------- small scalar examples

def discontinuous_jump_doc():
    return {
        "name": "discontinuous jump map", "dim": 1,
        "C": _and(_ge("x1"), _le("x1 - 0.5")),
        "F": {"vertices": [["-1"]]},
        "D": _and(_ge("x1 + 0.5"), _le("x1 - 0.5")),
        "G": {"cases": [{"when": _le("x1"), "vertices": [["x1"]]},
                        {"when": {"type": "all"}, "vertices": [["1"]]}]},
    }


def discontinuous_jump() -> ExampleFixture:
    return _fixture("discontinuous_jump", {}, discontinuous_jump_doc(),
                    expected={"check_B": {"B5": "fail"}, "nominally_iwp": True},
                    points={"zero": [[0.0]]},
                    notes="G(x) = x for x <= 0 and 1 otherwise")


def sign_system_doc():
    return {
        "name": "sign inclusion", "dim": 1,
        "C": {"type": "all"},
        "F": {"cases": [{"when": _eq("x1"), "vertices": [["-1"], ["1"]]},
                        {"when": _ge("x1"), "vertices": [["1"]]},
                        {"when": {"type": "all"}, "vertices": [["-1"]]}]},
        "D": {"type": "empty"},
        "G": {"vertices": [["x1"]]},
    }


def sign_system() -> ExampleFixture:
    """x' in sgn(x), F(0) = [-1, 1]: the zero solution is not recovered from nearby starts."""
    def oracle(x0, t, j):
        x = float(x0[0])
        if x == 0:
            raise ValueError("solutions from 0 are not unique")
        return np.array([x + math.copysign(t, x)])

    return _fixture("sign_system", {}, sign_system_doc(), oracle=oracle,
                    expected={"nominally_iwp": False})


FIXTURES = {
    "bouncing_ball": bouncing_ball,
    "thermostat": thermostat,
    "planar_system": planar_system,
    "oscillator_family": oscillator_family,
    "perturbed_ball_family": perturbed_ball_family,
    "waypoint": waypoint,
    "discontinuous_jump": discontinuous_jump,
    "sign_system": sign_system,
}


def get(name: str, **params) -> ExampleFixture:
    try:
        return FIXTURES[name](**params)
    except KeyError:
        raise KeyError(f"unknown example {name!r}; known: {sorted(FIXTURES)}") from None
