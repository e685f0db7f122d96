"""Closed sets described by expressions, and membership/projection on them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .expr import Expr, affine_form, bind, grad, parse_expr
from .geometry import EmptySetError, project_polyhedron


@dataclass(frozen=True)
class Constraint:
    """One smooth constraint g(x) <= 0 ("le") or g(x) == 0 ("eq")."""
    kind: str
    value: object
    gradient: object


def _vec(x, dim):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {x.shape[0]}")
    return x


class SetSpec:
    dim: int

    def contains(self, x, tol: float = 1e-9) -> bool:
        raise NotImplementedError

    def project(self, y):
        """Nearest point of the set to y, as (point, exact)."""
        raise NotImplementedError

    def polyhedron(self):
        """(A, b, E, f) with the set equal to {A x <= b, E x = f}, or None."""
        return None

    def smooth(self):
        """List of Constraint whose intersection is the set, or None."""
        return None

    def bind(self, values: dict) -> "SetSpec":
        return self

    def to_json(self) -> dict:
        raise NotImplementedError

    def is_empty(self) -> bool:
        return False


class Whole(SetSpec):
    def __init__(self, dim: int):
        self.dim = dim

    def contains(self, x, tol=1e-9):
        _vec(x, self.dim)
        return True

    def project(self, y):
        return _vec(y, self.dim).copy(), True

    def polyhedron(self):
        n = self.dim
        return np.zeros((0, n)), np.zeros(0), np.zeros((0, n)), np.zeros(0)

    def smooth(self):
        return []

    def to_json(self):
        return {"type": "all"}


class Empty(SetSpec):
    def __init__(self, dim: int):
        self.dim = dim

    def contains(self, x, tol=1e-9):
        _vec(x, self.dim)
        return False

    def project(self, y):
        raise EmptySetError("empty set")

    def is_empty(self):
        return True

    def to_json(self):
        return {"type": "empty"}


class Sublevel(SetSpec):
    """{x : g(x) <= 0}."""

    def __init__(self, g: Expr):
        self.g = g
        self.dim = g.dim
        self._aff = affine_form(g) if not g.params else None

    def contains(self, x, tol=1e-9):
        return self.g.eval(_vec(x, self.dim)) <= tol

    def polyhedron(self):
        if self._aff is None:
            return None
        a, b = self._aff
        n = self.dim
        if not a.any():
            # constant constraint: whole space or empty
            if b <= 0:
                return np.zeros((0, n)), np.zeros(0), np.zeros((0, n)), np.zeros(0)
            return None
        return a[None, :], np.array([-b]), np.zeros((0, n)), np.zeros(0)

    def smooth(self):
        if self._aff is not None:
            a = self._aff[0]
            return [Constraint("le", self.g.eval, lambda x, a=a: a)]
        return [Constraint("le", self.g.eval, lambda x: grad(self.g, x))]

    def project(self, y):
        y = _vec(y, self.dim)
        if self.contains(y, 0.0):
            return y.copy(), True
        poly = self.polyhedron()
        if poly is not None:
            return project_polyhedron(y, *poly), True
        return _generic_project(self, y)

    def bind(self, values):
        return Sublevel(bind(self.g, values))

    def to_json(self):
        return {"type": "le", "expr": self.g.text}


class Zero(SetSpec):
    """{x : g(x) = 0}."""

    def __init__(self, g: Expr):
        self.g = g
        self.dim = g.dim
        self._aff = affine_form(g) if not g.params else None

    def contains(self, x, tol=1e-9):
        return abs(self.g.eval(_vec(x, self.dim))) <= tol

    def polyhedron(self):
        if self._aff is None:
            return None
        a, b = self._aff
        n = self.dim
        if not a.any():
            return None
        return np.zeros((0, n)), np.zeros(0), a[None, :], np.array([-b])

    def smooth(self):
        if self._aff is not None:
            a = self._aff[0]
            return [Constraint("eq", self.g.eval, lambda x, a=a: a)]
        return [Constraint("eq", self.g.eval, lambda x: grad(self.g, x))]

    def project(self, y):
        y = _vec(y, self.dim)
        if self.contains(y, 0.0):
            return y.copy(), True
        poly = self.polyhedron()
        if poly is not None:
            return project_polyhedron(y, *poly), True
        return _generic_project(self, y)

    def bind(self, values):
        return Zero(bind(self.g, values))

    def to_json(self):
        return {"type": "eq", "expr": self.g.text}


class Ball(SetSpec):
    def __init__(self, center, radius: float):
        self.center = np.asarray(center, dtype=float).reshape(-1)
        self.radius = float(radius)
        if self.radius < 0:
            raise ValueError("negative radius")
        self.dim = len(self.center)

    def contains(self, x, tol=1e-9):
        return float(np.linalg.norm(_vec(x, self.dim) - self.center)) <= self.radius + tol

    def project(self, y):
        y = _vec(y, self.dim)
        d = y - self.center
        nd = float(np.linalg.norm(d))
        if nd <= self.radius:
            return y.copy(), True
        return self.center + d * (self.radius / nd), True

    def smooth(self):
        c, r = self.center, self.radius
        return [Constraint("le", lambda x: float((x - c) @ (x - c) - r * r),
                           lambda x: 2 * (np.asarray(x) - c))]

    def to_json(self):
        return {"type": "ball", "center": self.center.tolist(), "radius": self.radius}


class Box(SetSpec):
    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float).reshape(-1)
        self.hi = np.asarray(hi, dtype=float).reshape(-1)
        if self.lo.shape != self.hi.shape or np.any(self.lo > self.hi):
            raise ValueError("box needs lo <= hi componentwise")
        self.dim = len(self.lo)

    def contains(self, x, tol=1e-9):
        x = _vec(x, self.dim)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def project(self, y):
        return np.clip(_vec(y, self.dim), self.lo, self.hi), True

    def polyhedron(self):
        n = self.dim
        rows, rhs = [], []
        for i in range(n):
            if np.isfinite(self.hi[i]):
                e = np.zeros(n)
                e[i] = 1
                rows.append(e)
                rhs.append(self.hi[i])
            if np.isfinite(self.lo[i]):
                e = np.zeros(n)
                e[i] = -1
                rows.append(e)
                rhs.append(-self.lo[i])
        A = np.array(rows).reshape(-1, n)
        return A, np.array(rhs), np.zeros((0, n)), np.zeros(0)

    def smooth(self):
        A, b, _, _ = self.polyhedron()
        return [Constraint("le", lambda x, a=a, c=c: float(a @ x - c), lambda x, a=a: a)
                for a, c in zip(A, b)]

    def to_json(self):
        return {"type": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


class Intersection(SetSpec):
    def __init__(self, parts):
        self.parts = tuple(parts)
        if not self.parts:
            raise ValueError("empty intersection list")
        self.dim = self.parts[0].dim
        if any(p.dim != self.dim for p in self.parts):
            raise ValueError("dimension mismatch in intersection")

    def contains(self, x, tol=1e-9):
        return all(p.contains(x, tol) for p in self.parts)

    def polyhedron(self):
        # sets are immutable, so the stacked constraints are computed once
        if not hasattr(self, "_poly"):
            polys = [p.polyhedron() for p in self.parts]
            if any(q is None for q in polys):
                self._poly = None
            else:
                self._poly = (np.vstack([q[0] for q in polys]), np.concatenate([q[1] for q in polys]),
                              np.vstack([q[2] for q in polys]), np.concatenate([q[3] for q in polys]))
        return self._poly

    def smooth(self):
        out = []
        for p in self.parts:
            s = p.smooth()
            if s is None:
                return None
            out.extend(s)
        return out

    def project(self, y):
        y = _vec(y, self.dim)
        if self.contains(y, 0.0):
            return y.copy(), True
        poly = self.polyhedron()
        if poly is not None:
            return project_polyhedron(y, *poly), True
        # one violated factor whose projection satisfies the rest: that is the projection
        bad = [p for p in self.parts if not p.contains(y, 0.0)]
        if len(bad) == 1:
            z, exact = bad[0].project(y)
            if self.contains(z, 1e-9):
                return z, exact
        return _generic_project(self, y)

    def is_empty(self):
        if not hasattr(self, "_empty"):
            self._empty = self._check_empty()
        return self._empty

    def _check_empty(self):
        if any(p.is_empty() for p in self.parts):
            return True
        poly = self.polyhedron()
        if poly is not None:
            try:
                project_polyhedron(np.zeros(self.dim), *poly)
            except EmptySetError:
                return True
        return False

    def bind(self, values):
        return Intersection([p.bind(values) for p in self.parts])

    def to_json(self):
        return {"type": "and", "sets": [p.to_json() for p in self.parts]}


class Union(SetSpec):
    def __init__(self, parts):
        self.parts = tuple(parts)
        if not self.parts:
            raise ValueError("empty union list")
        self.dim = self.parts[0].dim
        if any(p.dim != self.dim for p in self.parts):
            raise ValueError("dimension mismatch in union")

    def contains(self, x, tol=1e-9):
        return any(p.contains(x, tol) for p in self.parts)

    def project(self, y):
        y = _vec(y, self.dim)
        best, best_d, exact = None, np.inf, True
        for p in self.parts:
            if p.is_empty():
                continue
            try:
                z, ex = p.project(y)
            except EmptySetError:
                continue
            d = float(np.linalg.norm(z - y))
            if d < best_d:
                best, best_d = z, d
            exact = exact and ex
        if best is None:
            raise EmptySetError("union of empty sets")
        return best, exact

    def is_empty(self):
        return all(p.is_empty() for p in self.parts)

    def bind(self, values):
        return Union([p.bind(values) for p in self.parts])

    def to_json(self):
        return {"type": "or", "sets": [p.to_json() for p in self.parts]}


class Product(SetSpec):
    """Cartesian product; each factor acts on its own block of coordinates."""

    def __init__(self, parts):
        self.parts = tuple(parts)
        if not self.parts:
            raise ValueError("empty product list")
        self.dim = sum(p.dim for p in self.parts)
        self._cuts = np.cumsum([0] + [p.dim for p in self.parts])

    def _blocks(self, x):
        return [x[a:b] for a, b in zip(self._cuts[:-1], self._cuts[1:])]

    def contains(self, x, tol=1e-9):
        x = _vec(x, self.dim)
        return all(p.contains(b, tol) for p, b in zip(self.parts, self._blocks(x)))

    def project(self, y):
        y = _vec(y, self.dim)
        out, exact = [], True
        for p, b in zip(self.parts, self._blocks(y)):
            z, ex = p.project(b)
            out.append(z)
            exact = exact and ex
        return np.concatenate(out), exact

    def is_empty(self):
        return any(p.is_empty() for p in self.parts)

    def bind(self, values):
        return Product([p.bind(values) for p in self.parts])

    def to_json(self):
        return {"type": "product", "sets": [p.to_json() for p in self.parts]}


class Inflated(SetSpec):
    """{x : dist(x, base) <= scale * rho(x)}, i.e. base grown by a state-dependent radius."""

    def __init__(self, base: SetSpec, rho: Expr, scale: float = 1.0):
        self.base = base
        self.rho = rho
        self.scale = float(scale)
        self.dim = base.dim

    def radius(self, x) -> float:
        r = self.scale * self.rho.eval(x)
        if r < 0:
            raise ValueError(f"negative inflation radius {r!r} at {list(x)!r}")
        return r

    def contains(self, x, tol=1e-9):
        x = _vec(x, self.dim)
        if self.base.is_empty():
            return False
        return distance_est(self.base, x) <= self.radius(x) + tol

    def project(self, y):
        y = _vec(y, self.dim)
        if self.contains(y, 0.0):
            return y.copy(), True
        p, exact = self.base.project(y)
        d = y - p
        nd = float(np.linalg.norm(d))
        # march back toward the base until the state-dependent radius is met
        lo, hi = 0.0, nd
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            z = p + d * (mid / nd)
            if mid <= self.radius(z):
                lo = mid
            else:
                hi = mid
        z = p + d * (lo / nd)
        const = affine_form(self.rho) is not None and not affine_form(self.rho)[0].any()
        return z, bool(exact and const)

    def is_empty(self):
        return self.base.is_empty()

    def bind(self, values):
        return Inflated(self.base.bind(values), bind(self.rho, values), self.scale)

    def to_json(self):
        out = {"type": "inflate", "set": self.base.to_json(), "radius": self.rho.text}
        if self.scale != 1.0:
            out["scale"] = self.scale
        return out


def _generic_project(S: SetSpec, y, restarts: int = 3):
    """Approximate nearest point for sets without a closed-form projection.

    A feasible point is found first (Newton steps for single smooth
    constraints, Dykstra-style alternation for intersections); a
    constrained local solve then polishes it when smooth constraints exist.
    """
    y = np.asarray(y, dtype=float)
    start = None
    if isinstance(S, (Sublevel, Zero)):
        start = _newton_to_surface(S, y)
    elif isinstance(S, Intersection):
        start = _alternate(S, y)
    if start is None or not S.contains(start, 1e-9):
        start = None
    cons = S.smooth()
    best = start
    best_d = np.inf if start is None else float(np.linalg.norm(start - y))
    if cons:
        scale = best_d if np.isfinite(best_d) and best_d > 0 else 1.0
        sc = []
        for c in cons:
            if c.kind == "le":
                sc.append({"type": "ineq", "fun": lambda u, c=c: -c.value(y + scale * u),
                           "jac": lambda u, c=c: -scale * np.asarray(c.gradient(y + scale * u))})
            else:
                sc.append({"type": "eq", "fun": lambda u, c=c: c.value(y + scale * u),
                           "jac": lambda u, c=c: scale * np.asarray(c.gradient(y + scale * u))})
        starts = [np.zeros(len(y))]
        if start is not None:
            starts.insert(0, (start - y) / scale)
        rng = np.random.default_rng(0)
        starts += [rng.normal(size=len(y)) for _ in range(restarts - 1)]
        for u0 in starts:
            try:
                res = minimize(lambda u: float(u @ u), u0, jac=lambda u: 2 * u,
                               constraints=sc, method="SLSQP",
                               options={"ftol": 1e-14, "maxiter": 200})
            except (ArithmeticError, ValueError):
                continue
            z = y + scale * res.x
            if not np.all(np.isfinite(z)) or not S.contains(z, 1e-9):
                continue
            d = float(np.linalg.norm(z - y))
            if d < best_d:
                best, best_d = z, d
    if best is None:
        raise EmptySetError("no point of the set found near the query")
    return best, False


def _newton_to_surface(S, y, iters=100):
    z = y.copy()
    for _ in range(iters):
        g = S.g.eval(z)
        if isinstance(S, Sublevel) and g <= 0:
            return z
        if abs(g) <= 1e-13:
            return z
        dg = grad(S.g, z)
        nn = float(dg @ dg)
        if nn == 0 or not np.isfinite(nn):
            return None
        z = z - (g / nn) * dg
    return z


def _alternate(S, y, iters=200):
    # Dykstra's algorithm over the factors of an intersection
    parts = S.parts
    z = y.copy()
    incs = [np.zeros_like(y) for _ in parts]
    for _ in range(iters):
        prev = z.copy()
        for i, p in enumerate(parts):
            try:
                w, _ = p.project(z + incs[i])
            except EmptySetError:
                return None
            incs[i] = z + incs[i] - w
            z = w
        if S.contains(z, 1e-10) and np.linalg.norm(z - prev) < 1e-13:
            break
    return z


def contains(S: SetSpec, x, tol: float = 1e-9) -> bool:
    return S.contains(x, tol)


def distance_info(S: SetSpec, x):
    """(distance, exact) from x to S; raises EmptySetError for empty sets."""
    x = _vec(x, S.dim)
    if S.is_empty():
        raise EmptySetError("distance to an empty set")
    if S.contains(x, 0.0):
        return 0.0, True
    z, exact = S.project(x)
    return float(np.linalg.norm(z - x)), exact


def distance_est(S: SetSpec, x, cfg=None) -> float:
    return distance_info(S, x)[0]


def sample_near(S: SetSpec, x, r: float, n: int, rng, boundary: bool = False):
    """Points of (x + r B) intersected with S (or with its boundary).

    Candidates drawn uniformly from the ball are kept when inside, or
    replaced by their projection when it stays within the ball.  With
    ``boundary`` the points are pushed onto the boundary instead.
    """
    x = np.asarray(x, dtype=float)
    d = len(x)
    cands = [x.copy()]
    for _ in range(n):
        u = rng.normal(size=d)
        u /= max(np.linalg.norm(u), 1e-300)
        cands.append(x + r * rng.uniform() ** (1.0 / d) * u)
    out = []
    slack = r * (1 + 1e-12) + 1e-15
    for c in cands:
        inside = S.contains(c, 0.0)
        if boundary:
            if inside:
                z = _exit_point(S, c, rng, r)
                if z is None:
                    continue
            else:
                try:
                    z, _ = S.project(c)
                except EmptySetError:
                    return []
        else:
            if inside:
                z = c
            else:
                try:
                    z, _ = S.project(c)
                except EmptySetError:
                    return []
        if np.linalg.norm(z - x) <= slack:
            out.append(z)
    return _dedupe(out)


def _exit_point(S, c, rng, r):
    # boundary point along a random ray from an interior candidate
    u = rng.normal(size=len(c))
    u /= max(np.linalg.norm(u), 1e-300)
    lo, hi = 0.0, 2 * r
    if S.contains(c + hi * u, 0.0):
        return None
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if S.contains(c + mid * u, 0.0):
            lo = mid
        else:
            hi = mid
    return c + lo * u


def _dedupe(pts, tol=0.0):
    out = []
    for p in pts:
        if not any(np.array_equal(p, q) for q in out):
            out.append(p)
    return out


def is_interior(S: SetSpec, x, probe: float | None = None, n_dirs: int = 16, seed: int = 0) -> bool:
    """Ball probe: x is treated as interior when a small sphere around it stays in S."""
    x = np.asarray(x, dtype=float)
    if not S.contains(x, 0.0):
        return False
    h = probe if probe is not None else 1e-7 * max(1.0, float(np.linalg.norm(x)))
    dirs = [e for i in range(len(x)) for e in (np.eye(len(x))[i], -np.eye(len(x))[i])]
    rng = np.random.default_rng(seed)
    for _ in range(n_dirs):
        u = rng.normal(size=len(x))
        dirs.append(u / np.linalg.norm(u))
    return all(S.contains(x + h * u, 0.0) for u in dirs)


def set_from_json(obj, dim: int, params=(), path: str = "") -> SetSpec:
    """Build a SetSpec from its JSON form; errors carry a JSON pointer."""
    from .errors import DefinitionError

    if not isinstance(obj, dict) or "type" not in obj:
        raise DefinitionError(f"{path or '/'}: set must be an object with a 'type'")
    kind = obj["type"]
    allowed = {
        "all": {"type"}, "empty": {"type"},
        "le": {"type", "expr"}, "ge": {"type", "expr"}, "eq": {"type", "expr"},
        "ball": {"type", "center", "radius"}, "box": {"type", "lo", "hi"},
        "and": {"type", "sets"}, "or": {"type", "sets"}, "product": {"type", "sets"},
        "inflate": {"type", "set", "radius", "scale"},
    }
    if kind not in allowed:
        raise DefinitionError(f"{path}/type: unknown set type {kind!r}")
    extra = set(obj) - allowed[kind]
    if extra:
        raise DefinitionError(f"{path}: unknown keys {sorted(extra)}")

    def ex(key, text):
        try:
            return parse_expr(text, dim, params)
        except Exception as e:
            raise DefinitionError(f"{path}/{key}: {e}") from None

    try:
        if kind == "all":
            return Whole(dim)
        if kind == "empty":
            return Empty(dim)
        if kind == "le":
            return Sublevel(ex("expr", obj["expr"]))
        if kind == "ge":
            return Sublevel(ex("expr", f"-({obj['expr']})"))
        if kind == "eq":
            return Zero(ex("expr", obj["expr"]))
        if kind == "ball":
            b = Ball(obj["center"], obj["radius"])
        elif kind == "box":
            b = Box(obj["lo"], obj["hi"])
        elif kind == "inflate":
            return Inflated(set_from_json(obj["set"], dim, params, f"{path}/set"),
                            ex("radius", str(obj["radius"])), obj.get("scale", 1.0))
        else:
            parts = obj["sets"]
            if not isinstance(parts, list) or not parts:
                raise DefinitionError(f"{path}/sets: expected a nonempty list")
            if kind == "product":
                raise DefinitionError(f"{path}: product sets are not supported in files")
            subs = [set_from_json(p, dim, params, f"{path}/sets/{i}") for i, p in enumerate(parts)]
            return Intersection(subs) if kind == "and" else Union(subs)
    except KeyError as e:
        raise DefinitionError(f"{path}: missing key {e.args[0]!r}") from None
    except ValueError as e:
        raise DefinitionError(f"{path}: {e}") from None
    if b.dim != dim:
        raise DefinitionError(f"{path}: set dimension {b.dim} differs from system dimension {dim}")
    return b
