"""Set-valued maps of the form conv{v_1(x),...,v_k(x)} + r(x) B."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DefinitionError
from .expr import Expr, VecExpr, bind, constant, parse_expr, parse_vec
from .geometry import EmptySetError, hull_distance
from .sets import SetSpec, sample_near, set_from_json


@dataclass
class Piece:
    """conv(rows of V) + radius * B."""
    V: np.ndarray
    radius: float


@dataclass
class MapSample:
    points: np.ndarray
    piece: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    offsets: list = field(default_factory=list)
    dropped: int = 0

    @property
    def empty(self) -> bool:
        return len(self.points) == 0

    def __len__(self):
        return len(self.points)


class MapBase:
    dim: int
    out_dim: int
    restrict_to: SetSpec | None = None

    def pieces(self, x) -> list[Piece]:
        raise NotImplementedError

    def vertex_count(self, x) -> int:
        return sum(len(p.V) for p in self.pieces(x))

    def distance(self, y, x) -> float:
        """dist(y, M(x)) ignoring restrict_to."""
        best = np.inf
        for p in self.pieces(x):
            d, _, _ = hull_distance(p.V, y)
            best = min(best, max(0.0, d - p.radius))
        return best

    def member(self, y, x, tol=1e-9) -> bool:
        if self.distance(y, x) > tol:
            return False
        return self.restrict_to is None or self.restrict_to.contains(y, tol)

    def continuous(self) -> bool:
        """True when continuity holds by construction (no restriction, no pieces)."""
        return False

    def bind(self, values):
        return self


class MapSpec(MapBase):
    def __init__(self, vertices, radius: Expr | None = None, restrict_to: SetSpec | None = None):
        self.vertices = tuple(vertices)
        if not self.vertices:
            raise ValueError("a map needs at least one vertex")
        self.dim = self.vertices[0].dim
        self.out_dim = len(self.vertices[0].components)
        for v in self.vertices:
            if v.dim != self.dim or len(v.components) != self.out_dim:
                raise ValueError("vertex dimension mismatch")
        self.radius = radius if radius is not None else constant(0.0, self.dim)
        self.restrict_to = restrict_to

    def pieces(self, x):
        x = np.asarray(x, dtype=float)
        V = np.array([v.eval(x) for v in self.vertices])
        r = self.radius.eval(x)
        if r < 0:
            raise ValueError(f"negative map radius {r!r} at {x.tolist()!r}")
        return [Piece(V, r)]

    def continuous(self):
        return self.restrict_to is None

    def bind(self, values):
        return MapSpec(
            [VecExpr(tuple(bind(c, values) for c in v.components), v.dim) for v in self.vertices],
            bind(self.radius, values),
            self.restrict_to.bind(values) if self.restrict_to is not None else None,
        )

    def to_json(self):
        out = {"vertices": [v.texts() for v in self.vertices]}
        if self.radius.text.strip() not in ("0", "0.0"):
            out["radius"] = self.radius.text
        if self.restrict_to is not None:
            out["restrict_to"] = self.restrict_to.to_json()
        return out


class PiecewiseMap(MapBase):
    """First matching region selects the map; regions are tested in order."""

    def __init__(self, cases, restrict_to: SetSpec | None = None):
        self.cases = tuple(cases)
        if not self.cases:
            raise ValueError("piecewise map needs at least one case")
        self.dim = self.cases[0][1].dim
        self.out_dim = self.cases[0][1].out_dim
        self.restrict_to = restrict_to

    def select(self, x):
        for k, (region, m) in enumerate(self.cases):
            if region.contains(x, 1e-12):
                return k, m
        raise ValueError(f"no piece of the map covers {list(x)!r}")

    def pieces(self, x):
        return self.select(x)[1].pieces(x)

    def bind(self, values):
        return PiecewiseMap([(r.bind(values), m.bind(values)) for r, m in self.cases],
                            self.restrict_to.bind(values) if self.restrict_to is not None else None)

    def to_json(self):
        out = {"cases": [{"when": r.to_json(), **m.to_json()} for r, m in self.cases]}
        if self.restrict_to is not None:
            out["restrict_to"] = self.restrict_to.to_json()
        return out


_OFFSETS = {}


def _offsets(n):
    # x itself, then axis and diagonal unit offsets
    if n not in _OFFSETS:
        offs = [np.zeros(n)]
        eye = np.eye(n)
        for i in range(n):
            offs += [eye[i], -eye[i]]
            for k in range(i + 1, n):
                for a in (1, -1):
                    for b in (1, -1):
                        offs.append((a * eye[i] + b * eye[k]) / np.sqrt(2))
        _OFFSETS[n] = offs
    return _OFFSETS[n]


def structured_near(S: SetSpec, x, s: float, extra: int = 0, seed: int = 0):
    """Deterministic points of (x + s B) cap S: x, axis and diagonal offsets, projected
    onto S when needed; ``extra`` adds seeded random points."""
    x = np.asarray(x, dtype=float)
    if s <= 0:
        return [x] if S.contains(x) else []
    out, seen = [], set()
    for o in _offsets(len(x)):
        c = x + s * o
        if S.contains(c, 0.0):
            z = c
        else:
            try:
                z, _ = S.project(c)
            except EmptySetError:
                return []
        key = (z + 0.0).tobytes()
        w = z - x
        if key not in seen and np.sqrt(w @ w) <= s * (1 + 1e-12):
            seen.add(key)
            out.append(z)
    if extra:
        rng = np.random.default_rng([seed, *_seed_key(x)])
        for z in sample_near(S, x, s, extra, rng):
            if (z + 0.0).tobytes() not in seen:
                seen.add((z + 0.0).tobytes())
                out.append(z)
    return out


class InflatedFlowMap(MapBase):
    """cl conv F((x + s B) cap C) + s B with s = scale * rho(x), sampled."""

    def __init__(self, F: MapBase, C: SetSpec, rho: Expr, scale: float, n_random: int = 0, seed: int = 0):
        self.F, self.C, self.rho, self.scale = F, C, rho, float(scale)
        self.dim, self.out_dim = F.dim, F.out_dim
        self.n_random, self.seed = n_random, seed

    def pieces(self, x):
        x = np.asarray(x, dtype=float)
        s = self.scale * self.rho.eval(x)
        if s < 0:
            raise ValueError(f"negative inflation radius at {x.tolist()!r}")
        pts = structured_near(self.C, x, s, self.n_random, self.seed)
        if not pts:
            return []
        V, rad = [], 0.0
        for y in pts:
            for p in self.F.pieces(y):
                V.extend(p.V)
                rad = max(rad, p.radius)
        return [Piece(np.array(V), rad + s)]


class InflatedJumpMap(MapBase):
    """Union over sampled y in G((x + s B) cap D) of y + scale*rho(y) B."""

    def __init__(self, G: MapBase, D: SetSpec, rho: Expr, scale: float, n_random: int = 0,
                 n_values: int = 4, seed: int = 0):
        self.G, self.D, self.rho, self.scale = G, D, rho, float(scale)
        self.dim, self.out_dim = G.dim, G.out_dim
        self.n_random, self.n_values, self.seed = n_random, n_values, seed

    def pieces(self, x):
        x = np.asarray(x, dtype=float)
        s = self.scale * self.rho.eval(x)
        if s < 0:
            raise ValueError(f"negative inflation radius at {x.tolist()!r}")
        out = []
        for k, xp in enumerate(structured_near(self.D, x, s, self.n_random, self.seed)):
            m = max(self.n_values, self.G.vertex_count(xp))
            for y in sample_map(self.G, xp, m, self.seed + k).points:
                ry = self.scale * self.rho.eval(y)
                if ry < 0:
                    raise ValueError(f"negative inflation radius at {y.tolist()!r}")
                out.append(Piece(y[None, :], ry))
        return out


def _seed_key(x):
    # stable integer key from the bit pattern of x, for per-point sampling seeds
    return [int(v) for v in np.frombuffer(np.asarray(x, dtype=np.float64).tobytes(), dtype=np.uint32)]


def sample_map(M: MapBase, x, n: int, seed: int) -> MapSample:
    """All vertices of M(x) plus n-k random points of M(x), with generation records.

    Random points are convex combinations (flat Dirichlet weights) shifted by
    radius times a random unit vector.  Points outside ``restrict_to`` are
    dropped and counted.
    """
    x = np.asarray(x, dtype=float)
    pieces = M.pieces(x)
    rng = np.random.default_rng(seed)
    pts, rec_piece, rec_w, rec_off = [], [], [], []
    for pi, p in enumerate(pieces):
        for i in range(len(p.V)):
            w = np.zeros(len(p.V))
            w[i] = 1.0
            pts.append(p.V[i].copy())
            rec_piece.append(pi)
            rec_w.append(w)
            rec_off.append(np.zeros(p.V.shape[1]))
    k = len(pts)
    if pieces and n < k and isinstance(M, MapSpec):
        raise ValueError(f"need n >= vertex count ({k}), got {n}")
    single = len(pieces) == 1 and len(pieces[0].V) == 1 and pieces[0].radius == 0
    if pieces and not single:
        for _ in range(max(0, n - k)):
            pi = int(rng.integers(len(pieces)))
            p = pieces[pi]
            w = rng.dirichlet(np.ones(len(p.V)))
            u = rng.normal(size=p.V.shape[1])
            u /= max(np.linalg.norm(u), 1e-300)
            off = p.radius * u
            pts.append(w @ p.V + off)
            rec_piece.append(pi)
            rec_w.append(w)
            rec_off.append(off)
    dropped = 0
    if M.restrict_to is not None and pts:
        keep = [M.restrict_to.contains(q) for q in pts]
        dropped = keep.count(False)
        pts = [q for q, kp in zip(pts, keep) if kp]
        rec_piece = [a for a, kp in zip(rec_piece, keep) if kp]
        rec_w = [a for a, kp in zip(rec_w, keep) if kp]
        rec_off = [a for a, kp in zip(rec_off, keep) if kp]
    arr = np.array(pts).reshape(-1, M.out_dim)
    return MapSample(arr, rec_piece, rec_w, rec_off, dropped)


def check_sample_record(M: MapBase, x, sample: MapSample, tol=1e-9) -> bool:
    """Re-derive each sampled point from its barycentric record."""
    pieces = M.pieces(x)
    for q, pi, w, off in zip(sample.points, sample.piece, sample.weights, sample.offsets):
        p = pieces[pi]
        if np.any(w < -tol) or abs(w.sum() - 1) > tol:
            return False
        if np.linalg.norm(off) > p.radius + tol:
            return False
        if np.linalg.norm(w @ p.V + off - q) > tol * (1 + np.linalg.norm(q)):
            return False
    return True


def map_from_json(obj, dim: int, params=(), path: str = "") -> MapBase:
    if not isinstance(obj, dict):
        raise DefinitionError(f"{path or '/'}: map must be an object")
    restrict = None
    if "restrict_to" in obj:
        restrict = set_from_json(obj["restrict_to"], dim, params, f"{path}/restrict_to")
    if "cases" in obj:
        extra = set(obj) - {"cases", "restrict_to"}
        if extra:
            raise DefinitionError(f"{path}: unknown keys {sorted(extra)}")
        cases = []
        for i, c in enumerate(obj["cases"]):
            p = f"{path}/cases/{i}"
            if not isinstance(c, dict) or "when" not in c:
                raise DefinitionError(f"{p}: case needs a 'when' set")
            region = set_from_json(c["when"], dim, params, f"{p}/when")
            rest = {k: v for k, v in c.items() if k != "when"}
            cases.append((region, map_from_json(rest, dim, params, p)))
        return PiecewiseMap(cases, restrict)
    extra = set(obj) - {"vertices", "radius", "restrict_to"}
    if extra:
        raise DefinitionError(f"{path}: unknown keys {sorted(extra)}")
    if "vertices" not in obj:
        raise DefinitionError(f"{path}: missing key 'vertices'")
    verts = obj["vertices"]
    if not isinstance(verts, list) or not verts:
        raise DefinitionError(f"{path}/vertices: expected a nonempty list")
    vs = []
    for i, v in enumerate(verts):
        if not isinstance(v, list) or not v:
            raise DefinitionError(f"{path}/vertices/{i}: expected a list of expressions")
        try:
            vs.append(parse_vec([str(t) for t in v], dim, params))
        except Exception as e:
            raise DefinitionError(f"{path}/vertices/{i}: {e}") from None
    if len({len(v.components) for v in vs}) != 1:
        raise DefinitionError(f"{path}/vertices: vertices of different lengths")
    radius = None
    if "radius" in obj:
        try:
            radius = parse_expr(str(obj["radius"]), dim, params)
        except Exception as e:
            raise DefinitionError(f"{path}/radius: {e}") from None
    return MapSpec(vs, radius, restrict)


def single_valued(texts, dim, params=()) -> MapSpec:
    return MapSpec([parse_vec(texts, dim, params)])


__all__ = [
    "Piece", "MapSample", "MapBase", "MapSpec", "PiecewiseMap", "InflatedFlowMap",
    "InflatedJumpMap", "sample_map", "check_sample_record", "map_from_json", "single_valued",
]
