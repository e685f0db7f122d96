"""JSON system-definition files: load, validate, dump.

A document looks like::

    {"name": "bouncing ball", "dim": 2,
     "params": {"gamma": 1.0, "lam": 0.5},
     "C": <set>, "F": <map>, "D": <set>, "G": <map>,
     "X": <set>,                                   (optional target set)
     "rho": "<expr>",                              (optional)
     "family": {"symbol": "delta", "C": ..., "F": ..., "D": ..., "G": ...}}

Missing family entries fall back to the nominal data.  Named parameters are
substituted at load time; the family symbol stays free until the family is
evaluated at some delta.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .core import HybridSystem, PerturbationFamily
from .errors import DefinitionError
from .expr import Expr, bind, parse_expr
from .maps import map_from_json
from .sets import SetSpec, set_from_json

TOP_KEYS = {"name", "dim", "params", "C", "F", "D", "G", "X", "rho", "family", "description"}
FAMILY_KEYS = {"symbol", "C", "F", "D", "G"}


@dataclass
class Definition:
    """Everything a definition file describes."""
    system: HybridSystem
    family: PerturbationFamily | None = None
    X: SetSpec | None = None
    rho: Expr | None = None
    params: dict | None = None
    doc: dict | None = None

    @property
    def name(self):
        return self.system.name


def parse_definition(doc: dict) -> Definition:
    if not isinstance(doc, dict):
        raise DefinitionError("/: definition must be a JSON object")
    extra = set(doc) - TOP_KEYS
    if extra:
        raise DefinitionError(f"/: unknown keys {sorted(extra)}")
    for k in ("dim", "C", "F", "D", "G"):
        if k not in doc:
            raise DefinitionError(f"/: missing key {k!r}")
    dim = doc["dim"]
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise DefinitionError("/dim: expected a positive integer")
    params = doc.get("params", {}) or {}
    if not isinstance(params, dict) or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                                for v in params.values()):
        raise DefinitionError("/params: expected an object of numbers")
    names = tuple(params)
    values = {k: float(v) for k, v in params.items()}

    def build(part, path, fam_names=()):
        ns = names + tuple(fam_names)
        if path.endswith(("C", "D", "X")):
            obj = set_from_json(part, dim, ns, path)
        else:
            obj = map_from_json(part, dim, ns, path)
        return obj.bind(values) if values else obj

    name = str(doc.get("name", ""))
    C, F, D, G = (build(doc[k], f"/{k}") for k in ("C", "F", "D", "G"))
    try:
        H = HybridSystem(C, F, D, G, name)
    except ValueError as e:
        raise DefinitionError(f"/: {e}") from None
    X = build(doc["X"], "/X") if "X" in doc else None
    rho = None
    if "rho" in doc:
        try:
            rho = parse_expr(str(doc["rho"]), dim, names)
        except Exception as e:
            raise DefinitionError(f"/rho: {e}") from None
        if values:
            rho = bind(rho, values)
    fam = None
    if "family" in doc:
        f = doc["family"]
        if not isinstance(f, dict):
            raise DefinitionError("/family: expected an object")
        extra = set(f) - FAMILY_KEYS
        if extra:
            raise DefinitionError(f"/family: unknown keys {sorted(extra)}")
        sym = f.get("symbol", "delta")
        if sym in names:
            raise DefinitionError(f"/family/symbol: {sym!r} clashes with a parameter")
        parts = {k: build(f[k], f"/family/{k}", (sym,)) if k in f else getattr(H, k)
                 for k in ("C", "F", "D", "G")}
        try:
            template = HybridSystem(parts["C"], parts["F"], parts["D"], parts["G"], f"{name} family")
        except ValueError as e:
            raise DefinitionError(f"/family: {e}") from None
        fam = PerturbationFamily(template=template, symbol=sym, rho=rho, name=f"{name} family", nominal=H)
    return Definition(H, fam, X, rho, values, doc)


def load_definition(path) -> Definition:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise DefinitionError(f"cannot read {path}: {e.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise DefinitionError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from None
    return parse_definition(doc)


def load_system(path):
    """HybridSystem, or a PerturbationFamily when the file has a family section
    (the nominal system is then available as family.nominal)."""
    d = load_definition(path)
    return d.family if d.family is not None else d.system


def dump_definition(d: Definition) -> dict:
    """Serialize from the objects themselves (parameters already substituted)."""
    H = d.system
    out = {"name": H.name, "dim": H.dim, "C": H.C.to_json(), "F": H.F.to_json(),
           "D": H.D.to_json(), "G": H.G.to_json()}
    if d.X is not None:
        out["X"] = d.X.to_json()
    if d.rho is not None:
        out["rho"] = d.rho.text
    if d.family is not None:
        T = d.family.template
        fam = {"symbol": d.family.symbol}
        for k in ("C", "F", "D", "G"):
            a, b = getattr(T, k).to_json(), getattr(H, k).to_json()
            if a != b:
                fam[k] = a
        out["family"] = fam
    return out


def shipped(name: str) -> Path:
    """Path of a definition file shipped with the package."""
    p = resources.files("hybridreach") / "data" / (name if name.endswith(".json") else f"{name}.json")
    return Path(str(p))


def shipped_names():
    return sorted(p.name[:-5] for p in (resources.files("hybridreach") / "data").iterdir()
                  if p.name.endswith(".json"))
