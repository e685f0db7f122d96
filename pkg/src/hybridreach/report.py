from __future__ import annotations

from dataclasses import dataclass, field

PASS, FAIL, INCONCLUSIVE, STRUCTURAL, VACUOUS = (
    "pass", "fail", "inconclusive", "structural-pass", "vacuous")


def _plain(v):
    # numpy scalars/arrays to JSON-friendly values
    try:
        import numpy as np
        if isinstance(v, np.ndarray):
            return v.tolist()
        if isinstance(v, np.generic):
            return v.item()
    except ImportError:  # pragma: no cover
        pass
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


@dataclass
class Entry:
    id: str
    verdict: str
    point: list | None = None
    witness: dict | None = None
    notes: str = ""

    def to_json(self):
        return _plain({"id": self.id, "verdict": self.verdict, "point": self.point,
                       "witness": self.witness, "notes": self.notes})


@dataclass
class ConditionReport:
    entries: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def add(self, cid, verdict, point=None, witness=None, notes=""):
        if verdict == FAIL and not witness:
            raise ValueError(f"fail verdict for {cid} needs a witness")
        if point is not None:
            point = [float(v) for v in point]
        self.entries.append(Entry(cid, verdict, point, witness, notes))
        return self.entries[-1]

    def extend(self, other: "ConditionReport"):
        self.entries.extend(other.entries)
        self.notes.extend(other.notes)

    def ids(self):
        out = []
        for e in self.entries:
            if e.id not in out:
                out.append(e.id)
        return out

    def of(self, cid):
        return [e for e in self.entries if e.id == cid]

    def verdict(self, cid) -> str:
        """Aggregate: any fail wins, then inconclusive, then pass; all-vacuous is vacuous."""
        vs = [e.verdict for e in self.of(cid)]
        if not vs:
            raise KeyError(cid)
        if FAIL in vs:
            return FAIL
        if INCONCLUSIVE in vs:
            return INCONCLUSIVE
        real = [v for v in vs if v != VACUOUS]
        if not real:
            return VACUOUS
        if all(v == STRUCTURAL for v in real):
            return STRUCTURAL
        return PASS

    def witnesses(self, cid):
        return [e for e in self.of(cid) if e.verdict == FAIL]

    def summary(self):
        return {cid: self.verdict(cid) for cid in self.ids()}

    def to_json(self):
        return {"summary": self.summary(), "entries": [e.to_json() for e in self.entries],
                "notes": list(self.notes)}
