from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ProbeSchedule:
    """Decreasing radii r_k and perturbation sizes delta_k used by every probe.

    Defaults: r_k = 0.2 * 2^-k for k = 0..6 and delta_k = r_k^2.
    """
    radii: tuple = tuple(0.2 * 2.0 ** -k for k in range(7))
    deltas: tuple | None = None
    samples: int = 12
    tol: float = 1e-2

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        if self.deltas is None:
            object.__setattr__(self, "deltas", tuple(float(v) ** 2 for v in r))
        d = np.asarray(self.deltas, dtype=float)
        if len(d) != len(r):
            raise ValueError("radii and deltas must have the same length")
        for name, seq in (("radii", r), ("deltas", d)):
            if np.any(seq < 0) or np.any(np.diff(seq) > 0):
                raise ValueError(f"{name} must be nonnegative and nonincreasing")

    @classmethod
    def from_radii(cls, radii, **kw):
        return cls(radii=tuple(float(v) for v in radii), **kw)

    def levels(self):
        return list(zip(self.radii, self.deltas))

    def to_json(self):
        return {"radii": list(self.radii), "deltas": list(self.deltas),
                "samples": self.samples, "tol": self.tol}
