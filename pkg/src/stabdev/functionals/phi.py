"""Bounded nonnegative edge-length weights given as tables."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Phi:
    """Tabulated bounded function of an edge length.

    ``kind="step"``: ``breaks`` has ``m`` entries and ``values`` has ``m + 1``;
    ``phi(r) = values[j]`` with ``j`` the number of breaks strictly below
    ``r``, so ``Phi.indicator(s)`` is ``1(r <= s)``.

    ``kind="linear"``: ``breaks`` and ``values`` have equal length and
    ``phi`` interpolates linearly, constant beyond the ends.
    """

    breaks: tuple
    values: tuple
    kind: str = "step"

    def __post_init__(self):
        b = np.asarray(self.breaks, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if np.any(np.diff(b) <= 0):
            raise ValueError("phi breakpoints must be strictly increasing")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("phi must be finite and nonnegative")
        if self.kind == "step" and v.size != b.size + 1:
            raise ValueError("step phi needs len(values) == len(breaks) + 1")
        if self.kind == "linear" and (v.size != b.size or b.size == 0):
            raise ValueError("linear phi needs len(values) == len(breaks) >= 1")
        if self.kind not in ("step", "linear"):
            raise ValueError(f"unknown phi kind {self.kind!r}")
        object.__setattr__(self, "breaks", tuple(b))
        object.__setattr__(self, "values", tuple(v))

    @classmethod
    def constant(cls, c: float = 1.0) -> "Phi":
        return cls((), (c,))

    @classmethod
    def indicator(cls, s: float) -> "Phi":
        """``1(r <= s)``."""
        return cls((float(s),), (1.0, 0.0))

    @classmethod
    def from_csv(cls, path, kind: str = "linear") -> "Phi":
        """Read a table with header columns ``r`` and ``phi``."""
        with open(Path(path), newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or "r" not in rows[0] or "phi" not in rows[0]:
            raise ValueError("phi CSV needs columns 'r' and 'phi'")
        r = [float(row["r"]) for row in rows]
        v = [float(row["phi"]) for row in rows]
        if kind == "step":
            return cls(tuple(r[1:]), tuple(v))
        return cls(tuple(r), tuple(v), "linear")

    @property
    def sup(self) -> float:
        return max(self.values)

    def scaled(self, factor: float) -> "Phi":
        """``r -> phi(r * factor)``."""
        return Phi(tuple(b / factor for b in self.breaks), self.values, self.kind)

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        v = np.asarray(self.values)
        if self.kind == "step":
            return v[np.searchsorted(np.asarray(self.breaks), r, side="left")]
        return np.interp(r, np.asarray(self.breaks), v)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "breaks": list(self.breaks), "values": list(self.values)}
