"""Functional descriptors and (rescaled) evaluation.

A :class:`FunctionalSpec` names one score family ``xi(x; X)`` and its
parameters.  Length parameters are expressed in the units of ``xi`` itself;
:func:`rescale_evaluate` evaluates ``xi_lam(x; X) = xi(lam^(1/d) x; lam^(1/d) X)``
by dilating the configuration.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..geometry import PointCloud
from . import graphs, packing, voronoi
from .phi import Phi

__all__ = ["FAMILIES", "FunctionalSpec", "FunctionalValueVector", "evaluate", "rescale_evaluate", "dilate"]

FAMILIES = ("constant", "rsa", "birth_growth", "knn_edge", "voronoi_cell", "sig")

_DIMS = {
    "constant": (1, 2, 3),
    "rsa": (1, 2, 3),
    "birth_growth": (1, 2, 3),
    "knn_edge": (1, 2, 3),
    "voronoi_cell": (2,),
    "sig": (1, 2, 3),
}

_DEFAULTS = {
    "constant": {"c": 1.0},
    "rsa": {"r": 0.5},
    "birth_growth": {"v": 1.0, "rho_max": 0.5},
    "knn_edge": {"k": 1, "phi": Phi.constant(1.0), "direction": "out"},
    "voronoi_cell": {"statistic": "area", "cap": None},
    "sig": {"variant": "reciprocal_component", "phi": None},
}


@dataclass(frozen=True)
class FunctionalSpec:
    """One functional family with its parameters.

    ``bound`` is the declared ``C_xi``; when omitted it is derived from the
    family (1 for the 0/1 families, ``k * sup(phi)`` for out-degree k-NN
    sums, the cap for capped Voronoi statistics, ``inf`` for uncapped ones).
    """

    family: str
    params: dict = field(default_factory=dict)
    bound: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown functional family {self.family!r}")
        merged = dict(_DEFAULTS[self.family])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ValueError(f"unknown parameters for {self.family}: {sorted(unknown)}")
        merged.update(self.params)
        object.__setattr__(self, "params", merged)
        if self.family == "knn_edge" and int(merged["k"]) < 1:
            raise ValueError("k must be >= 1")
        if self.family == "rsa" and not merged["r"] > 0:
            raise ValueError("RSA radius must be > 0")

    # convenience constructors
    @classmethod
    def constant(cls, c: float = 1.0) -> "FunctionalSpec":
        return cls("constant", {"c": float(c)})

    @classmethod
    def rsa(cls, r: float = 0.5) -> "FunctionalSpec":
        return cls("rsa", {"r": float(r)})

    @classmethod
    def birth_growth(cls, v: float = 1.0, rho_max: float = 0.5) -> "FunctionalSpec":
        return cls("birth_growth", {"v": float(v), "rho_max": float(rho_max)})

    @classmethod
    def knn(cls, k: int = 1, phi: Phi | None = None, direction: str = "out") -> "FunctionalSpec":
        return cls("knn_edge", {"k": int(k), "phi": phi or Phi.constant(1.0), "direction": direction})

    @classmethod
    def nn_indicator(cls, s: float) -> "FunctionalSpec":
        """``1(nearest-neighbour distance <= s)``."""
        return cls.knn(1, Phi.indicator(s), "out")

    @classmethod
    def voronoi(cls, statistic: str = "area", cap: float | None = None) -> "FunctionalSpec":
        return cls("voronoi_cell", {"statistic": statistic, "cap": cap})

    @classmethod
    def sig(cls, variant: str = "reciprocal_component", phi: Phi | None = None) -> "FunctionalSpec":
        return cls("sig", {"variant": variant, "phi": phi})

    @property
    def dims(self) -> tuple:
        return _DIMS[self.family]

    @property
    def needs_times(self) -> bool:
        return self.family in ("rsa", "birth_growth")

    @property
    def needs_radii(self) -> bool:
        return self.family == "birth_growth"

    def c_xi(self, d: int) -> float:
        if self.bound is not None:
            return float(self.bound)
        p = self.params
        fam = self.family
        if fam == "constant":
            return abs(float(p["c"]))
        if fam in ("rsa", "birth_growth"):
            return 1.0
        if fam == "knn_edge":
            return graphs.knn_bound(int(p["k"]), d, p["direction"], p["phi"])
        if fam == "voronoi_cell":
            return float("inf") if p["cap"] is None else float(p["cap"])
        if p["variant"] == "reciprocal_component":
            return 1.0
        return graphs.SIG_DEGREE_CAP.get(d, 100) * p["phi"].sup

    def describe(self) -> dict[str, Any]:
        out = {"family": self.family}
        for k, v in sorted(self.params.items()):
            out[k] = v.to_dict() if isinstance(v, Phi) else v
        return out


@dataclass(frozen=True)
class FunctionalValueVector:
    values: np.ndarray
    lam: float

    def __len__(self) -> int:
        return len(self.values)


def _raw(spec: FunctionalSpec, cloud: PointCloud) -> np.ndarray:
    p = spec.params
    fam = spec.family
    if fam == "constant":
        return np.full(cloud.n, float(p["c"]))
    if fam == "rsa":
        return packing.rsa_accept(cloud, float(p["r"])).astype(float)
    if fam == "birth_growth":
        return packing.birth_growth_accept(cloud, float(p["v"]), float(p["rho_max"])).astype(float)
    if fam == "knn_edge":
        return graphs.knn_edge_functional(cloud, int(p["k"]), p["phi"], p["direction"])
    if fam == "voronoi_cell":
        return voronoi.voronoi_cell_functional(cloud, p["statistic"], p["cap"])
    return graphs.sig_functional(cloud, p["variant"], p["phi"])


def evaluate(spec: FunctionalSpec, cloud: PointCloud) -> np.ndarray:
    """``xi(x_i; X)`` for every point of the (unscaled) configuration."""
    if cloud.d not in spec.dims:
        raise ValueError(f"{spec.family} does not support dimension {cloud.d}")
    values = _raw(spec, cloud)
    bound = spec.c_xi(cloud.d)
    if values.size and np.max(np.abs(values)) > bound * (1 + 1e-12):
        raise AssertionError(f"{spec.family} value exceeds its declared bound {bound}")
    return values


def dilate(cloud: PointCloud, factor: float) -> PointCloud:
    """Multiply coordinates and window sides by ``factor``; marks unchanged."""
    window = cloud.window.scaled(factor)
    pts = cloud.points * factor
    sides = np.asarray(window.sides)
    pts = np.where(pts >= sides, np.nextafter(sides, 0.0), pts)
    return cloud.replace(points=pts, window=window)


def rescale_evaluate(spec: FunctionalSpec, cloud: PointCloud, lam: float) -> FunctionalValueVector:
    """``xi_lam`` at every point: ``xi`` evaluated on ``lam^(1/d) * cloud``."""
    if not lam > 0:
        raise ValueError("lam must be > 0")
    if cloud.d not in spec.dims:
        raise ValueError(f"{spec.family} does not support dimension {cloud.d}")
    factor = float(lam) ** (1.0 / cloud.d)
    scaled = cloud if factor == 1.0 else dilate(cloud, factor)
    return FunctionalValueVector(evaluate(spec, scaled), float(lam))
