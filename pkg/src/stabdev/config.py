"""Experiment configuration: INI files with sectioned key/value tables.

Every value is kept as text.  The digest is the SHA-256 of the canonical
form ``section.key=value`` lines sorted by section then key, so reordering
a file or changing whitespace does not change it.  ``threads`` and the
output directory never enter the digest since they do not affect results.
"""
from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .functionals import FAMILIES, FunctionalSpec, Phi
from .geometry import IntensityDensity, PiecewiseLinear1D, Window
from .statistics import TestFunction

__all__ = ["ConfigError", "ExperimentConfig", "SCHEMA"]

# allowed keys per section
SCHEMA = {
    "experiment": {"kind", "seed", "n", "K", "variant", "blocks", "lams", "lam", "ts", "eta", "tol", "gamma",
                   "Delta", "H", "ys", "Ks", "law", "thresholds", "sigma", "separations", "scale", "Q", "Q_se",
                   "probe_m", "probe_shells", "probe_r0", "probe_g", "min_samples", "mc_floor", "check"},
    "functional": {"family", "c", "r", "v", "rho_max", "r_max", "k", "direction", "s", "phi", "phi_csv",
                   "phi_kind", "statistic", "cap", "variant", "bound"},
    "window": {"d", "topology", "sides"},
    "intensity": {"kind", "axis1", "axis2", "axis3"},
    "test_function": {"kind", "value", "lo", "hi"},
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""

    def __init__(self, field_name: str, msg: str):
        super().__init__(f"config error: {field_name}: {msg}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    sections: dict = field(default_factory=dict)

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str  # keep key case (K vs k)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError("file", str(exc).splitlines()[0]) from exc
        sections = {s: {k: v.strip() for k, v in cp.items(s)} for s in cp.sections()}
        cfg = cls(sections)
        cfg.validate_keys()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from exc
        return cls.from_text(text)

    def merged(self, defaults: dict) -> "ExperimentConfig":
        out = {s: dict(v) for s, v in defaults.items()}
        for s, kv in self.sections.items():
            out.setdefault(s, {}).update(kv)
        return ExperimentConfig(out)

    def validate_keys(self) -> None:
        for s, kv in self.sections.items():
            if s not in SCHEMA:
                raise ConfigError(f"[{s}]", "unknown section")
            for k in kv:
                if k not in SCHEMA[s]:
                    raise ConfigError(f"[{s}] {k}", "unknown key")

    def set(self, section: str, key: str, value) -> None:
        self.sections.setdefault(section, {})[key] = str(value)

    # canonical form and digest
    def canonical(self) -> str:
        lines = []
        for s in sorted(self.sections):
            for k in sorted(self.sections[s]):
                lines.append(f"{s}.{k}={self.sections[s][k]}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    # typed access
    def has(self, section: str, key: str) -> bool:
        return key in self.sections.get(section, {})

    def raw(self, section: str, key: str, default=None) -> Optional[str]:
        v = self.sections.get(section, {}).get(key)
        return default if v is None or v == "" else v

    def _name(self, section, key):
        return f"[{section}] {key}"

    def get_float(self, section: str, key: str, default=None, positive=False, nonneg=False) -> Optional[float]:
        v = self.raw(section, key)
        if v is None:
            if default is None:
                return None
            v = default
        try:
            x = float(v)
        except (TypeError, ValueError):
            raise ConfigError(self._name(section, key), f"not a number: {v!r}") from None
        if math.isnan(x):
            raise ConfigError(self._name(section, key), "must not be nan")
        if positive and not x > 0:
            raise ConfigError(self._name(section, key), f"must be > 0, got {v}")
        if nonneg and x < 0:
            raise ConfigError(self._name(section, key), f"must be >= 0, got {v}")
        return x

    def get_int(self, section: str, key: str, default=None, minimum=None) -> Optional[int]:
        v = self.raw(section, key)
        if v is None:
            if default is None:
                return None
            v = default
        try:
            x = int(str(v), 10)
        except ValueError:
            raise ConfigError(self._name(section, key), f"not an integer: {v!r}") from None
        if minimum is not None and x < minimum:
            raise ConfigError(self._name(section, key), f"must be >= {minimum}, got {v}")
        return x

    def get_floats(self, section: str, key: str, default=None, positive=False) -> Optional[list]:
        v = self.raw(section, key)
        if v is None:
            if default is None:
                return None
            v = default
        parts = [p for p in str(v).replace(";", ",").split(",") if p.strip()]
        out = []
        for p in parts:
            try:
                x = float(p)
            except ValueError:
                raise ConfigError(self._name(section, key), f"not a number list: {v!r}") from None
            if positive and not x > 0:
                raise ConfigError(self._name(section, key), f"entries must be > 0, got {p.strip()}")
            out.append(x)
        if not out:
            raise ConfigError(self._name(section, key), "empty list")
        return out

    def choice(self, section: str, key: str, options, default=None) -> str:
        v = self.raw(section, key, default)
        if v not in options:
            raise ConfigError(self._name(section, key), f"must be one of {sorted(options)}, got {v!r}")
        return v

    # domain objects
    def window(self) -> Window:
        d = self.get_int("window", "d", 2, minimum=1)
        if d > 3:
            raise ConfigError("[window] d", "must be <= 3")
        topo = self.choice("window", "topology", {"box", "torus"}, "torus")
        sides = self.get_floats("window", "sides", "1.0")
        if len(sides) == 1:
            sides = sides * d
        if len(sides) != d:
            raise ConfigError("[window] sides", f"need 1 or {d} entries")
        if any(s <= 0 for s in sides):
            raise ConfigError("[window] sides", "degenerate window: sides must be > 0")
        return Window(tuple(sides), topo)

    def density(self, lam: float) -> IntensityDensity:
        kind = self.choice("intensity", "kind", {"uniform", "product"}, "uniform")
        if kind == "uniform":
            return IntensityDensity(lam)
        w = self.window()
        axes = []
        for j in range(1, w.d + 1):
            spec = self.raw("intensity", f"axis{j}")
            if spec is None:
                raise ConfigError(f"[intensity] axis{j}", "product density needs one axis table per dimension")
            try:
                pairs = [p.split(":") for p in spec.split()]
                axes.append(PiecewiseLinear1D(tuple(float(a) for a, _ in pairs), tuple(float(b) for _, b in pairs)))
            except ValueError as exc:
                raise ConfigError(f"[intensity] axis{j}", f"expected 'knot:value ...' ({exc})") from None
        dens = IntensityDensity(lam, "product", tuple(axes))
        try:
            dens.check(w)
        except ValueError as exc:
            raise ConfigError("[intensity]", str(exc)) from None
        return dens

    def test_function(self) -> TestFunction:
        kind = self.choice("test_function", "kind", {"constant", "box"}, "constant")
        value = self.get_float("test_function", "value", "1.0")
        if kind == "constant":
            return TestFunction.constant(value)
        d = self.window().d
        lo = self.get_floats("test_function", "lo")
        hi = self.get_floats("test_function", "hi")
        if lo is None or hi is None or len(lo) != d or len(hi) != d:
            raise ConfigError("[test_function] lo/hi", f"box needs {d} lower and upper corners")
        return TestFunction.box(lo, hi, value)

    def phi(self) -> Optional[Phi]:
        sec = "functional"
        if self.raw(sec, "phi_csv"):
            try:
                return Phi.from_csv(self.raw(sec, "phi_csv"), self.choice(sec, "phi_kind", {"step", "linear"}, "linear"))
            except (OSError, ValueError) as exc:
                raise ConfigError("[functional] phi_csv", str(exc)) from None
        if self.raw(sec, "s"):
            return Phi.indicator(self.get_float(sec, "s", positive=True))
        if self.raw(sec, "phi"):
            return Phi.constant(self.get_float(sec, "phi", nonneg=True))
        return None

    def spec(self) -> FunctionalSpec:
        sec = "functional"
        fam = self.raw(sec, "family", "constant")
        if fam not in FAMILIES:
            raise ConfigError("[functional] family", f"unknown family {fam!r}; choose from {list(FAMILIES)}")
        bound = self.get_float(sec, "bound", positive=True)
        if fam == "constant":
            params = {"c": self.get_float(sec, "c", "1.0")}
        elif fam == "rsa":
            params = {"r": self.get_float(sec, "r", "0.5", positive=True)}
        elif fam == "birth_growth":
            params = {"v": self.get_float(sec, "v", "1.0", nonneg=True), "rho_max": self.get_float(sec, "rho_max", "0.5", positive=True)}
        elif fam == "knn_edge":
            params = {"k": self.get_int(sec, "k", 1, minimum=1),
                      "phi": self.phi() or Phi.constant(1.0),
                      "direction": self.choice(sec, "direction", {"out", "undirected"}, "out")}
        elif fam == "voronoi_cell":
            params = {"statistic": self.choice(sec, "statistic", {"area", "perimeter", "vertex_count", "delaunay_degree"}, "area"),
                      "cap": self.get_float(sec, "cap", positive=True)}
        else:
            variant = self.choice(sec, "variant", {"reciprocal_component", "edge_stat"}, "reciprocal_component")
            phi = self.phi()
            if variant == "edge_stat" and phi is None:
                raise ConfigError("[functional] phi", "edge_stat needs phi, s or phi_csv")
            params = {"variant": variant, "phi": phi}
        try:
            return FunctionalSpec(fam, params, bound)
        except ValueError as exc:
            raise ConfigError("[functional]", str(exc)) from None

    def r_max(self) -> float:
        return self.get_float("functional", "r_max", "0.0", nonneg=True)
