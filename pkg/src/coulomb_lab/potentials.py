"""Confining potentials V.

The built-in family is V(x) = Σ_k a_k x_k² + Σ_m b_m |x|^m, which covers
the quadratic and radial-polynomial potentials used throughout and can be
handed to compiled kernels as plain coefficient arrays.  An arbitrary
vectorised callable is also accepted (numpy-only paths).
"""

from __future__ import annotations

import json
import configparser
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class PotentialSpec:
    d: int
    quad: tuple = ()
    radial: tuple = ()
    func: Optional[Callable] = field(default=None, compare=False)
    name: str = "custom"
    growth: str = "quadratic"

    def __post_init__(self):
        if self.d < 1:
            raise DomainError("dimension must be >= 1")
        if self.func is None:
            q = tuple(float(a) for a in self.quad) if self.quad else (0.0,) * self.d
            if len(q) != self.d:
                raise DomainError(f"need {self.d} quadratic coefficients, got {len(q)}")
            object.__setattr__(self, "quad", q)
            object.__setattr__(self, "radial", tuple(float(b) for b in self.radial))
            if not self._grows():
                raise DomainError("potential violates the growth assumption V/2 + g -> +inf")

    def _grows(self) -> bool:
        rad = [b for b in self.radial]
        while rad and rad[-1] == 0.0:
            rad.pop()
        if len(rad) >= 2 and rad[-1] > 0:  # |x|^m with m >= 1 dominates -log
            return min(self.quad) >= 0
        return min(self.quad) > 0

    @property
    def polynomial(self) -> bool:
        return self.func is None

    @property
    def quad_array(self) -> np.ndarray:
        return np.asarray(self.quad, dtype=float)

    @property
    def radial_array(self) -> np.ndarray:
        return np.asarray(self.radial, dtype=float)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        if self.func is not None:
            return np.asarray(self.func(x), dtype=float)
        v = np.sum(self.quad_array * x * x, axis=-1)
        if self.radial:
            r = np.sqrt(np.sum(x * x, axis=-1))
            v = v + np.polynomial.polynomial.polyval(r, self.radial_array)
        return v

    def laplacian(self, x):
        """ΔV, analytic for the polynomial family, 5-point otherwise."""
        x = np.asarray(x, dtype=float)
        if self.d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        if self.func is None:
            lap = 2.0 * float(np.sum(self.quad_array)) * np.ones(x.shape[:-1])
            if self.radial:
                r = np.sqrt(np.sum(x * x, axis=-1))
                for m, b in enumerate(self.radial):
                    if m >= 1 and b != 0.0:
                        # Δ r^m = m (m + d - 2) r^{m-2}
                        with np.errstate(divide="ignore", invalid="ignore"):
                            term = m * (m + self.d - 2) * r ** (m - 2.0)
                        lap = lap + b * term
            return lap
        step = 1e-4
        lap = np.zeros(x.shape[:-1])
        v0 = self(x)
        for k in range(self.d):
            e = np.zeros(self.d)
            e[k] = step
            lap += (self(x + e) - 2 * v0 + self(x - e)) / step**2
        return lap

    def to_dict(self) -> dict:
        if self.func is not None:
            raise ConfigError("callable potentials cannot be serialised", field="potential")
        return {"name": self.name, "dim": self.d, "quad": list(self.quad), "radial": list(self.radial)}


def quadratic(d: int, scale: float = 1.0) -> PotentialSpec:
    """V(x) = scale |x|^2."""
    return PotentialSpec(d, quad=(scale,) * d, name="quadratic")


def from_dict(cfg: dict) -> PotentialSpec:
    """Build a potential from {name, dim, tag | quad/radial coefficients}."""
    try:
        d = int(cfg.get("dim", cfg.get("d")))
    except (TypeError, ValueError):
        raise ConfigError("missing or invalid dimension", field="potential.dim")
    tag = cfg.get("tag") or cfg.get("name")
    quad = cfg.get("quad")
    radial = cfg.get("radial", ())
    if isinstance(quad, str):
        quad = [float(t) for t in quad.replace(",", " ").split()]
    if isinstance(radial, str):
        radial = [float(t) for t in radial.replace(",", " ").split()]
    if quad is None and radial in ((), [], None):
        if tag in ("quadratic", "circle", "harmonic", None):
            return quadratic(d)
        if tag == "anisotropic":
            q = [1.5] + [1.0] * (d - 1)
            return PotentialSpec(d, quad=tuple(q), name="anisotropic")
        raise ConfigError(f"unknown potential tag {tag!r}", field="potential.tag")
    try:
        return PotentialSpec(d, quad=tuple(quad) if quad else (), radial=tuple(radial or ()), name=str(tag or "polynomial"))
    except DomainError as exc:
        raise ConfigError(str(exc), field="potential")


def load_potentials(path) -> dict:
    """Read a config file (JSON list/dict or INI sections) of named potentials."""
    text = open(path).read()
    specs = {}
    try:
        data = json.loads(text)
        items = data if isinstance(data, list) else data.get("potentials", [data])
        for item in items:
            specs[str(item.get("name", f"p{len(specs)}"))] = from_dict(item)
        return specs
    except json.JSONDecodeError:
        pass
    cp = configparser.ConfigParser()
    cp.read_string(text)
    for sec in cp.sections():
        item = dict(cp[sec])
        item.setdefault("name", sec)
        specs[sec] = from_dict(item)
    return specs
