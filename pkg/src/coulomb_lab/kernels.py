"""Coulomb kernels g, their constants c_d, truncations and smeared charges.

The kernel is the fundamental solution normalised so that -Δg = c_d δ_0:

* d = 1, 2 : g(r) = -log r   (d = 1 is the trace of the planar kernel on a line)
* d >= 3   : g(r) = r^(2-d)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as _gamma

from .errors import DomainError, SingularityError

__all__ = [
    "KernelSpec",
    "SmearedCharge",
    "kernel_spec",
    "kernel_value",
    "kernel_array",
    "truncated_kernel",
    "smeared_potential",
    "smeared_pair_interaction",
    "cell_self_average",
    "sphere_area",
]

_GL64 = np.polynomial.legendre.leggauss(64)


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere S^{d-1} in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / float(_gamma(d / 2.0))


@dataclass(frozen=True)
class KernelSpec:
    d: int
    embedded: bool = False  # d = 1 realised on the real axis of the plane

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise DomainError(f"dimension must be an integer >= 1, got {self.d}")

    @property
    def family(self) -> str:
        return "log" if self.d <= 2 else "power"

    @property
    def c_d(self) -> float:
        if self.d == 1:
            return math.pi
        if self.d == 2:
            return 2.0 * math.pi
        return (self.d - 2) * sphere_area(self.d)

    @property
    def field_dim(self) -> int:
        """Dimension in which the field lives (2 for the embedded line)."""
        return 2 if self.d == 1 else self.d

    @property
    def field_c(self) -> float:
        """Constant of the ambient Laplacian: 2π for d in {1, 2}."""
        return KernelSpec(self.field_dim).c_d

    def g(self, r):
        return kernel_array(r, self)


def kernel_spec(d: int) -> KernelSpec:
    return KernelSpec(int(d), embedded=(int(d) == 1))


def kernel_array(r, spec: KernelSpec):
    """Vectorised g(r) with no argument checks (callers guarantee r > 0)."""
    r = np.asarray(r, dtype=float)
    if spec.d <= 2:
        return -np.log(r)
    return r ** (2.0 - spec.d)


def kernel_value(r: float, spec: KernelSpec) -> float:
    r = float(r)
    if r < 0.0 or math.isnan(r):
        raise DomainError(f"kernel argument must be nonnegative, got {r}")
    if r == 0.0:
        raise SingularityError("kernel evaluated at r = 0")
    if spec.d <= 2:
        return -math.log(r)
    return r ** (2.0 - spec.d)


def _check_eta(eta):
    eta = float(eta)
    if not eta > 0.0:
        raise DomainError(f"truncation radius must be > 0, got {eta}")
    return eta


def truncated_kernel(r, eta: float, spec: KernelSpec):
    """f_η(r) = max(g(r) - g(η), 0).

    Scalar input returns a float.  At r = 0 the power kernel returns +inf;
    the logarithmic kernel raises because the value is never finite there.
    """
    eta = _check_eta(eta)
    arr = np.asarray(r, dtype=float)
    if np.any(arr < 0):
        raise DomainError("truncated kernel argument must be nonnegative")
    if np.any(arr == 0):
        if spec.d <= 2:
            raise SingularityError("truncated log kernel evaluated at r = 0")
    with np.errstate(divide="ignore"):
        out = np.where(arr >= eta, 0.0, kernel_array(np.where(arr > 0, arr, 1.0), spec) - kernel_array(eta, spec))
        if spec.d >= 3:
            out = np.where(arr == 0, np.inf, out)
    return float(out) if np.ndim(out) == 0 else out


def smeared_potential(dist, eta: float, spec: KernelSpec):
    """Potential at distance ``dist`` of the unit charge spread on a sphere of radius η.

    Newton's theorem: g(max(dist, η)).
    """
    eta = _check_eta(eta)
    return kernel_array(np.maximum(np.asarray(dist, dtype=float), eta), spec)


@dataclass(frozen=True)
class SmearedCharge:
    center: tuple
    eta: float
    mass: float = 1.0

    def __post_init__(self):
        _check_eta(self.eta)

    def potential(self, x, spec: KernelSpec):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        c = np.asarray(self.center, dtype=float)
        return self.mass * smeared_potential(np.linalg.norm(x - c, axis=-1), self.eta, spec)


def _as_field_point(p, spec: KernelSpec) -> np.ndarray:
    p = np.atleast_1d(np.asarray(p, dtype=float)).ravel()
    if spec.d == 1:
        if p.size != 1:
            raise DomainError("d = 1 points must be scalars")
        return np.array([p[0], 0.0])
    if p.size != spec.d:
        raise DomainError(f"expected a point in R^{spec.d}, got shape {p.shape}")
    return p


def smeared_pair_interaction(p, q, eta: float, spec: KernelSpec) -> float:
    """∬ g(x - y) dδ_p^(η)(x) dδ_q^(η)(y) for two unit sphere-smeared charges.

    The inner integral is done exactly by Newton's theorem, leaving an average
    over the sphere around p of g(max(|x - q|, η)).  That average only depends
    on the polar angle measured from the axis p -> q; the angular integral is
    split at the kink |x - q| = η and done with 64-point Gauss-Legendre.
    """
    eta = _check_eta(eta)
    if spec.field_dim < 2:
        raise DomainError("smeared interaction needs d >= 2 (or the embedded line)")
    pp = _as_field_point(p, spec)
    qq = _as_field_point(q, spec)
    s = float(np.linalg.norm(pp - qq))
    fspec = KernelSpec(spec.field_dim)
    if s >= 2.0 * eta:
        return float(kernel_array(s, fspec))
    geta = float(kernel_array(eta, fspec))
    if s == 0.0:
        return geta
    m = fspec.d - 2  # weight sin^m(theta)
    theta_k = math.acos(min(1.0, s / (2.0 * eta)))
    nodes, weights = _GL64
    # [0, theta_k]: |x - q| <= eta, integrand constant g(eta)
    a, b = 0.0, theta_k
    th1 = 0.5 * (b - a) * nodes + 0.5 * (b + a)
    w1 = 0.5 * (b - a) * weights * np.sin(th1) ** m
    a, b = theta_k, math.pi
    th2 = 0.5 * (b - a) * nodes + 0.5 * (b + a)
    w2 = 0.5 * (b - a) * weights * np.sin(th2) ** m
    t2 = np.sqrt(np.maximum(eta * eta + s * s - 2.0 * eta * s * np.cos(th2), eta * eta))
    num = geta * w1.sum() + np.dot(w2, kernel_array(t2, fspec))
    den = w1.sum() + w2.sum()
    return float(num / den)


def cell_self_average(h: float, spec: KernelSpec) -> float:
    """Exact mean of g(|x - y|) for x, y independent and uniform in one cell of side h.

    Closed forms of the unit-cell averages: 3/2 for -log on a segment,
    25/12 - π/3 - (log 2)/3 for -log on a square, and
    2[(1+√2-2√3)/5 - π/3 + log((1+√2)(2+√3))] for 1/r on a cube.
    """
    h = float(h)
    if not h > 0:
        raise DomainError("cell size must be positive")
    d = spec.d
    if d == 1:
        return -math.log(h) + 1.5
    if d == 2:
        return -math.log(h) + 25.0 / 12.0 - math.pi / 3.0 - math.log(2.0) / 3.0
    if d == 3:
        s2, s3 = math.sqrt(2.0), math.sqrt(3.0)
        unit = 2.0 * ((1 + s2 - 2 * s3) / 5.0 - math.pi / 3.0 + math.log((1 + s2) * (2 + s3)))
        return unit / h
    raise DomainError("exact cell self-average available for d <= 3 only")
