"""Renormalized energies of periodic configurations (jellium on a torus).

For N distinct points on a torus T of volume |T| with a neutralising
background of density N/|T|,

    W = (c²/|T|) [ Σ_{i≠j} G(a_i - a_j) + N R ],   R = lim_{x→0} (G(x) - g(x)/c),

with c = 2π and G the zero-mean torus Green function (-ΔG = δ_0 - 1/|T|).
In d = 2, G is summed by an Ewald split of the heat kernel at t0 = |T|/(4π):

    G(x) = (1/4π) Σ_p E1(π|x+p|²/|T|) - 1/(4π)
           + (1/|T|) Σ_{k∈Λ*, k≠0} exp(-π|T||k|²) cos(2π k·x) / (4π²|k|²),

and R follows from E1(z) = -γ - log z + O(z) in the p = 0 image.  In
d = 1 the line is embedded in the plane and both G and R are closed forms.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import exp1, gamma as gamma_fn, gammaincc

from .errors import DomainError, SingularityError, SolverError

__all__ = [
    "TorusLattice",
    "TorusConfiguration",
    "ModularPoint",
    "torus_green",
    "torus_green_gradient",
    "self_term",
    "periodic_W",
    "periodic_W_gradient",
    "lattice_height",
    "epstein_zeta_reg",
    "minimize_torus_config",
    "scaling_check",
    "scan_lattices",
    "triangular_compatible_torus",
]

_TWO_PI = 2.0 * math.pi
_EULER_GAMMA = 0.5772156649015329
# exp(-36) ~ 2e-16: series terms beyond this argument are below double precision
_CUTOFF = 36.0


@dataclass(frozen=True)
class TorusLattice:
    """Lattice Λ = Z u (+ Z v); basis vectors are the rows of ``basis``."""

    basis: tuple

    def __post_init__(self):
        b = np.atleast_2d(np.asarray(self.basis, dtype=float))
        if b.shape not in ((1, 1), (2, 2)):
            raise DomainError("torus basis must be 1x1 or 2x2")
        if np.linalg.det(b) <= 0:
            raise DomainError("basis must have positive determinant")
        object.__setattr__(self, "basis", tuple(map(tuple, b)))

    @property
    def B(self) -> np.ndarray:
        return np.asarray(self.basis, dtype=float)

    @property
    def d(self) -> int:
        return self.B.shape[0]

    @property
    def volume(self) -> float:
        return float(np.linalg.det(self.B))

    @property
    def dual(self) -> np.ndarray:
        """Rows u*_j with <u_i, u*_j> = δ_ij."""
        return np.linalg.inv(self.B).T

    @classmethod
    def line(cls, length: float) -> "TorusLattice":
        return cls(((float(length),),))

    @classmethod
    def from_tau(cls, tau: complex, volume: float = 1.0) -> "TorusLattice":
        tau = complex(tau)
        if tau.imag <= 0:
            raise DomainError("Im τ must be positive")
        s = math.sqrt(volume / tau.imag)
        return cls(((s, 0.0), (s * tau.real, s * tau.imag)))

    @classmethod
    def square(cls, volume: float = 1.0) -> "TorusLattice":
        return cls.from_tau(1j, volume)

    @classmethod
    def triangular(cls, volume: float = 1.0) -> "TorusLattice":
        return cls.from_tau(cmath.exp(1j * math.pi / 3), volume)

    def reduced(self) -> np.ndarray:
        """Lagrange-Gauss reduced basis (rows), same lattice."""
        if self.d == 1:
            return self.B.copy()
        u, v = self.B[0].copy(), self.B[1].copy()
        if u @ u > v @ v:
            u, v = v, u
        while True:
            m = round(float(u @ v) / float(u @ u))
            v = v - m * u
            if v @ v >= u @ u:
                break
            u, v = v, u
        return np.array([u, v])

    def wrap(self, x) -> np.ndarray:
        """Reduce points to the fundamental parallelogram [0,1)^d in lattice coordinates."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.d == 1 and x.shape[-1] != 1:
            x = x.reshape(-1, 1)
        f = x @ np.linalg.inv(self.B)
        f -= np.floor(f)
        return f @ self.B

    def nearest_image(self, x) -> np.ndarray:
        """Shift each x by a lattice vector so it lies near the origin (reduced-basis rounding)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        R = self.reduced()
        f = x @ np.linalg.inv(R)
        y = x - np.round(f) @ R
        if self.d == 2:
            # rounding in a reduced basis can miss the closest image by one step
            best = y.copy()
            bn = np.sum(y * y, axis=1)
            for a in (-1, 0, 1):
                for b in (-1, 0, 1):
                    z = y - (a * R[0] + b * R[1])
                    zn = np.sum(z * z, axis=1)
                    better = zn < bn
                    best[better] = z[better]
                    bn = np.minimum(bn, zn)
            y = best
        return y

    def vectors_within(self, radius: float, dual: bool = False) -> np.ndarray:
        """All lattice (or dual-lattice) vectors of norm <= radius, origin included."""
        base = TorusLattice(tuple(map(tuple, self.dual))) if dual else self
        R = base.reduced()
        det = abs(np.linalg.det(R)) if base.d == 2 else abs(R[0, 0])
        if base.d == 1:
            m = int(math.ceil(radius / det))
            k = np.arange(-m, m + 1)[:, None] * R[0]
            return k[np.abs(k[:, 0]) <= radius]
        # |m1| <= |p||v|/det, |m2| <= |p||u|/det
        m1 = int(math.ceil(radius * np.linalg.norm(R[1]) / det)) + 1
        m2 = int(math.ceil(radius * np.linalg.norm(R[0]) / det)) + 1
        i, j = np.meshgrid(np.arange(-m1, m1 + 1), np.arange(-m2, m2 + 1), indexing="ij")
        pts = i.reshape(-1, 1) * R[0] + j.reshape(-1, 1) * R[1]
        return pts[np.sum(pts * pts, axis=1) <= radius * radius]


@dataclass
class TorusConfiguration:
    lattice: TorusLattice
    points: np.ndarray
    energy: float = float("nan")
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim == 1:
            p = p[:, None] if self.lattice.d == 1 else p[None, :]
        if p.shape[1] != self.lattice.d:
            raise DomainError("point dimension does not match the torus")
        self.points = self.lattice.wrap(p)

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def density(self) -> float:
        return self.N / self.lattice.volume

    def shifted(self, v) -> "TorusConfiguration":
        return TorusConfiguration(self.lattice, self.points + np.asarray(v, dtype=float))


@dataclass(frozen=True)
class ModularPoint:
    tau: complex

    def __post_init__(self):
        if complex(self.tau).imag <= 0:
            raise DomainError("Im τ must be positive")
        object.__setattr__(self, "tau", complex(self.tau))

    def reduce(self) -> "ModularPoint":
        """Map into |τ| >= 1, |Re τ| <= 1/2 by τ -> τ + n and τ -> -1/τ."""
        t = self.tau
        for _ in range(1000):
            t = complex(t.real - math.floor(t.real + 0.5), t.imag)
            if abs(t) >= 1.0 - 1e-15:
                break
            t = -1.0 / t
        return ModularPoint(t)

    def lattice(self, volume: float = 1.0) -> TorusLattice:
        return TorusLattice.from_tau(self.tau, volume)


def _as_tau(tau) -> complex:
    return tau.tau if isinstance(tau, ModularPoint) else complex(tau)


# --------------------------------------------------------------------------
# Green function


def _green_1d(L: float, x: np.ndarray) -> np.ndarray:
    s = np.abs(2.0 * np.sin(math.pi * x / L))
    return -np.log(s) / _TWO_PI


def torus_green(lattice: TorusLattice, x) -> np.ndarray | float:
    """Zero-mean Green function of -Δ on the torus (δ_0 - 1/|T|).

    In d = 1 this is the trace on the line of the planar kernel,
    -(1/2π) log|2 sin(π x / L)|.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0 or (x.ndim == 1 and lattice.d == 2)
    pts = np.atleast_2d(x)
    if lattice.d == 1 and pts.shape[-1] != 1:
        pts = pts.reshape(-1, 1)
    y = lattice.nearest_image(pts)
    r2 = np.sum(y * y, axis=1)
    if np.any(r2 < 1e-28 * lattice.volume ** (2.0 / lattice.d)):
        raise SingularityError("Green function evaluated at a lattice point")
    if lattice.d == 1:
        out = _green_1d(lattice.volume, y[:, 0])
    else:
        out = _green_2d(lattice, y)
    return float(out[0]) if scalar else out


def _green_2d(lattice: TorusLattice, y: np.ndarray) -> np.ndarray:
    A = lattice.volume
    rmax = math.sqrt(_CUTOFF * A / math.pi)
    extent = float(np.sqrt(np.max(np.sum(y * y, axis=1))))
    P = lattice.vectors_within(rmax + extent)
    z = math.pi * np.sum((y[:, None, :] + P[None]) ** 2, axis=-1) / A
    real = exp1(np.minimum(z, 700.0)).sum(axis=1) / (4 * math.pi)
    K = lattice.vectors_within(math.sqrt(_CUTOFF / (math.pi * A)), dual=True)
    K = K[np.sum(K * K, axis=1) > 0]
    k2 = np.sum(K * K, axis=1)
    coef = np.exp(-math.pi * A * k2) / (4 * math.pi**2 * k2) / A
    recip = np.cos(_TWO_PI * y @ K.T) @ coef
    return real + recip - 1.0 / (4 * math.pi)


def torus_green_gradient(lattice: TorusLattice, x) -> np.ndarray:
    """∇G at points x (shape (m, d))."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if lattice.d == 1:
        pts = pts.reshape(-1, 1)
        L = lattice.volume
        y = lattice.nearest_image(pts)[:, 0]
        return (-math.pi / (L * _TWO_PI) / np.tan(math.pi * y / L))[:, None]
    A = lattice.volume
    y = lattice.nearest_image(pts)
    rmax = math.sqrt(_CUTOFF * A / math.pi)
    extent = float(np.sqrt(np.max(np.sum(y * y, axis=1))))
    P = lattice.vectors_within(rmax + extent)
    diff = y[:, None, :] + P[None]
    r2 = np.sum(diff * diff, axis=-1)
    z = math.pi * r2 / A
    # d/dx (1/4π) E1(π r²/A) = -exp(-z) x / (2π r²)
    w = -np.exp(-np.minimum(z, 700.0)) / (_TWO_PI * r2)
    real = np.einsum("mp,mpk->mk", w, diff)
    K = lattice.vectors_within(math.sqrt(_CUTOFF / (math.pi * A)), dual=True)
    K = K[np.sum(K * K, axis=1) > 0]
    k2 = np.sum(K * K, axis=1)
    coef = -np.exp(-math.pi * A * k2) / (_TWO_PI * k2) / A
    recip = np.sin(_TWO_PI * y @ K.T) @ (coef[:, None] * K)
    return real + recip


def self_term(lattice: TorusLattice) -> float:
    """R = lim_{x→0} (G(x) + (1/2π) log|x|) (the line: same limit along the axis)."""
    A = lattice.volume
    if lattice.d == 1:
        return -math.log(_TWO_PI / A) / _TWO_PI
    rmax = math.sqrt(_CUTOFF * A / math.pi)
    P = lattice.vectors_within(rmax)
    P = P[np.sum(P * P, axis=1) > 0]
    real = float(exp1(math.pi * np.sum(P * P, axis=1) / A).sum()) / (4 * math.pi)
    K = lattice.vectors_within(math.sqrt(_CUTOFF / (math.pi * A)), dual=True)
    K = K[np.sum(K * K, axis=1) > 0]
    k2 = np.sum(K * K, axis=1)
    recip = float(np.sum(np.exp(-math.pi * A * k2) / (4 * math.pi**2 * k2))) / A
    t0 = A / (4 * math.pi)
    return (-_EULER_GAMMA + math.log(4 * t0)) / (4 * math.pi) + real + recip - t0 / A


# --------------------------------------------------------------------------
# periodic energy


def _pair_differences(points: np.ndarray):
    n = points.shape[0]
    i, j = np.nonzero(~np.eye(n, dtype=bool))
    return points[i] - points[j], i, j


def periodic_W(config: TorusConfiguration) -> float:
    """(c²/|T|) [Σ_{i≠j} G(a_i - a_j) + N R] with c = 2π; +inf for coincident points."""
    lat = config.lattice
    pts = config.points
    N = config.N
    c2 = _TWO_PI**2
    R = self_term(lat)
    if N == 1:
        return c2 * R / lat.volume
    diff, i, j = _pair_differences(pts)
    img = lat.nearest_image(diff)
    if np.any(np.sum(img * img, axis=1) < 1e-24):
        k = int(np.argmin(np.sum(img * img, axis=1)))
        config.info["coincident"] = (int(i[k]), int(j[k]))
        return math.inf
    G = torus_green(lat, diff) if lat.d == 2 else torus_green(lat, diff[:, 0])
    return c2 / lat.volume * (float(np.sum(G)) + N * R)


def periodic_W_gradient(lattice: TorusLattice, points: np.ndarray) -> np.ndarray:
    N, d = points.shape
    diff, i, j = _pair_differences(points)
    g = torus_green_gradient(lattice, diff)
    out = np.zeros((N, d))
    np.add.at(out, i, g)
    # G even: d/da_i of Σ_{j} G(a_j - a_i) equals the same sum again
    return 2.0 * _TWO_PI**2 / lattice.volume * out


# --------------------------------------------------------------------------
# lattice energies through modular functions


def lattice_height(tau, terms: int = 60) -> float:
    """-2π log(√(Im τ) |η(τ)|²) with η the Dedekind eta, after reduction.

    Equals the periodic energy of the volume-one lattice Z + τZ up to one
    additive constant shared by all τ.
    """
    t = ModularPoint(_as_tau(tau)).reduce().tau
    y = t.imag
    q = cmath.exp(2j * math.pi * t)
    n = np.arange(1, max(terms, 40) + 1)
    prod = float(np.sum(np.log(np.abs(1.0 - q ** n))))
    log_eta2 = -math.pi * y / 6.0 + 2.0 * prod
    return -_TWO_PI * (0.5 * math.log(y) + log_eta2)


def _upper_gamma(s: float, z: np.ndarray) -> np.ndarray:
    """Γ(s, z) for s > -1 (one downward recurrence step when s <= 0)."""
    if s > 0:
        return gammaincc(s, z) * gamma_fn(s)
    return (gammaincc(s + 1, z) * gamma_fn(s + 1) - z**s * np.exp(-z)) / s


def epstein_zeta_reg(tau, x: float) -> float:
    """Σ_{k∈Λ*, k≠0} |k|^{-(2+x)} - ∫_{R²} dy/(1 + |y|^{2+x}) for the volume-one lattice of τ.

    The lattice sum uses the theta-function split at t = 1:

    π^{-a} Γ(a) Z(2a) = Σ'_k (π|k|²)^{-a} Γ(a, π|k|²) + Σ'_p (π|p|²)^{a-1} Γ(1-a, π|p|²)
                        + 1/(a-1) - 1/a,

    with p over the (unimodular) primal lattice.
    """
    x = float(x)
    if not x > 0:
        raise DomainError("x must be positive")
    lat = TorusLattice.from_tau(_as_tau(tau), 1.0)
    a = 1.0 + 0.5 * x
    rad = math.sqrt(2.0 * _CUTOFF / math.pi)
    K = lat.vectors_within(rad, dual=True)
    K = K[np.sum(K * K, axis=1) > 0]
    P = lat.vectors_within(rad)
    P = P[np.sum(P * P, axis=1) > 0]
    zk = math.pi * np.sum(K * K, axis=1)
    zp = math.pi * np.sum(P * P, axis=1)
    s1 = float(np.sum(zk ** (-a) * _upper_gamma(a, zk)))
    s2 = float(np.sum(zp ** (a - 1) * _upper_gamma(1.0 - a, zp)))
    total = (s1 + s2 + 1.0 / (a - 1.0) - 1.0 / a) * math.pi**a / gamma_fn(a)
    s = 2.0 + x
    integral = (2.0 * math.pi / s) * math.pi / math.sin(2.0 * math.pi / s)
    return total - integral


def scan_lattices(grid: int = 101, y_max: float = 1.6):
    """Height on a grid × grid scan of the half fundamental domain 0 <= Re τ <= 1/2,
    √3/2 <= Im τ <= y_max; nodes with |τ| < 1 are outside the domain and get NaN.

    Returns (re, im, height) arrays of shape (grid, grid).
    """
    xs = np.linspace(0.0, 0.5, grid)
    ys = np.linspace(math.sqrt(3) / 2, y_max, grid)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    H = np.full(X.shape, np.nan)
    for a in range(grid):
        for b in range(grid):
            t = complex(X[a, b], Y[a, b])
            if abs(t) >= 1.0 - 1e-12:
                H[a, b] = lattice_height(t)
    return X, Y, H


def triangular_compatible_torus(N: int = 4) -> TorusLattice:
    """Rectangular torus 2a × √3 a holding 4 points of the unit-density triangular lattice.

    Only N = 4 is supported; a = √(2/√3) is the triangular spacing at density one.
    """
    if N != 4:
        raise DomainError("the rectangular triangular-compatible torus is defined for N = 4")
    a = math.sqrt(2.0 / math.sqrt(3.0))
    return TorusLattice(((2 * a, 0.0), (0.0, math.sqrt(3.0) * a)))


# --------------------------------------------------------------------------
# minimisation


def minimize_torus_config(lattice: TorusLattice, N: int, seed: int = 0, gtol: float = 1e-8,
                          max_restarts: int = 5) -> TorusConfiguration:
    """Descend W from a seeded random start until the gradient sup-norm is <= gtol.

    BFGS with analytic Ewald forces; restarts from the current point if the
    line search stalls before reaching the tolerance.
    """
    if N < 2:
        raise DomainError("need N >= 2")
    d = lattice.d
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(N, d)) @ lattice.B

    def fun(z):
        p = z.reshape(N, d)
        e = periodic_W(TorusConfiguration(lattice, p))
        if not math.isfinite(e):
            return 1e300, np.zeros_like(z)
        return e, periodic_W_gradient(lattice, p).ravel()

    gmax = math.inf
    e = math.inf
    for _ in range(max_restarts):
        res = minimize(fun, x.ravel(), jac=True, method="BFGS", options={"gtol": gtol * 0.1, "maxiter": 5000})
        x = lattice.wrap(res.x.reshape(N, d))
        e = float(res.fun)
        gmax = float(np.max(np.abs(periodic_W_gradient(lattice, x))))
        if gmax <= gtol:
            break
    if gmax > gtol:
        raise SolverError(f"torus descent stopped at gradient {gmax:.3g}", last_residual=gmax, last_value=e)
    return TorusConfiguration(lattice, x, energy=e, info={"gradient": gmax})


def scaling_check(config: TorusConfiguration, m: float):
    """(W of the configuration rescaled to m times its density, m W - (2π/d) ρ m log m)."""
    m = float(m)
    if not m > 0:
        raise DomainError("m must be positive")
    lat = config.lattice
    d = lat.d
    lam = m ** (-1.0 / d)
    scaled = TorusConfiguration(TorusLattice(tuple(map(tuple, lat.B * lam))), config.points * lam)
    W = periodic_W(config)
    return periodic_W(scaled), m * W - (_TWO_PI / d) * config.density * m * math.log(m)
