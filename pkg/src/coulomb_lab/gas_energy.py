"""n-point Hamiltonian, the exact splitting into leading, confinement and
next-order parts, and the blown-up next-order energy via smeared charges.

H_n(x) = Σ_{i≠j} g(x_i - x_j) + n Σ_i V(x_i)

and, for distinct points and any equilibrium measure μ0 with bounded density,

H_n = n² I(μ0) + 2n Σ ζ(x_i) + L_n + s_n 𝓗_n(x'),

with x' = n^{1/d} x, L_n = -(n/2) log n (d = 2), -n log n (d = 1), 0 (d >= 3)
and s_n = n^{1-2/d}/c_d (d >= 2), 1/(2π) (d = 1, field in the plane).

𝓗_n is evaluated without a grid.  With δ^(η) the unit charge smeared on a
sphere of radius η and μ0' the blown-up background (mass n),

∫|∇h'_{n,η}|² - n c g(η) = c [ Σ_{i≠j} J_η(x'_i, x'_j) - 2 Σ_i P_η(x'_i) + ∬ g dμ0' dμ0' ],

where J_η is the smeared pair interaction and P_η(x) = ∫ g(max(|x - y|, η)) dμ0'(y).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import cKDTree

from ._hot import pair_rows
from .equilibrium import EquilibriumSolution
from .errors import CapabilityError, DomainError, SingularityError, SolverError
from .kernels import KernelSpec, kernel_array, kernel_spec, smeared_pair_interaction
from .potentials import PotentialSpec

__all__ = [
    "PointConfiguration",
    "NextOrderReport",
    "FieldEnergyTerms",
    "LowerBoundCheck",
    "hamiltonian",
    "hamiltonian_gradient",
    "truncated_field_energy",
    "field_energy_terms",
    "splitting_report",
    "discrepancy",
    "easy_lower_bound_check",
    "minimize_hamiltonian",
    "field_energy_grid",
    "default_eta",
]


@dataclass
class PointConfiguration:
    """n points in R^d; ``blown_up`` marks coordinates already scaled by n^{1/d}."""

    points: np.ndarray
    blown_up: bool = False

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.ndim != 2 or p.shape[0] < 1:
            raise DomainError("points must be an (n, d) array with n >= 1")
        if not np.all(np.isfinite(p)):
            raise DomainError("points must be finite")
        self.points = p

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def scale(self) -> float:
        return self.n ** (1.0 / self.d)

    def min_separation(self) -> float:
        if self.n < 2:
            return math.inf
        dist, _ = cKDTree(self.points).query(self.points, k=2)
        return float(dist[:, 1].min())

    @property
    def distinct(self) -> bool:
        return self.min_separation() > 0.0

    def blow_up(self) -> "PointConfiguration":
        if self.blown_up:
            return self
        return PointConfiguration(self.points * self.scale, blown_up=True)

    def shrink(self) -> "PointConfiguration":
        if not self.blown_up:
            return self
        return PointConfiguration(self.points / self.scale, blown_up=False)

    def permuted(self, perm) -> "PointConfiguration":
        return PointConfiguration(self.points[np.asarray(perm)], self.blown_up)


def _pair_sum(x: np.ndarray, d: int, backend=None) -> float:
    rows, i, j = pair_rows(x, d, backend)
    if i >= 0:
        raise SingularityError(f"points {i} and {j} coincide", indices=(i, j))
    return float(np.sum(rows))


def hamiltonian(config: PointConfiguration, spec: PotentialSpec, backend=None) -> float:
    """Σ_{i≠j} g(x_i - x_j) + n Σ V(x_i) over ordered pairs."""
    if config.blown_up:
        raise DomainError("hamiltonian takes un-blown coordinates")
    if config.d != spec.d:
        raise DomainError(f"points are {config.d}-dimensional, potential is {spec.d}-dimensional")
    x = config.points
    return _pair_sum(x, config.d, backend) + config.n * float(np.sum(spec(x)))


def _grad_V(spec: PotentialSpec, x: np.ndarray) -> np.ndarray:
    if spec.func is not None:
        step = 1e-6
        out = np.empty_like(x)
        for k in range(x.shape[1]):
            e = np.zeros(x.shape[1])
            e[k] = step
            out[:, k] = (spec(x + e) - spec(x - e)) / (2 * step)
        return out
    out = 2.0 * spec.quad_array * x
    if spec.radial:
        r = np.linalg.norm(x, axis=1)
        coef = np.zeros_like(r)
        for m, b in enumerate(spec.radial):
            if m >= 1 and b != 0.0:
                with np.errstate(divide="ignore", invalid="ignore"):
                    coef += b * m * np.where(r > 0, r ** (m - 2.0), 0.0 if m > 1 else 0.0)
        out = out + coef[:, None] * x
    return out


def hamiltonian_gradient(x: np.ndarray, spec: PotentialSpec) -> np.ndarray:
    """∂H_n/∂x_i = 2 Σ_j ∇g(x_i - x_j) + n ∇V(x_i)."""
    x = np.asarray(x, dtype=float)
    n, d = x.shape
    diff = x[:, None, :] - x[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(r2, 1.0)
    if d <= 2:
        w = -1.0 / r2
    else:
        w = (2.0 - d) * r2 ** (-0.5 * d)
    np.fill_diagonal(w, 0.0)
    return 2.0 * np.einsum("ij,ijk->ik", w, diff) + n * _grad_V(spec, x)


# --------------------------------------------------------------------------
# blown-up background quantities


def _background_scale(n: int, d: int):
    """(multiplicative factor, additive log shift) with h'(x') = n f (h(x) - shift)."""
    if d == 1:
        return 1.0, math.log(n)
    if d == 2:
        return 1.0, 0.5 * math.log(n)
    return n ** ((2.0 - d) / d), 0.0


def _ball_correction(xp: np.ndarray, sol: EquilibriumSolution, eta: float, n: int) -> np.ndarray:
    """∫_{B(x', η)} (g(η) - g(|x' - y|)) dμ0'(y) by polar quadrature.

    For d = 1 the background lives on the real axis, so the ball is the segment
    [x' - η, x' + η].
    """
    d = sol.d
    s = n ** (1.0 / d)
    rho = lambda y: sol.density_at(y / s)  # noqa: E731  μ0' density in blown-up units
    xg, wg = np.polynomial.legendre.leggauss(24)
    u = 0.5 * (xg + 1.0)
    wu = 0.5 * wg
    out = np.zeros(xp.shape[0])
    if d == 1:
        # t = η u², log t - log η = 2 log u, dt = 2 η u du
        t = eta * u * u
        w = 2.0 * np.log(u) * 2.0 * eta * u * wu
        for k, x0 in enumerate(xp[:, 0]):
            out[k] = np.dot(w, rho((x0 + t)[:, None]) + rho((x0 - t)[:, None]))
        return out
    if d == 2:
        nt = 48
        th = 2 * math.pi * np.arange(nt) / nt
        r = eta * u
        # (log r - log η) r dr dθ
        wr = np.log(u) * r * eta * wu
        offs = np.stack([np.outer(r, np.cos(th)), np.outer(r, np.sin(th))], -1).reshape(-1, 2)
        wts = np.repeat(wr, nt) * (2 * math.pi / nt)
        for k, x0 in enumerate(xp):
            out[k] = np.dot(wts, rho(x0 + offs))
        return out
    if d == 3:
        ct, wct = np.polynomial.legendre.leggauss(12)
        nphi = 24
        phi = 2 * math.pi * np.arange(nphi) / nphi
        st = np.sqrt(1 - ct**2)
        dirs = np.stack([np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)),
                         np.outer(ct, np.ones(nphi))], -1).reshape(-1, 3)
        wdir = np.repeat(wct, nphi) * (2 * math.pi / nphi)
        r = eta * u
        wr = (1.0 / eta - 1.0 / r) * r * r * eta * wu
        offs = (r[:, None, None] * dirs[None]).reshape(-1, 3)
        wts = np.outer(wr, wdir).reshape(-1)
        for k, x0 in enumerate(xp):
            out[k] = np.dot(wts, rho(x0 + offs))
        return out
    raise CapabilityError("ball correction implemented for d <= 3")


@dataclass
class FieldEnergyTerms:
    value: float
    pair: float
    point_background: float
    background: float
    eta: float
    overlap: bool
    near_pairs: int
    ball_correction: float = 0.0
    field_c: float = 2 * math.pi

    @property
    def limit(self) -> float:
        """The η → 0 value 𝓗_n: drop the in-ball corrections of the background term.

        Exact whenever no two smeared charges overlap (separation >= 2η).
        """
        return self.value + 2.0 * self.field_c * self.ball_correction


def default_eta(config: PointConfiguration) -> float:
    """0.1 × the minimum blown-up separation (capped at 0.1)."""
    sep = config.blow_up().min_separation()
    return 0.1 * min(1.0, sep)


def field_energy_terms(config: PointConfiguration, sol: EquilibriumSolution, eta: float | None = None,
                       backend=None) -> FieldEnergyTerms:
    """Terms of ∫|∇h'_{n,η}|² - n c g(η) (see module docstring)."""
    cfg = config.blow_up()
    if cfg.d != sol.d:
        raise DomainError("configuration and equilibrium dimensions differ")
    eta = default_eta(cfg) if eta is None else float(eta)
    if not 0.0 < eta < 1.0:
        raise DomainError("η must lie in (0, 1)")
    n, d = cfg.n, cfg.d
    kspec = sol.kspec
    xp = cfg.points
    pair = _pair_sum(xp, d, backend) if n > 1 else 0.0
    near = 0
    if n > 1:
        for i, j in cKDTree(xp).query_pairs(2.0 * eta):
            s = float(np.linalg.norm(xp[i] - xp[j]))
            jv = smeared_pair_interaction(xp[i], xp[j], eta, kspec)
            pair += 2.0 * (jv - float(kernel_array(s, KernelSpec(kspec.field_dim))))
            near += 1
    fac, shift = _background_scale(n, d)
    h = sol.potential_at(xp / cfg.scale)
    hp = n * fac * (h - shift)
    corr = _ball_correction(xp, sol, eta, n)
    pb = float(np.sum(hp)) + float(np.sum(corr))
    bg = n * n * fac * (sol.pair_energy - shift)
    c = kspec.field_c
    value = c * (pair - 2.0 * pb + bg)
    return FieldEnergyTerms(value=value, pair=pair, point_background=pb, background=bg, eta=eta,
                            overlap=near > 0, near_pairs=near, ball_correction=float(np.sum(corr)),
                            field_c=c)


def truncated_field_energy(config: PointConfiguration, sol: EquilibriumSolution, eta: float | None = None,
                           backend=None) -> float:
    """∫|∇h'_{n,η}|² - n c g(η) for the blown-up configuration.

    Exact for every η > 0 (smeared pairs closer than 2η use the exact smeared
    interaction); when such pairs exist the value is no longer the η → 0
    limit, which :func:`field_energy_terms` reports through ``overlap``.
    """
    return field_energy_terms(config, sol, eta, backend).value


# --------------------------------------------------------------------------


@dataclass
class NextOrderReport:
    n: int
    d: int
    H_n: float
    leading: float
    log_term: float
    confinement: float
    next_order: float  # 𝓗_n
    next_order_scaled: float  # s_n 𝓗_n
    per_point: float  # 𝓗_n / n
    eta: float
    residual: float
    relative_residual: float
    tolerance: float
    overlap: bool

    def to_dict(self) -> dict:
        return {k: (bool(v) if isinstance(v, (bool, np.bool_)) else v) for k, v in self.__dict__.items()}


def _log_term(n: int, d: int) -> float:
    if d == 2:
        return -0.5 * n * math.log(n)
    if d == 1:
        return -n * math.log(n)
    return 0.0


def _next_order_prefactor(n: int, d: int, kspec: KernelSpec) -> float:
    if d == 1:
        return 1.0 / kspec.field_c
    return n ** (1.0 - 2.0 / d) / kspec.c_d


def zeta_values(x: np.ndarray, sol: EquilibriumSolution) -> np.ndarray:
    """ζ at arbitrary points: grid interpolation inside the box, exact potential outside."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if sol.d == 1 and x.shape[-1] != 1:
        x = x.reshape(-1, 1)
    lo = np.asarray(sol.grid.lo) + 0.5 * sol.grid.h
    hi = np.asarray(sol.grid.hi) - 0.5 * sol.grid.h
    inside = np.all((x >= lo) & (x <= hi), axis=1)
    out = np.empty(x.shape[0])
    if inside.any():
        out[inside] = sol.zeta_at(x[inside])
    if (~inside).any():
        xo = x[~inside]
        out[~inside] = sol.potential_at(xo) + 0.5 * sol.potential_spec(xo) - sol.c
    return out


def _quadrature_scale(sol: EquilibriumSolution, samples: int = 64) -> float:
    """Max gap between the grid potential and the exact piecewise-constant potential
    on a sample of support cells (the quadrature error the residual inherits)."""
    if "quad_scale" in sol.info:
        return sol.info["quad_scale"]
    idx = np.argwhere(sol.support)
    rng = np.random.default_rng(12345)
    pick = idx[rng.choice(len(idx), size=min(samples, len(idx)), replace=False)]
    pts = sol.grid.points()[tuple(pick.T)]
    exact = sol.potential_at(pts)
    val = float(np.max(np.abs(exact - sol.potential[tuple(pick.T)])))
    sol.info["quad_scale"] = val
    return val


def splitting_report(config: PointConfiguration, sol: EquilibriumSolution, eta: float | None = None,
                     backend=None) -> NextOrderReport:
    """Evaluate both sides of the splitting identity for an un-blown configuration.

    ζ comes from the solver's grid (interpolated); 𝓗_n from the exact
    potential of the discrete density, so the residual measures genuine
    quadrature error and shrinks with the grid spacing.  𝓗_n is the η → 0
    value, which the smeared-charge terms give exactly once η is below half
    the minimum separation (in d = 1 the finite-η bias is O(η), not O(η²)).
    """
    if config.blown_up:
        config = config.shrink()
    n, d = config.n, config.d
    spec = sol.potential_spec
    H = hamiltonian(config, spec, backend)
    if eta is None:
        eta = 1e-3 * min(1.0, config.blow_up().min_separation())
    terms = field_energy_terms(config, sol, eta, backend)
    hcal = terms.limit if not terms.overlap else terms.value
    leading = n * n * sol.energy
    conf = 2.0 * n * float(np.sum(zeta_values(config.points, sol)))
    logt = _log_term(n, d)
    pref = _next_order_prefactor(n, d, sol.kspec)
    scaled = pref * hcal
    residual = H - (leading + conf + logt + scaled)
    tol = 4.0 * n * n * _quadrature_scale(sol) + 2.0 * n * float(np.max(np.abs(sol.zeta[sol.support]))) \
        + 1e-9 * max(1.0, abs(H))
    return NextOrderReport(n=n, d=d, H_n=H, leading=leading, log_term=logt, confinement=conf,
                           next_order=hcal, next_order_scaled=scaled, per_point=hcal / n,
                           eta=terms.eta, residual=residual,
                           relative_residual=abs(residual) / max(1.0, abs(H)), tolerance=tol,
                           overlap=terms.overlap)


# --------------------------------------------------------------------------


def discrepancy(config: PointConfiguration, center, R: float, sol: EquilibriumSolution,
                subsample: int = 8) -> float:
    """D(x', R) = #{x'_i ∈ B(x', R)} - μ0'(B(x', R)) in blown-up coordinates."""
    R = float(R)
    if not R > 0:
        raise DomainError("radius must be positive")
    cfg = config.blow_up()
    n, d = cfg.n, cfg.d
    center = np.atleast_1d(np.asarray(center, dtype=float))
    count = int(np.sum(np.linalg.norm(cfg.points - center, axis=1) < R))
    s = cfg.scale
    c0, r0 = center / s, R / s
    grid = sol.grid
    pts = grid.points().reshape(-1, d)
    mass = (sol.density * grid.cell_volume).reshape(-1)
    dist = np.linalg.norm(pts - c0, axis=1)
    half_diag = 0.5 * grid.h * math.sqrt(d)
    inside = dist + half_diag <= r0
    cut = (np.abs(dist - r0) < half_diag) & (mass > 0)
    frac = 0.0
    if cut.any():
        offs = (np.arange(subsample) + 0.5) / subsample - 0.5
        sub = np.stack(np.meshgrid(*([offs] * d), indexing="ij"), -1).reshape(-1, d) * grid.h
        cp = pts[cut][:, None, :] + sub[None]
        f = np.mean(np.linalg.norm(cp - c0, axis=2) < r0, axis=1)
        frac = float(np.dot(f, mass[cut]))
    return count - n * (float(mass[inside].sum()) + frac)


@dataclass
class LowerBoundCheck:
    holds: bool
    C_required: float
    C: float
    lhs: float
    bound_without_C: float

    def __bool__(self):
        return bool(self.holds)


def easy_lower_bound_check(config: PointConfiguration, sol: EquilibriumSolution, C: float = 50.0,
                           backend=None) -> LowerBoundCheck:
    """H_n >= n² I + 2n Σζ + L_n - C ‖μ0‖∞ N_d with N_d = n^{2-2/d} (d >= 2) or n (d = 1).

    ``C_required`` is the smallest constant for which the bound holds.
    """
    if config.blown_up:
        config = config.shrink()
    n, d = config.n, config.d
    H = hamiltonian(config, sol.potential_spec, backend)
    base = n * n * sol.energy + 2.0 * n * float(np.sum(zeta_values(config.points, sol))) + _log_term(n, d)
    growth = n if d == 1 else n ** (2.0 - 2.0 / d)
    unit = float(sol.density.max()) * growth
    need = max(0.0, (base - H) / unit)
    return LowerBoundCheck(holds=H >= base - C * unit, C_required=need, C=C, lhs=H, bound_without_C=base)


# --------------------------------------------------------------------------


def minimize_hamiltonian(n: int, spec: PotentialSpec, seed: int = 0, init=None, radius: float = 1.0,
                         gtol: float = 1e-9, max_iter: int = 20000) -> PointConfiguration:
    """Local minimiser of H_n by L-BFGS with analytic gradients from a seeded start."""
    d = spec.d
    rng = np.random.default_rng(seed)
    if init is None:
        x0 = rng.normal(size=(n, d))
        x0 *= radius * rng.uniform(size=(n, 1)) ** (1.0 / d) / np.linalg.norm(x0, axis=1, keepdims=True)
    else:
        x0 = np.asarray(init, dtype=float).reshape(n, d)

    def fun(z):
        x = z.reshape(n, d)
        rows, i, j = pair_rows(x, d)
        if i >= 0:
            return np.inf, np.zeros_like(z)
        return float(rows.sum() + n * np.sum(spec(x))), hamiltonian_gradient(x, spec).ravel()

    res = minimize(fun, x0.ravel(), jac=True, method="L-BFGS-B",
                   options={"gtol": gtol, "maxiter": max_iter, "maxcor": 30})
    if not np.all(np.isfinite(res.x)):
        raise SolverError("minimisation produced non-finite points", last_value=res.fun)
    return PointConfiguration(res.x.reshape(n, d))


# --------------------------------------------------------------------------
# Grid oracle (d = 2, circle-law background)


def _circle_background_grad(xp: np.ndarray, n: int) -> np.ndarray:
    """∇h^{μ0'} for the blown-up circle law: -x' inside radius √n, -n x'/|x'|² outside."""
    r2 = np.sum(xp * xp, axis=-1, keepdims=True)
    return np.where(r2 <= n, -xp, -n * xp / np.maximum(r2, 1e-300))


def _field(xq: np.ndarray, pts: np.ndarray, eta: float, n: int, skip: int = -1) -> np.ndarray:
    """∇h'_{n,η} at query points, leaving out the point ``skip``."""
    out = -_circle_background_grad(xq, n)
    for k, p in enumerate(pts):
        if k == skip:
            continue
        diff = xq - p
        r2 = np.sum(diff * diff, axis=-1, keepdims=True)
        out += np.where(r2 > eta * eta, -diff / np.maximum(r2, 1e-300), 0.0)
    return out


def field_energy_grid(config: PointConfiguration, eta: float, h: float | None = None,
                      box_factor: float = 6.0, region=None, background: str = "circle"):
    """Grid evaluation of ∫|∇h'_{n,η}|² - n c g(η) (oracle for small n, d = 2).

    The field is evaluated in closed form (point fields and the uniform-disk
    background); polar quadrature in log-radius resolves each point's core,
    a two-level midpoint grid covers the rest of a box ``box_factor`` times
    the support diameter.  The dipole tail outside the box, (π + 2)|p|²/(2L²)
    for the square of half-side L, is returned separately as an error bar
    (the field energy is at least the grid value and at most grid + tail,
    up to quadrature error).  ``region=(center, radius)`` restricts the
    integral to a disk (no subtraction of n c g(η) then).

    Returns (value, tail_bound).
    """
    if background != "circle":
        raise CapabilityError("grid oracle only knows the circle-law background")
    cfg = config.blow_up()
    if cfg.d != 2:
        raise CapabilityError("grid oracle is two-dimensional")
    n = cfg.n
    pts = cfg.points
    sep = cfg.min_separation()
    rho0 = min(0.5 * sep, 1.0)
    if not eta < rho0:
        raise DomainError("grid oracle needs η < half the minimum separation")
    if region is None:
        chi = lambda q: np.ones(q.shape[:-1])  # noqa: E731
    else:
        rc, rr = np.asarray(region[0], dtype=float), float(region[1])
        chi = lambda q: (np.linalg.norm(q - rc, axis=-1) < rr).astype(float)  # noqa: E731

    total = 0.0
    # point cores: annulus η < r < ρ0 in t = log(r/η), and the disk r < η
    tg, tw = np.polynomial.legendre.leggauss(48)
    nth = 96
    th = 2 * math.pi * np.arange(nth) / nth
    er = np.stack([np.cos(th), np.sin(th)], -1)
    L = math.log(rho0 / eta)
    t = 0.5 * L * (tg + 1.0)
    wt = 0.5 * L * tw
    ug, uw = np.polynomial.legendre.leggauss(24)
    ri = 0.5 * eta * (ug + 1.0)
    wri = 0.5 * eta * uw * ri
    for k, p in enumerate(pts):
        r = eta * np.exp(t)
        q = p + r[:, None, None] * er[None]
        F = _field(q, pts, eta, n, skip=k)
        vec = -er[None] + r[:, None, None] * F  # r (∇g + F)
        val = np.sum(vec * vec, axis=-1) * chi(q)
        total += float(np.sum(wt[:, None] * val)) * (2 * math.pi / nth)
        q = p + ri[:, None, None] * er[None]
        F = _field(q, pts, eta, n, skip=k)
        val = np.sum(F * F, axis=-1) * chi(q)
        total += float(np.sum(wri[:, None] * val)) * (2 * math.pi / nth)

    def grid_part(lo, hi, hh, hole=None):
        m = int(round((hi - lo) / hh))
        hh = (hi - lo) / m
        ax = lo + (np.arange(m) + 0.5) * hh
        acc = 0.0
        for row in range(m):
            q = np.stack([np.full(m, ax[row]), ax], -1)
            keep = np.ones(m, dtype=bool)
            if hole is not None:
                keep &= np.max(np.abs(q), axis=1) > hole
            dmin = np.min(np.linalg.norm(q[:, None, :] - pts[None], axis=2), axis=1)
            # cells near a core see a 1/r² integrand: subsample those
            far = keep & (dmin > 4.0 * rho0 + hh)
            if far.any():
                F = _field(q[far], pts, eta, n)
                acc += float(np.sum(np.sum(F * F, -1) * chi(q[far]))) * hh * hh
            cut = keep & ~far
            if cut.any():
                s = 8
                o = ((np.arange(s) + 0.5) / s - 0.5) * hh
                sub = np.stack(np.meshgrid(o, o, indexing="ij"), -1).reshape(-1, 2)
                qq = (q[cut][:, None, :] + sub[None]).reshape(-1, 2)
                dd = np.min(np.linalg.norm(qq[:, None, :] - pts[None], axis=2), axis=1)
                F = _field(qq, pts, eta, n)
                w = (dd >= rho0) * chi(qq)
                acc += float(np.sum(np.sum(F * F, -1) * w)) * hh * hh / s**2
        return acc

    hf = h if h is not None else min(0.05, rho0 / 6)
    hc = max(hf, 0.1)
    diam = 2.0 * math.sqrt(n)
    # both boxes aligned to the coarse spacing so the outer cells tile the ring exactly
    Lbox = hc * math.ceil(0.5 * box_factor * diam / hc)
    inner = hc * math.ceil((max(math.sqrt(n), float(np.max(np.abs(pts)))) + 2.0) / hc)
    total += grid_part(-inner, inner, hf)
    if region is None or np.linalg.norm(np.asarray(region[0])) + region[1] > inner:
        total += grid_part(-Lbox, Lbox, hc, hole=inner)
    p = pts.sum(axis=0)
    # ∫ over the outside of the square [-L, L]² of the dipole density |p|²/r⁴
    tail = (math.pi + 2.0) * float(p @ p) / (2.0 * Lbox**2)
    if region is None:
        total -= n * 2 * math.pi * (-math.log(eta))
    return total, tail
