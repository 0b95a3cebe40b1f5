"""Equilibrium measures: direct minimisation of the mean-field energy and the
obstacle-problem route.

The discrete problem lives on cell masses m_c >= 0 with Σ m_c = 1:

    I_h(m) = m·K m + V·m,   K_ab = g(|x_a - x_b|) (a != b),  K_aa = cell self-average,

where the diagonal is the exact in-cell double integral of g.  K m is a
discrete convolution and is applied with FFTs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BoxTooSmallError, CapabilityError, DomainError, SolverError
from .grids import Grid, GridField, interpolate_linear
from .kernels import KernelSpec, cell_self_average, kernel_array, kernel_spec
from .obstacle import psor, uniform_stencil
from .potentials import PotentialSpec

__all__ = [
    "CellKernel",
    "EquilibriumSolution",
    "solve_equilibrium_direct",
    "solve_obstacle_psor",
    "mean_field_energy",
    "equilibrium_from_density",
    "euler_lagrange_residual",
    "project_simplex",
    "unit_ball_volume",
]


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


class CellKernel:
    """Convolution with the cell-averaged Coulomb kernel on a cell grid."""

    def __init__(self, grid: Grid, kspec: KernelSpec):
        if grid.kind != "cell":
            raise DomainError("CellKernel needs a cell-centred grid")
        self.grid = grid
        self.kspec = kspec
        self.n = grid.shape
        self.L = tuple(sfft.next_fast_len(2 * n - 1, real=True) for n in self.n)
        offs = []
        for n, L in zip(self.n, self.L):
            idx = np.arange(L)
            offs.append(np.where(idx < n, idx, idx - L).astype(float))
        mesh = np.meshgrid(*offs, indexing="ij")
        r = grid.h * np.sqrt(sum(o * o for o in mesh))
        with np.errstate(divide="ignore"):
            kern = kernel_array(np.where(r > 0, r, 1.0), kspec)
        kern[(0,) * grid.d] = cell_self_average(grid.h, kspec)
        if grid.d == 1:
            # exact segment-segment averages of -log for nearby offsets
            k = offs[0]
            near = np.abs(k) <= 64
            kern[near] = _segment_pair_average(k[near], grid.h)
        self.self_value = float(kern[(0,) * grid.d])
        self.khat = sfft.rfftn(kern, s=self.L)

    def apply(self, m: np.ndarray) -> np.ndarray:
        out = sfft.irfftn(sfft.rfftn(m, s=self.L) * self.khat, s=self.L)
        return out[tuple(slice(0, n) for n in self.n)]


def _G1(t):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(t == 0, 0.0, 0.5 * t * t * np.log(np.abs(t)) - 0.75 * t * t)


def _segment_pair_average(k, h):
    """Mean of -log|x - y| for x, y uniform on two segments of length h at offset k h."""
    t = k * h
    return -(_G1(t + h) - 2.0 * _G1(t) + _G1(t - h)) / h**2


def project_simplex(v: np.ndarray, total: float = 1.0) -> np.ndarray:
    """Euclidean projection of a flat vector onto {m >= 0, Σ m = total}."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    k = np.arange(1, u.size + 1)
    cond = u - css / k > 0
    rho = k[cond][-1]
    theta = css[cond][-1] / rho
    return np.maximum(v - theta, 0.0)


@dataclass
class EquilibriumSolution:
    grid: Grid
    density: np.ndarray
    potential: np.ndarray
    c: float
    zeta: np.ndarray
    support: np.ndarray
    V: np.ndarray
    energy: float
    pair_energy: float
    kspec: KernelSpec
    potential_spec: PotentialSpec
    iterations: int = 0
    kkt_residual: float = float("nan")
    info: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.grid.d

    @property
    def masses(self) -> np.ndarray:
        return self.density * self.grid.cell_volume

    @property
    def support_radius_estimate(self) -> float:
        vol = float(self.support.sum()) * self.grid.cell_volume
        if self.d == 1:
            return 0.5 * vol
        return (vol / unit_ball_volume(self.d)) ** (1.0 / self.d)

    def density_field(self) -> GridField:
        return GridField(self.grid, self.density, name="mu0")

    def potential_field(self) -> GridField:
        return GridField(self.grid, self.potential, name="h_mu0")

    def zeta_field(self) -> GridField:
        return GridField(self.grid, self.zeta, name="zeta")

    def zeta_at(self, x) -> np.ndarray:
        return interpolate_linear(self.grid, self.zeta, x)

    def density_at(self, x) -> np.ndarray:
        """Piecewise-constant density lookup (zero outside the box)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.d == 1 and x.shape[-1] != 1:
            x = x.reshape(-1, 1)
        idx = np.floor((x - np.asarray(self.grid.lo)) / self.grid.h).astype(int)
        inside = np.all((idx >= 0) & (idx < np.asarray(self.grid.shape)), axis=1)
        idx = np.clip(idx, 0, np.asarray(self.grid.shape) - 1)
        vals = self.density[tuple(idx.T)]
        return np.where(inside, vals, 0.0)

    def potential_at(self, x) -> np.ndarray:
        """h^{μ0}(x) = ∫ g(x - y) dμ0(y) for the piecewise-constant density.

        Exact cell integrals in d = 1, 2 (closed-form antiderivatives summed
        over cell corners); in d = 3 a midpoint rule refined 4^3-fold on
        cells near x.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.d == 1 and x.shape[-1] != 1:
            x = x.reshape(-1, 1)
        if self.d == 1:
            return _potential_exact_1d(self.grid, self.density, x[:, 0])
        if self.d == 2:
            return _potential_exact_2d(self.grid, self.density, x)
        return _potential_midpoint(self.grid, self.density, x, self.kspec)

    def summary(self) -> dict:
        return {
            "c": self.c,
            "I": self.energy,
            "support_radius_estimate": self.support_radius_estimate,
        }


def _F1(t):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(t == 0, 0.0, t * np.log(np.abs(t)) - t)


def _potential_exact_1d(grid, density, x):
    edges = grid.lo[0] + np.arange(grid.shape[0] + 1) * grid.h
    padded = np.concatenate([[0.0], density, [0.0]])
    w = padded[:-1] - padded[1:]  # μ(left of edge) - μ(right of edge)
    return np.array([-np.dot(_F1(edges - xi), w) for xi in x])


def _Phi2(u, v):
    """Antiderivative with ∂²Φ/∂u∂v = log sqrt(u² + v²)."""
    r2 = u * u + v * v
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(r2 > 0, u * v * np.log(np.where(r2 > 0, r2, 1.0)), 0.0)
        a = np.where(u != 0, u * u * np.arctan(v / np.where(u != 0, u, 1.0)), 0.0)
        b = np.where(v != 0, v * v * np.arctan(u / np.where(v != 0, v, 1.0)), 0.0)
    return 0.5 * (t - 3.0 * u * v + a + b)


def _potential_exact_2d(grid, density, x):
    ex = grid.lo[0] + np.arange(grid.shape[0] + 1) * grid.h
    ey = grid.lo[1] + np.arange(grid.shape[1] + 1) * grid.h
    p = np.pad(density, 1)
    w = p[:-1, :-1] - p[1:, :-1] - p[:-1, 1:] + p[1:, 1:]
    nz = np.nonzero(w)
    wx = ex[nz[0]]
    wy = ey[nz[1]]
    wv = w[nz]
    out = np.empty(x.shape[0])
    for k, (a, b) in enumerate(x):
        out[k] = -np.dot(_Phi2(wx - a, wy - b), wv)
    return out


def _potential_midpoint(grid, density, x, kspec):
    pts = grid.points().reshape(-1, grid.d)
    mass = density.reshape(-1) * grid.cell_volume
    sub = 4
    offs = (np.arange(sub) + 0.5) / sub - 0.5
    sub_off = np.stack(np.meshgrid(*([offs] * grid.d), indexing="ij"), -1).reshape(-1, grid.d) * grid.h
    out = np.empty(x.shape[0])
    for k, xi in enumerate(x):
        r = np.linalg.norm(pts - xi, axis=1)
        near = r < 2.0 * grid.h
        far_val = np.dot(mass[~near], kernel_array(r[~near], kspec))
        near_val = 0.0
        for c_idx in np.nonzero(near)[0]:
            rr = np.linalg.norm(pts[c_idx] + sub_off - xi, axis=1)
            rr = np.maximum(rr, 1e-12)
            near_val += mass[c_idx] * kernel_array(rr, kspec).mean()
        out[k] = far_val + near_val
    return out


def _check_mass(m, tol=1e-6):
    if np.any(m < -1e-12):
        raise DomainError("density has negative cells")
    tot = float(m.sum())
    if abs(tot - 1.0) > tol:
        raise DomainError(f"total mass {tot} differs from 1")


def mean_field_energy(density, grid: Grid, spec: PotentialSpec | None = None,
                      kspec: KernelSpec | None = None, kernel: CellKernel | None = None) -> float:
    """I(μ) = ∬ g dμ dμ + ∫ V dμ for a piecewise-constant density on ``grid``.

    ``spec=None`` means V = 0.
    """
    kspec = kspec or kernel_spec(grid.d)
    m = np.asarray(density, dtype=float) * grid.cell_volume
    _check_mass(m)
    kernel = kernel or CellKernel(grid, kspec)
    total = float(np.sum(m * kernel.apply(m)))
    if spec is not None:
        total += float(np.sum(spec(grid.points()) * m))
    return total


def equilibrium_from_density(density, grid: Grid, spec: PotentialSpec,
                             support_tol: float = 1e-6) -> EquilibriumSolution:
    """Wrap an arbitrary probability density as an EquilibriumSolution-shaped
    object (potential, c, ζ, support computed from it); used for diagnostics."""
    kspec = kernel_spec(grid.d)
    m = np.asarray(density, dtype=float) * grid.cell_volume
    _check_mass(m)
    kernel = CellKernel(grid, kspec)
    Km = kernel.apply(m)
    V = spec(grid.points())
    phi = Km + 0.5 * V
    c = float(np.sum(m * phi))
    pair = float(np.sum(m * Km))
    return EquilibriumSolution(grid=grid, density=m / grid.cell_volume, potential=Km, c=c, zeta=phi - c,
                               support=m > support_tol * m.max(), V=V, energy=pair + float(np.sum(V * m)),
                               pair_energy=pair, kspec=kspec, potential_spec=spec)


def _kkt(phi, m, support_tol=1e-6):
    c = float(np.sum(m * phi))
    sup = m > support_tol * m.max()
    r1 = float(np.max(np.abs(phi[sup] - c))) if sup.any() else 0.0
    r2 = float(np.max(np.maximum(c - phi, 0.0)))
    return c, max(r1, r2)


def _fista(kernel: CellKernel, V: np.ndarray, m0: np.ndarray, tol: float, max_iter: int):
    """Accelerated projected gradient with backtracking (Armijo-type sufficient
    decrease on the quadratic model) and function-value restart."""
    shape = m0.shape
    m = project_simplex(m0.ravel()).reshape(shape)
    Km = kernel.apply(m)
    f = float(np.sum(m * Km) + np.sum(V * m))
    # Lipschitz estimate on zero-sum directions by a few power iterations.
    rng = np.random.default_rng(0)
    z = rng.standard_normal(shape)
    z -= z.mean()
    lam = 1.0
    for _ in range(20):
        z = kernel.apply(z)
        z -= z.mean()
        lam = float(np.linalg.norm(z))
        z /= lam
    L = 2.0 * lam
    m_prev, Km_prev = m, Km
    t = 1.0
    it = 0
    res = np.inf
    while it < max_iter:
        it += 1
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        beta = (t - 1.0) / t_next
        y = m + beta * (m - m_prev)
        Ky = Km + beta * (Km - Km_prev)
        fy = float(np.sum(y * Ky) + np.sum(V * y))
        gy = 2.0 * Ky + V
        while True:
            cand = project_simplex((y - gy / L).ravel()).reshape(shape)
            Kc = kernel.apply(cand)
            fc = float(np.sum(cand * Kc) + np.sum(V * cand))
            dlt = cand - y
            if fc <= fy + float(np.sum(gy * dlt)) + 0.5 * L * float(np.sum(dlt * dlt)) + 1e-15 * abs(fy):
                break
            L *= 2.0
        if fc > f:  # restart momentum
            t = 1.0
            m_prev, Km_prev = m, Km
            continue
        m_prev, Km_prev = m, Km
        m, Km, f = cand, Kc, fc
        t = t_next
        if it % 10 == 0:
            _, res = _kkt(Km + 0.5 * V, m)
            if res <= tol:
                break
    _, res = _kkt(Km + 0.5 * V, m)
    return m, Km, it, res


def _prolong(m_coarse, factor, d):
    m = m_coarse
    for ax in range(d):
        m = np.repeat(m, factor, axis=ax)
    return m / factor**d


def solve_equilibrium_direct(spec: PotentialSpec, grid: Grid | None = None, h: float = 1 / 32,
                             box: float = 2.5, tol: float = 1e-6, max_iter: int = 20000,
                             multilevel: bool = True, check_margin: bool = True) -> EquilibriumSolution:
    """Minimise the discretised mean-field energy over probability cell masses."""
    d = spec.d
    kspec = kernel_spec(d)
    if grid is None:
        grid = Grid.box(d, -box, box, h)
    if grid.kind != "cell" or grid.d != d:
        raise DomainError("need a cell grid of the potential's dimension")
    pts = grid.points()
    V = spec(pts)
    if not np.all(np.isfinite(V)) or V.min() < -1e12:
        raise DomainError("potential must be finite and bounded below on the box")
    kernel = CellKernel(grid, kspec)

    # coarse-to-fine warm start
    levels = 0
    if multilevel:
        while all(n % 2 ** (levels + 1) == 0 for n in grid.shape) and \
                int(np.prod(grid.shape)) // 2 ** (d * (levels + 1)) >= 64 and levels < 4:
            levels += 1
    if levels:
        cg = Grid(grid.lo, grid.h * 2**levels, tuple(n // 2**levels for n in grid.shape))
        coarse = solve_equilibrium_direct(spec, cg, tol=max(tol, 1e-5), max_iter=max_iter,
                                          multilevel=False, check_margin=False)
        m0 = _prolong(coarse.masses, 2**levels, d)
    else:
        m0 = np.exp(-(V - V.min()))
        m0 /= m0.sum()

    m, Km, it, res = _fista(kernel, V, m0, tol, max_iter)
    if not np.isfinite(res):
        raise SolverError("equilibrium solve produced non-finite values", last_residual=res)
    if res > max(100 * tol, 1e-3):
        raise SolverError(f"equilibrium solve stalled at KKT residual {res:.3g}", last_residual=res)
    phi = Km + 0.5 * V
    c = float(np.sum(m * phi))
    pair = float(np.sum(m * Km))
    energy = pair + float(np.sum(V * m))
    density = m / grid.cell_volume
    support = m > 1e-6 * m.max()
    sol = EquilibriumSolution(grid=grid, density=density, potential=Km, c=c, zeta=phi - c,
                              support=support, V=V, energy=energy, pair_energy=pair,
                              kspec=kspec, potential_spec=spec, iterations=it, kkt_residual=res)
    if check_margin:
        lo = np.asarray(grid.lo)
        hi = np.asarray(grid.hi)
        margin = 0.1 * (hi - lo)
        sp_pts = pts[support]
        if np.any(sp_pts < lo + margin) or np.any(sp_pts > hi - margin):
            raise BoxTooSmallError("support touches the outer 10% margin of the box; enlarge the box")
    return sol


def euler_lagrange_residual(sol: EquilibriumSolution):
    """(max (c - h - V/2)_+ over the grid, max |h + V/2 - c| over the support)."""
    phi = sol.potential + 0.5 * sol.V
    below = float(np.max(np.maximum(sol.c - phi, 0.0)))
    on = float(np.max(np.abs(phi[sol.support] - sol.c))) if sol.support.any() else 0.0
    return below, on


def _boundary_values(grid: Grid, boundary):
    pts = grid.points()
    if callable(boundary):
        return np.asarray(boundary(pts), dtype=float)
    return np.broadcast_to(np.asarray(boundary, dtype=float), grid.shape).astype(float)


def solve_obstacle_psor(psi: GridField, boundary, mode: str = "laplace", omega: float = 1.8,
                        tol: float = 1e-8, max_sweeps: int = 500_000, backend=None) -> GridField:
    """min ∫|∇h|² (laplace) or ∫|∇h|² + h² (screened) over h >= ψ with Dirichlet data.

    ``psi`` lives on a 2D node grid; ``boundary`` is a scalar, an array on the
    grid or a callable of the node coordinates (only the outer ring is used).
    Axis 0 of the arrays is x, axis 1 is y.
    """
    grid = psi.grid
    if grid.d != 2:
        raise CapabilityError("the PSOR obstacle route is implemented for d = 2")
    if mode not in ("laplace", "screened"):
        raise DomainError(f"unknown mode {mode!r}")
    scr = 1.0 if mode == "screened" else 0.0
    st = uniform_stencil(grid.shape, grid.h, scr)
    bvals = _boundary_values(grid, boundary)
    psi_v = np.where(np.isfinite(psi.values), psi.values, -np.inf)
    # warm start: unconstrained solution, lifted onto the obstacle
    h_lin = _dirichlet_solve(grid, bvals, scr)
    h0 = np.where(st.free, np.maximum(h_lin, psi_v), bvals)
    h, res, sweeps = psor(st, psi_v, 0.0, h0, omega=omega, tol=tol, max_sweeps=max_sweeps, backend=backend)
    out = GridField(grid, h, boundary=bvals, name="h")
    out.info = {"residual": res, "sweeps": sweeps}
    return out


def _dirichlet_solve(grid: Grid, bvals: np.ndarray, screening: float) -> np.ndarray:
    """Direct sparse solve of -Δ_h h + s h = 0 with the boundary ring fixed."""
    nx, ny = grid.shape
    h = grid.h
    ix, iy = nx - 2, ny - 2
    ex = sp.diags([-np.ones(ix - 1), 2 * np.ones(ix), -np.ones(ix - 1)], [-1, 0, 1])
    ey = sp.diags([-np.ones(iy - 1), 2 * np.ones(iy), -np.ones(iy - 1)], [-1, 0, 1])
    A = (sp.kron(ex, sp.identity(iy)) + sp.kron(sp.identity(ix), ey)) / h**2 + screening * sp.identity(ix * iy)
    rhs = np.zeros((ix, iy))
    rhs[0, :] += bvals[0, 1:-1] / h**2
    rhs[-1, :] += bvals[-1, 1:-1] / h**2
    rhs[:, 0] += bvals[1:-1, 0] / h**2
    rhs[:, -1] += bvals[1:-1, -1] / h**2
    sol = spla.spsolve(A.tocsc(), rhs.ravel()).reshape(ix, iy)
    out = bvals.copy()
    out[1:-1, 1:-1] = sol
    return out
