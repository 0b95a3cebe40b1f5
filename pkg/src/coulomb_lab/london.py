"""London equation, the mean-field obstacle problem for vortex density, the
first critical field, and the exact GL splitting check.

Curved boundaries are handled with Shortley-Weller differences: a node whose
neighbour lies outside Ω couples instead to the boundary point on that grid
line, at distance θh, with the usual unequal-arm second difference.  This
keeps the scheme second order and the matrix an M-matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .errors import DomainError, SolverError
from .gl_field import (GLState, _edge_weights, covariant_differences, curl_edges,
                       gl_energy, vorticity)
from .grids import Grid, GridField
from .obstacle import Stencil, psor

__all__ = [
    "RectDomain",
    "DiskDomain",
    "domain_from_spec",
    "DomainSystem",
    "discretize",
    "london_solve",
    "h0_field",
    "CriticalField",
    "first_critical_lambda",
    "GLObstacle",
    "gl_obstacle",
    "cell_obstacle",
    "GLSplitting",
    "ScreenedObstacleState",
    "h0_eps",
    "gl_splitting_check",
]


@dataclass(frozen=True)
class RectDomain:
    x0: float
    x1: float
    y0: float
    y1: float

    @classmethod
    def square(cls, side: float) -> "RectDomain":
        return cls(-side / 2, side / 2, -side / 2, side / 2)

    @property
    def bbox(self):
        return (self.x0, self.x1, self.y0, self.y1)

    def contains(self, X, Y):
        return (X > self.x0) & (X < self.x1) & (Y > self.y0) & (Y < self.y1)

    def crossing(self, x, y, axis, sign):
        """Distance from an inside point to ∂Ω along ±axis."""
        if axis == 0:
            return (self.x1 - x) if sign > 0 else (x - self.x0)
        return (self.y1 - y) if sign > 0 else (y - self.y0)

    def describe(self):
        return {"kind": "rect", "bounds": list(self.bbox)}


@dataclass(frozen=True)
class DiskDomain:
    radius: float
    cx: float = 0.0
    cy: float = 0.0

    @property
    def bbox(self):
        r = self.radius
        return (self.cx - r, self.cx + r, self.cy - r, self.cy + r)

    def contains(self, X, Y):
        return (X - self.cx) ** 2 + (Y - self.cy) ** 2 < self.radius**2

    def crossing(self, x, y, axis, sign):
        along, across = (x - self.cx, y - self.cy) if axis == 0 else (y - self.cy, x - self.cx)
        chord = math.sqrt(max(self.radius**2 - across * across, 0.0))
        return chord - sign * along

    def describe(self):
        return {"kind": "disk", "radius": self.radius, "center": [self.cx, self.cy]}


def domain_from_spec(spec) -> RectDomain | DiskDomain:
    """'disk:R', 'square:L', 'rect:x0,x1,y0,y1' or a dict with the same keys."""
    if isinstance(spec, (RectDomain, DiskDomain)):
        return spec
    if isinstance(spec, dict):
        kind = spec.get("kind")
        if kind == "disk":
            c = spec.get("center", [0.0, 0.0])
            return DiskDomain(float(spec["radius"]), float(c[0]), float(c[1]))
        if kind == "square":
            return RectDomain.square(float(spec["side"]))
        if kind == "rect":
            return RectDomain(*map(float, spec["bounds"]))
        raise DomainError(f"unknown domain kind {kind!r}")
    kind, _, arg = str(spec).partition(":")
    try:
        if kind == "disk":
            return DiskDomain(float(arg))
        if kind == "square":
            return RectDomain.square(float(arg))
        if kind == "rect":
            return RectDomain(*[float(a) for a in arg.split(",")])
    except ValueError as exc:
        raise DomainError(f"bad domain spec {spec!r}") from exc
    raise DomainError(f"unknown domain spec {spec!r}")


@dataclass
class DomainSystem:
    """Discretised -Δ + screening on the nodes of Ω with Dirichlet data.

    ``stencil`` holds per-node coefficients (free = interior unknowns) and
    ``boundary_rhs`` the right-hand side produced by unit boundary data.
    """

    domain: object
    grid: Grid
    inside: np.ndarray
    stencil: Stencil
    boundary_rhs: np.ndarray

    def matrix(self):
        st = self.stencil
        nx, ny = self.inside.shape
        idx = -np.ones((nx, ny), dtype=int)
        idx[self.inside] = np.arange(int(self.inside.sum()))
        rows, cols, vals = [np.arange(idx.max() + 1)], [np.arange(idx.max() + 1)], [st.diag[self.inside]]
        for coef, sh in ((st.cs, (-1, 0)), (st.cn, (1, 0)), (st.cw, (0, -1)), (st.ce, (0, 1))):
            I, J = np.nonzero(self.inside)
            I2, J2 = I + sh[0], J + sh[1]
            ok = (I2 >= 0) & (I2 < nx) & (J2 >= 0) & (J2 < ny)
            ok[ok] &= self.inside[I2[ok], J2[ok]]
            rows.append(idx[I[ok], J[ok]])
            cols.append(idx[I2[ok], J2[ok]])
            vals.append(-coef[I[ok], J[ok]])
        n = idx.max() + 1
        return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def discretize(domain, h: float, screening: float = 1.0, theta_min: float = 1e-6) -> DomainSystem:
    """Shortley-Weller system for -Δ + screening on Ω, node grid of spacing h on its bounding box."""
    domain = domain_from_spec(domain)
    x0, x1, y0, y1 = domain.bbox
    grid = Grid.box(2, (x0, y0), (x1, y1), h, kind="node")
    X, Y = np.meshgrid(*grid.axes, indexing="ij")
    inside = domain.contains(X, Y)
    nx, ny = inside.shape
    diag = np.full(inside.shape, screening, dtype=float)
    coef = {k: np.zeros(inside.shape) for k in ("cs", "cn", "cw", "ce")}
    brhs = np.zeros(inside.shape)
    # axis 0 neighbours -> cs/cn, axis 1 -> cw/ce (the obstacle module's convention)
    for axis, (minus, plus) in ((0, ("cs", "cn")), (1, ("cw", "ce"))):
        for I, J in zip(*np.nonzero(inside)):
            arms = []
            for sign in (-1, 1):
                I2, J2 = (I + sign, J) if axis == 0 else (I, J + sign)
                if 0 <= I2 < nx and 0 <= J2 < ny and inside[I2, J2]:
                    arms.append((1.0, True))
                else:
                    th = domain.crossing(X[I, J], Y[I, J], axis, sign) / h
                    arms.append((min(max(th, theta_min), 1.0), False))
            (tm, inm), (tp, inp) = arms
            hm, hp = tm * h, tp * h
            cm, cp = 2.0 / (hm * (hm + hp)), 2.0 / (hp * (hm + hp))
            diag[I, J] += 2.0 / (hm * hp)
            if inm:
                coef[minus][I, J] = cm
            else:
                brhs[I, J] += cm
            if inp:
                coef[plus][I, J] = cp
            else:
                brhs[I, J] += cp
    st = Stencil(diag, coef["cw"], coef["ce"], coef["cs"], coef["cn"], inside)
    return DomainSystem(domain, grid, inside, st, brhs)


_SYSTEMS: dict = {}


def _system(domain, h, screening=1.0) -> DomainSystem:
    domain = domain_from_spec(domain)
    key = (domain, float(h), float(screening))
    if key not in _SYSTEMS:
        _SYSTEMS[key] = discretize(domain, h, screening)
    return _SYSTEMS[key]


def london_solve(mu, h_ex: float, domain, h: float = 1 / 32) -> GridField:
    """Solve -Δh + h = μ in Ω, h = h_ex on ∂Ω (sparse direct).

    ``mu`` is a scalar, a nodal array on the bounding-box grid, or a callable
    μ(X, Y).  Nodes outside Ω carry the boundary value; ``boundary`` on the
    returned field is the interior mask.  Raises SolverError if the scaled
    residual exceeds 1e-10.
    """
    sysm = _system(domain, h)
    X, Y = np.meshgrid(*sysm.grid.axes, indexing="ij")
    if callable(mu):
        m = np.asarray(mu(X, Y), dtype=float)
    else:
        m = np.broadcast_to(np.asarray(mu, dtype=float), X.shape)
    if not np.all(np.isfinite(m[sysm.inside])):
        raise DomainError("μ must be finite inside Ω")
    A = sysm.matrix()
    b = m[sysm.inside] + h_ex * sysm.boundary_rhs[sysm.inside]
    sol = spsolve(A.tocsc(), b)
    res = float(np.max(np.abs(A @ sol - b) / sysm.stencil.diag[sysm.inside])) if sol.size else 0.0
    if not np.all(np.isfinite(sol)) or res > 1e-10 * max(1.0, abs(h_ex), float(np.max(np.abs(b)) if b.size else 0.0)):
        raise SolverError("London solve failed", last_residual=res)
    out = np.full(X.shape, float(h_ex))
    out[sysm.inside] = sol
    return GridField(sysm.grid, out, boundary=sysm.inside, name="h")


def h0_field(domain, h: float = 1 / 32) -> GridField:
    """h₀: -Δh₀ + h₀ = 0 in Ω, h₀ = 1 on ∂Ω."""
    return london_solve(0.0, 1.0, domain, h)


@dataclass
class CriticalField:
    lam: float  # λ_Ω = 1 / (2 max |h₀ - 1|)
    argmax: tuple
    h0_min: float
    h0: GridField


def first_critical_lambda(domain, h: float = 1 / 32) -> CriticalField:
    f = h0_field(domain, h)
    inside = f.boundary
    dev = np.where(inside, 1.0 - f.values, -np.inf)
    k = np.unravel_index(int(np.argmax(dev)), dev.shape)
    pts = f.grid.points()
    return CriticalField(1.0 / (2.0 * float(dev[k])), (float(pts[k][0]), float(pts[k][1])),
                         float(f.values[k]), f)


# --------------------------------------------------------------------------
# obstacle problems


def _active_set_polish(A, b, psi, x, max_iter=50):
    """Primal-dual active-set iterations started from x: exact complementarity."""
    active = x <= psi + 1e-14 * max(1.0, float(np.max(np.abs(psi))))
    for _ in range(max_iter):
        free = ~active
        y = psi.copy()
        if free.any():
            rhs = b[free] - A[free][:, active] @ psi[active]
            y[free] = spsolve(A[free][:, free].tocsc(), rhs)
        lam = A @ y - b
        new_active = (active & (lam > 0)) | (~active & (y < psi))
        if np.array_equal(new_active, active):
            return y, active, lam
        active = new_active
    raise SolverError("active-set polish did not settle")


@dataclass
class GLObstacle:
    lam: float
    level: float  # obstacle 1 - 1/(2λ)
    h: GridField
    omega: np.ndarray  # coincidence nodes
    mu: np.ndarray  # (1 - 1/(2λ)) on ω, 0 elsewhere
    residual: float
    sweeps: int

    def as_tuple(self):
        return self.h, self.omega, self.mu


def gl_obstacle(lam: float, domain, h: float = 1 / 32, tol: float = 1e-10, omega_sor: float | None = None,
                polish: bool = True, backend=None) -> GLObstacle:
    """min ∫|∇h|² + h² over h >= 1 - 1/(2λ), h = 1 on ∂Ω, by screened projected SOR
    (optionally finished with exact active-set iterations)."""
    if not lam > 0:
        raise DomainError("λ must be positive")
    sysm = _system(domain, h)
    st = sysm.stencil
    level = 1.0 - 1.0 / (2.0 * lam)
    psi = np.where(sysm.inside, level, -np.inf)
    b = np.where(sysm.inside, sysm.boundary_rhs, 0.0)
    init = np.where(sysm.inside, np.maximum(h0_field(domain, h).values, level), 1.0)
    if omega_sor is None:
        n = max(sysm.inside.shape)
        omega_sor = 2.0 / (1.0 + math.sin(math.pi / n))
    hv, res, sweeps = psor(st, psi, b, init, omega=omega_sor, tol=tol, backend=backend)
    if polish:
        A = sysm.matrix()
        y, act, _ = _active_set_polish(A, b[sysm.inside], np.full(int(sysm.inside.sum()), level), hv[sysm.inside])
        hv = hv.copy()
        hv[sysm.inside] = y
        omega = np.zeros(sysm.inside.shape, bool)
        omega[sysm.inside] = act
    else:
        omega = sysm.inside & (hv <= level + 1e-12)
    mu = np.where(omega, level, 0.0)
    return GLObstacle(lam, level, GridField(sysm.grid, hv, boundary=sysm.inside), omega, mu, res, sweeps)


def _cell_system(ncx, ncy, h, screening=1.0):
    """-Δ + screening on cell centres of a rectangle; Dirichlet data enter through
    reflected ghost cells (ghost = 2g - inner)."""
    shape = (ncx, ncy)
    c = np.full(shape, 1.0 / h**2)
    cs, cn, cw, ce = c.copy(), c.copy(), c.copy(), c.copy()
    diag = np.full(shape, 4.0 / h**2 + screening)
    brhs = np.zeros(shape)
    for arr, sl in ((cs, (0, slice(None))), (cn, (-1, slice(None))), (cw, (slice(None), 0)), (ce, (slice(None), -1))):
        arr[sl] = 0.0
        diag[sl] += 1.0 / h**2
        brhs[sl] += 2.0 / h**2
    return Stencil(diag, cw, ce, cs, cn, np.ones(shape, bool)), brhs


def _cell_matrix(st: Stencil):
    nx, ny = st.shape
    idx = np.arange(nx * ny).reshape(nx, ny)
    rows, cols, vals = [idx.ravel()], [idx.ravel()], [st.diag.ravel()]
    # (coefficient array, rows owning it, neighbour) for the four directions
    links = ((st.cs[1:, :], idx[1:, :], idx[:-1, :]), (st.cn[:-1, :], idx[:-1, :], idx[1:, :]),
             (st.cw[:, 1:], idx[:, 1:], idx[:, :-1]), (st.ce[:, :-1], idx[:, :-1], idx[:, 1:]))
    for coef, a, b in links:
        rows.append(a.ravel())
        cols.append(b.ravel())
        vals.append(-coef.ravel())
    return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(nx * ny, nx * ny))


def cell_obstacle(ncx, ncy, h, boundary_value, level, tol=1e-12, backend=None):
    """Screened obstacle problem on the cell centres of a rectangle:
    h >= level, h = boundary_value on ∂Ω.  Returns (h, μ = -Δh + h, coincidence)."""
    st, brhs = _cell_system(ncx, ncy, h)
    b = boundary_value * brhs
    psi = np.full(st.shape, float(level))
    A = _cell_matrix(st)
    lin = spsolve(A.tocsc(), b.ravel()).reshape(st.shape)
    init = np.maximum(lin, psi)
    n = max(ncx, ncy)
    hv, res, sweeps = psor(st, psi, b, init, omega=2.0 / (1.0 + math.sin(math.pi / n)), tol=max(tol, 1e-9),
                           backend=backend)
    y, act, lam = _active_set_polish(A, b.ravel(), psi.ravel(), hv.ravel())
    return y.reshape(st.shape), lam.reshape(st.shape), act.reshape(st.shape)


# --------------------------------------------------------------------------
# splitting


@dataclass
class GLSplitting:
    lhs: float
    rhs: float
    G0: float
    G1: float
    remainder: float  # -½∫(1-|u|²)|∇h_{0,ε}|²
    level: float
    coincidence_fraction: float

    @property
    def residual(self) -> float:
        return self.lhs - self.rhs

    @property
    def relative(self) -> float:
        return abs(self.residual) / max(1.0, abs(self.lhs))


@dataclass
class ScreenedObstacleState:
    """h_{0,ε} on cell centres with its edge gradient ∇^⊥h and μ_{0,ε} = h - Δ_h h."""

    H: np.ndarray
    mu0: np.ndarray
    coincidence: np.ndarray
    level: float
    log_factor: float  # log(1/(ε√h_ex))
    phi1: np.ndarray  # -∂y h on horizontal edges
    phi2: np.ndarray  # ∂x h on vertical edges


def h0_eps(state: GLState, backend=None) -> ScreenedObstacleState:
    """Solve the obstacle problem at level h_ex - ½ log(1/(ε√h_ex)), boundary value
    h_ex, on the cell centres of the state's grid."""
    hx, eps, h = state.h_ex, state.eps, state.h
    if not hx > 0:
        raise DomainError("the splitting needs h_ex > 0")
    L = math.log(1.0 / (eps * math.sqrt(hx)))
    level = hx - 0.5 * L
    nx, ny = state.shape
    H, mu0, act = cell_obstacle(nx - 1, ny - 1, h, hx, level, backend=backend)
    P = np.pad(H, 1)  # reflected ghosts carry the Dirichlet value
    P[0, 1:-1], P[-1, 1:-1] = 2 * hx - H[0, :], 2 * hx - H[-1, :]
    P[1:-1, 0], P[1:-1, -1] = 2 * hx - H[:, 0], 2 * hx - H[:, -1]
    # horizontal edge (i, j) separates cells (i, j-1) and (i, j); vertical edge (i, j) cells (i-1, j), (i, j)
    phi1 = -(P[1:-1, 1:] - P[1:-1, :-1]) / h
    phi2 = (P[1:, 1:-1] - P[:-1, 1:-1]) / h
    return ScreenedObstacleState(H, mu0, act, level, L, phi1, phi2)


def gl_splitting_check(state: GLState, lam: float | None = None, obstacle: ScreenedObstacleState | None = None,
                       backend=None) -> GLSplitting:
    """Evaluate both sides of G_ε(u,A) = G⁰ + G¹(u, A - ∇^⊥h_{0,ε}) - ½∫(1-|u|²)|∇h_{0,ε}|².

    h_{0,ε} comes from :func:`h0_eps`; its dual difference ∇^⊥h on edges has
    discrete curl equal to the 5-point Laplacian, so μ_{0,ε} := h - Δ_h h
    matches the magnetic term exactly.  The vorticity inside G¹ is
    μ(u, A_1), which is what makes the identity exact.  If ``lam`` is given,
    h_ex is set to λ|log ε| first.
    """
    if lam is not None:
        state = state.with_fields(h_ex=float(lam) * abs(math.log(state.eps)))
    ob = h0_eps(state, backend) if obstacle is None else obstacle
    hx, h = state.h_ex, state.h
    H, mu0, phi1, phi2 = ob.H, ob.mu0, ob.phi1, ob.phi2
    A1, A2 = state.A1 - phi1, state.A2 - phi2
    w1, w2 = _edge_weights(state.shape)
    area = h * h
    grad2 = float(np.sum(w1 * phi1**2) + np.sum(w2 * phi2**2)) * area
    G0 = 0.5 * ob.log_factor * float(mu0.sum()) * area + 0.5 * grad2 + 0.5 * float(np.sum((H - hx) ** 2)) * area
    d1, d2 = covariant_differences(state.u, A1, A2, h)
    kin = float(np.sum(w1 * np.abs(d1) ** 2) + np.sum(w2 * np.abs(d2) ** 2)) * area
    mag = float(np.sum((curl_edges(A1, A2, h) - mu0) ** 2)) * area
    s1 = state.with_fields(A1=A1, A2=A2)
    pot = 2.0 * gl_energy(s1, h_ex=0.0, parts=True)[1]["potential"]
    G1 = 0.5 * (kin + mag + pot) + float(np.sum((H - hx) * vorticity(s1).values)) * area
    m2 = np.abs(state.u) ** 2
    m1e, m2e = 0.5 * (m2[1:, :] + m2[:-1, :]), 0.5 * (m2[:, 1:] + m2[:, :-1])
    rem = -0.5 * float(np.sum(w1 * (1 - m1e) * phi1**2) + np.sum(w2 * (1 - m2e) * phi2**2)) * area
    lhs = gl_energy(state)
    return GLSplitting(lhs, G0 + G1 + rem, G0, G1, rem, ob.level, float(ob.coincidence.mean()))
