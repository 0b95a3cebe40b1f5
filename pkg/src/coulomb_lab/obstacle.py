"""Projected SOR driver for 5-point obstacle problems.

The discrete system at a free node i reads

    diag_i h_i - Σ_nb c_nb h_nb = b_i,   subject to h_i >= psi_i,

and the complementarity residual reported is
max_i |min(h_i - psi_i, (A h - b)_i / diag_i)|, i.e. measured in units of h.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._hot import psor_sweeps, stencil_apply
from .errors import SolverError


@dataclass
class Stencil:
    diag: np.ndarray
    cw: np.ndarray
    ce: np.ndarray
    cs: np.ndarray
    cn: np.ndarray
    free: np.ndarray  # bool mask of unknowns

    @property
    def shape(self):
        return self.diag.shape


def uniform_stencil(shape, h: float, screening: float = 0.0) -> Stencil:
    """-Δ_h (+ screening) on a node grid, outer ring fixed (Dirichlet).

    Axis 0 is "y" (rows), axis 1 is "x" (columns).
    """
    ny, nx = shape
    c = np.full(shape, 1.0 / h**2)
    diag = np.full(shape, 4.0 / h**2 + screening)
    free = np.zeros(shape, dtype=bool)
    free[1:-1, 1:-1] = True
    return Stencil(diag, c.copy(), c.copy(), c.copy(), c.copy(), free)


def complementarity_residual(h, psi, b, st: Stencil) -> float:
    res = stencil_apply(h, b, st.diag, st.cw, st.ce, st.cs, st.cn)
    with np.errstate(invalid="ignore"):
        comp = np.minimum(h - psi, res)
    comp = np.where(st.free, comp, 0.0)
    return float(np.max(np.abs(comp)))


def psor(st: Stencil, psi, b, h_init, omega: float = 1.8, tol: float = 1e-8,
         max_sweeps: int = 500_000, check_every: int = 25, backend=None):
    """Run projected SOR to the complementarity tolerance.

    Returns (h, residual, sweeps).  Raises SolverError on divergence (the
    max update grew for 100 consecutive sweeps) or when ``max_sweeps`` is hit.
    """
    h = np.array(h_init, dtype=float, copy=True)
    psi = np.broadcast_to(np.asarray(psi, dtype=float), h.shape).copy()
    b = np.broadcast_to(np.asarray(b, dtype=float), h.shape).copy()
    h = np.where(st.free, np.maximum(h, psi), h)
    prev = np.inf
    rising = 0
    res = complementarity_residual(h, psi, b, st)
    sweeps = 0
    while res > tol:
        if sweeps >= max_sweeps:
            raise SolverError(f"PSOR did not reach {tol:g} in {max_sweeps} sweeps", last_residual=res)
        for _ in range(check_every):
            delta = psor_sweeps(h, psi, b, st.diag, st.cw, st.ce, st.cs, st.cn, st.free, omega, 1, backend)
            sweeps += 1
            rising = rising + 1 if delta > prev else 0
            prev = delta
            if rising >= 100 or not np.isfinite(delta):
                raise SolverError("PSOR diverging: update grew for 100 consecutive sweeps",
                                  last_residual=complementarity_residual(h, psi, b, st))
        res = complementarity_residual(h, psi, b, st)
    return h, res, sweeps
