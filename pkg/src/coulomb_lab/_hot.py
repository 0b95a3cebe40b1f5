"""Hot loops, each in a numba and a numpy flavour.

Public wrappers dispatch on the backend flag (see ``_backend``).  The two
flavours consume identical inputs (including pre-drawn random numbers), so
their results agree up to floating-point summation order.
"""

from __future__ import annotations

import math

import numpy as np

from ._backend import njit, use_numba

# --------------------------------------------------------------------------
# Ordered-pair Coulomb sums: row sums r_i = sum_{j != i} g(|x_i - x_j|)


@njit(cache=True)
def _pair_rows_numba(x, kind, power):
    n, d = x.shape
    rows = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for j in range(n):
            if j == i:
                continue
            r2 = 0.0
            for k in range(d):
                t = x[i, k] - x[j, k]
                r2 += t * t
            if r2 == 0.0:
                return rows, i, j
            if kind == 0:
                acc += -0.5 * math.log(r2)
            else:
                acc += r2 ** (0.5 * power)
        rows[i] = acc
    return rows, -1, -1


def _pair_rows_numpy(x, kind, power):
    n = x.shape[0]
    rows = np.zeros(n)
    block = max(1, 4_000_000 // max(n, 1))
    for s in range(0, n, block):
        diff = x[s:s + block, None, :] - x[None, :, :]
        r2 = np.einsum("ijk,ijk->ij", diff, diff)
        idx = np.arange(s, min(s + block, n))
        r2[idx - s, idx] = 1.0
        zero = np.argwhere(r2 == 0.0)
        if zero.size:
            i, j = zero[0]
            return rows, int(i + s), int(j)
        if kind == 0:
            vals = -0.5 * np.log(r2)
        else:
            vals = r2 ** (0.5 * power)
        vals[idx - s, idx] = 0.0
        rows[s:s + block] = vals.sum(axis=1)
    return rows, -1, -1


def pair_rows(x, d_kernel, backend=None):
    """Row sums of g over ordered pairs and the first coincident pair (or (-1,-1)).

    ``d_kernel`` is the kernel dimension: log kernel for 1, 2, power 2-d otherwise.
    """
    x = np.ascontiguousarray(x, dtype=float)
    kind = 0 if d_kernel <= 2 else 1
    power = 0.0 if kind == 0 else float(2 - d_kernel)
    if use_numba(backend):
        rows, i, j = _pair_rows_numba(x, kind, power)
        return rows, int(i), int(j)
    return _pair_rows_numpy(x, kind, power)


# --------------------------------------------------------------------------
# Single-site Metropolis for exp(-(beta/2) H_n), H_n = sum_{i!=j} g + n sum V.
# V(x) = sum_k quad[k] x_k^2 + sum_m radial[m] |x|^m  (polynomial family).


@njit(cache=True)
def _vpoly(x, quad, radial):
    r2 = 0.0
    v = 0.0
    for k in range(x.shape[0]):
        v += quad[k] * x[k] * x[k]
        r2 += x[k] * x[k]
    if radial.shape[0] > 0:
        r = math.sqrt(r2)
        p = 1.0
        for m in range(radial.shape[0]):
            v += radial[m] * p
            p *= r
    return v


@njit(cache=True, nogil=True)
def _metropolis_numba(x, beta, lam, quad, radial, kind, power, sigma, normals, uniforms):
    # normals: (sweeps, n, d), uniforms: (sweeps, n)
    n, d = x.shape
    sweeps = normals.shape[0]
    accepted = 0
    rejected_coincident = 0
    prop = np.empty(d)
    for s in range(sweeps):
        for i in range(n):
            for k in range(d):
                prop[k] = x[i, k] + sigma * normals[s, i, k]
            dpair = 0.0
            ratio = 1.0  # product of squared-distance ratios: one log per move
            coincident = False
            for j in range(n):
                if j == i:
                    continue
                r2n = 0.0
                r2o = 0.0
                for k in range(d):
                    a = prop[k] - x[j, k]
                    b = x[i, k] - x[j, k]
                    r2n += a * a
                    r2o += b * b
                if r2n == 0.0:
                    coincident = True
                    break
                if kind == 0:
                    ratio *= r2n / r2o
                    if ratio > 1e100 or ratio < 1e-100:
                        dpair += -0.5 * math.log(ratio)
                        ratio = 1.0
                else:
                    dpair += r2n ** (0.5 * power) - r2o ** (0.5 * power)
            if coincident:
                rejected_coincident += 1
                continue
            if kind == 0:
                dpair += -0.5 * math.log(ratio)
            dh = 2.0 * lam * dpair + n * (_vpoly(prop, quad, radial) - _vpoly(x[i], quad, radial))
            if dh <= 0.0 or uniforms[s, i] < math.exp(-0.5 * beta * dh):
                for k in range(d):
                    x[i, k] = prop[k]
                accepted += 1
    return accepted, rejected_coincident


def _vpoly_numpy(x, quad, radial):
    v = np.sum(quad * x * x, axis=-1)
    if radial.shape[0]:
        r = np.sqrt(np.sum(x * x, axis=-1))
        v = v + np.polynomial.polynomial.polyval(r, radial)
    return v


def _metropolis_numpy(x, beta, lam, quad, radial, kind, power, sigma, normals, uniforms):
    n, d = x.shape
    accepted = 0
    rejected_coincident = 0
    mask = np.ones(n, dtype=bool)
    for s in range(normals.shape[0]):
        for i in range(n):
            prop = x[i] + sigma * normals[s, i]
            mask[i] = False
            others = x[mask]
            mask[i] = True
            r2n = np.sum((prop - others) ** 2, axis=1)
            if np.any(r2n == 0.0):
                rejected_coincident += 1
                continue
            r2o = np.sum((x[i] - others) ** 2, axis=1)
            if kind == 0:
                dpair = np.sum(-0.5 * (np.log(r2n) - np.log(r2o)))
            else:
                dpair = np.sum(r2n ** (0.5 * power) - r2o ** (0.5 * power))
            dh = 2.0 * lam * dpair + n * (_vpoly_numpy(prop, quad, radial) - _vpoly_numpy(x[i], quad, radial))
            if dh <= 0.0 or uniforms[s, i] < math.exp(-0.5 * beta * dh):
                x[i] = prop
                accepted += 1
    return accepted, rejected_coincident


def metropolis_block(x, beta, lam, quad, radial, d_kernel, sigma, normals, uniforms, backend=None):
    """Run ``normals.shape[0]`` sweeps in place on ``x``; return (accepted, coincident rejections).

    ``lam`` scales the pair interaction (1 for the physical gas; other values
    are used by thermodynamic integration).
    """
    kind = 0 if d_kernel <= 2 else 1
    power = 0.0 if kind == 0 else float(2 - d_kernel)
    args = (x, float(beta), float(lam), np.ascontiguousarray(quad, dtype=float),
            np.ascontiguousarray(radial, dtype=float), kind, power, float(sigma),
            np.ascontiguousarray(normals), np.ascontiguousarray(uniforms))
    if use_numba(backend):
        a, c = _metropolis_numba(*args)
    else:
        a, c = _metropolis_numpy(*args)
    return int(a), int(c)


# --------------------------------------------------------------------------
# Projected SOR for  A h = b,  h >= psi  with a 5-point (2D) stencil.
# Coefficients are given per node: diag, west, east, south, north (couplings
# enter as  diag*h_i - sum c_nb h_nb = b_i).  ``free`` marks unknown nodes;
# other nodes hold fixed (Dirichlet) values.


@njit(cache=True)
def _psor_numba(h, psi, b, diag, cw, ce, cs, cn, free, omega, sweeps):
    ny, nx = h.shape
    delta = 0.0
    for _ in range(sweeps):
        delta = 0.0
        for j in range(ny):
            for i in range(nx):
                if not free[j, i]:
                    continue
                acc = b[j, i]
                if i > 0:
                    acc += cw[j, i] * h[j, i - 1]
                if i < nx - 1:
                    acc += ce[j, i] * h[j, i + 1]
                if j > 0:
                    acc += cs[j, i] * h[j - 1, i]
                if j < ny - 1:
                    acc += cn[j, i] * h[j + 1, i]
                gs = acc / diag[j, i]
                new = h[j, i] + omega * (gs - h[j, i])
                if new < psi[j, i]:
                    new = psi[j, i]
                dd = abs(new - h[j, i])
                if dd > delta:
                    delta = dd
                h[j, i] = new
    return delta


def _neighbour_sum(h, cw, ce, cs, cn):
    acc = np.zeros_like(h)
    acc[:, 1:] += cw[:, 1:] * h[:, :-1]
    acc[:, :-1] += ce[:, :-1] * h[:, 1:]
    acc[1:, :] += cs[1:, :] * h[:-1, :]
    acc[:-1, :] += cn[:-1, :] * h[1:, :]
    return acc


def _psor_numpy(h, psi, b, diag, cw, ce, cs, cn, free, omega, sweeps):
    ny, nx = h.shape
    jj, ii = np.indices((ny, nx))
    colours = [free & ((ii + jj) % 2 == 0), free & ((ii + jj) % 2 == 1)]
    delta = 0.0
    for _ in range(sweeps):
        delta = 0.0
        for m in colours:
            acc = b + _neighbour_sum(h, cw, ce, cs, cn)
            new = h + omega * (acc / diag - h)
            new = np.maximum(new, psi)
            upd = np.where(m, new, h)
            dd = np.max(np.abs(upd - h)) if m.any() else 0.0
            delta = max(delta, dd)
            h[...] = upd
    return delta


def psor_sweeps(h, psi, b, diag, cw, ce, cs, cn, free, omega, sweeps, backend=None):
    """Perform ``sweeps`` projected SOR sweeps in place; return the last max update."""
    if use_numba(backend):
        return float(_psor_numba(h, psi, b, diag, cw, ce, cs, cn, free, float(omega), int(sweeps)))
    return float(_psor_numpy(h, psi, b, diag, cw, ce, cs, cn, free, float(omega), int(sweeps)))


def stencil_apply(h, b, diag, cw, ce, cs, cn):
    """Scaled residual (A h - b)/diag of the stencil system at every node."""
    return (diag * h - _neighbour_sum(h, cw, ce, cs, cn) - b) / diag


# --------------------------------------------------------------------------
# Bounded-Lipschitz dictionary integrals  Σ_k w_k f_m(x_k)  for every m.
# kind 0: clip(|x - c| - t, -B, B)/(1+B);  kind 1: clip(c·x - t, -B, B)/(1+B).


@njit(cache=True, nogil=True, fastmath=True)
def _dict_integrate_numba(kind, centers, offsets, clips, x, w):
    m, d = centers.shape
    n = x.shape[0]
    out = np.zeros(m)
    for f in range(m):
        B = clips[f]
        t = offsets[f]
        acc = 0.0
        if kind[f] == 0 and d == 2:
            cx = centers[f, 0]
            cy = centers[f, 1]
            for k in range(n):
                zx = x[k, 0] - cx
                zy = x[k, 1] - cy
                s = np.sqrt(zx * zx + zy * zy) - t
                acc += w[k] * min(max(s, -B), B)
        elif kind[f] == 0:
            for k in range(n):
                s = 0.0
                for a in range(d):
                    z = x[k, a] - centers[f, a]
                    s += z * z
                s = np.sqrt(s) - t
                acc += w[k] * min(max(s, -B), B)
        else:
            for k in range(n):
                s = -t
                for a in range(d):
                    s += centers[f, a] * x[k, a]
                acc += w[k] * min(max(s, -B), B)
        out[f] = acc / (1.0 + B)
    return out


def _dict_integrate_numpy(kind, centers, offsets, clips, x, w):
    out = np.zeros(len(kind))
    step = max(1, 2_000_000 // max(1, len(kind)))
    rad = kind == 0
    B = clips[:, None]
    for s in range(0, x.shape[0], step):
        xs = x[s:s + step]
        val = np.empty((len(kind), xs.shape[0]))
        if rad.any():
            diff = xs[None, :, :] - centers[rad][:, None, :]
            val[rad] = np.sqrt(np.einsum("fkd,fkd->fk", diff, diff)) - offsets[rad][:, None]
        if (~rad).any():
            val[~rad] = centers[~rad] @ xs.T - offsets[~rad][:, None]
        out += np.clip(val, -B, B) @ w[s:s + step]
    return out / (1.0 + clips)


def dictionary_integrate(kind, centers, offsets, clips, x, w, backend=None):
    args = (np.ascontiguousarray(kind, dtype=np.int64), np.ascontiguousarray(centers, dtype=float),
            np.ascontiguousarray(offsets, dtype=float), np.ascontiguousarray(clips, dtype=float),
            np.ascontiguousarray(x, dtype=float), np.ascontiguousarray(w, dtype=float))
    if use_numba(backend):
        return _dict_integrate_numba(*args)
    return _dict_integrate_numpy(*args)
