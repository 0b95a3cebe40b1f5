"""Vortex-ball growth and merging, with the lower bound it carries, and a
dual-Lipschitz check of the vorticity against point vortices.

Growth is uniform: every radius is multiplied by the same factor, so the
conformal factor s is the ratio of the current to the initial total radius.
Tangency times are solved in closed form (|a_i - a_j| = t (r_i + r_j)), and
tangent balls are replaced by B(Σ a_k r_k / Σ r_k, Σ r_k), repeatedly, lowest
index pair first.  During a growth segment by factor t each ball adds
π |d_B| log t to its lower bound; merged balls add their bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DegreeError, DomainError
from .gl_field import GLState, degree_on_circle, energy_density, gl_energy, vorticity
from .lipschitz import lipschitz_dictionary

__all__ = [
    "BallSet",
    "MergeEvent",
    "ball_construction",
    "grow_to_total_radius",
    "initial_balls",
    "BallBound",
    "ball_lower_bound_vs_energy",
    "JacobianCheck",
    "jacobian_estimate_check",
]


@dataclass
class MergeEvent:
    s: float
    members: tuple  # indices into the ball list just before the merge
    center: tuple
    radius: float
    degree: int


@dataclass
class BallSet:
    centers: np.ndarray  # (k, 2)
    radii: np.ndarray
    degrees: np.ndarray  # int
    s: float = 1.0
    initial_total_radius: float = float("nan")
    bounds: np.ndarray = None  # per-ball accumulated lower bound
    escaped: np.ndarray = None
    merges: list = field(default_factory=list)

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float).reshape(-1, 2)
        self.radii = np.asarray(self.radii, dtype=float).reshape(-1)
        self.degrees = np.asarray(self.degrees, dtype=int).reshape(-1)
        k = len(self.radii)
        if self.centers.shape[0] != k or self.degrees.size != k:
            raise DomainError("centers, radii and degrees must have equal length")
        if np.any(self.radii <= 0):
            raise DomainError("radii must be positive")
        if self.bounds is None:
            self.bounds = np.zeros(k)
        if self.escaped is None:
            self.escaped = np.zeros(k, dtype=bool)
        if not np.isfinite(self.initial_total_radius):
            self.initial_total_radius = float(self.radii.sum())

    def __len__(self):
        return len(self.radii)

    @property
    def total_radius(self) -> float:
        return float(self.radii.sum())

    @property
    def lower_bound(self) -> float:
        return float(self.bounds.sum())

    @property
    def D(self) -> int:
        return int(np.abs(self.degrees).sum())

    def disjoint(self, rtol: float = 1e-12) -> bool:
        for i in range(len(self)):
            for j in range(i + 1, len(self)):
                if np.linalg.norm(self.centers[i] - self.centers[j]) < (self.radii[i] + self.radii[j]) * (1 - rtol):
                    return False
        return True

    def rows(self):
        return [(float(c[0]), float(c[1]), float(r), int(d)) for c, r, d in zip(self.centers, self.radii, self.degrees)]

    def copy(self) -> "BallSet":
        return BallSet(self.centers.copy(), self.radii.copy(), self.degrees.copy(), self.s,
                       self.initial_total_radius, self.bounds.copy(), self.escaped.copy(), list(self.merges))


def _inside(center, r, domain, margin) -> bool:
    if domain is None:
        return True
    x0, x1, y0, y1 = domain
    return (center[0] - r > x0 + margin and center[0] + r < x1 - margin
            and center[1] - r > y0 + margin and center[1] + r < y1 - margin)


def _merge_tangent(bs: BallSet, domain, margin, rtol=1e-12):
    """Merge overlapping/tangent balls until the collection is disjoint."""
    while True:
        k = len(bs)
        hit = None
        for i in range(k):
            for j in range(i + 1, k):
                if np.linalg.norm(bs.centers[i] - bs.centers[j]) <= (bs.radii[i] + bs.radii[j]) * (1 + rtol):
                    hit = (i, j)
                    break
            if hit:
                break
        if hit is None:
            return
        i, j = hit
        r = bs.radii[i] + bs.radii[j]
        c = (bs.centers[i] * bs.radii[i] + bs.centers[j] * bs.radii[j]) / r
        esc = bool(bs.escaped[i] or bs.escaped[j] or not _inside(c, r, domain, margin))
        d = 0 if esc else int(bs.degrees[i] + bs.degrees[j])
        bs.merges.append(MergeEvent(bs.s, (i, j), (float(c[0]), float(c[1])), float(r), d))
        keep = [m for m in range(k) if m not in (i, j)]
        bs.centers = np.vstack([bs.centers[keep], c[None]])
        bs.radii = np.concatenate([bs.radii[keep], [r]])
        bs.degrees = np.concatenate([bs.degrees[keep], [d]]).astype(int)
        bs.bounds = np.concatenate([bs.bounds[keep], [bs.bounds[i] + bs.bounds[j]]])
        bs.escaped = np.concatenate([bs.escaped[keep], [esc]])


def _flag_escapes(bs: BallSet, domain, margin):
    for k in range(len(bs)):
        # the slack catches balls stopped exactly at contact by _escape_factor
        if not bs.escaped[k] and not _inside(bs.centers[k], bs.radii[k] * (1 + 1e-12), domain, margin):
            bs.escaped[k] = True
            bs.degrees[k] = 0


def _escape_factor(bs: BallSet, domain, margin) -> float:
    """Growth factor at which the first live ball touches the shrunk rectangle."""
    if domain is None:
        return math.inf
    x0, x1, y0, y1 = domain
    live = ~bs.escaped
    if not live.any():
        return math.inf
    c, r = bs.centers[live], bs.radii[live]
    gap = np.min(np.column_stack([c[:, 0] - x0, x1 - c[:, 0], c[:, 1] - y0, y1 - c[:, 1]]), axis=1) - margin
    return float(np.min(gap / r))


def ball_construction(initial: BallSet, s_target: float, domain=None, margin: float = 0.0) -> BallSet:
    """Grow ``initial`` by the conformal factor ``s_target`` with merging.

    ``domain`` = (x0, x1, y0, y1): a ball is flagged as escaped the moment it
    touches the rectangle shrunk by ``margin``; its degree is 0 from then on,
    so it stops adding to the bound.
    Pass ``domain=None`` to grow in the whole plane.
    """
    if not s_target >= 1.0:
        raise DomainError("s_target must be >= 1")
    bs = initial.copy()
    _merge_tangent(bs, domain, margin)
    _flag_escapes(bs, domain, margin)
    while True:
        k = len(bs)
        t_goal = s_target / bs.s
        t_star = math.inf
        for i in range(k):
            for j in range(i + 1, k):
                t_star = min(t_star, np.linalg.norm(bs.centers[i] - bs.centers[j]) / (bs.radii[i] + bs.radii[j]))
        t_star = min(t_star, _escape_factor(bs, domain, margin))
        t = min(t_goal, t_star)
        if t > 1.0:
            bs.bounds = bs.bounds + math.pi * np.abs(bs.degrees) * math.log(t)
            bs.radii = bs.radii * t
        bs.s = bs.s * t if t < t_goal else float(s_target)
        if t >= t_goal:
            if len(bs):
                bs.radii = bs.radii * (bs.s * bs.initial_total_radius / bs.radii.sum())
            _flag_escapes(bs, domain, margin)
            return bs
        _merge_tangent(bs, domain, margin)
        _flag_escapes(bs, domain, margin)


def grow_to_total_radius(initial: BallSet, r_total: float, domain=None, margin: float = 0.0) -> BallSet:
    s = r_total / initial.total_radius
    if s < 1:
        raise DomainError(f"target total radius {r_total:g} is below the initial {initial.total_radius:g}")
    return ball_construction(initial, s, domain, margin)


def initial_balls(state: GLState, threshold: float | None = None) -> BallSet:
    """Cover the bad set {||u| - 1| >= ε^{1/4}} by disks.

    Each 8-connected component is covered by the disk circumscribing its
    bounding box, inflated by one cell; overlapping disks are merged, then the
    degree of each disk is read off its boundary circle.
    """
    thr = state.eps ** 0.25 if threshold is None else threshold
    bad = np.abs(np.abs(state.u) - 1.0) >= thr
    if not bad.any():
        return BallSet(np.empty((0, 2)), np.empty(0), np.empty(0, int), initial_total_radius=0.0)
    lab, count = ndimage.label(bad, structure=np.ones((3, 3)))
    centers, radii = [], []
    for sl in ndimage.find_objects(lab):
        xa, xb = state.x[sl[0].start], state.x[sl[0].stop - 1]
        ya, yb = state.y[sl[1].start], state.y[sl[1].stop - 1]
        centers.append((0.5 * (xa + xb), 0.5 * (ya + yb)))
        radii.append(0.5 * math.hypot(xb - xa, yb - ya) + state.h)
    bs = BallSet(np.array(centers), np.array(radii), np.zeros(count, int))
    _merge_tangent(bs, None, 0.0)
    bs.merges = []
    bs.initial_total_radius = bs.total_radius
    deg = []
    for c, r in zip(bs.centers, bs.radii):
        d = None
        for grow in (1.0, 1.02, 1.05, 1.1):
            try:
                d = degree_on_circle(state, c, r * grow)
                break
            except (DegreeError, DomainError):
                continue
        deg.append(0 if d is None else d)
    bs.degrees = np.array(deg, dtype=int)
    return bs


def _cells_in_balls(state: GLState, bs: BallSet):
    X, Y = state.cell_centers()
    mask = np.zeros(X.shape, bool)
    for c, r in zip(bs.centers, bs.radii):
        mask |= (X - c[0]) ** 2 + (Y - c[1]) ** 2 <= r * r
    return mask


@dataclass
class BallBound:
    bound: float  # accumulated growth bound π Σ|d| log(factors)
    energy: float  # ½∫_{∪B} |∇_A u|² + |curl A|² + (1-|u|²)²/(2ε²) on the grid
    D: int
    r_total: float
    eps: float
    C_required: float  # C making π D (log(r/(Dε)) - C) equal to the energy

    def as_tuple(self):
        return self.bound, self.energy

    def theorem_bound(self, C: float) -> float:
        if self.D == 0:
            return 0.0
        return math.pi * self.D * (math.log(self.r_total / (self.D * self.eps)) - C)


def ball_lower_bound_vs_energy(state: GLState, ballset: BallSet) -> BallBound:
    """Compare the accumulated bound of ``ballset`` with the grid energy (h_ex = 0)
    carried by the cells whose centres lie in the union of the balls."""
    if len(ballset) == 0:
        return BallBound(0.0, 0.0, 0, 0.0, state.eps, float("nan"))
    dens = energy_density(state, h_ex=0.0)
    e = dens.integral(_cells_in_balls(state, ballset))
    D = ballset.D
    r = ballset.total_radius
    C = math.log(r / (D * state.eps)) - e / (math.pi * D) if D > 0 else float("nan")
    return BallBound(ballset.lower_bound, e, D, r, state.eps, C)


@dataclass
class JacobianCheck:
    numerator: float  # max over the dictionary of |∫f dμ - 2π Σ d_i f(a_i)|
    scale: float  # max(ε, Σ r_i) (1 + F_ε)
    F_eps: float

    @property
    def ratio(self) -> float:
        return self.numerator / self.scale


def jacobian_estimate_check(state: GLState, ballset: BallSet, r_total: float | None = None,
                            test_functions=None, drop_mass: float = 1e-6) -> JacobianCheck:
    """Dual-Lipschitz size of μ(u, A) - 2π Σ d_i δ_{a_i}, relative to
    max(ε, Σ r_i)(1 + F_ε).

    Test functions: the fixed dictionary (recentred on Ω, scaled to its
    half-width) plus a cone min(|x - a_i|, 1)/2 at every ball centre, where
    the first-order mismatch of a smeared vortex is seen; ``test_functions``
    may add callables f(X, Y).

    Cells carrying the smallest |μ| are skipped as long as their total mass
    stays below ``drop_mass``; since every test function is bounded by 1 this
    moves the numerator by at most ``drop_mass``.
    """
    mu = vorticity(state)
    X, Y = mu.centers()
    x0, x1, y0, y1 = state.bounds
    mid = np.array([0.5 * (x0 + x1), 0.5 * (y0 + y1)])
    half = 0.5 * max(x1 - x0, y1 - y0)
    dic = lipschitz_dictionary(2, scale=half)
    if len(ballset):
        dic = dic.with_cones(ballset.centers - mid, 1.0)
    w = mu.values.ravel() * state.h**2
    order = np.argsort(np.abs(w))
    keep = order[np.searchsorted(np.cumsum(np.abs(w[order])), drop_mass, side="right"):]
    pts = np.column_stack([X.ravel()[keep], Y.ravel()[keep]]) - mid
    lhs = dic.integrate(pts, w[keep])
    if len(ballset):
        rhs = dic.integrate(ballset.centers - mid, 2 * math.pi * ballset.degrees)
    else:
        rhs = np.zeros(len(dic))
    num = float(np.max(np.abs(lhs - rhs)))
    for f in test_functions or ():
        val = float(np.sum(f(X, Y) * mu.values) * state.h**2)
        if len(ballset):
            val -= 2 * math.pi * float(np.sum(ballset.degrees * f(ballset.centers[:, 0], ballset.centers[:, 1])))
        num = max(num, abs(val))
    r = ballset.total_radius if r_total is None else r_total
    F = gl_energy(state, h_ex=0.0)
    return JacobianCheck(num, max(state.eps, r) * (1.0 + F), F)
