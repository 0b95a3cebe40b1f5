"""Metropolis sampling of the Gibbs measure exp(-(β/2) H_n) / Z_{n,β}.

Single-site moves with Gaussian proposals.  All random numbers come from a
counter-based Philox stream keyed by (seed, chain), drawn one block of
sweeps at a time and handed to the compiled kernel, so a chain is
bit-reproducible regardless of how chains are scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._backend import thread_cap
from ._hot import metropolis_block, pair_rows
from .equilibrium import EquilibriumSolution
from .errors import CapabilityError, DomainError
from .lipschitz import lipschitz_dictionary
from .potentials import PotentialSpec

__all__ = [
    "GibbsSpec",
    "ChainStats",
    "Chain",
    "sample_gibbs",
    "sample_chains",
    "empirical_distance",
    "radial_cdf_distance",
    "integrated_autocorrelation",
    "log_partition_tiny",
    "ginibre_eigenvalues",
]


@dataclass(frozen=True)
class GibbsSpec:
    n: int
    beta: float
    potential: PotentialSpec
    sigma: float = 0.1
    sweeps: int = 10_000
    burn_in: int = 1_000
    seed: int = 0
    thin: int = 100
    init_radius: float = 1.0
    tune: bool = True
    target_acceptance: float = 0.3

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("n must be >= 1")
        if not self.beta > 0:
            raise DomainError("β must be positive")
        if not self.sigma > 0:
            raise DomainError("proposal step σ must be positive")
        if self.sweeps < 1 or self.burn_in < 0 or self.thin < 1:
            raise DomainError("sweeps >= 1, burn_in >= 0 and thin >= 1 required")
        if not self.potential.polynomial:
            raise CapabilityError("the sampler needs a polynomial-family potential")


@dataclass
class ChainStats:
    acceptance_rate: float
    coincident_rejections: int
    sigma: float
    mean_energy: float
    energy_stderr: float
    autocorrelation_time: float
    radial_cdf: np.ndarray  # sorted radii of all snapshot points
    bl_distance: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "acceptance_rate": self.acceptance_rate,
            "coincident_rejections": self.coincident_rejections,
            "sigma": self.sigma,
            "mean_energy": self.mean_energy,
            "energy_stderr": self.energy_stderr,
            "autocorrelation_time": self.autocorrelation_time,
            "bl_distance": self.bl_distance,
        }


@dataclass
class Chain:
    spec: GibbsSpec
    chain_id: int
    snapshots: np.ndarray  # (k, n, d)
    energies: np.ndarray  # H_n at each snapshot
    stats: ChainStats
    info: dict = field(default_factory=dict)


def _generator(seed: int, chain: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), int(chain)]))


def _energy(x: np.ndarray, pot: PotentialSpec) -> float:
    rows, i, _ = pair_rows(x, x.shape[1])
    if i >= 0:
        return math.inf
    return float(rows.sum()) + x.shape[0] * float(np.sum(pot(x)))


def integrated_autocorrelation(series, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's self-consistent window."""
    x = np.asarray(series, dtype=float)
    m = x.size
    if m < 4 or np.var(x) == 0:
        return 1.0
    x = x - x.mean()
    f = np.fft.rfft(x, n=2 * m)
    acf = np.fft.irfft(f * np.conj(f))[:m]
    acf /= acf[0]
    tau = 1.0
    for w in range(1, m):
        tau = 1.0 + 2.0 * np.sum(acf[1:w + 1])
        if w >= c * tau:
            break
    return float(max(tau, 1.0))


def sample_gibbs(spec: GibbsSpec, chain: int = 0, init=None, block: int = 200, backend=None,
                 equilibrium: EquilibriumSolution | None = None) -> Chain:
    """Run one chain: burn-in (σ tuned toward the target acceptance), then
    ``sweeps`` sweeps with σ frozen, snapshotting every ``thin`` sweeps."""
    pot = spec.potential
    n, d = spec.n, pot.d
    rng = _generator(spec.seed, chain)
    if init is None:
        z = rng.standard_normal((n, d))
        z *= spec.init_radius * rng.random((n, 1)) ** (1.0 / d) / np.linalg.norm(z, axis=1, keepdims=True)
        x = z
    else:
        x = np.array(init, dtype=float).reshape(n, d)
    quad, radial = pot.quad_array, pot.radial_array
    sigma = float(spec.sigma)

    done = 0
    while done < spec.burn_in:
        k = min(block, spec.burn_in - done)
        acc, _ = metropolis_block(x, spec.beta, 1.0, quad, radial, d, sigma,
                                  rng.standard_normal((k, n, d)), rng.random((k, n)), backend)
        if spec.tune:
            rate = acc / (k * n)
            sigma *= math.exp(min(1.0, max(-1.0, 2.0 * (rate - spec.target_acceptance))))
        done += k

    snaps, energies = [], []
    accepted = coincident = 0
    done = 0
    while done < spec.sweeps:
        k = min(spec.thin - done % spec.thin, spec.sweeps - done)
        a, c = metropolis_block(x, spec.beta, 1.0, quad, radial, d, sigma,
                                rng.standard_normal((k, n, d)), rng.random((k, n)), backend)
        accepted += a
        coincident += c
        done += k
        if done % spec.thin == 0:
            snaps.append(x.copy())
            energies.append(_energy(x, pot))
    snaps = np.array(snaps) if snaps else np.empty((0, n, d))
    energies = np.array(energies)
    tau = integrated_autocorrelation(energies)
    se = float(np.std(energies) * math.sqrt(tau / max(1, energies.size))) if energies.size else math.nan
    radii = np.sort(np.linalg.norm(snaps.reshape(-1, d), axis=1))
    stats = ChainStats(acceptance_rate=accepted / (spec.sweeps * n), coincident_rejections=coincident,
                       sigma=sigma, mean_energy=float(energies.mean()) if energies.size else math.nan,
                       energy_stderr=se, autocorrelation_time=tau, radial_cdf=radii)
    if equilibrium is not None and snaps.size:
        stats.bl_distance = empirical_distance(snaps.reshape(-1, d), equilibrium)
    return Chain(spec, chain, snaps, energies, stats)


def sample_chains(spec: GibbsSpec, chains: int = 4, backend=None, **kw) -> list:
    """Independent chains (keys (seed, 0..chains-1)), run on up to COULOMB_LAB_THREADS workers."""
    workers = max(1, min(chains, thread_cap()))
    if workers == 1:
        return [sample_gibbs(spec, c, backend=backend, **kw) for c in range(chains)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(sample_gibbs, spec, c, None, 200, backend, kw.get("equilibrium"))
                   for c in range(chains)]
        return [f.result() for f in futures]


# --------------------------------------------------------------------------
# statistics


def radial_cdf_distance(radii, cdf=None) -> float:
    """Kolmogorov distance between the empirical law of |x| and ``cdf`` (default r² ∧ 1)."""
    r = np.sort(np.asarray(radii, dtype=float))
    m = r.size
    F = (lambda t: np.minimum(t, 1.0) ** 2) if cdf is None else cdf
    ref = F(r)
    hi = np.arange(1, m + 1) / m
    lo = np.arange(0, m) / m
    return float(max(np.max(np.abs(hi - ref)), np.max(np.abs(ref - lo))))


_DICTS: dict = {}


def empirical_distance(config, equilibrium: EquilibriumSolution, weights=None) -> float:
    """Bounded-Lipschitz distance estimate between (1/n)Σδ_{x_i} (or a weighted
    point measure) and μ0, maximised over the fixed 200-function dictionary."""
    pts = getattr(config, "points", config)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    d = equilibrium.d
    if d == 1 and pts.shape[-1] != 1:
        pts = pts.reshape(-1, 1)
    w = np.full(pts.shape[0], 1.0 / pts.shape[0]) if weights is None else np.asarray(weights, float)
    dic = _DICTS.setdefault(d, lipschitz_dictionary(d))
    grid = equilibrium.grid
    mask = equilibrium.density > 0
    cells = grid.points()[mask]
    masses = (equilibrium.density * grid.cell_volume)[mask]
    diff = dic.integrate(pts, w) - dic.integrate(cells, masses / masses.sum())
    return float(np.max(np.abs(diff)))


def ginibre_eigenvalues(n: int, samples: int, seed: int = 0) -> np.ndarray:
    """Eigenvalues of n×n complex Gaussian matrices with E|G_ij|² = 1/n: exact
    samples of the d = 2, V = |x|², β = 2 Gibbs measure.  Shape (samples, n, 2)."""
    rng = _generator(seed, 10**6)
    out = np.empty((samples, n, 2))
    for s in range(samples):
        G = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2 * n)
        ev = np.linalg.eigvals(G)
        out[s, :, 0] = ev.real
        out[s, :, 1] = ev.imag
    return out


# --------------------------------------------------------------------------
# tiny partition functions (d = 1)


def _panels(a: float, b: float, order: int, graded_at: float | None, ratio: float = 0.15, levels: int = 14):
    """Gauss-Legendre nodes/weights on [a, b], geometrically graded toward ``graded_at``
    (an endpoint) to resolve |t - a|^β behaviour."""
    xg, wg = np.polynomial.legendre.leggauss(order)
    if graded_at is None:
        edges = np.linspace(a, b, 9)
    else:
        L = b - a
        fr = np.concatenate([[0.0], ratio ** np.arange(levels - 1, -1, -1)])
        edges = a + L * fr
    lo, hi = edges[:-1], edges[1:]
    nodes = (0.5 * (hi - lo)[:, None] * xg[None] + 0.5 * (hi + lo)[:, None]).ravel()
    weights = (0.5 * (hi - lo)[:, None] * wg[None]).ravel()
    return nodes, weights


def _cutoff(pot: PotentialSpec, n: int, beta: float) -> float:
    """Radius beyond which exp(-(β/2) n V) < 1e-40 on the line."""
    L = 1.0
    while 0.5 * beta * n * float(pot(np.array([L]))) - beta * n * math.log(1 + 2 * L) < 92.0:
        L *= 1.25
        if L > 1e6:
            raise DomainError("potential does not confine on the line")
    return L


def _log_z_quadrature(n: int, beta: float, pot: PotentialSpec, order: int = 24) -> float:
    L = _cutoff(pot, n, beta)
    w1 = lambda x: np.exp(-0.5 * beta * n * pot(x[..., None]))  # noqa: E731
    x1, wa = _panels(-L, L, order, None)
    if n == 1:
        return math.log(float(np.dot(wa, w1(x1))))
    # ordered sector x1 < x2 < ... (Z = n! times the sector integral); the next
    # coordinate is t = s + (L - s) u with u on reference panels graded toward 0
    u, wu = _panels(0.0, 1.0, order, 0.0)
    b = x1[:, None] + (L - x1)[:, None] * u[None]
    wb = (L - x1)[:, None] * wu[None]
    fb = wb * (b - x1[:, None]) ** beta * w1(b)
    if n == 2:
        return math.log(2.0 * float(np.dot(wa * w1(x1), fb.sum(axis=1))))
    if n == 3:
        total = 0.0
        for k in range(x1.size):
            c = b[k][:, None] + (L - b[k])[:, None] * u[None]
            wc = (L - b[k])[:, None] * wu[None]
            inner = np.sum(wc * (c - b[k][:, None]) ** beta * (c - x1[k]) ** beta * w1(c), axis=1)
            total += wa[k] * float(w1(x1[k])) * float(np.dot(fb[k], inner))
        return math.log(6.0 * total)
    raise CapabilityError("quadrature partition function supports n <= 3")


def _log_z_thermo(n: int, beta: float, pot: PotentialSpec, seed: int = 0, nodes: int = 8,
                  sweeps: int = 200_000, burn_in: int = 5_000) -> float:
    """log Z = log Z_0 - (β/2) ∫_0^1 <Σ_{i≠j} g>_λ dλ, Z_0 the decoupled (λ = 0) product."""
    L = _cutoff(pot, 1, beta * n)
    x, w = _panels(-L, L, 48, None)
    log_z0 = n * math.log(float(np.dot(w, np.exp(-0.5 * beta * n * pot(x[:, None])))))
    lam, lw = np.polynomial.legendre.leggauss(nodes)
    lam = 0.5 * (lam + 1.0)
    lw = 0.5 * lw
    means = []
    quad, radial = pot.quad_array, pot.radial_array
    for k, lv in enumerate(lam):
        rng = _generator(seed, 1000 + k)
        xs = rng.standard_normal((n, 1)) * 0.5
        sigma = 0.5
        for _ in range(10):
            a, _ = metropolis_block(xs, beta, lv, quad, radial, 1, sigma,
                                    rng.standard_normal((burn_in // 10, n, 1)), rng.random((burn_in // 10, n)))
            sigma *= math.exp(2.0 * (a / (burn_in // 10 * n) - 0.4))
        acc = 0.0
        count = 0
        blk = 1000
        for _ in range(sweeps // blk):
            for s in range(blk // 10):
                metropolis_block(xs, beta, lv, quad, radial, 1, sigma,
                                 rng.standard_normal((10, n, 1)), rng.random((10, n)))
                rows, _, _ = pair_rows(xs, 1)
                acc += float(rows.sum())
                count += 1
        means.append(acc / count)
    return log_z0 - 0.5 * beta * float(np.dot(lw, means))


def log_partition_tiny(n: int, beta: float, spec: PotentialSpec, method: str = "quadrature", **kw) -> float:
    """log Z_{n,β} = log ∫ exp(-(β/2) H_n) on the line.

    ``quadrature``: nested Gauss-Legendre panels on the ordered sector,
    graded toward the diagonal, n <= 3.  ``thermo``: thermodynamic
    integration over the pair-coupling λ ∈ [0, 1] from the decoupled product
    measure, with Metropolis estimates of the mean pair energy.
    """
    if spec.d != 1:
        raise CapabilityError("tiny partition functions are computed on the line (d = 1)")
    if not beta > 0:
        raise DomainError("β must be positive")
    if method == "quadrature":
        if not 1 <= n <= 3:
            raise CapabilityError("quadrature partition function supports n <= 3")
        return _log_z_quadrature(n, float(beta), spec, **kw)
    if method == "thermo":
        if n > 8:
            raise CapabilityError("thermodynamic integration is meant for small n (<= 8)")
        if n == 1:
            return _log_z_quadrature(1, float(beta), spec)
        return _log_z_thermo(n, float(beta), spec, **kw)
    raise CapabilityError(f"unknown method {method!r}")
