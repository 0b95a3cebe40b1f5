import math

import numpy as np
import pytest

from coulomb_lab.errors import CapabilityError, DomainError
from coulomb_lab._hot import metropolis_block
from coulomb_lab.gas_energy import hamiltonian, minimize_hamiltonian
from coulomb_lab.potentials import PotentialSpec, quadratic
from coulomb_lab.sampler import (GibbsSpec, empirical_distance, ginibre_eigenvalues, integrated_autocorrelation,
                                 log_partition_tiny, radial_cdf_distance, sample_chains, sample_gibbs)


def mehta_log_z(n):
    # ∫ Δ² exp(-n Σx²) dx via Mehta's integral after y = x √(2n)
    return (0.5 * n * math.log(2 * math.pi) + sum(math.lgamma(j + 1) for j in range(1, n + 1))
            - 0.5 * n * n * math.log(2 * n))


def test_single_particle_is_gaussian():
    ch = sample_gibbs(GibbsSpec(1, 2.0, quadratic(1), sigma=1.0, sweeps=1_000_000, thin=10, seed=11))
    x = ch.snapshots.ravel()
    assert x.size == 100_000
    assert np.var(x) == pytest.approx(0.5, abs=0.02)
    assert 0 < ch.stats.acceptance_rate < 1


def test_seed_determinism():
    spec = GibbsSpec(6, 2.0, quadratic(2), sweeps=2000, burn_in=200, thin=50, seed=42)
    a, b = sample_gibbs(spec), sample_gibbs(spec)
    assert np.array_equal(a.snapshots, b.snapshots)
    assert a.stats.sigma == b.stats.sigma
    assert not np.array_equal(a.snapshots, sample_gibbs(spec, chain=1).snapshots)


def test_chains_match_single_runs():
    spec = GibbsSpec(5, 2.0, quadratic(2), sweeps=500, burn_in=100, thin=50, seed=3)
    chains = sample_chains(spec, 3)
    for c in chains:
        assert np.array_equal(c.snapshots, sample_gibbs(spec, chain=c.chain_id).snapshots)


def test_detailed_balance_on_bins():
    spec = GibbsSpec(1, 2.0, quadratic(1), sigma=0.8, sweeps=100_000, burn_in=1000, thin=1, seed=5, tune=False)
    x = sample_gibbs(spec).snapshots.ravel()
    edges = np.array([-np.inf, -0.8, -0.3, 0.0, 0.3, 0.8, np.inf])
    b = np.digitize(x, edges) - 1
    C = np.zeros((6, 6))
    np.add.at(C, (b[:-1], b[1:]), 1)
    off = ~np.eye(6, dtype=bool)
    sym = np.abs(C - C.T)[off]
    assert np.all(sym <= 4 * np.sqrt(C + C.T)[off] + 4)


def test_energy_non_increasing_in_beta():
    stats = [sample_gibbs(GibbsSpec(4, b, quadratic(1), sweeps=20_000, burn_in=2000, thin=10, seed=1)).stats
             for b in (1, 2, 4, 8)]
    for s, t in zip(stats, stats[1:]):
        assert t.mean_energy <= s.mean_energy + 2 * math.hypot(s.energy_stderr, t.energy_stderr)


def test_low_temperature_limit():
    pot = quadratic(1)
    H = hamiltonian(minimize_hamiltonian(16, pot, seed=0), pot)
    ch = sample_gibbs(GibbsSpec(16, 400.0, pot, sweeps=5000, burn_in=20_000, thin=10, seed=1))
    assert ch.stats.mean_energy == pytest.approx(H, rel=1e-2)
    assert ch.stats.mean_energy >= H


@pytest.mark.parametrize("backend", ["numba", "numpy"])
def test_coincident_proposal_rejected(backend):
    x = np.array([[0.0], [1.0]])
    normals = np.array([[[1.0], [0.5]]])
    acc, coincident = metropolis_block(x, 2.0, 1.0, np.ones(1), np.zeros(0), 1, 1.0, normals, np.zeros((1, 2)),
                                       backend)
    assert coincident == 1
    assert x[0, 0] == 0.0
    assert acc <= 1


def test_spec_validation():
    with pytest.raises(DomainError):
        GibbsSpec(3, 2.0, quadratic(2), sigma=0.0)
    with pytest.raises(DomainError):
        GibbsSpec(3, -1.0, quadratic(2))
    with pytest.raises(CapabilityError):
        GibbsSpec(3, 2.0, PotentialSpec(2, func=lambda x: np.sum(x * x, axis=-1)))


@pytest.mark.parametrize("n,exact", [(1, math.log(math.sqrt(math.pi))), (2, math.log(math.pi / 4))])
def test_log_partition_quadrature(n, exact):
    assert log_partition_tiny(n, 2.0, quadratic(1)) == pytest.approx(exact, abs=1e-6)


def test_log_partition_three_particles():
    assert log_partition_tiny(3, 2.0, quadratic(1)) == pytest.approx(mehta_log_z(3), abs=1e-6)
    assert mehta_log_z(2) == pytest.approx(math.log(math.pi / 4), abs=1e-14)


def test_log_partition_thermo_agrees():
    q = log_partition_tiny(2, 2.0, quadratic(1))
    t = log_partition_tiny(2, 2.0, quadratic(1), method="thermo")
    assert abs(t - q) <= 0.01 * abs(q)


def test_log_partition_capabilities():
    with pytest.raises(CapabilityError):
        log_partition_tiny(4, 2.0, quadratic(1))
    with pytest.raises(CapabilityError):
        log_partition_tiny(1, 2.0, quadratic(2))
    with pytest.raises(CapabilityError):
        log_partition_tiny(2, 2.0, quadratic(1), method="selberg")


def test_leading_order_trend(semicircle):
    I = semicircle.summary()["I"]
    vals = [-2.0 / (2.0 * n * n) * log_partition_tiny(n, 2.0, quadratic(1)) for n in (1, 2, 3)]
    gaps = [abs(v - I) for v in vals]
    assert gaps[0] > gaps[1] > gaps[2]


def test_bl_distance_examples(circle_32):
    assert empirical_distance(np.zeros((1, 2)), circle_32) >= 0.3
    # every cell split into four sub-cells carrying a quarter of the mass
    h = circle_32.grid.h
    mask = circle_32.density > 0
    c = circle_32.grid.points()[mask]
    m = circle_32.density[mask]
    off = 0.25 * h * np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]])
    pts = (c[:, None, :] + off[None]).reshape(-1, 2)
    assert 0 <= empirical_distance(pts, circle_32, weights=np.repeat(m / m.sum() / 4, 4)) <= 2 * h


def test_bl_distance_decreases_along_minimizers(circle_32):
    dist = [empirical_distance(minimize_hamiltonian(n, quadratic(2), seed=0), circle_32) for n in (16, 64, 256)]
    assert dist[0] > dist[1] > dist[2]


def test_ginibre_radial_law():
    ev = ginibre_eigenvalues(128, 40, seed=0)
    r = np.linalg.norm(ev.reshape(-1, 2), axis=1)
    assert radial_cdf_distance(r) <= 0.05


def test_radial_cdf_distance_examples():
    r = np.sqrt((np.arange(1000) + 0.5) / 1000)
    assert radial_cdf_distance(r) == pytest.approx(0.0005, abs=1e-12)
    assert radial_cdf_distance(np.full(10, 2.0)) == pytest.approx(1.0)


def test_autocorrelation():
    assert integrated_autocorrelation(np.random.default_rng(0).normal(size=20_000)) == pytest.approx(1.0, abs=0.1)
    rng = np.random.default_rng(1)
    a = 0.9
    x = np.zeros(50_000)
    for k in range(1, x.size):
        x[k] = a * x[k - 1] + rng.normal()
    assert integrated_autocorrelation(x) == pytest.approx((1 + a) / (1 - a), rel=0.15)
