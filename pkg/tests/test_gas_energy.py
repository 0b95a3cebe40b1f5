import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coulomb_lab.errors import SingularityError
from coulomb_lab.gas_energy import (PointConfiguration, default_eta, discrepancy, easy_lower_bound_check,
                                    field_energy_grid, field_energy_terms, hamiltonian, hamiltonian_gradient,
                                    minimize_hamiltonian, splitting_report, truncated_field_energy)
from coulomb_lab.potentials import PotentialSpec, quadratic

from conftest import disk_points


def test_hamiltonian_examples():
    cfg = PointConfiguration(np.array([[0.0, 0.0], [1.0, 0.0]]))
    # V = 0 is outside the growth class, so compare the pair part directly
    assert hamiltonian(cfg, quadratic(2)) - 2 * np.sum(quadratic(2)(cfg.points)) == pytest.approx(0.0, abs=1e-15)
    cfg3 = PointConfiguration(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]))
    assert hamiltonian(cfg3, quadratic(3)) - 2 * 1.0 == pytest.approx(2.0)
    pm = PointConfiguration(np.array([[1.0, 0.0], [-1.0, 0.0]]))
    assert hamiltonian(pm, quadratic(2)) == pytest.approx(4 - 2 * math.log(2), abs=1e-12)


def test_hamiltonian_coincidence_names_indices():
    cfg = PointConfiguration(np.array([[0.0, 0.0], [0.5, 0.1], [0.5, 0.1]]))
    with pytest.raises(SingularityError) as exc:
        hamiltonian(cfg, quadratic(2))
    assert set(exc.value.indices) == {1, 2}


def test_gradient_matches_finite_differences():
    x = disk_points(7, 3)
    spec = PotentialSpec(2, quad=(1.0, 0.5), radial=(0.0, 0.0, 0.0, 0.3))
    g = hamiltonian_gradient(x, spec)
    for i, k in ((0, 0), (3, 1), (6, 0)):
        e = np.zeros_like(x)
        e[i, k] = 1e-6
        fd = (hamiltonian(PointConfiguration(x + e), spec) - hamiltonian(PointConfiguration(x - e), spec)) / 2e-6
        assert g[i, k] == pytest.approx(fd, rel=1e-6, abs=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 12))
def test_permutation_invariance(seed, n):
    x = disk_points(n, seed)
    perm = np.random.default_rng(seed).permutation(n)
    a = PointConfiguration(x)
    b = a.permuted(perm)
    assert hamiltonian(a, quadratic(2)) == pytest.approx(hamiltonian(b, quadratic(2)), rel=1e-12)


def test_permutation_invariance_next_order(circle_16):
    a = PointConfiguration(disk_points(9, 4))
    b = a.permuted(np.arange(9)[::-1])
    assert truncated_field_energy(a, circle_16) == pytest.approx(truncated_field_energy(b, circle_16), rel=1e-10)


def test_single_point_next_order(circle_32):
    cfg = PointConfiguration(np.zeros((1, 2)))
    terms = field_energy_terms(cfg, circle_32, 1e-3)
    assert terms.limit == pytest.approx(-1.5 * math.pi, abs=2e-2)
    rep = splitting_report(cfg, circle_32)
    assert rep.H_n == 0.0
    assert abs(rep.residual) <= 2e-2
    assert abs(rep.residual) <= rep.tolerance


@pytest.mark.parametrize("n", [1, 3, 6])
def test_next_order_against_grid_oracle(circle_32, n):
    rng = np.random.default_rng(n)
    r = np.sqrt(rng.uniform(size=n)) * 0.8
    th = rng.uniform(0, 2 * np.pi, n)
    cfg = PointConfiguration(np.c_[r * np.cos(th), r * np.sin(th)])
    eta = 0.05
    val = truncated_field_energy(cfg, circle_32, eta)
    grid, tail = field_energy_grid(cfg, eta)
    assert grid - 1e-2 <= val <= grid + tail + 1e-2


def test_eta_monotonicity_band(circle_32):
    for n in (1, 3, 6):
        cfg = PointConfiguration(disk_points(n, n, 0.8))
        sep = cfg.blow_up().min_separation()
        eta = min(0.1, 0.2 * sep)
        diff = truncated_field_energy(cfg, circle_32, eta) - truncated_field_energy(cfg, circle_32, eta / 2)
        band = n * eta * (1 / math.pi)
        assert abs(diff) <= 10 * band


@pytest.mark.parametrize("n", [20])
def test_splitting_random_configs(circle_32, n):
    for seed in range(5):
        rep = splitting_report(PointConfiguration(disk_points(n, seed)), circle_32)
        assert rep.relative_residual <= 1e-2
        assert abs(rep.residual) <= rep.tolerance
        assert not rep.overlap


def test_splitting_refinement(circle_16, circle_32):
    med = []
    for sol in (circle_16, circle_32):
        med.append(np.median([splitting_report(PointConfiguration(disk_points(20, s)), sol).relative_residual
                              for s in range(5)]))
    assert med[1] <= 0.5 * med[0]


def test_splitting_1d(semicircle):
    cfg = PointConfiguration(np.array([-1.0, -0.3, 0.4, 1.1]))
    rep = splitting_report(cfg, semicircle)
    assert rep.relative_residual <= 5e-2
    assert rep.log_term == pytest.approx(-4 * math.log(4))


def test_report_dict_roundtrip(circle_16):
    d = splitting_report(PointConfiguration(disk_points(5, 0)), circle_16).to_dict()
    assert {"H_n", "leading", "log_term", "confinement", "next_order", "eta", "residual"} <= set(d)


def test_discrepancy_examples(circle_16):
    cfg = PointConfiguration(disk_points(30, 1))
    far = np.array([40.0, 40.0])
    empty = discrepancy(cfg, far, 1.0, circle_16)
    assert empty == pytest.approx(0.0, abs=1e-12)
    # empty ball inside the droplet: minus the background mass, ≈ -π R² / π
    pts = cfg.blow_up().points
    c = np.array([0.0, 0.0])
    R = 0.9 * float(np.min(np.linalg.norm(pts - c, axis=1)))
    assert discrepancy(cfg, c, R, circle_16) == pytest.approx(-R * R, rel=0.05)
    # one point where μ0' vanishes
    lone = PointConfiguration(np.array([[1.8, 0.0]]))
    assert discrepancy(lone, lone.blow_up().points[0], 0.3, circle_16) == pytest.approx(1.0, abs=1e-12)


def test_discrepancy_surface_scaling(circle_32):
    cfg = minimize_hamiltonian(64, quadratic(2), seed=0)
    rng = np.random.default_rng(0)
    for R in (2, 4, 8):
        worst = max(abs(discrepancy(cfg, rng.uniform(-2, 2, 2), R, circle_32)) for _ in range(20))
        assert worst <= 2.0 * R


def test_discrepancy_controls_local_energy(circle_32):
    cfg = minimize_hamiltonian(8, quadratic(2), seed=1)
    eta = 0.5 * default_eta(cfg)
    c = cfg.blow_up().points[0] + 0.3
    for R in (0.7, 1.5):
        D = discrepancy(cfg, c, R, circle_32)
        E, _ = field_energy_grid(cfg, eta, region=(c, 2 * R))
        assert E >= 0.01 * D * D * min(1.0, abs(D) / R**2)


def test_easy_lower_bound(circle_16):
    assert easy_lower_bound_check(PointConfiguration(np.zeros((1, 2))), circle_16)
    for seed in range(100):
        chk = easy_lower_bound_check(PointConfiguration(disk_points(50, seed)), circle_16)
        assert chk.holds
    close = PointConfiguration(np.array([[0.1, 0.1], [0.1, 0.1 + 1e-12], [-0.3, 0.2]]))
    assert easy_lower_bound_check(close, circle_16).holds
