import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coulomb_lab.errors import DegreeError, DomainError
from coulomb_lab.gl_field import (GLState, degree_on_circle, energy_density, gauge_transform, gl_energy, normal_state,
                                  random_smooth_state, relax_state, superconducting_state, vortex_profile,
                                  vortex_state, vorticity)

BOX = (-1.0, 1.0, -1.0, 1.0)


def test_normal_state_energy():
    eps = 0.05
    s = normal_state(BOX, 129, eps, h_ex=2.0)
    assert gl_energy(s) == pytest.approx(4.0 / (4 * eps**2), rel=1e-2)
    assert np.max(np.abs(vorticity(s).values - 2.0)) <= 1e-12


@pytest.mark.parametrize("h_ex", [0.0, 0.7, 3.0])
def test_superconducting_state_energy(h_ex):
    s = superconducting_state(BOX, 65, 0.1, h_ex)
    assert gl_energy(s) == pytest.approx(h_ex**2 * 4.0 / 2, abs=1e-12)
    assert np.all(vorticity(s).values == 0.0)


def test_energy_density_sums_to_energy():
    s = random_smooth_state(3, n=65, eps=0.125)
    assert energy_density(s).integral() == pytest.approx(gl_energy(s), rel=1e-12)
    total, parts = gl_energy(s, parts=True)
    assert sum(parts.values()) == pytest.approx(total, rel=1e-14)


def test_vortex_vorticity_mass():
    s = vortex_state([[0.0, 0.0]], [1], eps=0.02, n=257)
    for R in (0.3, 0.6):
        assert vorticity(s).integral_in_disk((0.0, 0.0), R) == pytest.approx(2 * math.pi, abs=1e-3)


def test_contour_phase_sum_oracle():
    # the same 2π from an independent polygon sum of phase increments of the exact field
    t = np.linspace(0, 2 * math.pi, 4001)
    z = 0.4 * np.exp(1j * t)
    f = vortex_profile(np.abs(z) / 0.02) * z / np.abs(z)
    assert np.sum(np.angle(f[1:] / f[:-1])) == pytest.approx(2 * math.pi, abs=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_gauge_invariance(seed):
    s = random_smooth_state(seed, n=65, eps=0.125)
    rng = np.random.default_rng(seed)
    k = rng.normal(size=4)
    phi = lambda X, Y: k[0] * np.sin(X + k[1]) * np.cos(0.7 * Y) + k[2] * X * Y + k[3]  # noqa: E731
    g = gauge_transform(s, phi)
    assert np.max(np.abs(vorticity(g).values - vorticity(s).values)) <= 1e-8
    assert gl_energy(g) == pytest.approx(gl_energy(s), rel=1e-10)


@pytest.mark.parametrize("d", [-2, -1, 0, 1, 2])
def test_degree_of_pure_phase(d):
    u = lambda x, y: ((x + 1j * y) / np.hypot(x, y)) ** d  # noqa: E731
    for r in (0.05, 0.5, 2.0):
        assert degree_on_circle(u, (0.0, 0.0), r) == d


def test_degree_on_state():
    s = vortex_state([[-0.3, 0.0], [0.3, 0.1]], [1, 1], eps=0.02, n=257)
    assert degree_on_circle(s, (0.0, 0.0), 0.7) == 2
    assert degree_on_circle(s, (-0.3, 0.0), 0.2) == 1
    assert degree_on_circle(superconducting_state(BOX, 33, 0.2), (0.0, 0.0), 0.5) == 0


def test_degree_errors():
    s = vortex_state([[0.0, 0.0]], [1], eps=0.1, n=129)
    with pytest.raises(DegreeError):
        degree_on_circle(s, (0.0, 0.0), 0.005)
    with pytest.raises(DomainError):
        degree_on_circle(s, (0.0, 0.0), 1.5)
    with pytest.raises(DomainError):
        degree_on_circle(s, (0.0, 0.0), 0.0)


def test_core_resolution_required():
    with pytest.raises(DomainError):
        vortex_state([[0.0, 0.0]], [1], eps=0.01, n=65)
    with pytest.raises(DomainError):
        GLState(0, 0, 0.1, np.ones((3, 3)), np.zeros((3, 3)), np.zeros((3, 2)), 0.5)


def test_relax_lowers_energy():
    s = vortex_state([[0.0, 0.0]], [1], eps=0.1, n=65, profile="algebraic")
    pin = np.zeros(s.shape, bool)
    pin[[0, -1], :] = pin[:, [0, -1]] = True
    r, info = relax_state(s, pin=pin, max_steps=300)
    assert np.all(np.diff(info["history"]) <= 1e-12)
    assert degree_on_circle(r, (0.0, 0.0), 0.8) == 1
    assert np.array_equal(r.u[pin], s.u[pin])


def test_nodal_round_trip_is_second_order_inside():
    err = []
    for n in (65, 129):
        s = random_smooth_state(1, n=n, eps=0.25)
        t = GLState.from_nodal(s.x0, s.y0, s.h, s.u, s.nodal_A(), s.eps, s.h_ex)
        assert t.A1.shape == s.A1.shape and t.A2.shape == s.A2.shape
        err.append(np.max(np.abs(t.A1 - s.A1)[1:-1]))
    assert err[1] <= err[0] / 3.5
