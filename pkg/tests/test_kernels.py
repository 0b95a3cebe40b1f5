import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.stats import qmc

from coulomb_lab.errors import DomainError, SingularityError
from coulomb_lab.kernels import (SmearedCharge, cell_self_average, kernel_spec, kernel_value, smeared_pair_interaction,
                                 sphere_area, truncated_kernel)


def test_constants():
    assert kernel_spec(2).c_d == pytest.approx(2 * math.pi)
    assert kernel_spec(1).c_d == pytest.approx(math.pi)
    assert kernel_spec(3).c_d == pytest.approx(4 * math.pi)
    assert kernel_spec(4).c_d == pytest.approx(2 * sphere_area(4))
    assert kernel_spec(1).embedded and not kernel_spec(2).embedded
    assert kernel_spec(1).field_c == pytest.approx(2 * math.pi)


@pytest.mark.parametrize("r,d,expected", [(1.0, 2, 0.0), (1.0, 3, 1.0), (0.5, 2, math.log(2)), (2.0, 4, 0.25)])
def test_kernel_values(r, d, expected):
    assert kernel_value(r, kernel_spec(d)) == pytest.approx(expected, abs=1e-15)


def test_kernel_errors():
    with pytest.raises(SingularityError):
        kernel_value(0.0, kernel_spec(2))
    with pytest.raises(DomainError):
        kernel_value(-1.0, kernel_spec(3))
    with pytest.raises(DomainError):
        kernel_spec(0)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 1e6), st.floats(1.0001, 100.0), st.integers(1, 5))
def test_radially_decreasing(r, factor, d):
    spec = kernel_spec(d)
    assert kernel_value(r * factor, spec) < kernel_value(r, spec)


def test_truncated_examples():
    assert truncated_kernel(0.01, 0.1, kernel_spec(2)) == pytest.approx(math.log(10))
    assert truncated_kernel(0.25, 0.5, kernel_spec(3)) == pytest.approx(2.0)
    assert truncated_kernel(0.0, 0.5, kernel_spec(3)) == math.inf
    with pytest.raises(SingularityError):
        truncated_kernel(0.0, 0.5, kernel_spec(2))
    with pytest.raises(DomainError):
        truncated_kernel(0.1, 0.0, kernel_spec(2))


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-4, 10.0), st.floats(1e-3, 1.0), st.integers(1, 4))
def test_truncated_clamp(r, eta, d):
    spec = kernel_spec(d)
    v = truncated_kernel(r, eta, spec)
    if r >= eta:
        assert v == 0.0
    else:
        assert v == pytest.approx(kernel_value(r, spec) - kernel_value(eta, spec), rel=1e-12, abs=1e-12)


def test_smeared_examples():
    assert smeared_pair_interaction((0, 0), (1, 0), 0.1, kernel_spec(2)) == pytest.approx(0.0, abs=1e-15)
    assert smeared_pair_interaction((0, 0, 0), (0, 0, 0), 0.5, kernel_spec(3)) == pytest.approx(2.0)
    q = SmearedCharge((0.0, 0.0), 0.2)
    assert q.potential([[1.0, 0.0]], kernel_spec(2))[0] == pytest.approx(0.0, abs=1e-15)
    assert q.potential([[0.1, 0.0]], kernel_spec(2))[0] == pytest.approx(-math.log(0.2))


def _sobol_double_sphere(s, eta, m=20):
    """Average of -log|x - y| for x, y uniform on circles of radius eta about 0 and (s, 0)."""
    u = qmc.Sobol(2, scramble=True, seed=7).random_base2(m)
    a, b = 2 * np.pi * u[:, 0], 2 * np.pi * u[:, 1]
    dx = s + eta * (np.cos(b) - np.cos(a))
    dy = eta * (np.sin(b) - np.sin(a))
    return float(np.mean(-0.5 * np.log(dx * dx + dy * dy)))


def test_smeared_overlap_matches_sobol_oracle():
    eta = 0.1
    val = smeared_pair_interaction((0, 0), (0.15, 0), eta, kernel_spec(2))
    assert val == pytest.approx(_sobol_double_sphere(0.15, eta), abs=1e-4)


def test_smeared_log_equality_only_from_two_eta():
    # Newton's theorem gives equality with -log s for s >= 2η; inside (η, 2η) the
    # outer sphere dips into the flat core and the value is strictly smaller
    eta = 0.1
    spec = kernel_spec(2)
    for s in (2 * eta, 3 * eta):
        assert smeared_pair_interaction((0, 0), (s, 0), eta, spec) == pytest.approx(-math.log(s), abs=1e-13)
    for s in (eta, 1.5 * eta):
        assert smeared_pair_interaction((0, 0), (s, 0), eta, spec) < -math.log(s) - 1e-3


def test_smeared_embedded_line_matches_plane():
    a = smeared_pair_interaction(0.0, 0.13, 0.1, kernel_spec(1))
    b = smeared_pair_interaction((0.0, 0.0), (0.13, 0.0), 0.1, kernel_spec(2))
    assert a == pytest.approx(b, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=6, max_size=6), st.floats(0.05, 0.5), st.sampled_from([2, 3]))
def test_smeared_symmetric_and_translation_invariant(c, eta, d):
    spec = kernel_spec(d)
    p, q, t = np.array(c[:d]), np.array(c[d:2 * d]) * 0.3, np.array(c[-d:])
    if np.linalg.norm(p - q) == 0:
        return
    v = smeared_pair_interaction(p, q, eta, spec)
    assert v == pytest.approx(smeared_pair_interaction(q, p, eta, spec), rel=1e-12, abs=1e-12)
    assert v == pytest.approx(smeared_pair_interaction(p + t, q + t, eta, spec), rel=1e-9, abs=1e-9)


def test_cell_self_averages_against_quadrature():
    seg, _ = integrate.quad(lambda u: 2 * (1 - u) * -math.log(u), 0, 1)
    sq, _ = integrate.dblquad(lambda v, u: 4 * (1 - u) * (1 - v) * -0.5 * math.log(u * u + v * v), 0, 1, 0, 1)
    cube, _ = integrate.tplquad(lambda w, v, u: 8 * (1 - u) * (1 - v) * (1 - w) / math.sqrt(u * u + v * v + w * w),
                                0, 1, 0, 1, 0, 1, epsabs=1e-10)
    assert cell_self_average(1.0, kernel_spec(1)) == pytest.approx(seg, abs=1e-8)
    assert cell_self_average(1.0, kernel_spec(2)) == pytest.approx(sq, abs=1e-8)
    assert cell_self_average(1.0, kernel_spec(3)) == pytest.approx(cube, abs=1e-7)
    # scaling: -log picks up -log h, r^{-1} scales as 1/h
    assert cell_self_average(0.25, kernel_spec(2)) == pytest.approx(sq - math.log(0.25), abs=1e-8)
    assert cell_self_average(0.25, kernel_spec(3)) == pytest.approx(4 * cube, rel=1e-7)
