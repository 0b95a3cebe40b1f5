import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coulomb_lab.errors import DomainError
from coulomb_lab.gl_field import superconducting_state, vortex_state
from coulomb_lab.vortex_balls import (BallSet, ball_construction, ball_lower_bound_vs_energy, grow_to_total_radius,
                                      initial_balls, jacobian_estimate_check)


def test_single_ball_bound():
    bs = ball_construction(BallSet([[0.0, 0.0]], [0.01], [1]), 37.0)
    assert bs.lower_bound == pytest.approx(math.pi * math.log(37.0), rel=1e-14)
    assert bs.total_radius == pytest.approx(0.37)
    assert bs.s == 37.0
    assert ball_construction(BallSet([[0.0, 0.0]], [0.01], [-2]), 5.0).lower_bound == pytest.approx(
        2 * math.pi * math.log(5.0))


def test_opposite_pair_merges_to_degree_zero():
    bs = ball_construction(BallSet([[-1.0, 0.0], [1.0, 0.0]], [0.1, 0.1], [1, -1]), 20.0)
    assert len(bs) == 1 and bs.degrees[0] == 0
    assert bs.lower_bound == pytest.approx(2 * math.pi * math.log(10.0))
    assert bs.merges[0].s == pytest.approx(10.0)
    assert bs.total_radius == pytest.approx(4.0)
    assert bs.centers[0] == pytest.approx([0.0, 0.0])


def test_three_balls():
    init = BallSet([[0.0, 0.0], [1.0, 0.0], [5.0, 5.0]], [0.1, 0.2, 0.1], [1, 1, 1])
    bs = ball_construction(init, 12.0)
    assert bs.total_radius == pytest.approx(12.0 * init.total_radius)
    assert bs.disjoint()
    assert int(bs.degrees.sum()) == 3
    assert bs.merges[0].members == (0, 1)
    assert bs.merges[0].degree == 2


def test_empty_set():
    empty = BallSet(np.empty((0, 2)), np.empty(0), np.empty(0, int), initial_total_radius=1.0)
    bs = ball_construction(empty, 3.0)
    assert len(bs) == 0 and bs.lower_bound == 0.0
    assert len(initial_balls(superconducting_state((-1, 1, -1, 1), 65, 0.0625))) == 0


def test_escape_sets_degree_zero():
    bs = ball_construction(BallSet([[0.8, 0.0]], [0.05], [1]), 10.0, domain=(-1, 1, -1, 1))
    assert bs.escaped[0] and bs.degrees[0] == 0
    assert bs.lower_bound == pytest.approx(math.pi * math.log(4.0))


def test_validation():
    with pytest.raises(DomainError):
        BallSet([[0.0, 0.0]], [0.0], [1])
    with pytest.raises(DomainError):
        ball_construction(BallSet([[0.0, 0.0]], [0.1], [1]), 0.5)
    with pytest.raises(DomainError):
        grow_to_total_radius(BallSet([[0.0, 0.0]], [0.1], [1]), 0.05)


balls = st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.01, 0.2), st.sampled_from([-2, -1, 1, 2])),
                 min_size=1, max_size=8)


@settings(max_examples=60, deadline=None)
@given(balls, st.floats(1.0, 50.0))
def test_growth_invariants(spec, s):
    c = np.array([[a, b] for a, b, _, _ in spec])
    init = BallSet(c, [r for *_, r, _ in spec], [d for *_, d in spec])
    bs = ball_construction(init, s)
    assert bs.total_radius == pytest.approx(s * init.total_radius, rel=1e-10)
    assert bs.disjoint(rtol=1e-9)
    assert int(bs.degrees.sum()) == int(init.degrees.sum())
    assert bs.lower_bound <= math.pi * init.D * math.log(s) + 1e-9
    assert bs.lower_bound >= 0


def test_initial_balls_find_vortices():
    s = vortex_state([[-0.4, 0.0], [0.4, 0.2]], [1, -1], eps=0.02, n=257)
    bs = initial_balls(s)
    assert len(bs) == 2
    order = np.argsort(bs.centers[:, 0])
    assert list(bs.degrees[order]) == [1, -1]
    assert bs.centers[order] == pytest.approx(np.array([[-0.4, 0.0], [0.4, 0.2]]), abs=2 * s.h)


@pytest.mark.parametrize("seed", range(3))
def test_bound_below_energy(seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(-0.5, 0.5, (3, 2))
    s = vortex_state(c, [1, 1, -1], eps=0.02, n=257)
    bs = grow_to_total_radius(initial_balls(s), 0.3, s.bounds)
    bb = ball_lower_bound_vs_energy(s, bs)
    assert bb.bound <= bb.energy


def test_jacobian_check_trivial_state():
    s = superconducting_state((-1, 1, -1, 1), 65, 0.0625)
    empty = BallSet(np.empty((0, 2)), np.empty(0), np.empty(0, int), initial_total_radius=0.0)
    assert jacobian_estimate_check(s, empty).numerator <= 1e-8


def test_jacobian_check_single_vortex():
    s = vortex_state([[0.1, -0.1]], [1], eps=0.02, n=257)
    bs = grow_to_total_radius(initial_balls(s), 0.2, s.bounds)
    chk = jacobian_estimate_check(s, bs)
    assert chk.numerator < 0.5
    assert chk.ratio < 1.0
