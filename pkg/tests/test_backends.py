import os
import subprocess
import sys

import numpy as np
import pytest

from coulomb_lab._backend import HAVE_NUMBA, use_numba
from coulomb_lab._hot import dictionary_integrate, metropolis_block, pair_rows
from coulomb_lab.lipschitz import lipschitz_dictionary
from coulomb_lab.obstacle import psor, uniform_stencil
from coulomb_lab.potentials import quadratic
from coulomb_lab.sampler import GibbsSpec, sample_gibbs

pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="needs numba for the comparison")


@pytest.mark.parametrize("d_kernel", [1, 2, 3])
def test_pair_rows_agree(d_kernel):
    x = np.random.default_rng(0).normal(size=(300, d_kernel))
    a, ia, ja = pair_rows(x, d_kernel, backend="numba")
    b, ib, jb = pair_rows(x, d_kernel, backend="numpy")
    assert np.max(np.abs(a - b)) <= 1e-10 * max(1.0, np.max(np.abs(a)))
    assert (ia, ja) == (ib, jb) == (-1, -1)


def test_pair_rows_report_coincidence():
    x = np.array([[0.0, 0.0], [1.0, 2.0], [1.0, 2.0]])
    assert pair_rows(x, 2, backend="numba")[1:] == pair_rows(x, 2, backend="numpy")[1:]


@pytest.mark.parametrize("d", [1, 2])
def test_metropolis_agree(d):
    rng = np.random.default_rng(d)
    x0 = rng.uniform(-1, 1, (20, d))
    normals = rng.normal(size=(50, 20, d))
    unif = rng.uniform(size=(50, 20))
    xa, xb = x0.copy(), x0.copy()
    ra = metropolis_block(xa, 2.0, 1.0, np.ones(d), np.zeros(0), d, 0.2, normals, unif, backend="numba")
    rb = metropolis_block(xb, 2.0, 1.0, np.ones(d), np.zeros(0), d, 0.2, normals, unif, backend="numpy")
    assert ra == rb
    assert np.max(np.abs(xa - xb)) <= 1e-12


def test_chain_agrees_across_backends():
    spec = GibbsSpec(8, 2.0, quadratic(2), sweeps=300, burn_in=100, thin=50, seed=9)
    a = sample_gibbs(spec, backend="numba")
    b = sample_gibbs(spec, backend="numpy")
    assert np.max(np.abs(a.snapshots - b.snapshots)) <= 1e-10


def test_psor_agree():
    m = 65
    st = uniform_stencil((m, m), 1.0 / (m - 1), screening=1.0)
    X, Y = np.meshgrid(np.linspace(0, 1, m), np.linspace(0, 1, m), indexing="ij")
    psi = 0.3 - (X - 0.5) ** 2 - (Y - 0.5) ** 2
    init = np.zeros((m, m))
    ha, ra, _ = psor(st, psi, 0.0, init, omega=1.9, tol=1e-10, backend="numba")
    hb, rb, _ = psor(st, psi, 0.0, init, omega=1.9, tol=1e-10, backend="numpy")
    assert max(ra, rb) <= 1e-10
    assert np.max(np.abs(ha - hb)) <= 1e-8


def test_dictionary_agree():
    dic = lipschitz_dictionary(2)
    rng = np.random.default_rng(2)
    x = rng.uniform(-1, 1, (5000, 2))
    w = rng.uniform(size=5000)
    a = dictionary_integrate(dic.kind, dic.centers, dic.offsets, dic.clips, x, w, backend="numba")
    b = dictionary_integrate(dic.kind, dic.centers, dic.offsets, dic.clips, x, w, backend="numpy")
    assert np.max(np.abs(a - b)) <= 1e-10


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        use_numba("fortran")


@pytest.mark.parametrize("value,expected", [("numpy", "numpy"), ("numba", "numba"), ("NumPy", "numpy")])
def test_env_selects_backend(value, expected):
    env = dict(os.environ, COULOMB_LAB_BACKEND=value)
    out = subprocess.run([sys.executable, "-c", "from coulomb_lab._backend import BACKEND; print(BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected


def test_numpy_backend_end_to_end():
    env = dict(os.environ, COULOMB_LAB_BACKEND="numpy")
    code = ("import numpy as np; from coulomb_lab.gas_energy import hamiltonian, PointConfiguration;"
            "from coulomb_lab.potentials import quadratic;"
            "print(repr(hamiltonian(PointConfiguration(np.array([[1.0, 0.0], [-1.0, 0.0]])), quadratic(2))))")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert float(out.stdout) == pytest.approx(4 - 2 * np.log(2), abs=1e-12)
