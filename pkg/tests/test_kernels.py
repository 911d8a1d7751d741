import os
import subprocess
import sys

import numpy as np
import pytest

from bwot import _kernels
from bwot._backend import HAVE_NUMBA
from bwot.transport import assignment_bruteforce

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba disabled")


def _sinkhorn_case(n, m, seed):
    r = np.random.default_rng(seed)
    x, z = r.normal(size=n), r.normal(size=m)
    C = 0.5 * (x[:, None] - z[None, :]) ** 2
    a, b = r.dirichlet(np.ones(n)), r.dirichlet(np.ones(m))
    return C, np.log(a), np.log(b), a, b


@pytest.mark.parametrize("shape", [(5, 5), (7, 3), (12, 20)])
def test_sinkhorn_kernel_reaches_marginals(backend, shape):
    C, la, lb, a, b = _sinkhorn_case(*shape, seed=sum(shape))
    eps = 0.05
    f, g, it, err = _kernels.get("sinkhorn_log", backend)(C, la, lb, eps, np.zeros(shape[0]), np.zeros(shape[1]), 1e-12, 50_000, 5)
    assert err <= 1e-12
    P = a[:, None] * b[None, :] * np.exp((f[:, None] + g[None, :] - C) / eps)
    assert np.abs(P.sum(1) - a).max() <= 1e-12
    assert np.abs(P.sum(0) - b).max() <= 1e-11


def test_sinkhorn_kernel_absorbs_at_small_epsilon(backend):
    C, la, lb, a, b = _sinkhorn_case(6, 6, 1)
    C = 50.0 * C
    f, g, it, err = _kernels.get("sinkhorn_log", backend)(C, la, lb, 1e-3, np.zeros(6), np.zeros(6), 1e-9, 200_000, 10)
    assert np.all(np.isfinite(f)) and np.all(np.isfinite(g))


@needs_numba
def test_sinkhorn_backends_agree():
    C, la, lb, _, _ = _sinkhorn_case(9, 11, 4)
    args = (C, la, lb, 0.02, np.zeros(9), np.zeros(11), 1e-13, 100_000, 1)
    f1, g1, it1, _ = _kernels.get("sinkhorn_log", "numba")(*args)
    f2, g2, it2, _ = _kernels.get("sinkhorn_log", "numpy")(*args)
    # potentials are defined up to a constant shift
    shift = f1[0] - f2[0]
    assert np.abs(f1 - f2 - shift).max() <= 1e-9
    assert np.abs(g1 - g2 + shift).max() <= 1e-9


@pytest.mark.parametrize("n", [1, 2, 5, 7])
def test_assignment_kernel_matches_bruteforce(backend, n):
    for seed in range(10):
        C = np.random.default_rng(seed).random((n, n))
        cols, u, v = _kernels.get("assignment", backend)(C)
        best, _ = assignment_bruteforce(C)
        assert C[np.arange(n), cols].sum() / n == pytest.approx(best, abs=1e-12)
        # dual feasibility with equality on the matching
        assert np.all(u[:, None] + v[None, :] <= C + 1e-12)
        assert np.allclose(u + v[cols], C[np.arange(n), cols], atol=1e-12)


def test_rectangular_assignment(backend):
    C = np.random.default_rng(0).random((3, 6))
    cols, _, _ = _kernels.get("assignment", backend)(C)
    assert len(set(cols.tolist())) == 3
    best = min(C[0, i] + C[1, j] + C[2, k] for i in range(6) for j in range(6) for k in range(6) if len({i, j, k}) == 3)
    assert C[np.arange(3), cols].sum() == pytest.approx(best, abs=1e-12)


def test_inverse_langevin_round_trip(backend):
    t = np.concatenate([np.linspace(-60, 60, 241), [0.0, 1e-9, -1e-7, 700.0]])
    eta = _kernels._langevin_np(t)
    out, status = _kernels.get("inv_langevin", backend)(eta, 1e-12, 100)
    assert status == 0
    ok = np.abs(t) < 100
    assert np.allclose(out[ok], t[ok], rtol=1e-9, atol=1e-9)


@needs_numba
def test_inverse_langevin_backends_agree():
    eta = np.random.default_rng(3).uniform(-0.9999, 0.9999, 500)
    a, _ = _kernels.get("inv_langevin", "numba")(eta, 1e-12, 100)
    b, _ = _kernels.get("inv_langevin", "numpy")(eta, 1e-12, 100)
    assert np.allclose(a, b, rtol=1e-10, atol=1e-12)


def test_unknown_backend():
    with pytest.raises(ValueError):
        _kernels.get("assignment", "fortran")


def test_environment_flag_selects_numpy():
    env = dict(os.environ, BWOT_DISABLE_NUMBA="1")
    code = "import bwot, bwot._kernels as k; print(bwot.BACKEND, k.assignment is k._assignment_np)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "True"]
