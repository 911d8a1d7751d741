import numpy as np
import pytest

from bwot.barycenter import barycenter_fixed_point, multimarginal_bruteforce, objective
from bwot.errors import InputError
from bwot.fixtures import random_cloud, rng_for
from bwot.generators import CATALOG, make_generator
from bwot.interp import path_from_plan
from bwot.transport import DiscreteMeasure, bw_divergence


def test_identical_inputs_return_the_input():
    g = make_generator("logsumexp", 2)
    mu = random_cloud(g, rng_for(1), 4, uniform=True)
    res = barycenter_fixed_point(g, [mu, mu], [0.3, 0.7], init="multistart")
    assert res.objective == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(np.sort(res.support, axis=0), np.sort(mu.points, axis=0), atol=1e-12)


@pytest.mark.parametrize("name", list(CATALOG))
def test_objective_trace_never_increases(name):
    for seed in range(4):
        r = rng_for(2, seed)
        g = make_generator(name, 2)
        ms = [random_cloud(g, r, int(r.integers(3, 7))) for _ in range(3)]
        res = barycenter_fixed_point(g, ms, [0.2, 0.3, 0.5], k=4, seed=seed)
        assert np.all(np.diff(res.objective_trace) <= 1e-12)


@pytest.mark.parametrize("name", list(CATALOG))
def test_multistart_matches_multimarginal_brute_force(name):
    for seed in range(5):
        r = rng_for(3, seed)
        g = make_generator(name, 1 + seed % 2)
        m = 2 + seed % 2
        ms = [random_cloud(g, r, 3, uniform=True) for _ in range(m)]
        lam = r.dirichlet(np.ones(m))
        best, _, bary = multimarginal_bruteforce(g, ms, lam)
        res = barycenter_fixed_point(g, ms, lam, init="multistart", seed=seed)
        assert res.objective == pytest.approx(best, abs=1e-6)
        # the brute-force barycenter attains its own value
        assert objective(g, ms, lam, bary)[0] == pytest.approx(best, abs=1e-12)


def test_quadratic_two_measure_barycenter_is_the_interpolant():
    g = make_generator("quadratic", 2)
    r = rng_for(4)
    a = random_cloud(g, r, 4, uniform=True)
    b = random_cloud(g, r, 4, uniform=True)
    for t in (0.5, 0.3):
        res = barycenter_fixed_point(g, [a, b], [1 - t, t], init="multistart")
        path = path_from_plan(g, a, b, "dual").at(t).points
        assert np.allclose(np.sort(res.support, axis=0), np.sort(path, axis=0), atol=1e-8)
        assert res.objective == pytest.approx(t * (1 - t) * bw_divergence(g, a, b)[0], abs=1e-10)


def test_explicit_start_and_weights():
    g = make_generator("quadratic", 1)
    mu = DiscreteMeasure.uniform([[0.0], [1.0]])
    far = np.array([[0.0], [0.5], [100.0]])
    res = barycenter_fixed_point(g, [mu], [1.0], init=far, weights=[0.5, 0.25, 0.25])
    assert res.converged
    assert np.all((res.support >= 0) & (res.support <= 1))
    assert res.objective <= res.objective_trace[0]


def test_input_validation():
    g = make_generator("quadratic", 1)
    mu = DiscreteMeasure.uniform([[0.0], [1.0]])
    with pytest.raises(InputError):
        barycenter_fixed_point(g, [mu, mu], [0.5, 0.6])
    with pytest.raises(InputError):
        barycenter_fixed_point(g, [mu], [1.0], init="corners")
    with pytest.raises(InputError):
        multimarginal_bruteforce(g, [DiscreteMeasure.uniform(np.zeros((5, 1)))] * 2, [0.5, 0.5])
