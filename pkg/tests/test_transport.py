import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linear_sum_assignment, linprog

from bwot.errors import ConvergenceError, InputError
from bwot.fixtures import random_cloud, rng_for
from bwot.generators import make_generator
from bwot.transport import (
    DiscreteMeasure,
    SolverConfig,
    assignment_bruteforce,
    bw_divergence,
    bw_via_mirror,
    cost_matrix,
    solve,
    solve_exact,
    solve_sinkhorn,
)


def lp_value(C, a, b):
    n, m = C.shape
    A = np.vstack([np.kron(np.eye(n), np.ones(m)), np.kron(np.ones(n), np.eye(m))])
    res = linprog(C.ravel(), A_eq=A, b_eq=np.r_[a, b], bounds=(0, None), method="highs")
    assert res.status == 0
    return res.fun


# measures ----------------------------------------------------------------------


def test_measure_validation():
    with pytest.raises(InputError):
        DiscreteMeasure([[0.0], [1.0]], [0.5, 0.6])
    with pytest.raises(InputError):
        DiscreteMeasure([[0.0], [1.0]], [1.5, -0.5])
    with pytest.raises(InputError):
        DiscreteMeasure([[0.0], [np.inf]], [0.5, 0.5])
    with pytest.raises(InputError):
        DiscreteMeasure(np.zeros((0, 2)), [])


def test_tiny_weights_are_dropped_with_warning():
    with pytest.warns(RuntimeWarning, match="dropping 1"):
        mu = DiscreteMeasure([[0.0], [1.0], [2.0]], [0.5, 0.5, 1e-17])
    assert mu.n == 2
    assert mu.weights.sum() == pytest.approx(1.0, abs=1e-15)


def test_measure_arrays_are_read_only():
    mu = DiscreteMeasure.uniform([[0.0], [1.0]])
    with pytest.raises(ValueError):
        mu.weights[0] = 1.0


# costs ------------------------------------------------------------------------


def test_cost_matrix_orientation():
    g = make_generator("logsumexp", 2)
    r = np.random.default_rng(2)
    mu = DiscreteMeasure.uniform(r.normal(size=(3, 2)))
    nu = DiscreteMeasure.uniform(r.normal(size=(4, 2)))
    C = cost_matrix(g, mu, nu)
    for i, j in itertools.product(range(3), range(4)):
        x, xp = mu.points[i], nu.points[j]
        expected = g.value(x) - g.value(xp) - g.grad(xp) @ (x - xp)
        assert C[i, j] == pytest.approx(expected, abs=1e-13)


# exact solver -----------------------------------------------------------------


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6])
def test_assignment_equals_bruteforce_including_permutation(n):
    for seed in range(15):
        C = np.random.default_rng(100 * n + seed).random((n, n))
        best, perm = assignment_bruteforce(C)
        plan = solve_exact(C, np.full(n, 1 / n), np.full(n, 1 / n))
        assert abs(plan.cost - best) <= 1e-12
        assert np.array_equal(plan.assignment, perm)


def test_four_by_four_spec_instance():
    C = np.random.default_rng(0).random((4, 4))
    values = [sum(C[i, p[i]] for i in range(4)) / 4 for p in itertools.permutations(range(4))]
    assert solve_exact(C, np.full(4, 0.25), np.full(4, 0.25)).cost == pytest.approx(min(values), abs=1e-15)


def test_ties_resolve_to_lexicographically_smallest_permutation():
    plan = solve_exact(np.ones((4, 4)), np.full(4, 0.25), np.full(4, 0.25))
    assert plan.assignment.tolist() == [0, 1, 2, 3]
    C = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [1.0, 1.0, 0.0]])
    assert solve_exact(C, np.full(3, 1 / 3), np.full(3, 1 / 3)).assignment.tolist() == [0, 1, 2]
    C = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert solve_exact(C, [0.5, 0.5], [0.5, 0.5]).assignment.tolist() == [1, 0]


def test_assignment_against_scipy():
    for seed in range(10):
        C = np.random.default_rng(seed).normal(size=(30, 30))
        r, c = linear_sum_assignment(C)
        plan = solve_exact(C, np.full(30, 1 / 30), np.full(30, 1 / 30))
        assert plan.cost == pytest.approx(C[r, c].mean(), abs=1e-12)


@pytest.mark.parametrize("seed", range(25))
def test_network_simplex_against_linprog(seed):
    r = np.random.default_rng(seed)
    n, m = r.integers(1, 10, size=2)
    C = r.random((n, m))
    a, b = r.dirichlet(np.ones(n)), r.dirichlet(np.ones(m))
    plan = solve_exact(C, a, b)
    assert plan.cost == pytest.approx(lp_value(C, a, b), abs=1e-10)
    assert plan.marginal_error() <= 1e-12
    assert np.all(plan.matrix >= -1e-15)
    assert plan.dual_gap <= 1e-9


def test_network_simplex_degenerate_marginals():
    # equal partial sums make the northwest-corner basis degenerate
    a = np.array([0.25, 0.25, 0.5])
    b = np.array([0.5, 0.25, 0.25])
    C = np.array([[3.0, 1.0, 2.0], [1.0, 3.0, 2.0], [2.0, 2.0, 0.0]])
    plan = solve_exact(C, a, b)
    assert plan.cost == pytest.approx(lp_value(C, a, b), abs=1e-12)


def test_marginal_mismatch_is_rejected():
    with pytest.raises(InputError):
        solve_exact(np.zeros((2, 2)), [0.5, 0.5], [0.2, 0.7])
    with pytest.raises(InputError):
        solve_exact(np.zeros((2, 3)), [0.5, 0.5], [0.5, 0.5])


# sinkhorn ---------------------------------------------------------------------


def test_sinkhorn_converges_to_exact(rng):
    C = rng.random((6, 6))
    w = np.full(6, 1 / 6)
    exact = solve_exact(C, w, w).cost
    for eps, tol in [(1e-3, 1e-2), (1e-4, 1e-3)]:
        plan = solve_sinkhorn(C, w, w, SolverConfig("sinkhorn", eps))
        assert abs(plan.cost - exact) <= tol
        assert plan.violation <= 1e-8


def test_sinkhorn_spec_four_by_four():
    C = np.random.default_rng(0).random((4, 4))
    w = np.full(4, 0.25)
    plan = solve_sinkhorn(C, w, w, SolverConfig("sinkhorn", 1e-3))
    assert abs(plan.cost - solve_exact(C, w, w).cost) <= 1e-2


def test_sinkhorn_transport_term_is_monotone_in_epsilon():
    for seed in range(5):
        r = rng_for(11, seed)
        g = make_generator("logsumexp", 2)
        mu, nu = random_cloud(g, r, 5), random_cloud(g, r, 6)
        C = cost_matrix(g, mu, nu)
        exact = solve_exact(C, mu.weights, nu.weights).cost
        big = solve_sinkhorn(C, mu.weights, nu.weights, SolverConfig("sinkhorn", 1e-2)).cost
        small = solve_sinkhorn(C, mu.weights, nu.weights, SolverConfig("sinkhorn", 1e-3)).cost
        assert big >= small - 1e-9
        assert small >= exact - 1e-6


def test_sinkhorn_objective_is_primal_entropic_value(rng):
    C = rng.random((4, 5))
    a, b = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(5))
    eps = 0.1
    plan = solve_sinkhorn(C, a, b, SolverConfig("sinkhorn", eps, marginal_tol=1e-12))
    P = plan.matrix
    direct = np.sum(P * C) + eps * np.sum(P * np.log(P / np.outer(a, b)))
    assert plan.objective == pytest.approx(direct, abs=1e-10)
    # the dual value f.a + g.b equals the objective at the optimum
    assert plan.f @ a + plan.g @ b == pytest.approx(plan.objective, abs=1e-9)


def test_sinkhorn_near_degenerate_instance():
    C = 1.0 - np.eye(5)
    w = np.full(5, 0.2)
    plan = solve_sinkhorn(C, w, w, SolverConfig("sinkhorn", 1e-4))
    assert plan.cost <= 1e-6


def test_sinkhorn_budget_exhaustion_raises():
    C = np.random.default_rng(1).random((8, 8))
    w = np.full(8, 1 / 8)
    with pytest.raises(ConvergenceError) as info:
        solve_sinkhorn(C, w, w, SolverConfig("sinkhorn", 1e-6, max_iters=3))
    assert info.value.violation is not None


def test_solver_config_validation():
    with pytest.raises(InputError):
        SolverConfig("sinkhorn")
    with pytest.raises(InputError):
        SolverConfig("greedy")
    with pytest.raises(InputError):
        SolverConfig(marginal_tol=0.0)


# BW divergence ------------------------------------------------------------------


def test_identical_measures_have_zero_divergence():
    for name in ("quadratic", "logsumexp", "diaglogistic", "sinhcube"):
        g = make_generator(name, 2)
        mu = random_cloud(g, rng_for(3, 1), 5)
        value, _ = bw_divergence(g, mu, mu)
        assert abs(value) <= 1e-14


def test_quadratic_is_half_squared_w2():
    g = make_generator("quadratic", 2)
    r = rng_for(5)
    mu, nu = random_cloud(g, r, 8), random_cloud(g, r, 8)
    sq = ((mu.points[:, None] - nu.points[None]) ** 2).sum(-1)
    assert bw_divergence(g, mu, nu)[0] == pytest.approx(0.5 * lp_value(sq, mu.weights, nu.weights), abs=1e-9)


def test_divergence_is_asymmetric_for_logsumexp():
    g = make_generator("logsumexp", 2)
    r = rng_for(7)
    mu, nu = random_cloud(g, r, 5), random_cloud(g, r, 5)
    assert abs(bw_divergence(g, mu, nu)[0] - bw_divergence(g, nu, mu)[0]) > 1e-6


@pytest.mark.parametrize("name", ["logsumexp", "diaglogistic", "sinhcube"])
def test_mirror_route_agrees(name):
    for seed in range(10):
        r = rng_for(13, seed)
        g = make_generator(name, 1 + seed % 3)
        mu, nu = random_cloud(g, r, 5), random_cloud(g, r, int(r.integers(2, 8)))
        assert abs(bw_divergence(g, mu, nu)[0] - bw_via_mirror(g, mu, nu)) <= 1e-8


def test_solve_dispatch():
    C = np.random.default_rng(0).random((3, 3))
    w = np.full(3, 1 / 3)
    assert solve(C, w, w).method in ("assignment", "network_simplex")
    assert solve(C, w, w, SolverConfig("sinkhorn", 1e-2)).method == "sinkhorn"


@given(
    n=st.integers(1, 6),
    m=st.integers(1, 6),
    seed=st.integers(0, 2 ** 32 - 1),
)
def test_exact_plans_are_feasible_and_optimal(n, m, seed):
    r = np.random.default_rng(seed)
    C = r.normal(size=(n, m))
    a, b = r.dirichlet(np.ones(n)), r.dirichlet(np.ones(m))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        plan = solve_exact(C, a, b)
    assert plan.marginal_error() <= 1e-12
    assert plan.cost == pytest.approx(lp_value(C, a, b), abs=1e-9)
