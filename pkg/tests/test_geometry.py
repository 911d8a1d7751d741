import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bwot.errors import DomainError, InputError
from bwot.fixtures import random_cloud, random_maps, random_tangent, rng_for
from bwot.generators import CATALOG, make_generator
from bwot.geometry import (
    ConvexMap,
    VelocityField,
    bw_pythagorean,
    dual_tilt_map,
    expansion_check,
    fit_coefficients,
    identity_map,
    otto_inner,
    primal_tilt_map,
    pythagorean_point,
    shift_map,
    skewness_integral,
)
from bwot.transport import DiscreteMeasure, bw_divergence, cost_matrix

NAMES = list(CATALOG)


def permutation_bw(gen, mu, nu):
    """Brute-force BW value for uniform equal-size measures."""
    C = cost_matrix(gen, mu, nu)
    n = mu.n
    return min(C[np.arange(n), list(p)].sum() for p in itertools.permutations(range(n))) / n


# pointwise ---------------------------------------------------------------------


def test_pythagorean_point_trivial_cases():
    g = make_generator("logsumexp", 2)
    p, a, b = np.array([0.1, -0.4]), np.array([0.3, 0.2]), np.array([0.05, -0.02])
    assert pythagorean_point(g, p, a, b, 0.0) == (pytest.approx(0.0, abs=1e-15), 0.0)
    lhs, rhs = pythagorean_point(g, p, a, np.zeros(2), 0.6)
    assert lhs == pytest.approx(0.0, abs=1e-15) and rhs == 0.0


def test_pythagorean_point_logsumexp_fixed_seed():
    g = make_generator("logsumexp", 2)
    r = np.random.default_rng(7)
    p = r.normal(size=2)
    a, b = random_tangent(g, r, p)
    lhs, rhs = pythagorean_point(g, p, a, b, 0.7)
    assert lhs == pytest.approx(rhs, abs=1e-10)


@pytest.mark.parametrize("name", NAMES)
@given(seed=st.integers(0, 2 ** 32 - 1), t=st.floats(0.0, 1.0))
def test_pythagorean_point_holds_everywhere(name, seed, t):
    r = np.random.default_rng(seed)
    g = make_generator(name, int(r.integers(1, 4)))
    p = r.normal(size=g.dim)
    a, b = random_tangent(g, r, p)
    lhs, rhs = pythagorean_point(g, p, a, b, t)
    assert abs(lhs - rhs) <= 1e-9


def test_pythagorean_point_rejects_paths_leaving_the_domain():
    g = make_generator("diaglogistic", 1)
    with pytest.raises(DomainError):
        pythagorean_point(g, np.array([0.0]), np.array([0.1]), np.array([0.9]), 1.0)


# measure level -------------------------------------------------------------------


def test_identity_maps_give_zero_on_both_sides():
    g = make_generator("sinhcube", 2)
    rho = random_cloud(g, rng_for(1), 5)
    lhs, rhs = bw_pythagorean(g, rho, identity_map(g, "intoX"), identity_map(g, "intoY"), 0.5)
    assert lhs == pytest.approx(0.0, abs=1e-14)
    assert rhs == pytest.approx(0.0, abs=1e-14)


def test_map_tags_are_checked():
    g = make_generator("quadratic", 1)
    rho = DiscreteMeasure.uniform([[0.0], [1.0]])
    with pytest.raises(InputError):
        bw_pythagorean(g, rho, identity_map(g, "intoY"), identity_map(g, "intoY"), 0.5)
    with pytest.raises(InputError):
        ConvexMap("bad", lambda z: z, "intoZ")


@pytest.mark.parametrize("name", NAMES)
def test_measure_inequality_with_permutation_oracle(name):
    for seed in range(6):
        r = rng_for(21, seed)
        g = make_generator(name, 1 + seed % 2)
        rho = random_cloud(g, r, 5, 0.8, uniform=True)
        Dh, Df = random_maps(g, r, rho)
        t = 0.6
        lhs, rhs = bw_pythagorean(g, rho, Dh, Df, t)
        assert lhs >= rhs - 1e-7
        # recompute the three divergences by enumeration
        x, y = rho.points, g.grad(rho.points)
        a = Dh(y) - x
        b = Df(x) - y
        mu_t = DiscreteMeasure(x + t * a, rho.weights)
        nu_t = DiscreteMeasure(g.dual_grad(y + t * b), rho.weights)
        brute = permutation_bw(g, rho, nu_t) + permutation_bw(g, mu_t, rho) - permutation_bw(g, mu_t, nu_t)
        assert lhs == pytest.approx(brute, abs=1e-12)


def test_quadratic_regression_instance():
    g = make_generator("quadratic", 2)
    r = rng_for(6, 0)
    rho = random_cloud(g, r, 6, uniform=True)
    Dh = dual_tilt_map(g, 0.5, np.array([1.2, 0.8]), np.array([0.1, -0.2]))
    Df = primal_tilt_map(g, 0.4, np.array([0.3, -0.1]), np.array([0.05, 0.0]))
    lhs, rhs = bw_pythagorean(g, rho, Dh, Df, 0.5)
    assert lhs >= rhs - 1e-12


# Otto metric and expansions --------------------------------------------------------


def test_otto_inner_chart_consistency():
    g = make_generator("logsumexp", 2)
    rho = random_cloud(g, rng_for(2), 4)
    a = np.random.default_rng(0).normal(size=(4, 2))
    b = np.einsum("nij,nj->ni", g.hess(rho.points), a)
    u = VelocityField(rho, a, "primal")
    v = VelocityField(rho, b, "dual")
    # the same tangent vector written in either chart has the same length
    assert otto_inner(g, u, u) == pytest.approx(otto_inner(g, v, v), rel=1e-12)
    assert otto_inner(g, u, v) == pytest.approx(otto_inner(g, u, u), rel=1e-12)
    with pytest.raises(InputError):
        otto_inner(g, u, VelocityField(random_cloud(g, rng_for(3), 4), a))


def test_fit_coefficients_recovers_a_polynomial():
    t = np.geomspace(1e-2, 5e-2, 4)
    c = {2: 0.7, 3: -1.3, 4: 2.0, 5: 5.0}
    values = sum(v * t ** p for p, v in c.items())
    fitted = fit_coefficients(t, values)
    for p in c:
        assert fitted[p] == pytest.approx(c[p], rel=1e-9)
    with pytest.raises(InputError):
        fit_coefficients(t[:3], values[:3])


def test_single_atom_logsumexp_expansion_closed_form():
    g = make_generator("logsumexp", 1)
    x = np.log(3.0)
    y = 0.75
    rho = DiscreteMeasure([[x]], [1.0])
    rep = expansion_check(g, rho, shift_map(g, [0.1]), "dual")
    # Omega*(y) = y log y + (1 - y) log(1 - y)
    second = 0.5 * 0.01 * (1 / y + 1 / (1 - y))
    third = (-1 / y ** 2 + 1 / (1 - y) ** 2) * 1e-3 / 6
    assert rep.predicted_second == pytest.approx(second, rel=1e-12)
    assert rep.fitted_second == pytest.approx(second, rel=1e-6)
    assert rep.predicted_third == pytest.approx(third, rel=1e-12)
    assert rep.fitted_third == pytest.approx(third, rel=1e-3)
    assert rep.second_pass and rep.third_pass


def test_quadratic_expansion_is_exactly_second_order():
    g = make_generator("quadratic", 2)
    rho = random_cloud(g, rng_for(4), 5)
    Dh, Df = random_maps(g, rng_for(5), rho)
    for rep in (expansion_check(g, rho, Df, "dual"), expansion_check(g, rho, Dh, "primal")):
        assert rep.second_pass
        assert rep.third_ratio is None and rep.third_pass is None
        assert abs(rep.fitted_third) <= 1e-9
    assert skewness_integral(g, rho, Df) == 0.0


@pytest.mark.parametrize("name", ["logsumexp", "diaglogistic", "sinhcube"])
def test_expansion_orders_on_random_fixtures(name):
    for seed in range(10):
        r = rng_for(17, seed)
        g = make_generator(name, 1 + seed % 3)
        rho = random_cloud(g, r, 6, 0.7)
        Dh, Df = random_maps(g, r, rho)
        for rep in (expansion_check(g, rho, Df, "dual"), expansion_check(g, rho, Dh, "primal")):
            assert rep.second_pass
            assert rep.third_pass in (None, True)


def test_monge_evaluation_is_optimal():
    g = make_generator("logsumexp", 2)
    r = rng_for(8)
    rho = random_cloud(g, r, 6, 0.7)
    Dh, Df = random_maps(g, r, rho)
    t = 0.3
    rep = expansion_check(g, rho, Df, "dual", t_grid=[t, 0.31, 0.32, 0.33])
    nu_t = DiscreteMeasure(g.dual_grad(g.grad(rho.points) + t * (Df(rho.points) - g.grad(rho.points))), rho.weights)
    assert rep.values[0] == pytest.approx(bw_divergence(g, rho, nu_t)[0], abs=1e-12)


def test_expansion_kind_and_tag_must_agree():
    g = make_generator("quadratic", 1)
    rho = DiscreteMeasure.uniform([[0.0], [1.0]])
    with pytest.raises(InputError):
        expansion_check(g, rho, identity_map(g, "intoX"), "dual")
    with pytest.raises(InputError):
        expansion_check(g, rho, identity_map(g, "intoY"), "sideways")


def test_tilt_maps_are_monotone():
    g = make_generator("diaglogistic", 2)
    r = np.random.default_rng(3)
    pts = r.normal(size=(40, 2))
    Df = primal_tilt_map(g, 0.5, np.array([0.5, -1.0]), np.array([0.01, 0.02]))
    assert Df.monotonicity_gap(pts, r) >= 0.0
    Dh = dual_tilt_map(g, 0.5, np.array([0.9, 0.95]), np.array([0.02, 0.01]))
    assert Dh.monotonicity_gap(g.grad(pts), r) >= 0.0
