"""The invariant suite behind ``bwot check`` and the acceptance tests.

Every criterion returns a list of :class:`Check` records. A record carries the
measured quantity (``lhs``), what it is compared against (``rhs``), the
tolerance and the verdict, so a failure can be read without re-running.
"""
from dataclasses import dataclass, field
import itertools
import time

import numpy as np

from .barycenter import barycenter_fixed_point, multimarginal_bruteforce
from .expfam import likelihood_identity_check, loglik, match_mle, random_instance
from .fixtures import random_cloud, random_maps, random_tangent, rng_for
from .flows import FreeEnergySpec, GridMeasure1D, run_flow
from .generators import CATALOG, make_generator
from .geometry import bw_pythagorean, expansion_check, pythagorean_point
from .interp import (
    convexity_profile,
    entropy_density,
    interaction,
    internal1d,
    make_path,
    potential,
)
from .transport import (
    DiscreteMeasure,
    SolverConfig,
    assignment_bruteforce,
    bw_divergence,
    bw_via_mirror,
    cost_matrix,
    solve_exact,
    solve_sinkhorn,
)

__all__ = ["Check", "CRITERIA", "SUITES", "run_suite", "run_criterion"]

GENERATORS = tuple(CATALOG)
NON_QUADRATIC = tuple(g for g in GENERATORS if g != "quadratic")


@dataclass
class Check:
    name: str
    lhs: float
    rhs: float
    tolerance: float
    passed: bool
    detail: dict = field(default_factory=dict)

    def record(self):
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "tolerance": self.tolerance,
            "pass": bool(self.passed),
            **({"detail": self.detail} if self.detail else {}),
        }


def _at_most(name, value, tol, **detail):
    value = float(value)
    return Check(name, value, 0.0, tol, bool(value <= tol), detail)


def _dims(k):
    return 1 + k % 3


# 1 -----------------------------------------------------------------------


def generator_suite(seed):
    fy = rt = hinv = 0.0
    for name in GENERATORS:
        rng = rng_for(seed, 1, GENERATORS.index(name))
        for k in range(100):
            gen = make_generator(name, _dims(k))
            x = 1.5 * rng.standard_normal(gen.dim)
            y = gen.grad(x)
            fy = max(fy, abs(gen.value(x) + gen.dual_value(y) - x @ y))
            rt = max(rt, float(np.abs(gen.dual_grad(y) - x).max()))
            prod = gen.hess(x) @ gen.dual_hess(y)
            hinv = max(hinv, float(np.abs(prod - np.eye(gen.dim)).max()))
    return [
        _at_most("generators.fenchel_young", fy, 1e-9),
        _at_most("generators.mirror_round_trip", rt, 1e-8),
        _at_most("generators.hessian_inverse", hinv, 1e-7),
    ]


# 2, 3, 4 -------------------------------------------------------------------


def quadratic_reduction(seed):
    worst = 0.0
    for k in range(20):
        rng = rng_for(seed, 2, k)
        gen = make_generator("quadratic", _dims(k))
        mu = random_cloud(gen, rng, 8)
        nu = random_cloud(gen, rng, 8)
        value, _ = bw_divergence(gen, mu, nu)
        sq = np.sum((mu.points[:, None, :] - nu.points[None, :, :]) ** 2, axis=2)
        w2 = solve_exact(sq, mu.weights, nu.weights).cost
        worst = max(worst, abs(value - 0.5 * w2))
    return [_at_most("transport.quadratic_reduction", worst, 1e-9)]


def route_equivalence(seed):
    out = []
    for name in NON_QUADRATIC:
        worst = 0.0
        for k in range(20):
            rng = rng_for(seed, 3, GENERATORS.index(name), k)
            gen = make_generator(name, _dims(k))
            mu = random_cloud(gen, rng, int(rng.integers(3, 8)))
            nu = random_cloud(gen, rng, int(rng.integers(3, 8)))
            value, _ = bw_divergence(gen, mu, nu)
            worst = max(worst, abs(value - bw_via_mirror(gen, mu, nu)))
        out.append(_at_most(f"transport.route_equivalence[{name}]", worst, 1e-8))
    return out


def oracle_equivalence(seed):
    worst = 0.0
    mismatched = 0
    cases = 0
    for n in (4, 5, 6):
        for k in range(10):
            rng = rng_for(seed, 4, n, k)
            if k % 2:
                C = rng.random((n, n))
            else:
                gen = make_generator(GENERATORS[k // 2 % 4], 2)
                C = cost_matrix(gen, random_cloud(gen, rng, n, uniform=True), random_cloud(gen, rng, n, uniform=True))
            best, perm = assignment_bruteforce(C)
            plan = solve_exact(C, np.full(n, 1.0 / n), np.full(n, 1.0 / n))
            worst = max(worst, abs(plan.cost - best))
            mismatched += int(not np.array_equal(plan.assignment, perm))
            cases += 1
    return [
        _at_most("transport.oracle_equivalence", worst, 1e-12, cases=cases),
        _at_most("transport.oracle_permutation_mismatches", mismatched, 0, cases=cases),
    ]


# 5, 6, 7 -------------------------------------------------------------------


def pointwise_pythagorean(seed):
    out = []
    for name in GENERATORS:
        rng = rng_for(seed, 5, GENERATORS.index(name))
        worst = 0.0
        for k in range(200):
            gen = make_generator(name, _dims(k))
            p = 0.8 * rng.standard_normal(gen.dim)
            a, b = random_tangent(gen, rng, p)
            lhs, rhs = pythagorean_point(gen, p, a, b, rng.uniform(0.05, 1.0))
            worst = max(worst, abs(lhs - rhs))
        out.append(_at_most(f"geometry.pythagorean_point[{name}]", worst, 1e-9))
    return out


def measure_pythagorean(seed):
    out = []
    for name in GENERATORS:
        worst = np.inf
        for k in range(50):
            rng = rng_for(seed, 6, GENERATORS.index(name), k)
            gen = make_generator(name, _dims(k))
            rho = random_cloud(gen, rng, int(rng.integers(3, 7)), 0.8)
            Dh, Df = random_maps(gen, rng, rho)
            lhs, rhs = bw_pythagorean(gen, rho, Dh, Df, rng.uniform(0.1, 1.0))
            worst = min(worst, lhs - rhs)
        out.append(Check(f"geometry.pythagorean_measure[{name}]", worst, 0.0, 1e-7, bool(worst >= -1e-7)))
    return out


def expansion_orders(seed):
    out = []
    for name in ("logsumexp", "diaglogistic"):
        worst2 = worst3 = 0.0
        tested = 0
        for k in range(20):
            rng = rng_for(seed, 7, GENERATORS.index(name), k)
            gen = make_generator(name, _dims(k))
            rho = random_cloud(gen, rng, 6, 0.7)
            Dh, Df = random_maps(gen, rng, rho)
            for rep in (expansion_check(gen, rho, Df, "dual"), expansion_check(gen, rho, Dh, "primal")):
                worst2 = max(worst2, abs(rep.second_ratio - 1.0))
                if rep.third_ratio is not None:
                    tested += 1
                    worst3 = max(worst3, abs(rep.third_ratio - 1.0))
        out.append(_at_most(f"geometry.second_order[{name}]", worst2, 0.02))
        out.append(_at_most(f"geometry.third_order[{name}]", worst3, 0.1, tested=tested))
    return out


# 8 -------------------------------------------------------------------------


def sinkhorn_consistency(seed):
    out = []
    for eps, tol in ((1e-3, 1e-2), (1e-4, 1e-3)):
        worst = 0.0
        for k in range(8):
            rng = rng_for(seed, 8, k)
            gen = make_generator(GENERATORS[k % 4], 1 + k % 2)
            mu = random_cloud(gen, rng, 6)
            nu = random_cloud(gen, rng, 6)
            C = cost_matrix(gen, mu, nu)
            exact = solve_exact(C, mu.weights, nu.weights).cost
            ent = solve_sinkhorn(C, mu.weights, nu.weights, SolverConfig("sinkhorn", eps))
            worst = max(worst, abs(ent.cost - exact))
        out.append(_at_most(f"transport.sinkhorn_vs_exact[eps={eps:g}]", worst, tol))
    return out


# 9 -------------------------------------------------------------------------


def barycenters(seed):
    rise = 0.0
    gap = 0.0
    for k in range(24):
        rng = rng_for(seed, 9, k)
        gen = make_generator(GENERATORS[k % 4], 1 + k % 2)
        ms = [random_cloud(gen, rng, 3, uniform=True) for _ in range(2)]
        lam = rng.dirichlet(np.ones(2))
        value, _, _ = multimarginal_bruteforce(gen, ms, lam)
        res = barycenter_fixed_point(gen, ms, lam, init="multistart", seed=k)
        gap = max(gap, abs(res.objective - value))
        single = barycenter_fixed_point(gen, ms, lam, seed=k)
        for tr in (res.objective_trace, single.objective_trace):
            rise = max(rise, float(np.max(np.diff(tr), initial=0.0)))
    mid = 0.0
    gen = make_generator("quadratic", 2)
    for k in range(10):
        rng = rng_for(seed, 9, 100 + k)
        a = random_cloud(gen, rng, 4, uniform=True)
        b = random_cloud(gen, rng, 4, uniform=True)
        res = barycenter_fixed_point(gen, [a, b], [0.5, 0.5], init="multistart", seed=k)
        # the midpoint of the displacement interpolation costs a quarter of BW(a, b)
        mid = max(mid, abs(res.objective - 0.25 * bw_divergence(gen, a, b)[0]))
    return [
        _at_most("barycenter.trace_increase", rise, 1e-12),
        _at_most("barycenter.vs_multimarginal", gap, 1e-6),
        _at_most("barycenter.quadratic_midpoint", mid, 1e-6),
    ]


# 10 ------------------------------------------------------------------------


def exponential_family(seed):
    inst = random_instance(10, 2, 7)
    rng = rng_for(seed, 10)
    sigmas = [match_mle(inst)[0]] + [rng.permutation(10) for _ in range(10)]
    worst = max(abs(np.subtract(*likelihood_identity_check(inst, s))) for s in sigmas)
    misses = 0
    for n in range(1, 8):
        small = random_instance(n, 2, seed + n)
        sigma, value, _ = match_mle(small)
        best = max(loglik(small, p) for p in itertools.permutations(range(n)))
        misses += int(value < best - 1e-12)
    return [
        _at_most("expfam.likelihood_identity", worst, 1e-8),
        _at_most("expfam.mle_not_exhaustive_argmax", misses, 0),
    ]


# 11 ------------------------------------------------------------------------


def _convex_V(z):
    return 0.5 * np.sum(z * z, axis=-1) + np.exp(0.3 * z[..., 0])


def _convex_W(z):
    s = np.sum(z * z, axis=-1)
    return 0.5 * s + 0.1 * s * s


def displacement_convexity(seed):
    worst = {"potential": np.inf, "interaction": np.inf, "internal": np.inf}
    for k in range(20):
        rng = rng_for(seed, 11, k)
        name = GENERATORS[k % 4]
        gen = make_generator(name, 1 + k % 2)
        rho = random_cloud(gen, rng, 6, 0.8)
        if gen.dim == 1:
            order = np.argsort(rho.points[:, 0])
            rho = DiscreteMeasure(rho.points[order], rho.weights[order])
        Dh, Df = random_maps(gen, rng, rho)
        for kind, cmap in (("primal", Dh), ("dual", Df)):
            path = make_path(gen, rho, cmap, kind)
            funs = {"potential": potential(_convex_V, kind), "interaction": interaction(_convex_W, kind)}
            if gen.dim == 1:
                funs["internal"] = internal1d(entropy_density)
            for label, fun in funs.items():
                rep = convexity_profile(fun, path)
                worst[label] = min(worst[label], rep.min_second_difference / rep.scale)
    return [
        Check(f"interp.convexity[{label}]", v, 0.0, 1e-7, bool(v >= -1e-7))
        for label, v in worst.items()
    ]


# 12 ------------------------------------------------------------------------

JKO_GRID = np.linspace(-4.0, 4.0, 64)


def jko_fixture():
    spec = FreeEnergySpec(0.5 * JKO_GRID ** 2, 1.0)
    mu0 = GridMeasure1D.from_density(JKO_GRID, np.exp(-2.0 * (JKO_GRID - 2.0) ** 2))
    return spec, mu0


def jko_flows(seed):
    spec, mu0 = jko_fixture()
    out = []
    finals = {}
    for name in ("quadratic", "logsumexp"):
        res = run_flow(make_generator(name, 1), spec, mu0, 0.1, 1e-2, steps=200)
        finals[name] = res.trajectory[-1]
        out.append(_at_most(f"flows.dissipation_gap[{name}]", res.max_dissipation_gap, 1e-8))
        out.append(_at_most(f"flows.energy_increase[{name}]", res.max_energy_increase, 1e-6))
        out.append(_at_most(f"flows.kl_to_gibbs[{name}]", res.kl_to_gibbs[-1], 0.05))
    tv = float(np.abs(finals["quadratic"].probs - finals["logsumexp"].probs).sum())
    out.append(_at_most("flows.cross_generator_tv", tv, 0.05))
    return out


CRITERIA = {
    1: generator_suite,
    2: quadratic_reduction,
    3: route_equivalence,
    4: oracle_equivalence,
    5: pointwise_pythagorean,
    6: measure_pythagorean,
    7: expansion_orders,
    8: sinkhorn_consistency,
    9: barycenters,
    10: exponential_family,
    11: displacement_convexity,
    12: jko_flows,
}

SUITES = {
    "core": tuple(range(1, 12)),
    "full": tuple(range(1, 13)),
}


def run_criterion(number, seed=7):
    """Records for one criterion, each tagged with its number and wall time."""
    start = time.perf_counter()
    checks = CRITERIA[number](seed)
    elapsed = time.perf_counter() - start
    for c in checks:
        c.detail.setdefault("criterion", number)
    return checks, elapsed


def run_suite(suite="core", seed=7):
    if suite not in SUITES:
        raise KeyError(suite)
    checks = []
    for number in SUITES[suite]:
        checks.extend(run_criterion(number, seed)[0])
    return checks
