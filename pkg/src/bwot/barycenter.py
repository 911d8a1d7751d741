"""Free-support Bregman-Wasserstein barycenters."""
from dataclasses import dataclass, field
import itertools
import logging

import numpy as np

from .errors import InputError
from .transport import DiscreteMeasure, cost_matrix, solve_exact

__all__ = ["BarycenterResult", "barycenter_fixed_point", "multimarginal_bruteforce", "objective"]

log = logging.getLogger(__name__)


@dataclass
class BarycenterResult:
    support: np.ndarray
    weights: np.ndarray
    objective: float
    plans: list
    iterations: int
    objective_trace: list
    converged: bool = False
    events: list = field(default_factory=list)

    @property
    def measure(self):
        return DiscreteMeasure(self.support, self.weights)


def _check_lambdas(lambdas, m):
    lam = np.asarray(lambdas, dtype=float).reshape(-1)
    if lam.size != m:
        raise InputError(f"{m} measures but {lam.size} weights")
    if np.any(lam <= 0) or abs(lam.sum() - 1.0) > 1e-9:
        raise InputError("barycentric weights must be positive and sum to one")
    return lam / lam.sum()


def objective(gen, measures, lambdas, bary):
    """sum_i lambda_i BW(nu_i, bary) with exact plans; returns (value, plans)."""
    plans = [solve_exact(cost_matrix(gen, nu, bary), nu.weights, bary.weights) for nu in measures]
    return float(sum(l * p.cost for l, p in zip(lambdas, plans))), plans


def _sampled_support(measures, lam, k, rng):
    picks = [rng.choice(nu.n, size=k, p=nu.weights) for nu in measures]
    return sum(l * nu.points[idx] for l, nu, idx in zip(lam, measures, picks))


def barycenter_fixed_point(
    gen,
    measures,
    lambdas,
    k=None,
    weights=None,
    init="sample",
    seed=0,
    max_iters=200,
    tol=1e-9,
    restarts=8,
):
    """Alternate exact OT to the current support with arithmetic-mean updates.

    The right-argument Bregman centroid of a set of points is their weighted
    arithmetic mean, so each support update is an exact block minimisation
    and the objective trace cannot increase.

    ``init`` is 'sample' (lambda-mean of one atom drawn per measure), 'measure'
    (support of the heaviest-lambda input, needs matching size), an explicit
    k x d array, or 'multistart': every input support of size k plus
    ``restarts`` sampled starts, keeping the lowest objective.
    """
    if isinstance(init, str) and init == "multistart":
        lam = _check_lambdas(lambdas, len(measures))
        k = int(k or max(nu.n for nu in measures))
        starts = [nu.points for nu in measures if nu.n == k]
        seeds = np.random.SeedSequence(seed).spawn(restarts)
        runs = [
            barycenter_fixed_point(gen, measures, lam, k, weights, z, 0, max_iters, tol)
            for z in starts
        ] + [
            barycenter_fixed_point(gen, measures, lam, k, weights, "sample", sq, max_iters, tol)
            for sq in seeds
        ]
        best = min(runs, key=lambda r: r.objective)
        best.events.append(f"multistart: best of {len(runs)} runs")
        return best
    if not measures:
        raise InputError("need at least one measure")
    lam = _check_lambdas(lambdas, len(measures))
    d = measures[0].dim
    if any(nu.dim != d for nu in measures):
        raise InputError("all measures must share a dimension")
    for nu in measures:
        gen.check_primal(nu.points)
    rng = np.random.default_rng(seed)
    if isinstance(init, str):
        if init == "sample":
            k = int(k or max(nu.n for nu in measures))
            Z = _sampled_support(measures, lam, k, rng)
        elif init == "measure":
            ref = measures[int(np.argmax(lam))]
            k = int(k or ref.n)
            if k != ref.n:
                raise InputError("init='measure' needs k equal to that measure's size")
            Z = ref.points.copy()
        else:
            raise InputError(f"unknown init {init!r}")
    else:
        Z = np.array(init, dtype=float).reshape(-1, d)
        k = Z.shape[0]
    b = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, dtype=float)
    if b.shape != (k,) or np.any(b <= 0) or abs(b.sum() - 1.0) > 1e-9:
        raise InputError("barycenter weights must be k positive numbers summing to one")
    b = b / b.sum()

    trace, events = [], []
    converged = False
    it = 0
    for it in range(1, int(max_iters) + 1):
        value, plans = objective(gen, measures, lam, DiscreteMeasure(Z, b))
        trace.append(value)
        Znew = np.zeros_like(Z)
        for l, nu, plan in zip(lam, measures, plans):
            mass = plan.matrix.sum(axis=0)
            moved = plan.matrix.T @ nu.points
            empty = mass <= 1e-15
            if np.any(empty):
                heavy = nu.points[int(np.argmax(nu.weights))]
                for j in np.nonzero(empty)[0]:
                    events.append(f"iteration {it}: atom {j} received no mass; reset")
                    log.info("barycenter atom %d received no mass, reinitialising", j)
                    moved[j] = heavy
                    mass[j] = 1.0
            Znew += l * moved / mass[:, None]
        step = float(np.abs(Znew - Z).max())
        Z = Znew
        if step < tol:
            converged = True
            break
    value, plans = objective(gen, measures, lam, DiscreteMeasure(Z, b))
    trace.append(value)
    return BarycenterResult(
        support=Z,
        weights=b,
        objective=value,
        plans=plans,
        iterations=it,
        objective_trace=trace,
        converged=converged,
        events=events,
    )


def multimarginal_bruteforce(gen, measures, lambdas):
    """Exhaustive multimarginal solve for uniform equal-size inputs.

    Enumerates the (N!)^(m-1) matchings with the first measure held in place.
    Returns (value, permutations, barycenter) where the barycenter is the
    pushforward of the optimal matching under the lambda-weighted mean.
    """
    m = len(measures)
    lam = _check_lambdas(lambdas, m)
    N = measures[0].n
    if m > 3 or N > 4:
        raise InputError("brute force is limited to N <= 4 atoms and m <= 3 measures")
    if any(nu.n != N or not nu.is_uniform() for nu in measures):
        raise InputError("brute force needs uniform measures of equal size")
    pts = [gen.check_primal(nu.points) for nu in measures]
    ident = tuple(range(N))
    best, best_perms = np.inf, None
    for perms in itertools.product(itertools.permutations(range(N)), repeat=m - 1):
        perms = (ident,) + perms
        X = np.stack([p[list(s)] for p, s in zip(pts, perms)])  # m x N x d
        T = np.tensordot(lam, X, axes=1)
        cost = 0.0
        for l, Xi in zip(lam, X):
            vx = gen.value(Xi)
            vT = gen.value(T)
            cost += l * np.sum(vx - vT - np.sum(gen.grad(T) * (Xi - T), axis=1))
        cost /= N
        if cost < best:
            best, best_perms = float(cost), perms
    X = np.stack([p[list(s)] for p, s in zip(pts, best_perms)])
    bary = DiscreteMeasure.uniform(np.tensordot(lam, X, axes=1))
    return best, tuple(np.array(s) for s in best_perms), bary
