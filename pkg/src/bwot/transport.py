"""Discrete measures, Bregman cost matrices and optimal transport solvers."""
from collections import deque
from dataclasses import dataclass, field
import itertools
import logging
import math
import warnings

import numpy as np

from . import _kernels
from .errors import ConvergenceError, InputError

__all__ = [
    "DiscreteMeasure",
    "TransportPlan",
    "SolverConfig",
    "to_dual",
    "cost_matrix",
    "solve_exact",
    "solve_sinkhorn",
    "solve",
    "bw_divergence",
    "bw_via_mirror",
    "assignment_bruteforce",
    "sinkhorn_potentials",
    "WEIGHT_FLOOR",
]

log = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-15
_MASS_TOL = 1e-9


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted point cloud; ``points`` is n x d, ``weights`` sums to one.

    Atoms lighter than ``WEIGHT_FLOOR`` are dropped (with a warning) and the
    remaining weights renormalised.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise InputError(f"points must be a non-empty n x d array, got shape {pts.shape}")
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.shape[0] != pts.shape[0]:
            raise InputError(f"{pts.shape[0]} points but {w.shape[0]} weights")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(w))):
            raise InputError("points and weights must be finite")
        if np.any(w < 0):
            raise InputError("weights must be nonnegative")
        keep = w >= WEIGHT_FLOOR
        if not keep.all():
            if not keep.any():
                raise InputError("all weights are below the floor")
            warnings.warn(
                f"dropping {int((~keep).sum())} atom(s) with weight < {WEIGHT_FLOOR:g}",
                RuntimeWarning,
                stacklevel=3,
            )
            pts, w = pts[keep], w[keep]
        total = w.sum()
        if abs(total - 1.0) > _MASS_TOL:
            raise InputError(f"weights sum to {total!r}, expected 1")
        w = w / total
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        return cls(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]))

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return self.n

    def is_uniform(self):
        return bool(np.all(np.abs(self.weights - 1.0 / self.n) <= 1e-14))


@dataclass
class TransportPlan:
    matrix: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    cost: float
    method: str = "exact"
    objective: float = None
    f: np.ndarray = None
    g: np.ndarray = None
    iterations: int = 0
    violation: float = 0.0
    dual_gap: float = None
    assignment: np.ndarray = None
    info: dict = field(default_factory=dict)

    def marginal_error(self):
        P = self.matrix
        return max(
            float(np.abs(P.sum(axis=1) - self.row_marginal).max()),
            float(np.abs(P.sum(axis=0) - self.col_marginal).max()),
        )


@dataclass(frozen=True)
class SolverConfig:
    method: str = "exact"
    epsilon: float = None
    marginal_tol: float = 1e-9
    max_iters: int = 100_000
    eps_scaling: bool = True
    check_every: int = 10

    def __post_init__(self):
        if self.method not in ("exact", "sinkhorn"):
            raise InputError(f"unknown method {self.method!r}; use 'exact' or 'sinkhorn'")
        if self.method == "sinkhorn":
            if self.epsilon is None or not self.epsilon > 0:
                raise InputError("sinkhorn needs epsilon > 0")
        if not self.marginal_tol > 0:
            raise InputError("marginal_tol must be positive")
        if int(self.max_iters) < 1:
            raise InputError("max_iters must be at least 1")


def to_dual(gen, mu):
    """Push the primal cloud through the mirror map; weights are unchanged."""
    pts = gen.check_primal(mu.points)
    return DiscreteMeasure(gen.grad(pts), mu.weights)


def cost_matrix(gen, mu, nu):
    """C[i, j] = B(mu_i, nu_j): mu supplies the first Bregman argument."""
    x = gen.check_primal(mu.points)
    xp = gen.check_primal(nu.points)
    vx = gen.value(x)
    vxp = gen.value(xp)
    gxp = gen.grad(xp)
    # B(x, x') = Omega(x) - Omega(x') - <grad(x'), x> + <grad(x'), x'>
    return vx[:, None] - (vxp - np.sum(gxp * xp, axis=1))[None, :] - x @ gxp.T


# ---------------------------------------------------------------------------
# exact solvers


def _check_marginals(cost, a, b):
    C = np.asarray(cost, dtype=float)
    if C.ndim != 2:
        raise InputError("cost must be a matrix")
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if C.shape != (a.size, b.size):
        raise InputError(f"cost shape {C.shape} does not match marginals ({a.size}, {b.size})")
    if not np.all(np.isfinite(C)):
        raise InputError("cost matrix has non-finite entries")
    if np.any(a < 0) or np.any(b < 0):
        raise InputError("marginals must be nonnegative")
    if abs(a.sum() - b.sum()) > _MASS_TOL:
        raise InputError(f"infeasible marginals: masses {a.sum()!r} and {b.sum()!r} differ")
    return C, a, b


def solve_exact(cost, a, b, lex_ties=True):
    """Optimal plan of the discrete Kantorovich problem.

    Uniform square instances go to the shortest augmenting path assignment
    solver; with ``lex_ties`` the lexicographically smallest optimal
    permutation is returned. Everything else is solved by network simplex on
    the bipartite transportation graph.
    """
    C, a, b = _check_marginals(cost, a, b)
    n, m = C.shape
    uniform = (
        n == m
        and np.all(np.abs(a - 1.0 / n) <= 1e-14)
        and np.all(np.abs(b - 1.0 / m) <= 1e-14)
    )
    if uniform:
        return _solve_assignment(C, lex_ties)
    return _network_simplex(C, a, b)


def _solve_assignment(C, lex_ties):
    n = C.shape[0]
    cols, u, v = _kernels.assignment(np.ascontiguousarray(C))
    cols = np.asarray(cols, dtype=np.int64)
    u = np.asarray(u)
    v = np.asarray(v)
    if lex_ties and n > 1:
        cols = _lex_smallest(C, u, v, cols)
    P = np.zeros_like(C)
    P[np.arange(n), cols] = 1.0 / n
    total = math.fsum(C[np.arange(n), cols]) / n
    dual = (math.fsum(u) + math.fsum(v)) / n
    reduced_min = float((C - u[:, None] - v[None, :]).min())
    w = np.full(n, 1.0 / n)
    return TransportPlan(
        matrix=P,
        row_marginal=w,
        col_marginal=w.copy(),
        cost=total,
        method="assignment",
        f=u,
        g=v,
        dual_gap=abs(total - dual) + max(0.0, -reduced_min),
        assignment=cols,
    )


def _lex_smallest(C, u, v, cols):
    """Lexicographically smallest perfect matching on the tight edges.

    Any optimal assignment is complementary to the optimal duals (u, v), so the
    optimal set is exactly the perfect matchings of the tight-edge graph.
    """
    n = C.shape[0]
    scale = max(1.0, float(np.abs(C).max()))
    tight = (C - u[:, None] - v[None, :]) <= 1e-12 * scale
    owner = np.full(n, -1, dtype=np.int64)
    owner[cols] = np.arange(n)
    match = cols.copy()

    def augment(row, target, seen):
        # move `row` to a new tight column so that `target` ends up free
        for j in np.nonzero(tight[row])[0]:
            if seen[j]:
                continue
            seen[j] = True
            if j == target or augment(owner[j], target, seen):
                match[row] = j
                owner[j] = row
                return True
        return False

    for i in range(n):
        for j in np.nonzero(tight[i])[0]:
            if j >= match[i]:
                break
            k = owner[j]
            if k < i:
                continue
            seen = np.zeros(n, dtype=bool)
            seen[j] = True
            old = match[i]
            saved_match, saved_owner = match.copy(), owner.copy()
            owner[old] = -1
            if augment(k, old, seen):
                match[i] = j
                owner[j] = i
                break
            match[:], owner[:] = saved_match, saved_owner
    return match


def _northwest(a, b):
    n, m = a.size, b.size
    ra, rb = a.copy(), b.copy()
    flow = {}
    i = j = 0
    while True:
        x = max(0.0, min(ra[i], rb[j]))
        flow[(i, j)] = x
        ra[i] -= x
        rb[j] -= x
        if i == n - 1 and j == m - 1:
            break
        if (ra[i] <= rb[j] and i < n - 1) or j == m - 1:
            i += 1
        else:
            j += 1
    return flow


def _network_simplex(C, a, b, max_pivots=None):
    n, m = C.shape
    scale = max(1.0, float(np.abs(C).max()))
    tol = 1e-12 * scale
    flow = _northwest(a, b)
    max_pivots = max_pivots or 50 * (n + m) ** 2
    pivots = 0
    while True:
        adj = [[] for _ in range(n + m)]
        for (i, j) in flow:
            adj[i].append(n + j)
            adj[n + j].append(i)
        pot = np.full(n + m, np.nan)
        pot[0] = 0.0
        queue = deque([0])
        while queue:
            node = queue.popleft()
            for nb in adj[node]:
                if np.isnan(pot[nb]):
                    if node < n:
                        pot[nb] = C[node, nb - n] - pot[node]
                    else:
                        pot[nb] = C[nb, node - n] - pot[node]
                    queue.append(nb)
        u, v = pot[:n], pot[n:]
        R = C - u[:, None] - v[None, :]
        ie, je = np.unravel_index(int(np.argmin(R)), R.shape)
        if R[ie, je] >= -tol:
            break
        pivots += 1
        if pivots > max_pivots:
            raise ConvergenceError("network simplex exceeded its pivot budget", iterations=pivots)
        # path in the tree from column je back to row ie
        start, goal = n + je, ie
        parent = {start: None}
        queue = deque([start])
        while queue:
            node = queue.popleft()
            if node == goal:
                break
            for nb in adj[node]:
                if nb not in parent:
                    parent[nb] = node
                    queue.append(nb)
        path = [goal]
        while parent[path[-1]] is not None:
            path.append(parent[path[-1]])
        # path runs row ie -> ... -> column je; consecutive pairs are tree cells
        cells = []
        for p, q in zip(path[:-1], path[1:]):
            cells.append((p, q - n) if p < n else (q, p - n))
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(flow[c] for c in minus)
        leave = next(c for c in minus if flow[c] == theta)
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        flow[(ie, je)] = theta
        del flow[leave]
    P = np.zeros_like(C)
    for (i, j), x in flow.items():
        P[i, j] = max(x, 0.0)
    total = float(np.sum(P * C))
    dual = float(a @ u + b @ v)
    return TransportPlan(
        matrix=P,
        row_marginal=a,
        col_marginal=b,
        cost=total,
        method="network_simplex",
        f=u,
        g=v,
        iterations=pivots,
        dual_gap=abs(total - dual) + max(0.0, -float(R.min())),
    )


def assignment_bruteforce(cost):
    """Minimum over all permutations; the first minimiser in lexicographic order."""
    C = np.asarray(cost, dtype=float)
    n = C.shape[0]
    if C.shape != (n, n) or n > 8:
        raise InputError("brute force needs a square cost with n <= 8")
    rows = np.arange(n)
    best, best_perm = np.inf, None
    for perm in itertools.permutations(range(n)):
        val = math.fsum(C[rows, perm]) / n
        if val < best:
            best, best_perm = val, perm
    return best, np.array(best_perm)


# ---------------------------------------------------------------------------
# entropic solver


_SWEEP_CHUNK = 2000


def _newton_polish(C, log_a, log_b, eps, f, g, tol, max_steps=60):
    """Damped Newton ascent on the entropic dual, with g[-1] pinned.

    Sinkhorn sweeps contract slowly on nearly degenerate costs; a few Newton
    steps from a warm start close the remaining marginal gap.
    """
    a = np.exp(log_a)
    b = np.exp(log_b)
    n, m = C.shape

    def plan(f, g):
        return np.exp(log_a[:, None] + log_b[None, :] + (f[:, None] + g[None, :] - C) / eps)

    def dual(f, g, P):
        return a @ f + b @ g - eps * P.sum()

    P = plan(f, g)
    err = max(np.abs(P.sum(1) - a).max(), np.abs(P.sum(0) - b).max())
    steps = 0
    while err > tol and steps < max_steps:
        steps += 1
        r, c = P.sum(1), P.sum(0)
        grad = np.concatenate([a - r, (b - c)[:-1]])
        H = np.zeros((n + m - 1, n + m - 1))
        H[np.arange(n), np.arange(n)] = r
        H[n + np.arange(m - 1), n + np.arange(m - 1)] = c[:-1]
        H[:n, n:] = P[:, :-1]
        H[n:, :n] = P[:, :-1].T
        H /= eps
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        df = step[:n]
        dg = np.concatenate([step[n:], [0.0]])
        base = dual(f, g, P)
        slope = grad @ step
        alpha = 1.0
        while alpha > 1e-10:
            fn, gn = f + alpha * df, g + alpha * dg
            with np.errstate(over="ignore"):
                Pn = plan(fn, gn)
            if np.all(np.isfinite(Pn)) and dual(fn, gn, Pn) >= base + 1e-4 * alpha * slope - 1e-15 * abs(base):
                break
            alpha *= 0.5
        else:
            break
        f, g, P = fn, gn, Pn
        err = max(np.abs(P.sum(1) - a).max(), np.abs(P.sum(0) - b).max())
    return f, g, steps, float(err)


def sinkhorn_potentials(C, log_a, log_b, eps, f, g, tol, budget, check_every=10):
    """Warm-started potentials at a single epsilon.

    Runs a block of log-domain sweeps, then Newton polishing, then sweeps
    with whatever budget is left. Returns (f, g, iterations, newton_steps,
    violation); the caller decides what to do if violation > tol.
    """
    used = 0
    newton = 0
    f, g, it, err = _kernels.sinkhorn_log(
        C, log_a, log_b, eps, f, g, tol, max(1, min(budget, _SWEEP_CHUNK)), int(check_every)
    )
    used += int(it)
    if err > tol and used < budget:
        # a Newton step counts against the budget like a sweep
        f, g, newton, err = _newton_polish(
            C, log_a, log_b, eps, np.asarray(f), np.asarray(g), tol, min(60, budget - used)
        )
        used += newton
    if err > tol and used < budget:
        f, g, it, err = _kernels.sinkhorn_log(
            C, log_a, log_b, eps, f, g, tol, budget - used, int(check_every)
        )
        used += int(it)
    return np.asarray(f), np.asarray(g), used, newton, float(err)


def solve_sinkhorn(cost, a, b, cfg):
    """Log-domain Sinkhorn with epsilon-scaling warm starts.

    The plan is pi_ij = a_i b_j exp((f_i + g_j - C_ij) / eps); ``cost`` on the
    result is the transport term <pi, C> and ``objective`` adds
    eps * KL(pi | a x b).
    """
    C, a, b = _check_marginals(cost, a, b)
    if cfg.epsilon is None or not cfg.epsilon > 0:
        raise InputError("sinkhorn needs epsilon > 0")
    eps = float(cfg.epsilon)
    n, m = C.shape
    C = np.ascontiguousarray(C)
    log_a = np.log(np.maximum(a, 1e-300))
    log_b = np.log(np.maximum(b, 1e-300))
    f = np.zeros(n)
    g = np.zeros(m)
    budget = int(cfg.max_iters)
    used = 0
    schedule = [eps]
    if cfg.eps_scaling:
        spread = float(C.max() - C.min())
        e = max(spread, eps)
        stages = []
        while e > eps * 4.0:
            stages.append(e)
            e /= 4.0
        schedule = stages + [eps]
    newton_steps = 0
    for k, e in enumerate(schedule):
        last = k == len(schedule) - 1
        tol = cfg.marginal_tol if last else max(cfg.marginal_tol, 1e-3 * e)
        f, g, it, steps, err = sinkhorn_potentials(
            C, log_a, log_b, e, f, g, tol, budget - used, cfg.check_every
        )
        used += it
        newton_steps += steps
        if err > tol:
            raise ConvergenceError(
                f"sinkhorn did not reach marginal tolerance {tol:g} at epsilon {e:g} "
                f"within {budget} iterations (violation {err:.3e})",
                violation=float(err),
                iterations=used,
            )
    f = np.asarray(f)
    g = np.asarray(g)
    logP = log_a[:, None] + log_b[None, :] + (f[:, None] + g[None, :] - C) / eps
    P = np.exp(logP)
    transport = float(np.sum(P * C))
    ratio = (f[:, None] + g[None, :] - C) / eps
    kl = float(np.sum(P * ratio) - P.sum() + 1.0)
    violation = max(float(np.abs(P.sum(1) - a).max()), float(np.abs(P.sum(0) - b).max()))
    return TransportPlan(
        matrix=P,
        row_marginal=a,
        col_marginal=b,
        cost=transport,
        method="sinkhorn",
        objective=transport + eps * kl,
        f=f,
        g=g,
        iterations=used,
        violation=violation,
        info={"epsilon": eps, "stages": len(schedule), "newton_steps": newton_steps},
    )


def solve(cost, a, b, cfg=None):
    cfg = cfg or SolverConfig()
    if cfg.method == "sinkhorn":
        return solve_sinkhorn(cost, a, b, cfg)
    return solve_exact(cost, a, b)


def bw_divergence(gen, mu, nu, cfg=None):
    """BW divergence of ``mu`` to ``nu``: OT with cost B(x, x'), x from mu."""
    C = cost_matrix(gen, mu, nu)
    plan = solve(C, mu.weights, nu.weights, cfg)
    return plan.cost, plan


def bw_via_mirror(gen, mu, nu):
    """BW divergence through the re-centred Euclidean quadratic problem.

    Solves quadratic OT between mu's primal points and nu's dual points and
    adds the first moments of Omega - |.|^2/2 and Omega* - |.|^2/2.
    """
    x = gen.check_primal(mu.points)
    y = to_dual(gen, nu).points
    Q = 0.5 * np.sum((x[:, None, :] - y[None, :, :]) ** 2, axis=-1)
    plan = solve_exact(Q, mu.weights, nu.weights, lex_ties=False)
    tilde = gen.value(x) - 0.5 * np.sum(x * x, axis=1)
    tilde_star = gen.dual_value(y) - 0.5 * np.sum(y * y, axis=1)
    return plan.cost + float(mu.weights @ tilde) + float(nu.weights @ tilde_star)
