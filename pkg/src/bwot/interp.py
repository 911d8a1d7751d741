"""Primal and dual displacement interpolations and energies along them."""
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InputError
from .transport import DiscreteMeasure, cost_matrix, solve_exact

__all__ = [
    "InterpolationPath",
    "EnergyFunctional",
    "ConvexityReport",
    "make_path",
    "path_from_plan",
    "evaluate_energy",
    "convexity_profile",
    "potential",
    "interaction",
    "internal1d",
    "entropy_density",
]


@dataclass(frozen=True)
class InterpolationPath:
    """Per-atom straight lines in the primal (x) or dual (y) chart.

    ``targets`` holds the time-one positions in the path's own chart.
    ``derivative_1d`` (1-D only) is the x-derivative of the target position.
    """

    kind: str
    gen: object
    base: DiscreteMeasure
    targets: np.ndarray
    derivative_1d: np.ndarray = None
    info: dict = field(default_factory=dict)

    def chart_at(self, t):
        """Atom positions at time ``t`` in the path's chart."""
        start = self.base.points if self.kind == "primal" else self.gen.grad(self.base.points)
        return (1.0 - t) * start + t * self.targets

    def at(self, t):
        """The interpolated measure at time ``t`` in primal coordinates."""
        z = self.chart_at(t)
        if self.kind == "primal":
            pts = self.gen.check_primal(z)
        else:
            pts = self.gen.dual_grad(self.gen.check_dual(z))
        return DiscreteMeasure(pts, self.base.weights)

    def dual_at(self, t):
        z = self.chart_at(t)
        if self.kind == "dual":
            return self.gen.check_dual(z)
        return self.gen.grad(self.gen.check_primal(z))

    def jacobian_1d(self, t):
        """x-derivative of the chart position at time ``t`` for each atom."""
        if self.base.dim != 1:
            raise InputError("the 1-D Jacobian needs a one-dimensional base")
        x = self.base.points[:, 0]
        if np.any(np.diff(x) <= 0):
            raise InputError("1-D base points must be strictly increasing")
        start = np.ones_like(x) if self.kind == "primal" else self.gen.hess(self.base.points)[:, 0, 0]
        deriv = self.derivative_1d
        if deriv is None:
            if x.size < 2:
                raise InputError("need two atoms to difference the map")
            deriv = np.gradient(self.targets[:, 0], x)
        return (1.0 - t) * start + t * deriv


def make_path(gen, mu0, cmap, kind):
    """Interpolation starting at ``mu0`` driven by a convex-gradient map.

    Dual paths take Df (into Y) evaluated at x; primal paths take Dh (into X)
    evaluated at y = grad Omega(x).
    """
    x = gen.check_primal(mu0.points)
    if kind == "dual":
        if cmap.codomain_tag != "intoY":
            raise InputError("a dual path needs a map into Y")
        targets = cmap.check_codomain(gen, x)
    elif kind == "primal":
        if cmap.codomain_tag != "intoX":
            raise InputError("a primal path needs a map into X")
        targets = cmap.check_codomain(gen, gen.grad(x))
    else:
        raise InputError("kind must be 'primal' or 'dual'")
    deriv = None
    if gen.dim == 1 and cmap.analytic_hess is not None:
        if kind == "dual":
            deriv = np.asarray(cmap.analytic_hess(x))[:, 0, 0]
        else:
            y = gen.grad(x)
            deriv = np.asarray(cmap.analytic_hess(y))[:, 0, 0] * gen.hess(x)[:, 0, 0]
    return InterpolationPath(kind, gen, mu0, targets, deriv)


def path_from_plan(gen, mu0, mu1, kind):
    """Interpolation toward ``mu1`` built from an exact OT plan.

    Each atom of ``mu0`` heads to the barycentric projection of its row of the
    plan. When the plan splits mass this is an approximation, flagged in
    ``info['approximate']``.
    """
    if kind == "dual":
        plan = solve_exact(cost_matrix(gen, mu0, mu1), mu0.weights, mu1.weights)
        P = plan.matrix
        dest = gen.grad(mu1.points)
    elif kind == "primal":
        plan = solve_exact(cost_matrix(gen, mu1, mu0), mu1.weights, mu0.weights)
        P = plan.matrix.T
        dest = mu1.points
    else:
        raise InputError("kind must be 'primal' or 'dual'")
    targets = (P @ dest) / mu0.weights[:, None]
    split = int(np.sum(P > 1e-14 * P.max(), axis=1).max()) > 1
    return InterpolationPath(
        kind, gen, mu0, targets, None, {"approximate": split, "plan_cost": plan.cost}
    )


@dataclass(frozen=True)
class EnergyFunctional:
    """Potential, interaction or 1-D internal energy.

    ``V`` and ``W`` read coordinates in ``chart``; ``U`` is a density function
    with U(0) = 0. The internal energy uses Lebesgue measure in the chart of
    the path it is evaluated on.
    """

    kind: str
    V: object = None
    W: object = None
    U: object = None
    chart: str = "primal"

    def __post_init__(self):
        need = {"potential": self.V, "interaction": self.W, "internal1d": self.U}
        if self.kind not in need:
            raise InputError(f"unknown energy kind {self.kind!r}")
        if need[self.kind] is None:
            raise InputError(f"{self.kind} energy needs its function")
        if self.chart not in ("primal", "dual"):
            raise InputError("chart must be 'primal' or 'dual'")


def potential(V, chart="primal"):
    return EnergyFunctional("potential", V=V, chart=chart)


def interaction(W, chart="primal"):
    return EnergyFunctional("interaction", W=W, chart=chart)


def internal1d(U):
    return EnergyFunctional("internal1d", U=U)


def entropy_density(r):
    r = np.asarray(r, dtype=float)
    return np.where(r > 0, r * np.log(np.where(r > 0, r, 1.0)), 0.0)


def _cell_density(x, w):
    """Density of a 1-D atomic measure smeared over its Voronoi cells."""
    if x.size < 2:
        raise InputError("internal energy needs at least two atoms")
    mid = 0.5 * (x[1:] + x[:-1])
    width = np.empty_like(x)
    width[1:-1] = mid[1:] - mid[:-1]
    width[0] = 2.0 * (mid[0] - x[0])
    width[-1] = 2.0 * (x[-1] - mid[-1])
    return w / width


def _coords(path, t, chart):
    return path.dual_at(t) if chart == "dual" else path.at(t).points


def evaluate_energy(fun, path, t):
    w = path.base.weights
    if fun.kind == "potential":
        z = _coords(path, t, fun.chart)
        return float(w @ np.asarray(fun.V(z), dtype=float))
    if fun.kind == "interaction":
        z = _coords(path, t, fun.chart)
        diff = z[:, None, :] - z[None, :, :]
        return float(w @ np.asarray(fun.W(diff), dtype=float) @ w)
    x = path.base.points[:, 0]
    jac = path.jacobian_1d(t)
    if np.any(np.abs(jac) <= 1e-300) or not np.all(np.isfinite(jac)):
        raise DomainError(f"map derivative vanishes at t={t:g}; density is singular")
    sigma = _cell_density(x, w)
    rho = sigma / np.abs(jac)
    return float(w @ (np.asarray(fun.U(rho), dtype=float) / rho))


@dataclass
class ConvexityReport:
    t_grid: np.ndarray
    values: np.ndarray
    second_differences: np.ndarray
    scale: float
    tol: float = 1e-7

    @property
    def min_second_difference(self):
        return float(self.second_differences.min())

    @property
    def passed(self):
        return self.min_second_difference >= -self.tol * self.scale


def convexity_profile(fun, path, t_grid=None, tol=1e-7):
    """Central second differences of t -> energy on a uniform grid."""
    t_grid = np.linspace(0.0, 1.0, 11) if t_grid is None else np.asarray(t_grid, dtype=float)
    if t_grid.size < 5:
        raise InputError("t_grid needs at least five points")
    steps = np.diff(t_grid)
    if np.any(steps <= 0) or np.ptp(steps) > 1e-12 * max(1.0, abs(steps[0])):
        raise InputError("t_grid must be uniform and increasing")
    if t_grid[0] < 0 or t_grid[-1] > 1:
        raise InputError("t_grid must lie in [0, 1]")
    vals = np.array([evaluate_energy(fun, path, t) for t in t_grid])
    d2 = vals[:-2] - 2.0 * vals[1:-1] + vals[2:]
    scale = max(1.0, float(np.abs(vals).max()))
    return ConvexityReport(t_grid, vals, d2, scale, tol)
