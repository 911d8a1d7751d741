"""Pythagorean relations, the Otto inner product and divergence expansions.

Velocity fields carry the chart their components live in. A primal-chart
velocity at x is a tangent vector in x-coordinates; a dual-chart velocity is
the same kind of object written in y = grad Omega(x) coordinates.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InputError
from .generators import canonical_divergence
from .transport import DiscreteMeasure, bw_divergence

__all__ = [
    "ConvexMap",
    "VelocityField",
    "ExpansionReport",
    "identity_map",
    "shift_map",
    "primal_tilt_map",
    "dual_tilt_map",
    "pythagorean_point",
    "otto_inner",
    "bw_pythagorean",
    "expansion_check",
    "skewness_integral",
    "fit_coefficients",
    "DEFAULT_T_GRID",
]

DEFAULT_T_GRID = np.geomspace(1e-2, 5e-2, 4)
_CODOMAINS = ("intoX", "intoY")


@dataclass(frozen=True)
class ConvexMap:
    """Gradient of a convex potential, tagged with the chart it lands in.

    ``intoY`` maps play the role of Df (primal points to dual coordinates) and
    ``intoX`` maps the role of Dh (dual points to primal coordinates).
    """

    label: str
    grad: object
    codomain_tag: str
    analytic_hess: object = None

    def __post_init__(self):
        if self.codomain_tag not in _CODOMAINS:
            raise InputError(f"codomain_tag must be one of {_CODOMAINS}")

    def __call__(self, z):
        return np.asarray(self.grad(np.asarray(z, dtype=float)), dtype=float)

    def check_codomain(self, gen, z):
        """Evaluate on ``z`` and verify the images lie in the declared domain."""
        out = self(z)
        if self.codomain_tag == "intoY":
            return gen.check_dual(out)
        return gen.check_primal(out)

    def monotonicity_gap(self, pts, rng, pairs=200):
        """Smallest <grad(u) - grad(v), u - v> over random pairs drawn from ``pts``."""
        pts = np.asarray(pts, dtype=float)
        i = rng.integers(0, len(pts), size=pairs)
        j = rng.integers(0, len(pts), size=pairs)
        u, v = pts[i], pts[j]
        return float(np.min(np.sum((self(u) - self(v)) * (u - v), axis=-1)))


@dataclass(frozen=True)
class VelocityField:
    base: DiscreteMeasure
    vectors: np.ndarray
    chart: str = "primal"

    def __post_init__(self):
        vec = np.array(self.vectors, dtype=float)
        if vec.ndim == 1:
            vec = vec[:, None]
        if vec.shape != self.base.points.shape:
            raise InputError(
                f"velocity field has shape {vec.shape}, base has {self.base.points.shape}"
            )
        if self.chart not in ("primal", "dual"):
            raise InputError("chart must be 'primal' or 'dual'")
        object.__setattr__(self, "vectors", vec)


def identity_map(gen, codomain_tag):
    """The mirror map itself (intoY) or its inverse (intoX)."""
    if codomain_tag == "intoY":
        return ConvexMap("grad Omega", gen.grad, "intoY", gen.hess)
    return ConvexMap("grad Omega*", gen.dual_grad, "intoX", gen.dual_hess)


def shift_map(gen, delta, codomain_tag="intoY"):
    """Mirror map plus a constant vector, the gradient of Omega(x) + delta.x."""
    delta = np.asarray(delta, dtype=float)
    base = identity_map(gen, codomain_tag)
    return ConvexMap(f"{base.label} + const", lambda z: base.grad(z) + delta, codomain_tag, base.analytic_hess)


def primal_tilt_map(gen, s, c, q):
    """Df for f(x) = (1 - s) Omega(x) + s (Omega(x + c) + q.x)."""
    c = np.asarray(c, dtype=float)
    q = np.asarray(q, dtype=float)

    def grad(x):
        return (1.0 - s) * gen.grad(x) + s * (gen.grad(x + c) + q)

    def hess(x):
        return (1.0 - s) * gen.hess(x) + s * gen.hess(x + c)

    return ConvexMap(f"primal tilt s={s:g}", grad, "intoY", hess)


def dual_tilt_map(gen, s, A, k):
    """Dh for h(y) = (1 - s) Omega*(y) + s Omega*(A y + k), A positive diagonal."""
    A = np.asarray(A, dtype=float)
    k = np.asarray(k, dtype=float)
    if np.any(A <= 0):
        raise InputError("A must be a positive diagonal")

    def grad(y):
        z = gen.check_dual(A * y + k)
        return (1.0 - s) * gen.dual_grad(y) + s * A * gen.dual_grad(z)

    def hess(y):
        z = A * y + k
        return (1.0 - s) * gen.dual_hess(y) + s * A[:, None] * gen.dual_hess(z) * A[None, :]

    return ConvexMap(f"dual tilt s={s:g}", grad, "intoX", hess)


# ---------------------------------------------------------------------------


def pythagorean_point(gen, p, a, b, t):
    """Both sides of the pointwise Pythagorean relation at time ``t``.

    gamma_t = x_p + t a is primal-straight and sigma_t has dual coordinates
    y_p + t b. Returns (B(p, sigma_t) + B(gamma_t, p) - B(gamma_t, sigma_t),
    t^2 a.b).
    """
    x = gen.check_primal(np.asarray(p, dtype=float))
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    y = gen.grad(x)
    xg = gen.check_primal(x + t * a)
    ys = gen.check_dual(y + t * b)
    lhs = (
        canonical_divergence(gen, x, ys)
        + canonical_divergence(gen, xg, y)
        - canonical_divergence(gen, xg, ys)
    )
    return float(lhs), float(t * t * np.dot(a, b))


def otto_inner(gen, u, v):
    """Weighted Hessian-metric pairing of two velocity fields on one base."""
    if u.base is not v.base and not (
        np.array_equal(u.base.points, v.base.points) and np.array_equal(u.base.weights, v.base.weights)
    ):
        raise InputError("velocity fields live on different base measures")
    w = u.base.weights
    x = gen.check_primal(u.base.points)
    if u.chart != v.chart:
        return float(w @ np.sum(u.vectors * v.vectors, axis=1))
    G = gen.hess(x) if u.chart == "primal" else gen.dual_hess(gen.grad(x))
    return float(w @ np.einsum("ni,nij,nj->n", u.vectors, G, v.vectors))


def _primal_velocity(gen, rho, Dh):
    y = gen.grad(rho.points)
    return Dh.check_codomain(gen, y) - rho.points


def _dual_velocity(gen, rho, Df):
    return Df.check_codomain(gen, rho.points) - gen.grad(rho.points)


def bw_pythagorean(gen, rho, Dh, Df, t, cfg=None):
    """Measure-level Pythagorean inequality along primal and dual interpolations.

    mu_t moves each atom on a primal line toward Dh(y_i) and nu_t on a dual
    line toward Df(x_i). The three divergences are exact OT solves; the right
    side is t^2 times the mixed-chart pairing of the initial velocities.
    """
    if Dh.codomain_tag != "intoX" or Df.codomain_tag != "intoY":
        raise InputError("bw_pythagorean needs Dh into X and Df into Y")
    x = gen.check_primal(rho.points)
    y = gen.grad(x)
    a = _primal_velocity(gen, rho, Dh)
    b = _dual_velocity(gen, rho, Df)
    mu_t = DiscreteMeasure(gen.check_primal(x + t * a), rho.weights)
    nu_t = DiscreteMeasure(gen.dual_grad(gen.check_dual(y + t * b)), rho.weights)
    lhs = (
        bw_divergence(gen, rho, nu_t, cfg)[0]
        + bw_divergence(gen, mu_t, rho, cfg)[0]
        - bw_divergence(gen, mu_t, nu_t, cfg)[0]
    )
    rhs = t * t * otto_inner(gen, VelocityField(rho, a, "primal"), VelocityField(rho, b, "dual"))
    return float(lhs), float(rhs)


def _cubic_form(T, d):
    return np.einsum("...ijk,...i,...j,...k->...", T, d, d, d)


def skewness_integral(gen, rho, Df):
    """sum_i w_i D^3 Omega*(y_i)[d_i, d_i, d_i] with d_i = Df(x_i) - y_i."""
    x = gen.check_primal(rho.points)
    y = gen.grad(x)
    d = Df.check_codomain(gen, x) - y
    if not np.any(d):
        return 0.0
    return float(rho.weights @ _cubic_form(gen.dual_third(y), d))


def fit_coefficients(t, values, powers=(2, 3, 4, 5)):
    """Solve values_k = sum_p c_p t_k^p exactly on len(powers) nodes.

    Columns are rescaled by t_max^p so the system stays well conditioned.
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    if t.size != len(powers):
        raise InputError(f"need exactly {len(powers)} nodes, got {t.size}")
    scale = t.max()
    V = np.stack([(t / scale) ** p for p in powers], axis=1)
    c = np.linalg.solve(V, values)
    return {p: c[k] / scale ** p for k, p in enumerate(powers)}


@dataclass
class ExpansionReport:
    kind: str
    t_grid: np.ndarray
    values: np.ndarray
    fitted_second: float
    predicted_second: float
    fitted_third: float
    predicted_third: float
    second_tol: float = 0.02
    third_tol: float = 0.1
    third_floor: float = 1e-8
    extra: dict = field(default_factory=dict)

    @property
    def second_ratio(self):
        if self.predicted_second == 0.0:
            return 1.0 if self.fitted_second == 0.0 else np.inf
        return self.fitted_second / self.predicted_second

    @property
    def third_ratio(self):
        if abs(self.predicted_third) <= self.third_floor:
            return None
        return self.fitted_third / self.predicted_third

    @property
    def second_pass(self):
        if self.predicted_second == 0.0:
            return abs(self.fitted_second) <= 1e-12
        return abs(self.second_ratio - 1.0) <= self.second_tol

    @property
    def third_pass(self):
        """None when the predicted coefficient is below the reporting floor."""
        r = self.third_ratio
        return None if r is None else abs(r - 1.0) <= self.third_tol


def expansion_check(gen, rho, cmap, kind, t_grid=None):
    """Fit the t^2 and t^3 coefficients of D(t) along an interpolation.

    ``kind='dual'`` takes an intoY map and D(t) = B(mu_0, nu_t);
    ``kind='primal'`` takes an intoX map and D(t) = B(mu_t, mu_0). Each D(t) is
    the Monge sum over atoms, which is optimal because the interpolating map
    is a convex gradient.
    """
    t_grid = DEFAULT_T_GRID if t_grid is None else np.sort(np.asarray(t_grid, dtype=float))
    x = gen.check_primal(rho.points)
    y = gen.grad(x)
    w = rho.weights
    vals = []
    if kind == "dual":
        if cmap.codomain_tag != "intoY":
            raise InputError("dual expansion needs a map into Y")
        d = _dual_velocity(gen, rho, cmap)
        for t in t_grid:
            yt = y + t * d
            if not np.all(gen.dual_contains(yt)):
                raise DomainError(f"dual interpolation leaves Y at t={t:g}")
            vals.append(w @ canonical_divergence(gen, x, yt))
        field_ = VelocityField(rho, d, "dual")
        pred3 = skewness_integral(gen, rho, cmap) / 6.0
    elif kind == "primal":
        if cmap.codomain_tag != "intoX":
            raise InputError("primal expansion needs a map into X")
        a = _primal_velocity(gen, rho, cmap)
        for t in t_grid:
            xt = x + t * a
            if not np.all(gen.primal_contains(xt)):
                raise DomainError(f"primal interpolation leaves X at t={t:g}")
            vals.append(w @ canonical_divergence(gen, xt, y))
        field_ = VelocityField(rho, a, "primal")
        # D^3 Omega(x)[a,a,a] = -D^3 Omega*(y)[b,b,b] with b = D^2 Omega(x) a
        b = np.einsum("nij,nj->ni", gen.hess(x), a)
        pred3 = -float(w @ _cubic_form(gen.dual_third(y), b)) / 6.0 if np.any(b) else 0.0
    else:
        raise InputError("kind must be 'primal' or 'dual'")
    vals = np.array(vals, dtype=float)
    coeffs = fit_coefficients(t_grid, vals)
    return ExpansionReport(
        kind=kind,
        t_grid=t_grid,
        values=vals,
        fitted_second=float(coeffs[2]),
        predicted_second=0.5 * otto_inner(gen, field_, field_),
        fitted_third=float(coeffs[3]),
        predicted_third=float(pred3),
    )
