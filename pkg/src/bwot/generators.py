"""Bregman generators, mirror maps and the divergences they induce.

A generator bundles a strictly convex potential on an open convex primal
domain X with its Legendre conjugate on the dual domain Y = grad(X). Every
method takes arrays whose last axis has length ``dim`` and broadcasts over the
leading axes, so a single call evaluates a whole point cloud.
"""
import numpy as np

from . import _kernels
from .errors import DomainError, StencilError

__all__ = [
    "Generator",
    "Quadratic",
    "LogSumExp",
    "DiagLogistic",
    "SinhCube",
    "CATALOG",
    "make_generator",
    "bregman",
    "canonical_divergence",
    "dual_third_default",
    "primal_third_default",
    "DOMAIN_MARGIN",
]

# Points closer than this to the boundary of an open domain are rejected.
DOMAIN_MARGIN = 1e-12


def _fd_third(hess, z, h):
    """Symmetrised central difference of a Hessian field at a single point."""
    d = z.shape[-1]
    T = np.empty((d, d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        T[:, :, k] = (hess(z + e) - hess(z - e)) / (2.0 * h)
    return (
        T
        + T.transpose(0, 2, 1)
        + T.transpose(1, 0, 2)
        + T.transpose(1, 2, 0)
        + T.transpose(2, 0, 1)
        + T.transpose(2, 1, 0)
    ) / 6.0


class Generator:
    """Base class for a regular Bregman generator.

    Subclasses implement ``value``, ``grad``, ``hess``, ``dual_value``,
    ``dual_grad``, ``dual_hess`` and the two membership predicates. Third
    derivatives default to finite differences of the Hessians.
    """

    name = "generator"

    def __init__(self, dim):
        dim = int(dim)
        if dim < 1:
            raise ValueError("dimension must be a positive integer")
        self.dim = dim

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"

    # -- domains -----------------------------------------------------------
    def primal_contains(self, x):
        x = np.asarray(x, dtype=float)
        return np.all(np.isfinite(x), axis=-1)

    def dual_contains(self, y):
        y = np.asarray(y, dtype=float)
        return np.all(np.isfinite(y), axis=-1)

    def _check(self, z, contains, label):
        z = np.asarray(z, dtype=float)
        if z.shape[-1:] != (self.dim,):
            raise DomainError(
                f"{self.name}: expected trailing dimension {self.dim}, got shape {z.shape}"
            )
        flat = z.reshape(-1, self.dim)
        ok = contains(flat)
        if not np.all(ok):
            k = int(np.argmin(ok))
            coord = self._offending_coordinate(flat[k], label)
            where = f"point {k}" if z.ndim > 1 else "point"
            raise DomainError(
                f"{self.name}: {where} coordinate {coord} = {float(flat[k, coord])!r} "
                f"lies outside {label} domain"
            )
        return z

    def _offending_coordinate(self, pt, label):
        bad = ~np.isfinite(pt)
        return int(np.argmax(bad)) if bad.any() else 0

    def check_primal(self, x):
        return self._check(x, self.primal_contains, "the primal")

    def check_dual(self, y):
        return self._check(y, self.dual_contains, "the dual")

    # -- calculus ----------------------------------------------------------
    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def hess(self, x):
        raise NotImplementedError

    def dual_value(self, y):
        raise NotImplementedError

    def dual_grad(self, y):
        raise NotImplementedError

    def dual_hess(self, y):
        raise NotImplementedError

    def dual_third(self, y):
        return dual_third_default(self, y)

    def third(self, x):
        return primal_third_default(self, x)


class Quadratic(Generator):
    """Omega(x) = |x|^2 / 2 on X = Y = R^d."""

    name = "quadratic"

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum(x * x, axis=-1)

    def grad(self, x):
        return np.array(x, dtype=float)

    def hess(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.eye(self.dim), x.shape + (self.dim,)).copy()

    dual_value = value
    dual_grad = grad
    dual_hess = hess

    def dual_third(self, y):
        y = np.asarray(y, dtype=float)
        return np.zeros(y.shape + (self.dim, self.dim))

    def third(self, x):
        return self.dual_third(x)


class LogSumExp(Generator):
    """Cumulant of the categorical family: Omega(x) = log(1 + sum exp(x^i)).

    The dual domain is the open sub-simplex and the conjugate is the negative
    Shannon entropy of (1 - sum y, y^1, ..., y^d).
    """

    name = "logsumexp"

    def dual_contains(self, y):
        y = np.asarray(y, dtype=float)
        y0 = 1.0 - np.sum(y, axis=-1)
        return (
            np.all(np.isfinite(y), axis=-1)
            & np.all(y > DOMAIN_MARGIN, axis=-1)
            & (y0 > DOMAIN_MARGIN)
        )

    def _offending_coordinate(self, pt, label):
        if "dual" in label:
            low = np.nonzero(~(pt > DOMAIN_MARGIN))[0]
            if low.size:
                return int(low[0])
            return int(np.argmax(pt))
        return super()._offending_coordinate(pt, label)

    @staticmethod
    def _aug(x):
        x = np.asarray(x, dtype=float)
        zero = np.zeros(x.shape[:-1] + (1,))
        return np.concatenate([zero, x], axis=-1)

    def value(self, x):
        z = self._aug(x)
        mx = z.max(axis=-1)
        return mx + np.log(np.sum(np.exp(z - mx[..., None]), axis=-1))

    def grad(self, x):
        z = self._aug(x)
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return (e / e.sum(axis=-1, keepdims=True))[..., 1:]

    def hess(self, x):
        y = self.grad(x)
        return _diag(y) - y[..., :, None] * y[..., None, :]

    def dual_value(self, y):
        y = np.asarray(y, dtype=float)
        y0 = 1.0 - y.sum(axis=-1)
        return np.sum(y * np.log(y), axis=-1) + y0 * np.log(y0)

    def dual_grad(self, y):
        y = np.asarray(y, dtype=float)
        y0 = 1.0 - y.sum(axis=-1, keepdims=True)
        return np.log(y) - np.log(y0)

    def dual_hess(self, y):
        y = np.asarray(y, dtype=float)
        y0 = 1.0 - y.sum(axis=-1)
        ones = np.ones(y.shape + (self.dim,))
        return _diag(1.0 / y) + ones / y0[..., None, None]

    def dual_third(self, y):
        y = np.asarray(y, dtype=float)
        y0 = 1.0 - y.sum(axis=-1)
        d = self.dim
        T = np.ones(y.shape + (d, d)) / (y0 ** 2)[..., None, None, None]
        idx = np.arange(d)
        T[..., idx, idx, idx] -= 1.0 / y ** 2
        return T


class DiagLogistic(Generator):
    """Separable softplus potential whose mirror map is the logistic sigmoid.

    Omega(x) = sum log(1 + exp(x^i)); Y = (0, 1)^d and the conjugate is the sum
    of binary negative entropies.
    """

    name = "diaglogistic"

    def dual_contains(self, y):
        y = np.asarray(y, dtype=float)
        return np.all(np.isfinite(y) & (y > DOMAIN_MARGIN) & (y < 1.0 - DOMAIN_MARGIN), axis=-1)

    def _offending_coordinate(self, pt, label):
        if "dual" in label:
            bad = ~((pt > DOMAIN_MARGIN) & (pt < 1.0 - DOMAIN_MARGIN))
            return int(np.argmax(bad))
        return super()._offending_coordinate(pt, label)

    def value(self, x):
        return np.sum(np.logaddexp(0.0, np.asarray(x, dtype=float)), axis=-1)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-np.logaddexp(0.0, -x))

    def hess(self, x):
        s = self.grad(x)
        return _diag(s * (1.0 - s))

    def dual_value(self, y):
        y = np.asarray(y, dtype=float)
        return np.sum(y * np.log(y) + (1.0 - y) * np.log1p(-y), axis=-1)

    def dual_grad(self, y):
        y = np.asarray(y, dtype=float)
        return np.log(y) - np.log1p(-y)

    def dual_hess(self, y):
        y = np.asarray(y, dtype=float)
        return _diag(1.0 / y + 1.0 / (1.0 - y))

    def dual_third(self, y):
        y = np.asarray(y, dtype=float)
        d = self.dim
        T = np.zeros(y.shape + (d, d))
        idx = np.arange(d)
        T[..., idx, idx, idx] = -1.0 / y ** 2 + 1.0 / (1.0 - y) ** 2
        return T


class SinhCube(Generator):
    """Cumulant of the exponential family tilting the uniform law on (-1, 1)^d.

    Omega(theta) = sum log(sinh(theta^i) / theta^i). The mirror map is the
    Langevin function coordinatewise; its inverse has no closed form and is
    computed by a safeguarded Newton iteration.
    """

    name = "sinhcube"

    newton_tol = 1e-12
    newton_max_iter = 100

    def dual_contains(self, y):
        y = np.asarray(y, dtype=float)
        return np.all(np.isfinite(y) & (np.abs(y) < 1.0 - DOMAIN_MARGIN), axis=-1)

    def _offending_coordinate(self, pt, label):
        if "dual" in label:
            return int(np.argmax(~(np.abs(pt) < 1.0 - DOMAIN_MARGIN)))
        return super()._offending_coordinate(pt, label)

    @staticmethod
    def _log_sinhc(t):
        t = np.asarray(t, dtype=float)
        at = np.abs(t)
        out = np.empty_like(at)
        small = at < 1e-2
        t2 = at[small] ** 2
        out[small] = t2 / 6.0 - t2 ** 2 / 180.0 + t2 ** 3 / 2835.0
        ab = at[~small]
        out[~small] = ab + np.log1p(-np.exp(-2.0 * ab)) - np.log(2.0) - np.log(ab)
        return out

    def value(self, x):
        return np.sum(self._log_sinhc(x), axis=-1)

    def grad(self, x):
        return _kernels._langevin_np(np.asarray(x, dtype=float))

    def hess(self, x):
        return _diag(_kernels._dlangevin_np(np.asarray(x, dtype=float)))

    def dual_grad(self, y):
        y = np.asarray(y, dtype=float)
        flat = np.ascontiguousarray(y.reshape(-1))
        theta, status = _kernels.inv_langevin(flat, self.newton_tol, self.newton_max_iter)
        if status:
            raise DomainError("sinhcube: inverse Langevin root-finding did not converge")
        return np.asarray(theta).reshape(y.shape)

    def dual_value(self, y):
        y = np.asarray(y, dtype=float)
        theta = self.dual_grad(y)
        return np.sum(theta * y, axis=-1) - self.value(theta)

    def dual_hess(self, y):
        theta = self.dual_grad(y)
        return _diag(1.0 / _kernels._dlangevin_np(theta))

    def dual_third(self, y):
        y = np.asarray(y, dtype=float)
        theta = self.dual_grad(y)
        d1 = _kernels._dlangevin_np(theta)
        d2 = _d2langevin(theta)
        d = self.dim
        T = np.zeros(y.shape + (d, d))
        idx = np.arange(d)
        T[..., idx, idx, idx] = -d2 / d1 ** 3
        return T

    def third(self, x):
        x = np.asarray(x, dtype=float)
        d = self.dim
        T = np.zeros(x.shape + (d, d))
        idx = np.arange(d)
        T[..., idx, idx, idx] = _d2langevin(x)
        return T


def _d2langevin(t):
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    at = np.abs(t)
    small = at < 0.1
    big = at > 40.0
    mid = ~small & ~big
    ts = t[small]
    t2 = ts * ts
    out[small] = ts * (
        -2.0 / 15.0 + t2 * (8.0 / 189.0 + t2 * (-2.0 / 225.0 + t2 * (16.0 / 10395.0 - t2 * 2764.0 / 11609325.0)))
    )
    tb = t[big]
    out[big] = -2.0 / tb ** 3
    tm = t[mid]
    out[mid] = 2.0 * np.cosh(tm) / np.sinh(tm) ** 3 - 2.0 / tm ** 3
    return out


def _diag(v):
    v = np.asarray(v, dtype=float)
    d = v.shape[-1]
    out = np.zeros(v.shape + (d,))
    idx = np.arange(d)
    out[..., idx, idx] = v
    return out


CATALOG = {
    "quadratic": Quadratic,
    "logsumexp": LogSumExp,
    "diaglogistic": DiagLogistic,
    "sinhcube": SinhCube,
}


def make_generator(name, dim=1):
    """Instantiate a catalog generator by name."""
    try:
        cls = CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown generator {name!r}; choose from {sorted(CATALOG)}") from None
    return cls(dim)


# ---------------------------------------------------------------------------
# Divergences


def bregman(gen, x, xp):
    """Bregman divergence Omega(x) - Omega(x') - <grad Omega(x'), x - x'>.

    Broadcasts over leading axes of ``x`` and ``xp``.
    """
    x = gen.check_primal(x)
    xp = gen.check_primal(xp)
    return gen.value(x) - gen.value(xp) - np.sum(gen.grad(xp) * (x - xp), axis=-1)


def canonical_divergence(gen, x_p, y_q):
    """Self-dual form Omega(x_p) + Omega*(y_q) - <x_p, y_q>.

    Mixes the primal coordinates of the first point with the dual coordinates
    of the second; equals ``bregman(gen, x_p, dual_grad(y_q))``.
    """
    x_p = gen.check_primal(x_p)
    y_q = gen.check_dual(y_q)
    return gen.value(x_p) + gen.dual_value(y_q) - np.sum(x_p * y_q, axis=-1)


def _default_step(z):
    return 1e-4 * max(1.0, float(np.max(np.abs(z))))


def dual_third_default(gen, y, h=None):
    """Third derivative of Omega* by central differences of ``dual_hess``.

    Operates on a single dual point; the result is symmetrised over all index
    permutations. Raises :class:`StencilError` if the stencil leaves Y.
    """
    y = gen.check_dual(y)
    if y.ndim != 1:
        return np.stack([dual_third_default(gen, yi, h) for yi in y.reshape(-1, gen.dim)]).reshape(
            y.shape + (gen.dim, gen.dim)
        )
    h = _default_step(y) if h is None else float(h)
    _check_stencil(gen.dual_contains, y, h, "dual")
    return _fd_third(gen.dual_hess, y, h)


def primal_third_default(gen, x, h=None):
    """Third derivative of Omega by central differences of ``hess``."""
    x = gen.check_primal(x)
    if x.ndim != 1:
        return np.stack([primal_third_default(gen, xi, h) for xi in x.reshape(-1, gen.dim)]).reshape(
            x.shape + (gen.dim, gen.dim)
        )
    h = _default_step(x) if h is None else float(h)
    _check_stencil(gen.primal_contains, x, h, "primal")
    return _fd_third(gen.hess, x, h)


def _check_stencil(contains, z, h, label):
    d = z.shape[-1]
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        if not (contains(z + e) and contains(z - e)):
            raise StencilError(
                f"finite-difference stencil of width {h:g} leaves the {label} domain along coordinate {k}"
            )
