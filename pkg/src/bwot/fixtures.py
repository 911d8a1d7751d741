"""Seeded random instances shared by the check suite, the tests and the CLI."""
import numpy as np

from .errors import DomainError
from .geometry import dual_tilt_map, primal_tilt_map
from .transport import DiscreteMeasure

__all__ = ["rng_for", "random_cloud", "random_maps", "random_tangent"]


def rng_for(seed, *stream):
    """Independent generator for ``stream`` derived from one root seed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(stream)))


def random_cloud(gen, rng, n, scale=1.0, uniform=False):
    """n primal points with Gaussian coordinates; Dirichlet or uniform weights."""
    pts = scale * rng.standard_normal((n, gen.dim))
    if uniform:
        return DiscreteMeasure.uniform(pts)
    w = rng.dirichlet(np.full(n, 2.0))
    w = np.maximum(w, 1e-3)
    return DiscreteMeasure(pts, w / w.sum())


def random_maps(gen, rng, rho, strength=0.5, attempts=30):
    """A convex-gradient pair (Dh into X, Df into Y) valid on rho's atoms.

    Parameters shrink geometrically until every image lands in its domain.
    """
    d = gen.dim
    s1, s2 = rng.uniform(0.2, 0.8, size=2)
    c = rng.standard_normal(d)
    q = 0.1 * rng.standard_normal(d)
    logA = 0.3 * rng.standard_normal(d)
    k = 0.1 * rng.standard_normal(d)
    y = gen.grad(rho.points)
    for _ in range(attempts):
        Df = primal_tilt_map(gen, s1, strength * c, strength * q)
        Dh = dual_tilt_map(gen, s2, np.exp(strength * logA), strength * k)
        if np.all(gen.dual_contains(Df(rho.points))) and np.all(gen.dual_contains(np.exp(strength * logA) * y + strength * k)):
            return Dh, Df
        strength *= 0.5
    raise DomainError("could not build in-domain test maps")


def random_tangent(gen, rng, x, size=0.3, attempts=30):
    """Primal and dual directions a, b with x + a in X and grad(x) + b in Y."""
    y = gen.grad(x)
    a = size * rng.standard_normal(gen.dim)
    b = size * rng.standard_normal(gen.dim)
    for _ in range(attempts):
        if gen.primal_contains(x + a) and gen.dual_contains(y + b):
            return a, b
        b = 0.5 * b
        a = 0.5 * a
    raise DomainError("could not find in-domain tangent directions")
