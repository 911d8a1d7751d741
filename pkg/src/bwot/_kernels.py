"""Hot inner loops, each in a numba flavour and a pure-numpy flavour.

Public names (``sinkhorn_log``, ``assignment``, ``inv_langevin``) are bound to
the numba versions when numba is available and enabled, otherwise to the numpy
ones. ``get(name, backend)`` returns a specific flavour, which the tests and
the benchmark use to compare the two paths.
"""
import math

import numpy as np

from ._backend import HAVE_NUMBA, BACKEND, njit

__all__ = ["sinkhorn_log", "assignment", "inv_langevin", "get", "BACKEND"]


# ---------------------------------------------------------------------------
# Sinkhorn with log-domain absorption
#
# Plan parametrisation: pi_ij = a_i b_j exp((f_i + g_j - C_ij) / eps).
# Between absorptions the plan is written as a_i b_j u_i v_j M_ij with
# M_ij = exp((fa_i + ga_j - C_ij) / eps) for absorbed potentials fa, ga, so a
# sweep is two matrix-vector products. When a scaling leaves [1/TAU, TAU], or
# a product underflows, the scalings are folded back into the potentials by
# one exact log-sum-exp update of each side and M is rebuilt. The reported
# violation is the max row-marginal error after the column update.

_TAU = 1e30


@njit(cache=True)
def _absorb_nb(C, log_a, log_b, eps, f, g, M):
    n, m = C.shape
    for i in range(n):
        mx = -np.inf
        for j in range(m):
            v = log_b[j] + (g[j] - C[i, j]) / eps
            if v > mx:
                mx = v
        s = 0.0
        for j in range(m):
            s += math.exp(log_b[j] + (g[j] - C[i, j]) / eps - mx)
        f[i] = -eps * (mx + math.log(s))
    for j in range(m):
        mx = -np.inf
        for i in range(n):
            v = log_a[i] + (f[i] - C[i, j]) / eps
            if v > mx:
                mx = v
        s = 0.0
        for i in range(n):
            s += math.exp(log_a[i] + (f[i] - C[i, j]) / eps - mx)
        g[j] = -eps * (mx + math.log(s))
    for i in range(n):
        for j in range(m):
            M[i, j] = math.exp((f[i] + g[j] - C[i, j]) / eps)


@njit(cache=True)
def _sinkhorn_log_nb(C, log_a, log_b, eps, f, g, tol, max_iter, check_every):
    n, m = C.shape
    f = f.copy()
    g = g.copy()
    a = np.exp(log_a)
    b = np.exp(log_b)
    M = np.empty((n, m))
    u = np.ones(n)
    v = np.ones(m)
    _absorb_nb(C, log_a, log_b, eps, f, g, M)
    err = np.inf
    it = 1
    bv = np.empty(m)
    col = np.empty(m)
    while it < max_iter:
        ok = True
        for j in range(m):
            bv[j] = b[j] * v[j]
        for i in range(n):
            s = 0.0
            for j in range(m):
                s += M[i, j] * bv[j]
            if s <= 0.0 or not np.isfinite(s):
                ok = False
                break
            u[i] = 1.0 / s
            if u[i] > _TAU or u[i] < 1.0 / _TAU:
                ok = False
        if ok:
            # column sums accumulated row by row to keep memory access contiguous
            col[:] = 0.0
            for i in range(n):
                au = a[i] * u[i]
                for j in range(m):
                    col[j] += M[i, j] * au
            for j in range(m):
                s = col[j]
                if s <= 0.0 or not np.isfinite(s):
                    ok = False
                    break
                v[j] = 1.0 / s
                if v[j] > _TAU or v[j] < 1.0 / _TAU:
                    ok = False
        if not ok:
            for i in range(n):
                if u[i] > 0.0 and np.isfinite(u[i]):
                    f[i] += eps * math.log(u[i])
                u[i] = 1.0
            for j in range(m):
                if v[j] > 0.0 and np.isfinite(v[j]):
                    g[j] += eps * math.log(v[j])
                v[j] = 1.0
            _absorb_nb(C, log_a, log_b, eps, f, g, M)
        it += 1
        if it % check_every == 0 or it >= max_iter:
            err = 0.0
            for i in range(n):
                s = 0.0
                for j in range(m):
                    s += M[i, j] * b[j] * v[j]
                d = abs(a[i] * u[i] * s - a[i])
                if d > err:
                    err = d
            if err <= tol:
                break
    for i in range(n):
        f[i] += eps * math.log(u[i])
    for j in range(m):
        g[j] += eps * math.log(v[j])
    return f, g, it, err


def _lse_rows(M):
    mx = M.max(axis=1)
    return mx + np.log(np.exp(M - mx[:, None]).sum(axis=1))


def _absorb_np(C, log_a, log_b, eps, f, g):
    f = -eps * _lse_rows(log_b[None, :] + (g[None, :] - C) / eps)
    g = -eps * _lse_rows((log_a[:, None] + (f[:, None] - C) / eps).T)
    return f, g, np.exp((f[:, None] + g[None, :] - C) / eps)


def _sinkhorn_log_np(C, log_a, log_b, eps, f, g, tol, max_iter, check_every):
    a = np.exp(log_a)
    b = np.exp(log_b)
    f, g, M = _absorb_np(C, log_a, log_b, eps, np.array(f, dtype=float), np.array(g, dtype=float))
    u = np.ones(C.shape[0])
    v = np.ones(C.shape[1])
    err = np.inf
    it = 1
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        while it < max_iter:
            u = 1.0 / (M @ (b * v))
            v = 1.0 / (M.T @ (a * u))
            if not (
                np.all(np.isfinite(u)) and np.all(np.isfinite(v))
                and u.max() <= _TAU and u.min() >= 1.0 / _TAU
                and v.max() <= _TAU and v.min() >= 1.0 / _TAU
            ):
                good_u = np.isfinite(u) & (u > 0)
                good_v = np.isfinite(v) & (v > 0)
                f = f + np.where(good_u, eps * np.log(np.where(good_u, u, 1.0)), 0.0)
                g = g + np.where(good_v, eps * np.log(np.where(good_v, v, 1.0)), 0.0)
                u = np.ones_like(u)
                v = np.ones_like(v)
                f, g, M = _absorb_np(C, log_a, log_b, eps, f, g)
            it += 1
            if it % check_every == 0 or it >= max_iter:
                err = float(np.abs(a * u * (M @ (b * v)) - a).max())
                if err <= tol:
                    break
    return f + eps * np.log(u), g + eps * np.log(v), it, err


# ---------------------------------------------------------------------------
# Rectangular assignment (n <= m) by shortest augmenting paths with
# Dijkstra-style reduced costs. Returns the column of each row and dual
# potentials with u_i + v_j <= C_ij, equality on the matching.


@njit(cache=True)
def _assignment_nb(C):
    n, m = C.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)
    way = np.zeros(m + 1, dtype=np.int64)
    minv = np.empty(m + 1)
    used = np.zeros(m + 1, dtype=np.bool_)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        for j in range(m + 1):
            minv[j] = np.inf
            used[j] = False
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = np.inf
            j1 = -1
            for j in range(1, m + 1):
                if not used[j]:
                    cur = C[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    cols = np.empty(n, dtype=np.int64)
    for j in range(1, m + 1):
        if p[j] != 0:
            cols[p[j] - 1] = j - 1
    return cols, u[1:].copy(), v[1:].copy()


def _assignment_np(C):
    n, m = C.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)
    way = np.zeros(m + 1, dtype=np.int64)
    Cp = np.zeros((n + 1, m + 1))
    Cp[1:, 1:] = C
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = Cp[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, np.inf)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    cols = np.empty(n, dtype=np.int64)
    rows = p[1:]
    hit = np.nonzero(rows)[0]
    cols[rows[hit] - 1] = hit
    return cols, u[1:].copy(), v[1:].copy()


# ---------------------------------------------------------------------------
# Inverse Langevin function L^{-1}(eta), L(t) = coth(t) - 1/t, elementwise on
# (-1, 1). Safeguarded Newton inside the bracket [3|eta|, 1/(1-|eta|)].

_SERIES_CUT = 1e-4


@njit(cache=True)
def _langevin_scalar(t):
    at = abs(t)
    if at < 1e-4:
        return t / 3.0 - t ** 3 / 45.0
    return 1.0 / math.tanh(t) - 1.0 / t


@njit(cache=True)
def _dlangevin_scalar(t):
    at = abs(t)
    if at < 1e-2:
        t2 = t * t
        return 1.0 / 3.0 - t2 / 15.0 + 2.0 * t2 * t2 / 189.0 - t2 ** 3 / 675.0
    if at > 40.0:
        return 1.0 / (t * t)
    s = math.sinh(t)
    return 1.0 / (t * t) - 1.0 / (s * s)


@njit(cache=True)
def _inv_langevin_nb(flat_in, tol, max_iter):
    flat_out = np.empty_like(flat_in)
    status = 0
    for k in range(flat_in.size):
        e = flat_in[k]
        sgn = 1.0
        if e < 0.0:
            sgn = -1.0
            e = -e
        if e == 0.0:
            flat_out[k] = 0.0
            continue
        lo = 3.0 * e
        hi = 1.0 / (1.0 - e)
        t = 3.0 * e / (1.0 - e * e)
        if t <= lo or t >= hi:
            t = 0.5 * (lo + hi)
        done = False
        for _ in range(max_iter):
            r = _langevin_scalar(t) - e
            if r > 0.0:
                hi = t
            else:
                lo = t
            step = r / _dlangevin_scalar(t)
            tn = t - step
            if tn <= lo or tn >= hi:
                tn = 0.5 * (lo + hi)
            if abs(tn - t) <= tol * max(1.0, abs(t)):
                t = tn
                done = True
                break
            t = tn
        if not done:
            status = 1
        flat_out[k] = sgn * t
    return flat_out, status


def _langevin_np(t):
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    small = np.abs(t) < _SERIES_CUT
    ts = t[small]
    out[small] = ts / 3.0 - ts ** 3 / 45.0
    tb = t[~small]
    out[~small] = 1.0 / np.tanh(tb) - 1.0 / tb
    return out


def _dlangevin_np(t):
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    at = np.abs(t)
    small = at < 1e-2
    big = at > 40.0
    mid = ~small & ~big
    t2 = t[small] ** 2
    out[small] = 1.0 / 3.0 - t2 / 15.0 + 2.0 * t2 ** 2 / 189.0 - t2 ** 3 / 675.0
    out[big] = 1.0 / t[big] ** 2
    tm = t[mid]
    out[mid] = 1.0 / tm ** 2 - 1.0 / np.sinh(tm) ** 2
    return out


def _inv_langevin_np(eta, tol, max_iter):
    eta = np.asarray(eta, dtype=float)
    sgn = np.where(eta < 0.0, -1.0, 1.0)
    e = np.abs(eta)
    zero = e == 0.0
    e = np.where(zero, 0.5, e)
    lo = 3.0 * e
    hi = 1.0 / (1.0 - e)
    t = 3.0 * e / (1.0 - e * e)
    t = np.where((t <= lo) | (t >= hi), 0.5 * (lo + hi), t)
    active = ~zero
    for _ in range(max_iter):
        if not active.any():
            break
        r = _langevin_np(t) - e
        hi = np.where(active & (r > 0.0), t, hi)
        lo = np.where(active & (r <= 0.0), t, lo)
        tn = t - r / _dlangevin_np(t)
        tn = np.where((tn <= lo) | (tn >= hi), 0.5 * (lo + hi), tn)
        conv = np.abs(tn - t) <= tol * np.maximum(1.0, np.abs(t))
        t = np.where(active, tn, t)
        active &= ~conv
    status = int(active.any())
    return np.where(zero, 0.0, sgn * t), status


# ---------------------------------------------------------------------------

_TABLE = {
    "sinkhorn_log": (_sinkhorn_log_nb, _sinkhorn_log_np),
    "assignment": (_assignment_nb, _assignment_np),
    "inv_langevin": (_inv_langevin_nb, _inv_langevin_np),
}


def get(name, backend=None):
    """Return kernel ``name`` for ``backend`` ('numba', 'numpy' or None=active)."""
    backend = backend or BACKEND
    nb, npy = _TABLE[name]
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is disabled")
        return nb
    if backend == "numpy":
        return npy
    raise ValueError(f"unknown backend {backend!r}")


sinkhorn_log = get("sinkhorn_log")
assignment = get("assignment")
inv_langevin = get("inv_langevin")
