"""One-dimensional Bregman-Wasserstein JKO steps on a fixed grid.

Each step minimises J(mu) = F(mu) + P(mu) / delta over the probability
simplex, where F is the free energy and P is a proximal term built from the
entropic BW transport value OT_eps(mu, mu_k) with cost B(grid_i, grid_j).

Two proximal terms are available:

``linearized`` (default)
    P(mu) = OT_eps(mu, mu_k) - OT_eps(mu_k, mu_k) - <f_k, mu - mu_k>, the
    Bregman divergence of the convex map mu -> OT_eps(mu, mu_k). It is
    nonnegative, vanishes at mu_k and so J(mu_k) = F(mu_k).
``raw``
    P(mu) = OT_eps(mu, mu_k). Its value at mu_k is strictly positive, so the
    descent guarantee is against F(mu_k) + OT_eps(mu_k, mu_k) / delta.

The inner solver is entropic mirror descent with Armijo-style halving. When
beta > eps / delta it is warm-started from the exact minimiser of the same
objective over couplings, computed by a scaling iteration; mirror descent
then only certifies (and if needed polishes) that point.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import InputError, StepError
from .transport import cost_matrix, DiscreteMeasure, sinkhorn_potentials

__all__ = [
    "GridMeasure1D",
    "FreeEnergySpec",
    "JKOConfig",
    "StepResult",
    "FlowResult",
    "ProximalTerm",
    "jko_step",
    "jko_step_report",
    "run_flow",
    "gibbs",
    "kl",
    "default_epsilon",
]


@dataclass(frozen=True)
class GridMeasure1D:
    grid: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        x = np.array(self.grid, dtype=float).reshape(-1)
        p = np.array(self.probs, dtype=float).reshape(-1)
        if x.size != p.size or x.size < 2:
            raise InputError("grid and probs must be equal-length vectors with at least two entries")
        if np.any(np.diff(x) <= 0):
            raise InputError("grid must be strictly increasing")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise InputError("probabilities must be finite and nonnegative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise InputError(f"probabilities sum to {p.sum()!r}")
        x.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "grid", x)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_density(cls, grid, values):
        v = np.asarray(values, dtype=float)
        return cls(grid, v / v.sum())

    def as_measure(self):
        keep = self.probs > 0
        return DiscreteMeasure(self.grid[keep, None], self.probs[keep])


@dataclass(frozen=True)
class FreeEnergySpec:
    """F(mu) = sum V mu + beta sum mu log mu on a grid."""

    V: np.ndarray
    entropy_weight: float = 1.0

    def __post_init__(self):
        V = np.array(self.V, dtype=float).reshape(-1)
        if not np.all(np.isfinite(V)):
            raise InputError("potential must be finite on the grid")
        if self.entropy_weight < 0:
            raise InputError("entropy weight must be nonnegative")
        V.setflags(write=False)
        object.__setattr__(self, "V", V)

    @property
    def beta(self):
        return float(self.entropy_weight)

    def energy(self, p):
        p = np.asarray(p, dtype=float)
        pos = p > 0
        return float(self.V @ p + self.beta * np.sum(p[pos] * np.log(p[pos])))

    def gradient(self, p):
        with np.errstate(divide="ignore"):
            return self.V + self.beta * (np.log(p) + 1.0)


def gibbs(grid, spec):
    """Normalised exp(-V / beta) on the grid."""
    if spec.beta <= 0:
        raise InputError("the Gibbs measure needs beta > 0")
    z = -np.asarray(spec.V) / spec.beta
    w = np.exp(z - z.max())
    return GridMeasure1D(grid, w / w.sum())


def kl(p, q):
    p = np.asarray(getattr(p, "probs", p), dtype=float)
    q = np.asarray(getattr(q, "probs", q), dtype=float)
    pos = p > 0
    return float(np.sum(p[pos] * (np.log(p[pos]) - np.log(q[pos]))))


def default_epsilon(C):
    return 1e-2 * float(np.median(C))


@dataclass(frozen=True)
class JKOConfig:
    kkt_tol: float = 1e-9
    max_inner: int = 500
    sinkhorn_tol: float = 1e-12
    sinkhorn_iters: int = 100_000
    step0: float = None
    armijo: float = 1e-4
    max_halvings: int = 40
    proximal: str = "linearized"
    orientation: str = "forward"
    warm_start: bool = True
    scaling_tol: float = 1e-12
    scaling_iters: int = 20_000

    def __post_init__(self):
        if self.proximal not in ("linearized", "raw"):
            raise InputError("proximal must be 'linearized' or 'raw'")
        if self.orientation not in ("forward", "reverse"):
            raise InputError("orientation must be 'forward' (B(mu, mu_k)) or 'reverse' (B(mu_k, mu))")


class ProximalTerm:
    """Entropic BW proximal term around a fixed reference measure.

    ``forward`` orientation puts the variable in the first (row) slot of the
    cost B(x_i, x_j); ``reverse`` puts it in the second.
    """

    def __init__(self, C, ref, eps, cfg):
        self.C = np.ascontiguousarray(C if cfg.orientation == "forward" else C.T)
        self.ref = np.asarray(ref, dtype=float)
        self.eps = float(eps)
        self.cfg = cfg
        self.log_ref = np.log(self.ref)
        n = self.ref.size
        self._f = np.zeros(n)
        self._g = np.zeros(n)
        self.sinkhorn_iterations = 0
        value, grad = self.ot(self.ref)
        self.ref_value = value
        self.ref_grad = grad

    def ot(self, p):
        """Entropic OT value with p in the variable slot, and its gradient in p."""
        log_p = np.log(p)
        f, g, it, _, err = sinkhorn_potentials(
            self.C, log_p, self.log_ref, self.eps, self._f, self._g,
            self.cfg.sinkhorn_tol, self.cfg.sinkhorn_iters,
        )
        self.sinkhorn_iterations += it
        if err > self.cfg.sinkhorn_tol:
            raise StepError(
                "inner sinkhorn solve did not converge",
                diagnostics={"violation": err, "epsilon": self.eps},
            )
        self._f, self._g = f, g
        # at a converged solution the dual value equals OT_eps
        value = float(p @ f + self.ref @ g)
        return value, f - f.mean()

    def __call__(self, p):
        value, grad = self.ot(p)
        if self.cfg.proximal == "raw":
            return value, grad
        lin = value - self.ref_value - float(self.ref_grad @ (p - self.ref))
        return lin, grad - self.ref_grad

    @property
    def at_reference(self):
        return 0.0 if self.cfg.proximal == "linearized" else self.ref_value


@dataclass
class StepResult:
    measure: GridMeasure1D
    F: float
    proximal: float
    objective: float
    reference_objective: float
    kkt: float
    inner_iterations: int
    sinkhorn_iterations: int
    step_size: float
    converged: bool
    halvings: int = 0
    scaling_iterations: int = 0

    @property
    def dissipation_gap(self):
        """objective - reference objective; nonpositive when the step descends."""
        return self.objective - self.reference_objective


_NOISE = 1e-13


def _kkt(p, grad):
    gbar = float(p @ grad)
    return float(p @ np.abs(grad - gbar))


def _lse(M, axis):
    m = M.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(M - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def _scaling_solve(C, ref, Vt, gamma, lam, eps, tol, max_iter):
    """Minimise KL(pi | exp(-C/eps)) + lam * G(pi 1) with pi^T 1 = ref.

    G(mu) = <Vt, mu> + gamma sum mu log mu, gamma > 0. Alternates the exact
    projection on the fixed marginal with the closed-form KL proximal step
    on the free one. Returns (mu, iterations, last change in log mu).
    """
    log_ref = np.log(ref)
    phi = np.zeros(ref.size)
    log_mu = log_ref.copy()
    shrink = 1.0 / (1.0 + lam * gamma)
    change = np.inf
    for it in range(1, max_iter + 1):
        psi = eps * (log_ref - _lse((phi[:, None] - C) / eps, axis=0))
        log_s = _lse((psi[None, :] - C) / eps, axis=1)
        new = (log_s - lam * Vt - lam * gamma) * shrink
        phi = eps * (new - log_s)
        new -= _lse(new, axis=0)
        change = float(np.abs(new - log_mu).max())
        log_mu = new
        if change < tol:
            break
    return np.exp(log_mu), it, change


def jko_step_report(gen, spec, mu_k, delta, epsilon=None, cfg=None, C=None):
    """One JKO step with full diagnostics; see the module docstring."""
    cfg = cfg or JKOConfig()
    if not delta > 0:
        raise InputError("delta must be positive")
    if np.any(mu_k.probs <= 0):
        raise InputError("mirror descent needs a strictly positive starting measure")
    if spec.V.size != mu_k.grid.size:
        raise InputError("potential and grid sizes differ")
    if C is None:
        pts = DiscreteMeasure.uniform(mu_k.grid[:, None])
        C = cost_matrix(gen, pts, pts)
    eps = default_epsilon(C) if epsilon is None else float(epsilon)
    if not eps > 0:
        raise InputError("epsilon must be positive")
    prox = ProximalTerm(C, mu_k.probs, eps, cfg)
    ref_obj = spec.energy(mu_k.probs) + prox.at_reference / delta

    def objective(p):
        pv, pg = prox(p)
        return spec.energy(p) + pv / delta, spec.gradient(p) + pg / delta, pv

    p = mu_k.probs.copy()
    J, grad, pv = objective(p)
    warm = 0
    gamma = spec.beta - eps / delta
    if cfg.warm_start and gamma > 0 and _kkt(p, grad) > cfg.kkt_tol:
        Vt = spec.V - (prox.ref_grad / delta if cfg.proximal == "linearized" else 0.0)
        q, warm, _ = _scaling_solve(
            prox.C, prox.ref, Vt, gamma, delta / eps, eps, cfg.scaling_tol, cfg.scaling_iters
        )
        if np.all(q > 0):
            Jq, gq, pvq = objective(q)
            if Jq <= J + _NOISE * max(1.0, abs(J)):
                p, J, grad, pv = q, Jq, gq, pvq
    eta = cfg.step0 if cfg.step0 is not None else 1.0 / max(spec.beta, 1e-3)
    kkt = _kkt(p, grad)
    inner = 0
    halvings = 0
    converged = kkt <= cfg.kkt_tol
    while not converged and inner < cfg.max_inner:
        inner += 1
        for _ in range(cfg.max_halvings):
            z = np.log(p) - eta * (grad - p @ grad)
            z -= z.max()
            q = np.exp(z)
            q /= q.sum()
            if np.all(q > 0):
                Jq, gq, pvq = objective(q)
                div = float(q @ (np.log(q) - np.log(p)))
                # J is only known to roundoff; changes below that count as ties
                if Jq <= J - cfg.armijo * div / eta + _NOISE * max(1.0, abs(J)):
                    break
            eta *= 0.5
            halvings += 1
        else:
            if kkt <= 1e3 * cfg.kkt_tol:
                break
            raise StepError(
                "mirror descent could not find a decreasing step",
                diagnostics={"kkt": kkt, "step_size": eta, "inner": inner, "objective": J},
            )
        p, J, grad, pv = q, Jq, gq, pvq
        kkt = _kkt(p, grad)
        converged = kkt <= cfg.kkt_tol
        eta *= 1.5
    if J > ref_obj + 1e-8:
        raise StepError(
            "step increased the JKO objective",
            diagnostics={"objective": J, "reference": ref_obj},
        )
    measure = GridMeasure1D(mu_k.grid, p / p.sum())
    return StepResult(
        measure=measure,
        F=spec.energy(measure.probs),
        proximal=pv,
        objective=J,
        reference_objective=ref_obj,
        kkt=kkt,
        inner_iterations=inner,
        sinkhorn_iterations=prox.sinkhorn_iterations,
        step_size=eta,
        converged=converged,
        halvings=halvings,
        scaling_iterations=warm,
    )


def jko_step(gen, spec, mu_k, delta, epsilon=None, cfg=None):
    """Next JKO iterate; ``jko_step_report`` returns the diagnostics too."""
    return jko_step_report(gen, spec, mu_k, delta, epsilon, cfg).measure


@dataclass
class FlowResult:
    trajectory: list
    energies: list
    steps: list = field(default_factory=list)
    kl_to_gibbs: list = field(default_factory=list)
    epsilon: float = None

    @property
    def max_energy_increase(self):
        e = np.asarray(self.energies)
        return float(np.max(np.diff(e))) if e.size > 1 else -math.inf

    @property
    def max_dissipation_gap(self):
        return max((s.dissipation_gap for s in self.steps), default=-math.inf)


def run_flow(gen, spec, mu0, delta, epsilon=None, steps=1, cfg=None, callback=None):
    """Iterate ``jko_step`` and record energies and KL to the Gibbs measure."""
    pts = DiscreteMeasure.uniform(mu0.grid[:, None])
    C = cost_matrix(gen, pts, pts)
    eps = default_epsilon(C) if epsilon is None else float(epsilon)
    target = gibbs(mu0.grid, spec) if spec.beta > 0 else None
    traj = [mu0]
    energies = [spec.energy(mu0.probs)]
    kls = [kl(mu0, target)] if target is not None else []
    reports = []
    mu = mu0
    for k in range(int(steps)):
        rep = jko_step_report(gen, spec, mu, delta, eps, cfg, C)
        mu = rep.measure
        traj.append(mu)
        energies.append(rep.F)
        reports.append(rep)
        if target is not None:
            kls.append(kl(mu, target))
        if callback is not None:
            callback(k + 1, rep)
    return FlowResult(traj, energies, reports, kls, eps)
