"""Command-line entry point.

``bwot [--seed N] [--out-dir DIR] [--format json|csv] [--config FILE] COMMAND ...``

A JSON summary goes to stdout (or the main table as CSV with ``--format
csv``); CSV artifacts go to ``--out-dir`` when given. Exit status is 0 on
success, 1 for bad input, 2 when a solver fails to converge and 3 when a
``check`` record fails.
"""
import argparse
from dataclasses import dataclass, field, fields
import json
import logging
from pathlib import Path
import sys

import numpy as np

from . import __version__
from .errors import BWError, ConvergenceError, DomainError, InputError, StepError
from .fixtures import random_cloud, rng_for
from .generators import CATALOG, make_generator
from .io import SCHEMA, dumps, format_csv, read_matrix, read_measure, write_csv
from .transport import SolverConfig, bw_divergence

__all__ = ["RunConfig", "run", "main", "build_parser", "POTENTIALS"]

log = logging.getLogger("bwot")

COMMANDS = ("divergence", "interpolate", "barycenter", "match", "jko", "check")
EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_CHECK = 0, 1, 2, 3

POTENTIALS = {
    "quadratic": lambda x: 0.5 * x * x,
    "double-well": lambda x: 0.25 * (x * x - 1.0) ** 2,
    "linear": lambda x: x,
    "zero": lambda x: np.zeros_like(x),
}

# accepted keys of ``inputs`` and ``params`` for each command, with defaults
_INPUTS = {
    "divergence": {"mu", "nu"},
    "interpolate": {"mu", "nu"},
    "barycenter": {"measures"},
    "match": {"thetas", "obs"},
    "jko": set(),
    "check": set(),
}
_PARAMS = {
    "divergence": {"atoms": 6},
    "interpolate": {"atoms": 6, "kind": "dual", "steps": 11},
    "barycenter": {"lambdas": None, "support_size": None, "max_iters": 200, "init": "sample", "atoms": 4, "count": 2},
    "match": {"n": 10, "emit_pairs": None},
    "jko": {
        "grid": "64,-4,4",
        "potential": "quadratic",
        "beta": 1.0,
        "delta": 0.1,
        "epsilon": 1e-2,
        "steps": 200,
        "init_mean": 2.0,
        "init_std": 0.5,
        "proximal": "linearized",
        "orientation": "forward",
    },
    "check": {"suite": "core", "criteria": None},
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


@dataclass(frozen=True)
class RunConfig:
    """Everything a run depends on. The seed fixes every random fixture."""

    command: str
    generator: str = "quadratic"
    dim: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)
    inputs: dict = field(default_factory=dict)
    out_dir: str = None
    seed: int = 0
    format: str = "json"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise InputError(f"unknown command {self.command!r}")
        if self.generator not in CATALOG:
            raise InputError(f"unknown generator {self.generator!r}; choose from {', '.join(CATALOG)}")
        if int(self.dim) < 1:
            raise InputError("dim must be at least 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InputError("seed must be a 64-bit unsigned integer")
        if self.format not in ("json", "csv"):
            raise InputError("format must be json or csv")
        extra = set(self.inputs) - _INPUTS[self.command]
        if extra:
            raise InputError(f"unknown inputs for {self.command}: {', '.join(sorted(extra))}")
        extra = set(self.params) - set(_PARAMS[self.command])
        if extra:
            raise InputError(f"unknown params for {self.command}: {', '.join(sorted(extra))}")
        merged = dict(_PARAMS[self.command])
        merged.update({k: v for k, v in self.params.items() if v is not None})
        object.__setattr__(self, "params", merged)

    @classmethod
    def from_mapping(cls, data):
        """Build from a plain dict (e.g. a JSON config file); unknown keys fail."""
        if not isinstance(data, dict):
            raise InputError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise InputError(f"unknown config keys: {', '.join(sorted(extra))}")
        data = dict(data)
        solver = data.get("solver", {})
        if isinstance(solver, dict):
            sk = {f.name for f in fields(SolverConfig)}
            bad = set(solver) - sk
            if bad:
                raise InputError(f"unknown solver keys: {', '.join(sorted(bad))}")
            data["solver"] = SolverConfig(**solver)
        if "command" not in data:
            raise InputError("config needs a command")
        return cls(**data)


# -- argument parsing ---------------------------------------------------------


def build_parser():
    p = _Parser(prog="bwot", description="Bregman-Wasserstein transport toolkit")
    p.add_argument("--version", action="version", version=f"bwot {__version__}")
    p.add_argument("--seed", type=int, default=None, help="root seed for all random fixtures")
    p.add_argument("--out-dir", default=None, help="directory for CSV artifacts")
    p.add_argument("--format", choices=("json", "csv"), default=None)
    p.add_argument("--config", default=None, help="JSON file with RunConfig fields")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def gen_opts(sp):
        sp.add_argument("--generator", choices=tuple(CATALOG), default=None)
        sp.add_argument("--dim", type=int, default=None)

    def solver_opts(sp):
        sp.add_argument("--method", choices=("exact", "sinkhorn"), default=None)
        sp.add_argument("--epsilon", type=float, default=None)
        sp.add_argument("--marginal-tol", type=float, default=None)
        sp.add_argument("--max-iters", type=int, default=None)

    sp = sub.add_parser("divergence", help="BW divergence between two measures")
    gen_opts(sp)
    solver_opts(sp)
    sp.add_argument("--mu", default=None, help="first measure (CSV or JSON)")
    sp.add_argument("--nu", default=None, help="second measure (CSV or JSON)")
    sp.add_argument("--atoms", type=int, default=None, help="fixture size when files are omitted")

    sp = sub.add_parser("interpolate", help="primal or dual displacement interpolation")
    gen_opts(sp)
    sp.add_argument("--mu", default=None)
    sp.add_argument("--nu", default=None)
    sp.add_argument("--atoms", type=int, default=None)
    sp.add_argument("--kind", choices=("primal", "dual"), default=None)
    sp.add_argument("--steps", type=int, default=None, help="number of snapshot times in [0, 1]")

    sp = sub.add_parser("barycenter", help="free-support BW barycenter")
    gen_opts(sp)
    sp.add_argument("--marginal-tol", type=float, default=None, help="support movement tolerance")
    sp.add_argument("--input", action="append", default=None, help="input measure; repeat per measure")
    sp.add_argument("--lambda", dest="lambdas", default=None, help="comma-separated weights")
    sp.add_argument("--support-size", type=int, default=None)
    sp.add_argument("--max-iters", type=int, default=None)
    sp.add_argument("--init", default=None, help="sample, measure or multistart")
    sp.add_argument("--atoms", type=int, default=None)
    sp.add_argument("--count", type=int, default=None, help="number of fixture measures")

    sp = sub.add_parser("match", help="likelihood-optimal matching for the cube family")
    sp.add_argument("--thetas", default=None, help="CSV of natural parameters")
    sp.add_argument("--obs", default=None, help="CSV of observations in (-1, 1)^d")
    sp.add_argument("--emit-pairs", default=None, help="CSV of matched pairs and divergences")
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--dim", type=int, default=None)

    sp = sub.add_parser("jko", help="1-D BW-JKO flow on a grid")
    gen_opts(sp)
    sp.add_argument("--grid", default=None, help="n,min,max")
    sp.add_argument("--potential", choices=tuple(POTENTIALS), default=None)
    sp.add_argument("--beta", type=float, default=None)
    sp.add_argument("--delta", type=float, default=None)
    sp.add_argument("--epsilon", type=float, default=None)
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--init-mean", type=float, default=None)
    sp.add_argument("--init-std", type=float, default=None)
    sp.add_argument("--proximal", choices=("linearized", "raw"), default=None)
    sp.add_argument("--orientation", choices=("forward", "reverse"), default=None)

    sp = sub.add_parser("check", help="run the invariant suite")
    sp.add_argument("--suite", choices=("core", "full"), default=None)
    sp.add_argument("--criterion", type=int, action="append", default=None, dest="criteria")
    return p


_SOLVER_FLAGS = {"method": "method", "epsilon": "epsilon", "marginal_tol": "marginal_tol", "max_iters": "max_iters"}
_INPUT_FLAGS = {"mu": "mu", "nu": "nu", "input": "measures", "thetas": "thetas", "obs": "obs"}
_TOP_FLAGS = ("generator", "dim", "seed", "out_dir", "format")


def config_from_args(ns):
    """Merge a namespace over an optional config file into a RunConfig."""
    base = {}
    if ns.config:
        try:
            base = json.loads(Path(ns.config).read_text())
        except OSError as exc:
            raise InputError(f"cannot read config {ns.config}: {exc.strerror}") from None
        except ValueError as exc:
            raise InputError(f"config {ns.config} is not valid JSON: {exc}") from None
        if not isinstance(base, dict):
            raise InputError("config must be a JSON object")
        if base.get("command", ns.command) != ns.command:
            raise InputError(f"config is for {base['command']!r}, not {ns.command!r}")
    data = dict(base)
    data["command"] = ns.command
    args = vars(ns)
    for key in _TOP_FLAGS:
        if args.get(key) is not None:
            data[key] = args[key]
    solver = dict(base.get("solver", {}))
    params = dict(base.get("params", {}))
    inputs = dict(base.get("inputs", {}))
    skip = {"command", "config", "verbose", *_TOP_FLAGS}
    for key, value in args.items():
        if key in skip or value is None:
            continue
        if key in _INPUT_FLAGS:
            inputs[_INPUT_FLAGS[key]] = value
        elif key in _SOLVER_FLAGS and not (ns.command in ("barycenter", "jko") and key in ("max_iters", "epsilon")):
            solver[_SOLVER_FLAGS[key]] = value
        else:
            params[key] = value
    if solver:
        data["solver"] = solver
    if params:
        data["params"] = params
    if inputs:
        data["inputs"] = inputs
    return RunConfig.from_mapping(data)


# -- commands -----------------------------------------------------------------


@dataclass
class Outcome:
    summary: dict
    table: tuple = None  # (header, rows) printed with --format csv
    artifacts: list = field(default_factory=list)  # (filename, header, rows)
    status: int = EXIT_OK


def _fixture_rng(cfg, *stream):
    return rng_for(cfg.seed, COMMANDS.index(cfg.command), *stream)


def _measure_or_fixture(cfg, gen, key, stream):
    if key in cfg.inputs:
        mu = read_measure(cfg.inputs[key])
        if mu.dim != gen.dim:
            raise InputError(f"{key} has dimension {mu.dim} but the generator has {gen.dim}")
        return mu
    return random_cloud(gen, _fixture_rng(cfg, stream), int(cfg.params["atoms"]))


def _generator(cfg, dim=None):
    return make_generator(cfg.generator, int(dim or cfg.dim))


def _input_dim(cfg, keys):
    """Dimension of the first given input file, else the configured one."""
    for key in keys:
        path = cfg.inputs.get(key)
        if isinstance(path, list):
            path = path[0] if path else None
        if path:
            return read_measure(path).dim
    return cfg.dim


def _plan_rows(P):
    i, j = np.nonzero(P > 0)
    return [(int(a), int(b), P[a, b]) for a, b in zip(i, j)]


def cmd_divergence(cfg):
    gen = _generator(cfg, _input_dim(cfg, ("mu", "nu")))
    mu = _measure_or_fixture(cfg, gen, "mu", 0)
    nu = _measure_or_fixture(cfg, gen, "nu", 1)
    value, plan = bw_divergence(gen, mu, nu, cfg.solver)
    summary = {
        "value": value,
        "method": plan.method,
        "objective": plan.objective if plan.objective is not None else value,
        "iterations": plan.iterations,
        "marginal_error": plan.marginal_error(),
        "atoms": [mu.n, nu.n],
    }
    if plan.method == "sinkhorn":
        summary["epsilon"] = plan.info.get("epsilon", cfg.solver.epsilon)
    rows = _plan_rows(plan.matrix)
    return Outcome(summary, (["i", "j", "mass"], rows), [("plan.csv", ["i", "j", "mass"], rows)])


def cmd_interpolate(cfg):
    from .interp import path_from_plan

    gen = _generator(cfg, _input_dim(cfg, ("mu", "nu")))
    mu = _measure_or_fixture(cfg, gen, "mu", 0)
    nu = _measure_or_fixture(cfg, gen, "nu", 1)
    steps = int(cfg.params["steps"])
    if steps < 2:
        raise InputError("steps must be at least 2")
    path = path_from_plan(gen, mu, nu, cfg.params["kind"])
    d = gen.dim
    header = ["t", "w"] + [f"x{k}" for k in range(1, d + 1)] + [f"y{k}" for k in range(1, d + 1)]
    rows = []
    for t in np.linspace(0.0, 1.0, steps):
        m = path.at(t)
        y = gen.grad(m.points)
        rows.extend([t, w, *x, *yy] for w, x, yy in zip(m.weights, m.points, y))
    summary = {
        "kind": path.kind,
        "steps": steps,
        "atoms": mu.n,
        "approximate": bool(path.info["approximate"]),
        "plan_cost": path.info["plan_cost"],
    }
    return Outcome(summary, (header, rows), [("snapshots.csv", header, rows)])


def cmd_barycenter(cfg):
    from .barycenter import barycenter_fixed_point

    p = cfg.params
    paths = cfg.inputs.get("measures") or []
    if paths:
        measures = [read_measure(f) for f in paths]
        gen = _generator(cfg, measures[0].dim)
    else:
        gen = _generator(cfg)
        count = int(p["count"])
        measures = [random_cloud(gen, _fixture_rng(cfg, k), int(p["atoms"])) for k in range(count)]
    if p["lambdas"] is None:
        lam = np.full(len(measures), 1.0 / len(measures))
    else:
        try:
            lam = np.array([float(v) for v in str(p["lambdas"]).split(",")])
        except ValueError:
            raise InputError(f"cannot parse lambda weights {p['lambdas']!r}") from None
    res = barycenter_fixed_point(
        gen,
        measures,
        lam,
        k=p["support_size"],
        init=p["init"],
        seed=int(_fixture_rng(cfg, len(measures)).integers(2 ** 32)),
        max_iters=int(p["max_iters"]),
        tol=cfg.solver.marginal_tol,
    )
    summary = {
        "objective": res.objective,
        "iterations": res.iterations,
        "converged": res.converged,
        "objective_trace": res.objective_trace,
        "support": res.support,
        "weights": res.weights,
        "events": res.events,
        "lambdas": lam,
    }
    header = ["w"] + [f"x{k}" for k in range(1, gen.dim + 1)]
    rows = np.column_stack([res.weights, res.support]).tolist()
    return Outcome(summary, (header, rows), [("support.csv", header, rows)])


def cmd_match(cfg):
    from .expfam import BASE_MEASURE, MatchingInstance, likelihood_identity_check, match_mle
    from .expfam import pair_divergences, random_instance

    p = cfg.params
    if "thetas" in cfg.inputs or "obs" in cfg.inputs:
        if not ("thetas" in cfg.inputs and "obs" in cfg.inputs):
            raise InputError("match needs both --thetas and --obs")
        _, th = read_matrix(cfg.inputs["thetas"])
        _, ys = read_matrix(cfg.inputs["obs"])
        inst = MatchingInstance(th, ys)
    else:
        inst = random_instance(int(p["n"]), int(cfg.dim), int(_fixture_rng(cfg).integers(2 ** 32)))
    sigma, ll, plan = match_mle(inst)
    lhs, rhs = likelihood_identity_check(inst, sigma)
    div = pair_divergences(inst, sigma)
    rows = [(i, int(j), v) for i, (j, v) in enumerate(zip(sigma, div))]
    header = ["i", "j", "divergence"]
    summary = {
        "sigma": sigma,
        "loglik": ll,
        "plan_cost": plan.cost,
        "identity": {"lhs": lhs, "rhs": rhs, "gap": abs(lhs - rhs)},
        "n": inst.n,
        "dim": inst.dim,
        "metadata": BASE_MEASURE,
    }
    artifacts = [("pairs.csv", header, rows)]
    if p["emit_pairs"]:
        write_csv(p["emit_pairs"], header, rows)
        summary["pairs_file"] = str(p["emit_pairs"])
    return Outcome(summary, (header, rows), artifacts)


def _parse_grid(text):
    try:
        n, lo, hi = str(text).split(",")
        n, lo, hi = int(n), float(lo), float(hi)
    except ValueError:
        raise InputError(f"--grid expects n,min,max, got {text!r}") from None
    if n < 2 or not hi > lo:
        raise InputError("--grid needs n >= 2 and max > min")
    return np.linspace(lo, hi, n)


def cmd_jko(cfg):
    from .flows import FreeEnergySpec, GridMeasure1D, JKOConfig, run_flow

    p = cfg.params
    if cfg.dim != 1:
        raise InputError("jko runs on a one-dimensional grid; use --dim 1")
    grid = _parse_grid(p["grid"])
    gen = _generator(cfg, 1)
    gen.check_primal(grid[:, None])
    spec = FreeEnergySpec(POTENTIALS[p["potential"]](grid), float(p["beta"]))
    std = float(p["init_std"])
    if not std > 0:
        raise InputError("init_std must be positive")
    dens = np.exp(-0.5 * ((grid - float(p["init_mean"])) / std) ** 2)
    if not dens.sum() > 0:
        raise InputError("initial density vanishes on the grid")
    dens = np.maximum(dens, 1e-300)
    mu0 = GridMeasure1D.from_density(grid, dens)
    jcfg = JKOConfig(proximal=p["proximal"], orientation=p["orientation"])

    def progress(k, rep):
        log.info("step %d: F=%.10g kkt=%.2e", k, rep.F, rep.kkt)

    res = run_flow(gen, spec, mu0, float(p["delta"]), float(p["epsilon"]), int(p["steps"]), jcfg, progress)
    kls = res.kl_to_gibbs or [None] * len(res.energies)
    rows = [(k, F, kl) for k, (F, kl) in enumerate(zip(res.energies, kls))]
    final = res.trajectory[-1]
    summary = {
        "steps": int(p["steps"]),
        "final_energy": res.energies[-1],
        "final_kl_to_gibbs": kls[-1],
        "max_energy_increase": res.max_energy_increase,
        "max_dissipation_gap": res.max_dissipation_gap,
        "epsilon": res.epsilon,
        "unconverged_steps": sum(not s.converged for s in res.steps),
        "metadata": {
            "grid": "fixed, no support adaptation",
            "inner_solver": "scaling warm start, then entropic mirror descent with Armijo halving",
            "proximal": p["proximal"],
            "orientation": p["orientation"],
        },
    }
    header = ["k", "F", "kl_to_gibbs"]
    return Outcome(
        summary,
        (header, rows),
        [
            ("steps.csv", header, rows),
            ("final.csv", ["w", "x1"], np.column_stack([final.probs, final.grid]).tolist()),
        ],
    )


def cmd_check(cfg):
    from .checks import SUITES, run_criterion

    numbers = cfg.params["criteria"] or SUITES[cfg.params["suite"]]
    records = []
    for n in numbers:
        if n not in SUITES["full"]:
            raise InputError(f"no criterion {n}; valid numbers are 1 to {max(SUITES['full'])}")
        checks, elapsed = run_criterion(int(n), cfg.seed)
        log.info("criterion %d: %.1fs", n, elapsed)
        records.extend(c.record() for c in checks)
    ok = all(r["pass"] for r in records)
    header = ["name", "lhs", "rhs", "tolerance", "pass"]
    rows = [[r["name"], r["lhs"], r["rhs"], r["tolerance"], r["pass"]] for r in records]
    summary = {"suite": cfg.params["suite"], "checks": records, "passed": ok}
    return Outcome(summary, (header, rows), [("checks.csv", header, rows)], EXIT_OK if ok else EXIT_CHECK)


_RUNNERS = {
    "divergence": cmd_divergence,
    "interpolate": cmd_interpolate,
    "barycenter": cmd_barycenter,
    "match": cmd_match,
    "jko": cmd_jko,
    "check": cmd_check,
}


# -- driver -------------------------------------------------------------------


def _error_code(exc):
    for cls, code in (
        (DomainError, "domain"),
        (InputError, "input"),
        (StepError, "step"),
        (ConvergenceError, "convergence"),
    ):
        if isinstance(exc, cls):
            return code
    return "error"


def _error_payload(exc):
    err = {"code": _error_code(exc), "message": str(exc)}
    if isinstance(exc, StepError) and exc.diagnostics:
        err["diagnostics"] = exc.diagnostics
    elif isinstance(exc, ConvergenceError) and exc.violation is not None:
        err["violation"] = exc.violation
    return {"schema": SCHEMA, "error": err}


def run(cfg, stdout=None):
    """Execute ``cfg``, print the summary and write artifacts; return exit status."""
    stdout = stdout or sys.stdout
    try:
        out = _RUNNERS[cfg.command](cfg)
    except InputError as exc:
        stdout.write(dumps(_error_payload(exc)) + "\n")
        return EXIT_INPUT
    except ConvergenceError as exc:
        stdout.write(dumps(_error_payload(exc)) + "\n")
        return EXIT_SOLVER
    if cfg.out_dir:
        for name, header, rows in out.artifacts:
            write_csv(Path(cfg.out_dir) / name, header, rows)
    if cfg.format == "csv" and out.table is not None:
        stdout.write(format_csv(*out.table))
    else:
        summary = {
            "schema": SCHEMA,
            "command": cfg.command,
            "seed": cfg.seed,
            **({} if cfg.command in ("check", "match") else {"generator": cfg.generator}),
            **out.summary,
        }
        stdout.write(dumps(summary) + "\n")
    return out.status


def main(argv=None):
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if ns.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
        cfg = config_from_args(ns)
    except (InputError, TypeError) as exc:
        sys.stdout.write(dumps(_error_payload(InputError(str(exc)))) + "\n")
        return EXIT_INPUT
    except BWError as exc:
        sys.stdout.write(dumps(_error_payload(exc)) + "\n")
        return EXIT_INPUT
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
