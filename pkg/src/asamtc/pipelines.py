"""End-to-end drivers: Monte Carlo, AS-NIPC, AS-AMTC and convergence studies."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import graph as G
from .active_subspace import ActiveSubspace, discover, fd_gradient
from .models import Model
from .nipc import ActiveBasis, PceSurrogate, TensorBasis, compute_coefficients
from .quadrature import gauss_factor, moment_degree, node_count, solve_rule, tensor_product_rule
from .whitening import make_basis

log = logging.getLogger(__name__)

MC = "mc"
AS_NIPC = "as-nipc"
AS_AMTC = "as-amtc"
METHODS = (MC, AS_NIPC, AS_AMTC)


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"[{stage}] {exc}")
        self.stage = stage
        self.__cause__ = exc


class _stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


@dataclass(frozen=True)
class Seeds:
    """Independent seeds for every stochastic stage, derived from one integer."""

    base: int = 0

    def _derive(self, tag: int) -> int:
        return int(np.random.SeedSequence([self.base, tag]).generate_state(1)[0])

    @property
    def grad(self) -> int:
        return self._derive(1)

    @property
    def gram(self) -> int:
        return self._derive(2)

    @property
    def rule(self) -> int:
        return self._derive(3)

    @property
    def mc(self) -> int:
        return self._derive(4)

    def as_dict(self) -> dict:
        return {"base": self.base, "grad": self.grad, "gram": self.gram, "rule": self.rule, "mc": self.mc}


@dataclass
class UqResult:
    method: str
    mean: float
    variance: float
    n_model_evals: int
    weighted_op_cost: float = 0.0
    wall_time: float = 0.0
    n_grad_evals: int = 0
    naive_op_cost: float = 0.0
    settings: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    details: dict = field(default_factory=dict, repr=False)

    def row(self) -> dict:
        return {"method": self.method, "mean": self.mean, "variance": self.variance,
                "evals": self.n_model_evals, "op_cost": self.weighted_op_cost}


def _graph_cost(model: Model, n: int) -> float:
    return G.naive_cost(model.graph, n) if model.graph is not None else 0.0


def run_mc(model: Model, n: int, seed: int) -> UqResult:
    t0 = time.perf_counter()
    u = model.rv.sample(n, seed)
    with _stage("model evaluation"):
        f = np.asarray(model.f(u), dtype=float)
    bad = np.flatnonzero(~np.isfinite(f))
    if len(bad):
        raise StageError("model evaluation", FloatingPointError(f"non-finite output at sample {bad[0]}"))
    var = float(np.var(f, ddof=1)) if n > 1 else 0.0
    cost = _graph_cost(model, n)
    return UqResult(MC, float(np.mean(f)), var, n, cost, time.perf_counter() - t0,
                    naive_op_cost=cost, settings={"n": n, "seed": seed})


def _subspace(model: Model, n_grad: int, seed: int, m, gap, indices=None) -> ActiveSubspace:
    grad = model.grad
    if grad is None:
        grad = fd_gradient(model.f, model.rv, indices=indices)
    return discover(grad, model.rv, n_grad, seed, m, gap, indices)


def _grad_evals(model: Model, n_grad: int, n_cols: int) -> int:
    # closed-form gradients count one model-equivalent evaluation per sample
    return n_grad if model.grad is not None else 2 * n_grad * n_cols


def run_as_nipc(model: Model, m: int | None = None, gap: float = 1e-2, k: int = 5, p: int | None = None,
                n_grad: int = 100, n_nodes: int | None = None, seeds: Seeds = Seeds(),
                restarts: int = 10, gram: dict | None = None) -> UqResult:
    """Active subspace -> basis -> designed rule -> projection -> mean/variance."""
    t0 = time.perf_counter()
    if p is None:
        p = (k - 1) // 2
    with _stage("active subspace"):
        asub = _subspace(model, n_grad, seeds.grad, m, gap)
    with _stage("basis"):
        basis = make_basis(asub, max(moment_degree(k), p), **(gram or {"seed": seeds.gram}))
    with _stage("quadrature"):
        n = n_nodes if n_nodes is not None else node_count(asub.m, k)
        rule = solve_rule(basis, asub, n, k=k, seed=seeds.rule, restarts=restarts)
    with _stage("model evaluation"):
        f = np.asarray(model.f(rule.nodes), dtype=float)
    with _stage("coefficients"):
        pce_basis = ActiveBasis(basis.truncate(p), asub)
        alpha = compute_coefficients(f, pce_basis.eval(rule.nodes), rule.weights)
        sur = PceSurrogate(pce_basis, alpha, {"rule": "designed", "model": model.name})
    cost = _graph_cost(model, len(rule))
    settings = {"m": asub.m, "gap": gap, "k": k, "p": p, "n_grad": n_grad, "n_nodes": len(rule),
                "restarts": restarts, "seeds": seeds.as_dict()}
    return UqResult(AS_NIPC, sur.mean, sur.variance, len(rule), cost, time.perf_counter() - t0,
                    _grad_evals(model, n_grad, model.rv.dim), cost, settings,
                    details={"subspace": asub, "basis": basis, "rule": rule, "surrogate": sur, "f": f})


def run_as_amtc(model: Model, sr_threshold: float = 0.05, m: int | None = None, gap: float = 1e-2,
                k: int = 5, k_sparse: int = 3, p: int | None = None, n_grad: int = 100,
                n_nodes: int | None = None, seeds: Seeds = Seeds(), restarts: int = 10,
                check_naive: bool = True, gram: dict | None = None) -> UqResult:
    """AS-NIPC on the non-sparse inputs, tensorized with Gauss rules on sparse inputs, AMTC evaluation."""
    if model.graph is None:
        raise ValueError(f"model {model.name!r} has no computational graph; AS-AMTC needs one")
    t0 = time.perf_counter()
    g = model.graph
    sparse, dense = G.identify_sparse_inputs(g, sr_threshold)
    if not sparse or not dense:
        msg = (f"no sparse inputs below SR threshold {sr_threshold}; falling back to AS-NIPC" if not sparse
               else "every input is sparse; falling back to AS-NIPC")
        log.warning(msg)
        res = run_as_nipc(model, m, gap, k, p, n_grad, n_nodes, seeds, restarts, gram)
        res.warnings.append(msg)
        res.settings["fallback"] = AS_NIPC
        res.method = AS_AMTC
        return res
    if p is None:
        p = (k - 1) // 2
    with _stage("active subspace"):
        asub = _subspace(model, n_grad, seeds.grad, m, gap, indices=dense)
    with _stage("basis"):
        basis = make_basis(asub, max(moment_degree(k), p), **(gram or {"seed": seeds.gram}))
    with _stage("quadrature"):
        n = n_nodes if n_nodes is not None else node_count(asub.m, k)
        core = solve_rule(basis, asub, n, k=k, seed=seeds.rule, restarts=restarts)
        rule = tensor_product_rule(core, [gauss_factor(model.rv, i, k_sparse) for i in sparse])
    with _stage("model evaluation"):
        grid = G.TensorGrid([(f.inputs, f.nodes) for f in rule.factors] if rule.factors
                            else [(rule.inputs, rule.nodes)])
        amtc = G.eval_tensor_grid_amtc(g, grid)
        f = amtc.values.ravel()
    with _stage("coefficients"):
        pce_basis = TensorBasis(ActiveBasis(basis.truncate(p), asub), model.rv, sparse, k_sparse - 1)
        phi = pce_basis.eval(rule.nodes)
        alpha = compute_coefficients(f, phi, rule.weights)
        sur = PceSurrogate(pce_basis, alpha, {"rule": "tensor", "model": model.name})
    details = {"subspace": asub, "basis": basis, "rule": rule, "core_rule": core, "surrogate": sur,
               "grid": grid, "amtc": amtc, "sparse": sparse, "dense": dense,
               "sparsity_ratios": G.sparsity_ratios(g)}
    naive_cost = G.naive_cost(g, grid.size)
    if check_naive:
        naive = G.eval_tensor_grid_naive(g, grid)
        alpha_naive = compute_coefficients(naive.values.ravel(), phi, rule.weights)
        details["alpha_naive"] = alpha_naive
        details["naive_max_diff"] = float(np.max(np.abs(alpha_naive - alpha)))
        naive_cost = naive.cost
    settings = {"m": asub.m, "gap": gap, "k": k, "k_sparse": k_sparse, "p": p, "n_grad": n_grad,
                "n_core": len(core), "sparse_inputs": sparse, "sr_threshold": sr_threshold,
                "restarts": restarts, "seeds": seeds.as_dict()}
    return UqResult(AS_AMTC, sur.mean, sur.variance, grid.size, amtc.cost, time.perf_counter() - t0,
                    _grad_evals(model, n_grad, len(dense)), naive_cost, settings, details=details)


def mc_oracle(model: Model, n: int = 100_000, seed: int = 20240101) -> float:
    """Ground-truth mean from a seeded Monte Carlo run."""
    return run_mc(model, n, seed).mean


def _order_for_budget(m: int, budget: int) -> int:
    k = 1
    while node_count(m, k + 1) <= budget:
        k += 1
    return k


def _cell(model, method, budget, repeat, seed, opts):
    if method == MC:
        res = run_mc(model, budget, Seeds(seed + repeat).mc)
    elif method == AS_NIPC:
        m = opts["m_resolved"]
        res = run_as_nipc(model, m, opts.get("gap", 1e-2), _order_for_budget(m, budget), None,
                          opts.get("n_grad", 100), budget, Seeds(seed), opts.get("restarts", 10))
    elif method == AS_AMTC:
        m = opts["m_resolved"]
        res = run_as_amtc(model, opts.get("sr_threshold", 0.05), m, opts.get("gap", 1e-2),
                          _order_for_budget(m, budget), opts.get("k_sparse", 3), None,
                          opts.get("n_grad", 100), budget, Seeds(seed), opts.get("restarts", 10),
                          check_naive=False)
    else:
        raise ValueError(f"unknown method {method!r}")
    return res


def convergence_study(model: Model, methods: Sequence[str], budgets: Sequence[int], repeats: int = 20,
                      seed: int = 0, oracle: float | None = None, n_oracle: int = 100_000,
                      jobs: int = 1, **opts) -> list[dict]:
    """Relative mean error of each method x budget x repeat against an MC oracle.

    Monte Carlo repeats use distinct seeds; the AS methods reuse the base
    seed so their repeats are identical by construction.  For the AS methods
    the budget is the number of (core) quadrature nodes.
    """
    if not budgets:
        raise ValueError("budget list is empty")
    for meth in methods:
        if meth not in METHODS:
            raise ValueError(f"unknown method {meth!r}")
    if oracle is None:
        oracle = mc_oracle(model, n_oracle)
    if any(meth != MC for meth in methods):
        # fix m once so the budget -> order mapping is stable across cells
        if opts.get("m") is not None:
            opts["m_resolved"] = opts["m"]
        else:
            idx = None
            if AS_AMTC in methods and model.graph is not None:
                _, dense = G.identify_sparse_inputs(model.graph, opts.get("sr_threshold", 0.05))
                idx = dense or None
            opts["m_resolved"] = _subspace(model, opts.get("n_grad", 100), Seeds(seed).grad, None,
                                           opts.get("gap", 1e-2), idx).m
    cells = [(meth, int(b), r) for meth in methods for b in budgets for r in range(repeats)]

    def run(cell):
        meth, b, r = cell
        return _cell(model, meth, b, r, seed, opts)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(run, cells))
    else:
        results = [run(c) for c in cells]
    rows = []
    for (meth, b, r), res in zip(cells, results):
        rows.append({"method": meth, "budget": b, "repeat": r, "mean": res.mean, "variance": res.variance,
                     "rel_error": abs(res.mean - oracle) / abs(oracle), "evals": res.n_model_evals,
                     "op_cost": res.weighted_op_cost, "seconds": res.wall_time})
    return rows


def loglog_slope(rows: list[dict], method: str) -> float:
    """Least-squares slope of log(mean rel. error) against log(budget)."""
    budgets = sorted({r["budget"] for r in rows if r["method"] == method})
    err = [np.mean([r["rel_error"] for r in rows if r["method"] == method and r["budget"] == b]) for b in budgets]
    return float(np.polyfit(np.log(budgets), np.log(err), 1)[0])
