"""Designed quadrature rules for active-variable polynomial bases.

Nodes live in the original input space; only their projections onto the
active subspace enter the moment-matching residuals

    r_j = sum_i w_i Phi_j(W1^T z_i) - delta_j0,

which are driven to zero by a damped Gauss-Newton (Levenberg-Marquardt)
iteration.  Weights are parameterized as exp(v) and bounded coordinates as
tanh of a free variable, which keeps every iterate feasible.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .active_subspace import ActiveSubspace
from .distributions import RandomVector
from .orthopoly import family_for, gauss_rule
from .whitening import WhitenedBasis

log = logging.getLogger(__name__)


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class TensorFactor:
    """One axis of a tensor-structured rule: nodes over ``inputs`` and weights."""

    inputs: tuple[int, ...]
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return len(self.weights)


@dataclass
class QuadratureRule:
    nodes: np.ndarray  # (n, len(inputs)), original input space
    weights: np.ndarray
    residual_norm: float = 0.0
    inputs: tuple[int, ...] | None = None
    factors: tuple[TensorFactor, ...] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.inputs is None:
            self.inputs = tuple(range(self.nodes.shape[1]))
        if len(self.weights) != self.nodes.shape[0]:
            raise ValueError("node and weight counts differ")

    def __len__(self) -> int:
        return len(self.weights)

    def as_factor(self) -> TensorFactor:
        return TensorFactor(tuple(self.inputs), self.nodes, self.weights)


def node_count(m: int, k: int) -> int:
    """Designed-quadrature size: k^m/m for m <= 2, else 0.9 (2m)^(k-1)/(k-1)!; rounded up."""
    if m < 1 or k < 1:
        raise ValueError(f"need m >= 1 and k >= 1, got m={m}, k={k}")
    if m <= 2:
        n = k ** m / m
    else:
        n = 0.9 * (2 * m) ** (k - 1) / math.factorial(k - 1)
    # float noise must not push an integral value up by one
    return max(1, math.ceil(n - 1e-9))


def moment_degree(k: int) -> int:
    """Highest total degree matched by a rule of order k (degrees < k, but always the mean)."""
    return max(k - 1, 1)


def _active(z: np.ndarray, W1: np.ndarray) -> np.ndarray:
    return z @ W1


def residuals(nodes, weights, basis: WhitenedBasis, asub: ActiveSubspace,
              standardized: bool = False) -> np.ndarray:
    """Moment-matching residuals over every function of ``basis``."""
    z = np.atleast_2d(np.asarray(nodes, dtype=float))
    if not standardized:
        z = asub.rv.standardize(z)
    phi = basis.eval(_active(z, asub.W1))
    r = phi.T @ np.asarray(weights, dtype=float)
    r[0] -= 1.0
    return r


class _Problem:
    """Residual and Jacobian in the free variables (zeta, v)."""

    def __init__(self, basis: WhitenedBasis, W1: np.ndarray, bounded: np.ndarray, n: int):
        self.basis = basis
        self.W1 = W1
        self.bounded = bounded
        self.n = n
        self.d = W1.shape[0]

    def unpack(self, x):
        zeta = x[: self.n * self.d].reshape(self.n, self.d)
        v = x[self.n * self.d:]
        z = np.where(self.bounded, np.tanh(zeta), zeta)
        return zeta, z, np.exp(v)

    def pack(self, z, w):
        zeta = np.where(self.bounded, np.arctanh(np.clip(z, -1 + 1e-12, 1 - 1e-12)), z)
        return np.concatenate([zeta.ravel(), np.log(w)])

    def residual(self, x):
        _, z, w = self.unpack(x)
        phi = self.basis.eval(_active(z, self.W1))
        r = phi.T @ w
        r[0] -= 1.0
        return r

    def jacobian(self, x):
        zeta, z, w = self.unpack(x)
        ut = _active(z, self.W1)
        phi = self.basis.eval(ut)  # (n, q)
        dphi = self.basis.jacobian(ut)  # (n, q, m)
        dz = np.where(self.bounded, 1.0 - z * z, 1.0)  # (n, d)
        # d r_j / d zeta_il = w_i sum_a dphi[i, j, a] W1[l, a] dz[i, l]
        jz = np.einsum("i,ija,la,il->jil", w, dphi, self.W1, dz).reshape(phi.shape[1], -1)
        jv = (phi * w[:, None]).T
        return np.hstack([jz, jv])

    def fd_jacobian(self, x, h=1e-7):
        J = np.empty((len(self.residual(x)), len(x)))
        for c in range(len(x)):
            e = np.zeros_like(x)
            e[c] = h
            J[:, c] = (self.residual(x + e) - self.residual(x - e)) / (2 * h)
        return J


def levenberg_marquardt(res: Callable, jac: Callable, x0: np.ndarray, tol: float = 1e-10,
                        max_iters: int = 200, tau: float = 1e-3):
    """Minimize ||res(x)||_2 with Nielsen-style damping updates.

    Steps come from the dual normal equations (J J^T + mu I) y = -r,
    dx = J^T y, which is the cheap side when unknowns outnumber residuals.
    Returns ``(x, ||r||, iterations)``.
    """
    x = x0.copy()
    r = res(x)
    J = jac(x)
    JJ = J @ J.T
    mu = tau * max(np.max(np.diag(JJ)), 1e-12)
    nu = 2.0
    rr = float(r @ r)
    it = 0
    for it in range(1, max_iters + 1):
        if math.sqrt(rr) <= tol:
            break
        try:
            y = np.linalg.solve(JJ + mu * np.eye(len(r)), -r)
        except np.linalg.LinAlgError:
            mu *= nu
            nu *= 2.0
            continue
        dx = J.T @ y
        x_new = x + dx
        r_new = res(x_new)
        rr_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
        lin = r + J @ dx
        predicted = rr - float(lin @ lin)
        rho = (rr - rr_new) / predicted if predicted > 0 else -1.0
        if rho > 0:
            x, r, rr = x_new, r_new, rr_new
            J = jac(x)
            JJ = J @ J.T
            mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
        else:
            mu *= nu
            nu *= 2.0
        if mu > 1e20:
            break
    return x, math.sqrt(rr), it


def solve_rule(basis: WhitenedBasis, asub: ActiveSubspace, n: int | None = None, *, k: int | None = None,
               seed: int = 0, restarts: int = 10, tol: float = 1e-10, max_iters: int = 1000,
               accept_tol: float = 1e-8, fd_jacobian: bool = False) -> QuadratureRule:
    """Designed quadrature rule whose projections integrate ``basis`` exactly.

    ``basis`` supplies the moment-matching functions (degree ``moment_degree(k)``
    rows are used; ``k`` defaults to ``basis.k + 1``).  Each restart starts
    from i.i.d. input draws with equal weights; the rule with the smallest
    residual norm wins, ties going to the earlier restart.
    """
    rv = asub.rv
    m = asub.m
    if k is None:
        k = basis.k + 1
    deg = moment_degree(k)
    if deg > basis.k:
        raise ValueError(f"order k={k} needs a basis of degree {deg}, got degree {basis.k}")
    cbasis = basis.truncate(deg)
    if n is None:
        n = node_count(m, k)
    problem = _Problem(cbasis, asub.W1, rv.bounded, n)
    jac = problem.fd_jacobian if fd_jacobian else problem.jacobian
    best = None
    children = np.random.SeedSequence(seed).spawn(restarts)
    for r_idx, child in enumerate(children):
        start_seed = int(child.generate_state(1)[0])
        z0 = rv.sample_standard(n, start_seed)
        x0 = problem.pack(z0, np.full(n, 1.0 / n))
        x, norm, iters = levenberg_marquardt(problem.residual, jac, x0, tol, max_iters)
        log.debug("restart %d: |r| = %.3e after %d iterations", r_idx, norm, iters)
        if best is None or norm < best[1]:
            best = (x, norm, r_idx, start_seed, iters)
    x, norm, r_idx, start_seed, iters = best
    if not norm <= accept_tol:
        raise QuadratureError(
            f"designed quadrature did not converge: best residual norm {norm:.3e} > {accept_tol:.1e} "
            f"(m={m}, k={k}, n={n}); try more nodes")
    _, z, w = problem.unpack(x)
    # exact unit mass; the residual already bounds the drift by the tolerance
    w = w / w.sum()
    nodes = rv.destandardize(z)
    meta = {"m": m, "k": k, "n": n, "moment_degree": deg, "seed": seed, "restart": r_idx,
            "restart_seed": start_seed, "iterations": iters, "restarts": restarts}
    rule = QuadratureRule(nodes, w, 0.0, asub.indices, None, meta)
    rule.residual_norm = float(np.linalg.norm(residuals(nodes, w, cbasis, asub)))
    return rule


def integrate(rule: QuadratureRule, fn: Callable[[np.ndarray], np.ndarray],
              basis_values: np.ndarray | None = None) -> float | np.ndarray:
    """sum_i w_i fn(u_i) [* Phi(u_i)].

    ``fn`` is vectorized over the rule nodes.  ``basis_values`` (``(n,)`` or
    ``(n, q+1)``) multiplies the integrand, giving projections.
    """
    vals = np.asarray(fn(rule.nodes), dtype=float).reshape(len(rule))
    bad = np.flatnonzero(~np.isfinite(vals))
    if len(bad):
        raise FloatingPointError(f"non-finite integrand at node {bad[0]}: u = {rule.nodes[bad[0]].tolist()}")
    if basis_values is None:
        return float(rule.weights @ vals)
    basis_values = np.asarray(basis_values, dtype=float)
    return (rule.weights * vals) @ basis_values


def gauss_factor(rv: RandomVector, i: int, k: int) -> TensorFactor:
    """k-node Gauss rule along input ``i`` of ``rv``, in the original space."""
    mg = rv.marginals[i]
    z, w = gauss_rule(family_for(mg), k)
    return TensorFactor((i,), (z * mg.scale + mg.loc)[:, None], w)


def tensor_product_rule(core: QuadratureRule | TensorFactor, sparse: Sequence[TensorFactor]) -> QuadratureRule:
    """Cartesian product of a core rule and per-input factors.

    Factors are ordered by their smallest input index; nodes are listed in
    row-major order over that sequence and weights multiply.
    """
    core_f = core.as_factor() if isinstance(core, QuadratureRule) else core
    factors = [core_f, *sparse]
    seen: set[int] = set()
    for f in factors:
        if seen & set(f.inputs):
            raise ValueError(f"tensor factors overlap on inputs {sorted(seen & set(f.inputs))}")
        seen |= set(f.inputs)
    meta = dict(core.meta) if isinstance(core, QuadratureRule) else {}
    residual = core.residual_norm if isinstance(core, QuadratureRule) else 0.0
    if not sparse:
        if isinstance(core, QuadratureRule):
            return core
        return QuadratureRule(core_f.nodes, core_f.weights, 0.0, core_f.inputs, (core_f,), meta)
    factors.sort(key=lambda f: min(f.inputs))
    inputs = tuple(sorted(seen))
    col = {i: c for c, i in enumerate(inputs)}
    shape = tuple(f.size for f in factors)
    total = int(np.prod(shape))
    nodes = np.empty(shape + (len(inputs),))
    weights = np.ones(shape)
    for a, f in enumerate(factors):
        view = [1] * len(factors)
        view[a] = f.size
        weights = weights * f.weights.reshape(view)
        for c, i in enumerate(f.inputs):
            nodes[..., col[i]] = f.nodes[:, c].reshape(view)
    meta.update({"tensor_shape": list(shape), "n_total": total})
    return QuadratureRule(nodes.reshape(total, len(inputs)), weights.ravel(), residual, inputs,
                          tuple(factors), meta)

