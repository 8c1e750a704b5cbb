"""Orthonormal polynomial bases of the active variables.

The basis is Phi(ut) = M P_k(ut), where P_k is the monomial vector and M is
the inverse Cholesky factor of the monomial Gram matrix
G = E[P_k(W1^T z) P_k(W1^T z)^T].  G is an expectation over the *input*
distribution, so the density of the active variables is never needed.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite_e import herme2poly
from scipy.linalg import cholesky, solve_triangular

from .active_subspace import ActiveSubspace
from .orthopoly import (MultiIndexSet, family_for, gauss_rule, monomial_jacobian, monomial_matrix,
                        multi_index_set, num_terms)

log = logging.getLogger(__name__)

WHITENED = "whitened"
HERMITE_FAST_PATH = "hermite_fast_path"

TENSOR_MAX_DIM = 4
MC_MIN_SAMPLES = 1_000_000
MC_CHUNK = 100_000
COND_LIMIT = 1e12


class BasisConstructionError(ValueError):
    pass


@dataclass(frozen=True)
class WhitenedBasis:
    m: int
    k: int
    M: np.ndarray
    source: str = WHITENED

    @property
    def indices(self) -> MultiIndexSet:
        return multi_index_set(self.m, self.k)

    def __len__(self) -> int:
        return self.M.shape[0]

    def eval(self, ut) -> np.ndarray:
        """Basis values at active-variable points ``ut`` ``(n, m)`` -> ``(n, q+1)``."""
        ut = np.asarray(ut, dtype=float)
        single = ut.ndim == 1
        P = monomial_matrix(np.atleast_2d(ut), self.indices)
        out = P @ self.M.T
        return out[0] if single else out

    def jacobian(self, ut) -> np.ndarray:
        """d Phi_j / d ut_a, shape ``(n, q+1, m)``."""
        dP = monomial_jacobian(np.atleast_2d(ut), self.indices)
        return np.einsum("jl,nla->nja", self.M, dP)

    def truncate(self, p: int) -> "WhitenedBasis":
        """Leading sub-basis of total degree <= p (a prefix, thanks to the graded order)."""
        if not 0 <= p <= self.k:
            raise ValueError(f"truncation degree must be in [0, {self.k}], got {p}")
        q = num_terms(self.m, p)
        return WhitenedBasis(self.m, p, self.M[:q, :q].copy(), self.source)


def _tensor_gauss_nodes(asub: ActiveSubspace, nodes_per_dim: int):
    rules = [gauss_rule(family_for(mg), nodes_per_dim) for mg in asub.rv.marginals]
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    z = np.stack([g.ravel() for g in grids], axis=1)
    w = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return z, w


def compute_G(asub: ActiveSubspace, k: int, estimator: str = "auto", n: int | None = None,
              seed: int = 0, nodes_per_dim: int | None = None) -> np.ndarray:
    """Monomial Gram matrix of the active variables.

    ``estimator`` is ``"tensor"`` (tensor Gauss rule in the standardized
    input space; exact since the integrand is a polynomial of degree 2k),
    ``"mc"`` (plain Monte Carlo), ``"qmc"`` (scrambled Sobol, ``n`` rounded
    up to a power of two) or ``"auto"`` (tensor for <= 4 inputs, qmc beyond).
    """
    if asub.rv is None:
        raise ValueError("active subspace carries no input distribution")
    W1 = asub.W1
    idx = multi_index_set(asub.m, k)
    q1 = len(idx)
    if estimator == "auto":
        estimator = "tensor" if asub.dim <= TENSOR_MAX_DIM else "qmc"
    if estimator == "tensor":
        z, w = _tensor_gauss_nodes(asub, nodes_per_dim or k + 1)
        P = monomial_matrix(z @ W1, idx)
        G = (P * w[:, None]).T @ P
    elif estimator in ("mc", "qmc"):
        n_min = 10 * q1 * q1
        if n is None:
            n = max(MC_MIN_SAMPLES, n_min)
        elif n < n_min:
            raise BasisConstructionError(f"Monte Carlo Gram estimate needs n >= {n_min} for {q1} terms, got {n}")
        if estimator == "qmc":
            z = asub.rv.sample_sobol(math.ceil(math.log2(n)), seed)
            n = len(z)
        else:
            z = asub.rv.sample_standard(n, seed)
        G = np.zeros((q1, q1))
        for start in range(0, n, MC_CHUNK):
            P = monomial_matrix(z[start:start + MC_CHUNK] @ W1, idx)
            G += P.T @ P
        G /= n
    else:
        raise ValueError(f"unknown Gram estimator {estimator!r}")
    G = 0.5 * (G + G.T)
    lam = np.linalg.eigvalsh(G)
    if lam[0] <= 1e-12:
        raise BasisConstructionError(
            f"monomial Gram matrix is not positive definite (smallest eigenvalue {lam[0]:.3e}); "
            "use more samples or a lower polynomial degree")
    cond = lam[-1] / lam[0]
    if cond > COND_LIMIT:
        log.warning("monomial Gram matrix is ill-conditioned (cond %.2e > %.0e); consider a lower degree "
                    "or more samples", cond, COND_LIMIT)
    return G


def whiten(G) -> np.ndarray:
    """M = Q^{-1} with G = Q Q^T (Q lower triangular)."""
    G = np.asarray(G, dtype=float)
    try:
        Q = cholesky(G, lower=True)
    except np.linalg.LinAlgError as exc:
        raise BasisConstructionError(
            f"Cholesky factorization of the Gram matrix failed ({exc}); "
            "use more samples or a lower polynomial degree") from exc
    return solve_triangular(Q, np.eye(len(G)), lower=True)


def whitened_basis(asub: ActiveSubspace, k: int, **gram_opts) -> WhitenedBasis:
    return WhitenedBasis(asub.m, k, whiten(compute_G(asub, k, **gram_opts)), WHITENED)


def _hermite_coeffs(n: int) -> np.ndarray:
    c = np.zeros(n + 1)
    c[n] = 1.0
    return herme2poly(c) / math.sqrt(math.factorial(n))


def hermite_fast_path(asub: ActiveSubspace, k: int) -> WhitenedBasis:
    """Analytic basis when every input is Gaussian.

    Standardized Gaussian inputs and orthonormal W1 make the active
    variables standard normal, so the basis is the product of normalized
    probabilists' Hermite polynomials.
    """
    if asub.rv is not None and not asub.rv.all_normal:
        raise BasisConstructionError("Hermite fast path needs all-Gaussian inputs; use the whitened basis")
    m = asub.m if asub.m is not None else asub.dim
    return hermite_basis(m, k)


def hermite_basis(m: int, k: int) -> WhitenedBasis:
    idx = multi_index_set(m, k)
    coeffs = [_hermite_coeffs(j) for j in range(k + 1)]
    q1 = len(idx)
    M = np.zeros((q1, q1))
    for row, alpha in enumerate(idx.indices):
        for col, beta in enumerate(idx.indices):
            if np.all(beta <= alpha):
                M[row, col] = math.prod(coeffs[a][b] for a, b in zip(alpha, beta))
    return WhitenedBasis(m, k, M, HERMITE_FAST_PATH)


def make_basis(asub: ActiveSubspace, k: int, **gram_opts) -> WhitenedBasis:
    """Fast path for Gaussian inputs, whitening otherwise."""
    if asub.rv is not None and asub.rv.all_normal:
        return hermite_fast_path(asub, k)
    return whitened_basis(asub, k, **gram_opts)
