"""Active subspaces from the gradient outer-product matrix C = E[grad f grad f^T].

C is estimated in standardized variables, so its eigenvalues are comparable
across inputs whose physical scales differ by orders of magnitude.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .distributions import RandomVector

log = logging.getLogger(__name__)

GradFn = Callable[[np.ndarray], np.ndarray]


def fd_gradient(f: Callable[[np.ndarray], np.ndarray], rv: RandomVector, rel_step: float = 1e-6,
                indices=None) -> GradFn:
    """Central finite-difference gradient of a vectorized model.

    Steps are taken in standardized variables (``rel_step * max(1, |z_i|)``)
    and converted back, so the returned callable yields d f / d u in the
    original space.  With ``indices`` only those components are nonzero.
    """
    scale = rv.scale
    cols = range(rv.dim) if indices is None else list(indices)

    def grad(u):
        u = np.atleast_2d(np.asarray(u, dtype=float))
        z = rv.standardize(u)
        out = np.zeros_like(u)
        for i in cols:
            h = rel_step * np.maximum(1.0, np.abs(z[:, i]))
            zp, zm = z.copy(), z.copy()
            zp[:, i] += h
            zm[:, i] -= h
            df = f(rv.destandardize(zp)) - f(rv.destandardize(zm))
            out[:, i] = df / (2.0 * h) / scale[i]
        return out

    return grad


def estimate_C(grad_fn: GradFn, rv: RandomVector, n: int, seed: int, indices=None) -> np.ndarray:
    """Monte Carlo estimate of C in standardized variables.

    ``grad_fn`` maps original-space points ``(n, d)`` to original-space
    gradients ``(n, d)``.  With ``indices`` the matrix is restricted to those
    inputs, while sampling still covers the full input vector.
    """
    cols = list(range(rv.dim)) if indices is None else list(indices)
    if n < len(cols):
        warnings.warn(f"estimating a {len(cols)}x{len(cols)} gradient matrix from only {n} samples",
                      stacklevel=2)
    u = rv.sample(n, seed)
    g = np.asarray(grad_fn(u), dtype=float)
    if g.shape != u.shape:
        raise ValueError(f"gradient function returned shape {g.shape}, expected {u.shape}")
    bad = np.flatnonzero(~np.all(np.isfinite(g), axis=1))
    if len(bad):
        raise FloatingPointError(f"non-finite gradient at sample {bad[0]}: u = {u[bad[0]].tolist()}")
    gz = g[:, cols] * rv.scale[cols]
    C = gz.T @ gz / n
    return 0.5 * (C + C.T)


@dataclass(frozen=True)
class ActiveSubspace:
    eigenvalues: np.ndarray
    W: np.ndarray
    m: int | None = None
    rv: RandomVector | None = None
    indices: tuple[int, ...] | None = None  # inputs of the full vector the subspace lives on

    @property
    def dim(self) -> int:
        return self.W.shape[0]

    @property
    def W1(self) -> np.ndarray:
        self._need_m()
        return self.W[:, : self.m]

    @property
    def W2(self) -> np.ndarray:
        self._need_m()
        return self.W[:, self.m:]

    def _need_m(self):
        if self.m is None:
            raise ValueError("active dimension m has not been chosen")

    def with_dim(self, m: int) -> "ActiveSubspace":
        if not 1 <= m <= self.dim:
            raise ValueError(f"active dimension must be in [1, {self.dim}], got {m}")
        return ActiveSubspace(self.eigenvalues, self.W, int(m), self.rv, self.indices)

    def normalized_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues / self.eigenvalues[0]

    def _standard(self, u, standardized: bool) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got {u.shape[-1]}")
        if standardized:
            return u
        if self.rv is None:
            raise ValueError("subspace has no RandomVector; pass standardized points")
        return self.rv.standardize(u)

    def project(self, u, standardized: bool = False) -> np.ndarray:
        """Active variables W1^T z of (standardized) ``u``."""
        return self._standard(u, standardized) @ self.W1

    def project_inactive(self, u, standardized: bool = False) -> np.ndarray:
        return self._standard(u, standardized) @ self.W2


def eigendecompose(C, rv: RandomVector | None = None, indices=None) -> ActiveSubspace:
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"C must be square, got shape {C.shape}")
    scale = max(1.0, np.abs(C).max())
    if np.abs(C - C.T).max() > 1e-10 * scale:
        raise ValueError("C is not symmetric")
    try:
        lam, W = np.linalg.eigh(0.5 * (C + C.T))
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"symmetric eigensolver failed: {exc}") from exc
    lam, W = lam[::-1], W[:, ::-1]
    tol = 1e-12 * max(1.0, abs(lam[0]))
    if lam[-1] < -tol:
        raise ValueError(f"C has a negative eigenvalue {lam[-1]:.3e}; not positive semi-definite")
    lam = np.clip(lam, 0.0, None)
    # largest-magnitude entry of each eigenvector is positive
    pivot = np.argmax(np.abs(W), axis=0)
    W = W * np.sign(W[pivot, np.arange(W.shape[1])])
    return ActiveSubspace(lam, W, None, rv, None if indices is None else tuple(indices))


def choose_dim(eigenvalues, m: int | None = None, gap: float = 1e-2) -> int:
    """Manual ``m`` if given; otherwise the smallest m with lambda_{m+1}/lambda_1 < gap."""
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    d = len(eigenvalues)
    if m is not None:
        if not 1 <= m <= d:
            raise ValueError(f"active dimension must be in [1, {d}], got {m}")
        return int(m)
    if eigenvalues[0] <= 0:
        return d
    ratios = eigenvalues / eigenvalues[0]
    for j in range(1, d):
        if ratios[j] < gap:
            return j
    return d


def discover(grad_fn: GradFn, rv: RandomVector, n: int = 100, seed: int = 0, m: int | None = None,
             gap: float = 1e-2, indices=None) -> ActiveSubspace:
    """estimate_C, eigendecompose and choose_dim in one call."""
    C = estimate_C(grad_fn, rv, n, seed, indices)
    sub_rv = rv if indices is None else rv.subset(indices)
    a = eigendecompose(C, sub_rv, indices)
    a = a.with_dim(choose_dim(a.eigenvalues, m, gap))
    log.info("active subspace: m=%d, normalized eigenvalues %s", a.m, np.array2string(a.normalized_eigenvalues(), precision=3))
    return a
