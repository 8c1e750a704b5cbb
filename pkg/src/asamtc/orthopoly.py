"""Orthonormal polynomial families, Gauss rules and multi-index bases.

Weights are probability densities: the standard normal density for
probabilists' Hermite and 1/2 on [-1, 1] for Legendre.  Every family is
evaluated through the three-term recurrence of its orthonormal form

    x phi_n = b_{n+1} phi_{n+1} + a_n phi_n + b_n phi_{n-1},   b_n = sqrt(beta_n)

so no explicit coefficient expansion is ever formed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .distributions import NORMAL, Marginal

HERMITE = "hermite"
LEGENDRE = "legendre"


@dataclass(frozen=True)
class Family:
    kind: str

    def __post_init__(self):
        if self.kind not in (HERMITE, LEGENDRE):
            raise ValueError(f"unknown polynomial family {self.kind!r}")

    def alpha(self, n: int) -> np.ndarray:
        return np.zeros(n)

    def beta(self, n: int) -> np.ndarray:
        """Monic recurrence coefficients beta_1..beta_n."""
        j = np.arange(1, n + 1, dtype=float)
        if self.kind == HERMITE:
            return j
        return j * j / (4.0 * j * j - 1.0)

    def norm_sq(self, degree: int) -> float:
        """Squared norm of the classical (unnormalized) polynomial."""
        if self.kind == HERMITE:
            return float(math.factorial(degree))
        return 1.0 / (2 * degree + 1)


HERMITE_FAMILY = Family(HERMITE)
LEGENDRE_FAMILY = Family(LEGENDRE)


def family_for(marginal: Marginal) -> Family:
    return HERMITE_FAMILY if marginal.kind == NORMAL else LEGENDRE_FAMILY


def num_terms(d: int, p: int) -> int:
    """Size of the total-degree basis, (d + p)! / (d! p!)."""
    if d < 1 or p < 0:
        raise ValueError(f"need d >= 1 and p >= 0, got d={d}, p={p}")
    if d + p > 60:
        raise OverflowError(f"d + p = {d + p} exceeds the supported range (<= 60)")
    return math.comb(d + p, p)


def eval_all(fam: Family, max_degree: int, x) -> np.ndarray:
    """Orthonormal polynomials of degree 0..max_degree at ``x``.

    Returns an array of shape ``x.shape + (max_degree + 1,)``.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (max_degree + 1,))
    out[..., 0] = 1.0
    if max_degree == 0:
        return out
    a = fam.alpha(max_degree)
    b = np.sqrt(fam.beta(max_degree))
    out[..., 1] = (x - a[0]) / b[0]
    for n in range(1, max_degree):
        out[..., n + 1] = ((x - a[n]) * out[..., n] - b[n - 1] * out[..., n - 1]) / b[n]
    return out


def eval_family(fam: Family, degree: int, x, normalized: bool = True):
    """Degree-``degree`` polynomial of ``fam`` at ``x``.

    With ``normalized=False`` the classical polynomial is returned
    (He_n for Hermite, P_n with P_n(1) = 1 for Legendre).
    """
    if degree > 30:
        raise ValueError(f"degree {degree} exceeds the supported maximum of 30")
    val = eval_all(fam, degree, x)[..., degree]
    if not normalized:
        val = val * math.sqrt(fam.norm_sq(degree))
    return val


def gauss_rule(fam: Family, k: int) -> tuple[np.ndarray, np.ndarray]:
    """k-node Gauss rule for ``fam``'s probability weight (Golub-Welsch)."""
    if not 1 <= k <= 50:
        raise ValueError(f"number of Gauss nodes must be in [1, 50], got {k}")
    if k == 1:
        return np.zeros(1), np.ones(1)
    nodes, vecs = eigh_tridiagonal(fam.alpha(k), np.sqrt(fam.beta(k - 1)))
    weights = vecs[0, :] ** 2
    # both weights are even: enforce exact symmetry so odd moments vanish
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return nodes, weights / weights.sum()


def monomial_moment(fam: Family, degree: int) -> float:
    """E[X^degree] under ``fam``'s probability weight."""
    if degree % 2:
        return 0.0
    if fam.kind == HERMITE:
        return float(math.prod(range(degree - 1, 0, -2))) if degree else 1.0
    return 1.0 / (degree + 1)


@dataclass(frozen=True)
class MultiIndexSet:
    """All multi-indices of total degree <= ``max_total_degree``.

    Ordering: by total degree; within a degree, mixed terms (smaller largest
    exponent) come first, then reverse-lexicographic so ``u1`` leads.  For
    d=2, p=2 this gives 1, u1, u2, u1u2, u1^2, u2^2.
    """

    dim: int
    max_total_degree: int
    indices: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def degrees(self) -> np.ndarray:
        return self.indices.sum(axis=1)

    def position(self, index: Sequence[int]) -> int:
        hits = np.flatnonzero(np.all(self.indices == np.asarray(index), axis=1))
        if not len(hits):
            raise KeyError(f"multi-index {tuple(index)} not in set")
        return int(hits[0])


def _compositions(total: int, dim: int):
    if dim == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, dim - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def _index_array(d: int, p: int) -> np.ndarray:
    rows = []
    for total in range(p + 1):
        block = list(_compositions(total, d))
        block.sort(key=lambda idx: max(idx))  # stable: keeps reverse-lex inside ties
        rows.extend(block)
    arr = np.array(rows, dtype=np.int64).reshape(len(rows), d)
    arr.setflags(write=False)
    return arr


def multi_index_set(d: int, p: int) -> MultiIndexSet:
    num_terms(d, p)  # validates ranges
    return MultiIndexSet(d, p, _index_array(d, p))


def _power_table(z: np.ndarray, p: int) -> np.ndarray:
    """z**e for e = 0..p, shape ``z.shape + (p + 1,)``."""
    table = np.empty(z.shape + (p + 1,))
    table[..., 0] = 1.0
    for e in range(1, p + 1):
        table[..., e] = table[..., e - 1] * z
    return table


def monomial_matrix(z, indices: MultiIndexSet) -> np.ndarray:
    """Monomials of the rows of ``z`` (shape ``(n, dim)``); returns ``(n, q+1)``."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    idx = indices.indices
    pw = _power_table(z, indices.max_total_degree)
    out = np.ones((z.shape[0], len(idx)))
    for j in range(indices.dim):
        out *= pw[:, j, idx[:, j]]
    return out


def monomial_jacobian(z, indices: MultiIndexSet) -> np.ndarray:
    """d/dz_a of every monomial; shape ``(n, q+1, dim)``."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    idx = indices.indices
    pw = _power_table(z, indices.max_total_degree)
    n, dim = z.shape
    factors = np.stack([pw[:, j, idx[:, j]] for j in range(dim)], axis=-1)  # (n, q+1, dim)
    out = np.empty((n, len(idx), dim))
    for a in range(dim):
        lowered = pw[:, a, np.maximum(idx[:, a] - 1, 0)] * idx[:, a]
        others = np.prod(np.delete(factors, a, axis=-1), axis=-1) if dim > 1 else 1.0
        out[:, :, a] = lowered * others
    return out


def monomial_vector(u, k: int) -> np.ndarray:
    """P_k(u): all monomials of total degree <= k of one point ``u``."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return monomial_matrix(u[None, :], multi_index_set(len(u), k))[0]


def tensor_basis_eval(indices: MultiIndexSet, families: Sequence[Family], z) -> np.ndarray:
    """Products of univariate orthonormal polynomials, one family per dimension.

    ``z`` is in standardized variables, shape ``(n, dim)`` or ``(dim,)``.
    """
    if len(families) != indices.dim:
        raise ValueError(f"need {indices.dim} families, got {len(families)}")
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    idx = indices.indices
    out = np.ones((z.shape[0], len(idx)))
    for j, fam in enumerate(families):
        vals = eval_all(fam, indices.max_total_degree, z[:, j])
        out *= vals[:, idx[:, j]]
    return out[0] if single else out
