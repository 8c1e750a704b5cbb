"""Integration-based polynomial chaos: bases over the original inputs, projection, moments."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .active_subspace import ActiveSubspace
from .distributions import RandomVector
from .orthopoly import Family, eval_all, family_for, multi_index_set, tensor_basis_eval
from .whitening import WhitenedBasis


class ActiveBasis:
    """Phi_j(W1^T z) for the inputs ``asub.indices`` of a full input vector."""

    def __init__(self, basis: WhitenedBasis, asub: ActiveSubspace):
        self.basis = basis
        self.asub = asub
        self.columns = list(asub.indices) if asub.indices is not None else list(range(asub.dim))

    def __len__(self) -> int:
        return len(self.basis)

    def eval(self, u) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return self.basis.eval(self.asub.project(u[:, self.columns]))

    def labels(self) -> list[str]:
        return ["a(" + ",".join(map(str, idx)) + ")" for idx in self.basis.indices.indices]


class TensorBasis:
    """Active-variable basis times univariate orthonormal polynomials of tail inputs.

    Terms are the full tensor product of the core basis and degrees
    ``0..degree`` along every tail input; the core index varies slowest.
    """

    def __init__(self, core: ActiveBasis, rv: RandomVector, tail: Sequence[int], degree: int):
        self.core = core
        self.rv = rv
        self.tail = list(tail)
        self.degree = degree
        self.families: list[Family] = [family_for(rv.marginals[i]) for i in self.tail]
        tails = list(itertools.product(range(degree + 1), repeat=len(self.tail)))
        self.terms = [(c, t) for c in range(len(core)) for t in tails]

    def __len__(self) -> int:
        return len(self.terms)

    def eval(self, u) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        core = self.core.eval(u)
        z = self.rv.standardize(u)
        uni = [eval_all(fam, self.degree, z[:, i]) for fam, i in zip(self.families, self.tail)]
        out = np.empty((u.shape[0], len(self.terms)))
        for col, (c, t) in enumerate(self.terms):
            v = core[:, c].copy()
            for j, deg in enumerate(t):
                v *= uni[j][:, deg]
            out[:, col] = v
        return out

    def labels(self) -> list[str]:
        core = self.core.labels()
        return [core[c] + "x" + "(" + ",".join(map(str, t)) + ")" for c, t in self.terms]


class TotalDegreeBasis:
    """Classical tensor Hermite/Legendre basis of total degree <= p in all inputs."""

    def __init__(self, rv: RandomVector, p: int):
        self.rv = rv
        self.indices = multi_index_set(rv.dim, p)
        self.families = [family_for(mg) for mg in rv.marginals]

    def __len__(self) -> int:
        return len(self.indices)

    def eval(self, u) -> np.ndarray:
        return tensor_basis_eval(self.indices, self.families, self.rv.standardize(np.atleast_2d(u)))

    def labels(self) -> list[str]:
        return ["(" + ",".join(map(str, idx)) + ")" for idx in self.indices.indices]


def compute_coefficients(f_values, basis_values, weights) -> np.ndarray:
    """alpha_j = sum_i w_i f(u_i) Phi_j(u_i)  (orthonormal basis, unit denominators)."""
    f_values = np.asarray(f_values, dtype=float).ravel()
    bad = np.flatnonzero(~np.isfinite(f_values))
    if len(bad):
        raise FloatingPointError(f"non-finite model output at node {bad[0]}")
    weights = np.asarray(weights, dtype=float)
    return (weights * f_values) @ np.asarray(basis_values, dtype=float)


@dataclass
class PceSurrogate:
    basis: object
    coefficients: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if len(self.coefficients) != len(self.basis):
            raise ValueError(f"{len(self.coefficients)} coefficients for a basis of {len(self.basis)} terms")

    @property
    def mean(self) -> float:
        return float(self.coefficients[0])

    @property
    def variance(self) -> float:
        v = float(np.sum(self.coefficients[1:] ** 2))
        return 0.0 if v < 0 else v

    def __call__(self, u) -> np.ndarray:
        return self.basis.eval(u) @ self.coefficients


def mean(s: PceSurrogate) -> float:
    return s.mean


def variance(s: PceSurrogate) -> float:
    return s.variance


def surrogate_eval(s: PceSurrogate, u) -> np.ndarray:
    return s(u)
