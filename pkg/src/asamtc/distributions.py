"""Independent input distributions.

All algorithms in the package work on *standardized* variables: a Normal
marginal N(mu, sigma) maps to N(0, 1) and a Uniform(a, b) marginal maps to
U(-1, 1).  Models always receive de-standardized (original) values.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

NORMAL = "normal"
UNIFORM = "uniform"
_KINDS = (NORMAL, UNIFORM)


@dataclass(frozen=True)
class Marginal:
    """One input marginal.

    ``param1``/``param2`` are (mean, std) for Normal and (lower, upper) for
    Uniform.
    """

    kind: str
    param1: float
    param2: float

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in _KINDS:
            raise ValueError(f"unknown marginal kind {self.kind!r}; expected one of {_KINDS}")
        object.__setattr__(self, "kind", kind)
        if kind == NORMAL and not self.param2 > 0:
            raise ValueError(f"Normal marginal needs std > 0, got {self.param2}")
        if kind == UNIFORM and not self.param2 > self.param1:
            raise ValueError(f"Uniform marginal needs upper > lower, got ({self.param1}, {self.param2})")

    @classmethod
    def normal(cls, mean: float, std: float) -> "Marginal":
        return cls(NORMAL, float(mean), float(std))

    @classmethod
    def uniform(cls, lower: float, upper: float) -> "Marginal":
        return cls(UNIFORM, float(lower), float(upper))

    @property
    def bounded(self) -> bool:
        return self.kind == UNIFORM

    @property
    def loc(self) -> float:
        if self.kind == NORMAL:
            return self.param1
        return 0.5 * (self.param1 + self.param2)

    @property
    def scale(self) -> float:
        """du/dz of the standardizing map."""
        if self.kind == NORMAL:
            return self.param2
        return 0.5 * (self.param2 - self.param1)

    def pdf(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == NORMAL:
            z = (u - self.param1) / self.param2
            return np.exp(-0.5 * z * z) / (np.sqrt(2.0 * np.pi) * self.param2)
        inside = (u >= self.param1) & (u <= self.param2)
        return np.where(inside, 1.0 / (self.param2 - self.param1), 0.0)

    def cdf(self, u):
        from scipy import stats

        if self.kind == NORMAL:
            return stats.norm.cdf(u, self.param1, self.param2)
        return stats.uniform.cdf(u, self.param1, self.param2 - self.param1)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "param1": self.param1, "param2": self.param2}


class RandomVector:
    """Joint distribution of ``d`` mutually independent marginals."""

    def __init__(self, marginals: Sequence[Marginal], names: Sequence[str] | None = None):
        marginals = tuple(marginals)
        if not marginals:
            raise ValueError("a RandomVector needs at least one marginal")
        self.marginals = marginals
        self.names = tuple(names) if names is not None else tuple(f"u{i + 1}" for i in range(len(marginals)))
        if len(self.names) != len(marginals):
            raise ValueError("names and marginals differ in length")
        self._loc = np.array([m.loc for m in marginals])
        self._scale = np.array([m.scale for m in marginals])
        self._bounded = np.array([m.bounded for m in marginals])

    def __len__(self) -> int:
        return len(self.marginals)

    def __repr__(self) -> str:
        return f"RandomVector({list(self.marginals)!r})"

    @property
    def dim(self) -> int:
        return len(self.marginals)

    @property
    def loc(self) -> np.ndarray:
        return self._loc.copy()

    @property
    def scale(self) -> np.ndarray:
        return self._scale.copy()

    @property
    def bounded(self) -> np.ndarray:
        return self._bounded.copy()

    @property
    def all_normal(self) -> bool:
        return all(m.kind == NORMAL for m in self.marginals)

    def subset(self, indices: Sequence[int]) -> "RandomVector":
        indices = list(indices)
        return RandomVector([self.marginals[i] for i in indices], [self.names[i] for i in indices])

    def _check_last_axis(self, u: np.ndarray) -> None:
        if u.shape[-1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got trailing shape {u.shape[-1]}")

    def pdf(self, u) -> np.ndarray | float:
        """Joint density; zero outside the support.  Accepts ``(..., d)``."""
        u = np.asarray(u, dtype=float)
        if u.ndim == 0:
            u = u[None]
        self._check_last_axis(u)
        out = np.ones(u.shape[:-1])
        for j, m in enumerate(self.marginals):
            out = out * m.pdf(u[..., j])
        return float(out) if out.ndim == 0 else out

    def standardize(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        self._check_last_axis(u)
        return (u - self._loc) / self._scale

    def destandardize(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        self._check_last_axis(z)
        return z * self._scale + self._loc

    def sample_standard(self, n: int, seed: int) -> np.ndarray:
        """``n`` draws in standardized variables, shape ``(n, d)``."""
        if n < 1:
            raise ValueError(f"sample size must be >= 1, got {n}")
        rng = np.random.default_rng(seed)
        # draw every column with both generators so marginal kinds never shift the stream
        normal = rng.standard_normal((n, self.dim))
        uniform = rng.uniform(-1.0, 1.0, (n, self.dim))
        return np.where(self._bounded, uniform, normal)

    def sample_sobol(self, log2_n: int, seed: int) -> np.ndarray:
        """2**log2_n scrambled-Sobol points in standardized variables."""
        from scipy.stats import norm, qmc

        unit = qmc.Sobol(self.dim, scramble=True, seed=seed).random_base2(log2_n)
        return np.where(self._bounded, 2.0 * unit - 1.0, norm.ppf(unit))

    def sample(self, n: int, seed: int) -> np.ndarray:
        """``n`` i.i.d. draws in the original space, shape ``(n, d)``."""
        return self.destandardize(self.sample_standard(n, seed))

    def in_support(self, u) -> np.ndarray:
        z = self.standardize(u)
        ok = np.abs(z) <= 1.0 + 1e-12
        return np.all(ok | ~self._bounded, axis=-1)

    def to_list(self) -> list[dict]:
        return [dict(m.to_dict(), name=name) for m, name in zip(self.marginals, self.names)]
