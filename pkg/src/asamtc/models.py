"""Benchmark models: the piston cycle-time simulator and a sparse-input graph model."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import graph as G
from .active_subspace import fd_gradient
from .distributions import Marginal, RandomVector

PISTON_NAMES = ("M", "S", "V0", "k", "P0", "Ta", "T0")
PISTON_RV = RandomVector([
    Marginal.normal(45.0, 3.0),
    Marginal.normal(0.01, 0.001),
    Marginal.normal(0.010, 0.001),
    Marginal.normal(3000.0, 200.0),
    Marginal.normal(90000.0, 5000.0),
    Marginal.normal(290.0, 20.0),
    Marginal.normal(340.0, 20.0),
], PISTON_NAMES)


class ModelError(ValueError):
    pass


@dataclass
class Model:
    """A vectorized model ``f(u: (n, d)) -> (n,)`` with its input distribution."""

    name: str
    rv: RandomVector
    f: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    graph: G.ExprGraph | None = None
    params: dict | None = None

    def __call__(self, u) -> np.ndarray:
        return self.f(np.atleast_2d(np.asarray(u, dtype=float)))

    def gradient(self) -> Callable[[np.ndarray], np.ndarray]:
        return self.grad if self.grad is not None else fd_gradient(self.f, self.rv)


def _columns(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != 7:
        raise ModelError(f"piston takes 7 inputs, got {x.shape[1]}")
    return x.T


def _piston_parts(x):
    M, S, V0, k, P0, Ta, T0 = _columns(x)
    A = P0 * S + 19.62 * M - k * V0 / S
    E = 4.0 * k * P0 * V0 / T0 * Ta
    D = A * A + E
    if np.any(D < 0):
        i = int(np.flatnonzero(D < 0)[0])
        raise ModelError(f"piston: negative discriminant at point {i}")
    R = np.sqrt(D)
    V = S / (2.0 * k) * (R - A)
    if np.any(V <= 0):
        i = int(np.flatnonzero(V <= 0)[0])
        raise ModelError(f"piston: non-positive gas volume at point {i}")
    B = S * S * P0 * V0 * Ta / (T0 * V * V)
    den = k + B
    C = 2.0 * np.pi * np.sqrt(M / den)
    return (M, S, V0, k, P0, Ta, T0), A, E, R, V, B, den, C


def piston_A(x) -> np.ndarray:
    return _piston_parts(x)[1]


def piston_eval(x) -> np.ndarray:
    """Cycle time in seconds for rows of (M, S, V0, k, P0, Ta, T0)."""
    return _piston_parts(x)[-1]


def piston_grad(x) -> np.ndarray:
    """Closed-form gradient of the cycle time, shape ``(n, 7)``."""
    (M, S, V0, k, P0, Ta, T0), A, E, R, V, B, den, C = _piston_parts(x)
    zero = np.zeros_like(M)
    one = np.ones_like(M)
    dA = np.stack([19.62 * one, P0 + k * V0 / S ** 2, -k / S, -V0 / S, S, zero, zero], axis=1)
    dE = E[:, None] * np.stack([zero, zero, 1 / V0, 1 / k, 1 / P0, 1 / Ta, -1 / T0], axis=1)
    dR = (2.0 * A[:, None] * dA + dE) / (2.0 * R[:, None])
    dV = (V[:, None] * np.stack([zero, 1 / S, zero, -1 / k, zero, zero, zero], axis=1)
          + (S / (2.0 * k))[:, None] * (dR - dA))
    dB = B[:, None] * (np.stack([zero, 2 / S, 1 / V0, zero, 1 / P0, 1 / Ta, -1 / T0], axis=1)
                       - 2.0 * dV / V[:, None])
    dden = dB + np.stack([zero, zero, zero, one, zero, zero, zero], axis=1)
    dM = np.stack([1 / M, zero, zero, zero, zero, zero, zero], axis=1)
    return 0.5 * C[:, None] * (dM - dden / den[:, None])


def piston_graph() -> G.ExprGraph:
    b = G.GraphBuilder(7, PISTON_NAMES)
    M, S, V0, k, P0, Ta, T0 = b.inputs()
    A = (P0 * S + 19.62 * M - k * V0 / S).named("A")
    disc = A ** 2 + 4.0 * (k * (P0 * V0 / T0) * Ta)
    V = (S / (2.0 * k) * (G.sqrt(disc) - A)).named("V")
    den = k + S ** 2 * (P0 * V0 * Ta / (T0 * V ** 2))
    C = (2.0 * np.pi * G.sqrt(M / den)).named("C")
    return b.build(C)


def piston() -> Model:
    return Model("piston", PISTON_RV, piston_eval, piston_grad, piston_graph(), {})


def sparse_tail_graph(d_ns: int = 10, d_s: int = 2, chain_len: int = 200, seed: int = 7) -> G.ExprGraph:
    """Core-dominated graph with a few cheap tail inputs.

    f(u) = y(u_ns) * (1 + sum_j c_j u_s,j) + sum_j sin(u_s,j).  ``y`` is a
    chain of cos/exp/scale/add blocks driven mostly by one ridge direction
    ``a^T u_ns`` plus two weak secondary mixes, so the core has a dominant
    one-dimensional active subspace.  Inputs are indexed core first, tail last.
    """
    if d_ns < 1 or d_s < 0:
        raise ValueError("need d_ns >= 1 and d_s >= 0")
    if chain_len < 20 * d_s:
        raise ValueError(f"chain_len must be >= 20 * d_s = {20 * d_s} to keep tail inputs sparse")
    rng = np.random.default_rng(seed)
    names = [f"x{i + 1}" for i in range(d_ns)] + [f"s{j + 1}" for j in range(d_s)]
    b = G.GraphBuilder(d_ns + d_s, names)
    u = b.inputs()
    core, tail = u[:d_ns], u[d_ns:]

    a = rng.uniform(0.5, 1.0, d_ns)
    a /= np.linalg.norm(a)
    ridge = G.sum_of(*[core[i] * float(a[i]) for i in range(d_ns)]).named("ridge")
    weak = []
    for _ in range(2):
        c = rng.standard_normal(d_ns)
        c -= (c @ a) * a
        c *= 0.04 / np.linalg.norm(c)
        weak.append(G.sum_of(*[core[i] * float(c[i]) for i in range(d_ns)]))

    # blocks of 5 nodes: acc += w * cos(omega * ridge + weak)
    acc = None
    used = 0
    block = 0
    while used + 5 <= chain_len - 2:
        omega = float(rng.uniform(0.3, 0.8))
        w = float(rng.uniform(0.2, 1.0)) / (1 + block) ** 0.5
        t = G.cos(ridge * omega + weak[block % 2]) * w
        acc = t if acc is None else acc + t
        used += 4 if acc is t else 5
        block += 1
    y = G.exp(acc * 0.1).named("y")
    used += 2
    while used < chain_len:
        y = y * 1.0
        used += 1

    if d_s == 0:
        return b.build(y)
    cs = rng.uniform(0.05, 0.2, d_s)
    factor = G.sum_of(b.const(1.0), *[tail[j] * float(cs[j]) for j in range(d_s)])
    out = G.sum_of(y * factor, *[G.sin(t) for t in tail]).named("f")
    return b.build(out)


def sparse_tail(d_ns: int = 10, d_s: int = 2, chain_len: int = 200, seed: int = 7) -> Model:
    g = sparse_tail_graph(d_ns, d_s, chain_len, seed)
    rv = RandomVector([Marginal.normal(0.0, 1.0)] * (d_ns + d_s), g.input_names)
    f = G.graph_function(g)
    params = {"d_ns": d_ns, "d_s": d_s, "chain_len": chain_len, "seed": seed}
    return Model("sparse-tail", rv, f, fd_gradient(f, rv), g, params)


MODELS = {"piston": piston, "sparse-tail": sparse_tail}


def get_model(name: str, **params) -> Model:
    try:
        factory = MODELS[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; available: {', '.join(sorted(MODELS))}") from None
    return factory(**params)
