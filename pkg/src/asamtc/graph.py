"""Expression graphs of elementary operations and AMTC tensor-grid evaluation.

A model is written with a small operator-overloading DSL::

    b = GraphBuilder(2)
    u1, u2 = b.inputs()
    g = b.build(cos(u1) + exp(-u2))

Every node carries the set of uncertain inputs it depends on.  On a tensor
grid, :func:`eval_tensor_grid_amtc` evaluates each node only on the grid axes
its dependency set touches and lets broadcasting (stride-0 index expansion)
glue sub-graphs with different input spaces together.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

UNARY = ("neg", "cos", "sin", "exp", "sqrt", "power", "scale")
BINARY = ("add", "sub", "mul", "div")
LEAVES = ("input", "const")
NARY = ("sum_of",)
OP_KINDS = LEAVES + UNARY + BINARY + NARY
PARAMETRIC = ("input", "const", "power", "scale")

DEFAULT_COSTS = {"input": 0.0, "const": 0.0}


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class OpNode:
    id: int
    op: str
    parents: tuple[int, ...] = ()
    value: float | None = None  # input index, constant, exponent or scale factor
    dep_set: frozenset = frozenset()
    unit_cost: float = 1.0
    label: str = ""

    def __post_init__(self):
        if self.op not in OP_KINDS:
            raise GraphError(f"node {self.id}: unknown op kind {self.op!r}")
        arity = len(self.parents)
        if self.op in LEAVES and arity:
            raise GraphError(f"node {self.id}: {self.op} takes no parents")
        if self.op in UNARY and arity != 1:
            raise GraphError(f"node {self.id}: {self.op} takes one parent, got {arity}")
        if self.op in BINARY and arity != 2:
            raise GraphError(f"node {self.id}: {self.op} takes two parents, got {arity}")
        if self.op in NARY and arity < 1:
            raise GraphError(f"node {self.id}: sum_of needs at least one parent")
        if self.op in PARAMETRIC and self.value is None:
            raise GraphError(f"node {self.id}: {self.op} needs a value")
        if self.unit_cost < 0:
            raise GraphError(f"node {self.id}: negative unit cost")

    @property
    def input_index(self) -> int:
        return int(self.value)


class ExprGraph:
    """DAG of :class:`OpNode` with a single output.

    Construction only validates; :func:`analyze_dependencies` returns the
    pruned, topologically ordered graph with dependency sets filled in.
    """

    def __init__(self, nodes: Iterable[OpNode], output: int, n_inputs: int,
                 input_names: Sequence[str] | None = None, analyzed: bool = False):
        self.nodes: dict[int, OpNode] = {}
        for node in nodes:
            if node.id in self.nodes:
                raise GraphError(f"duplicate node id {node.id}")
            self.nodes[node.id] = node
        if output not in self.nodes:
            raise GraphError(f"output node {output} does not exist")
        self.output = output
        self.n_inputs = int(n_inputs)
        self.input_names = tuple(input_names) if input_names else tuple(f"u{i + 1}" for i in range(self.n_inputs))
        self.analyzed = analyzed
        for node in self.nodes.values():
            for p in node.parents:
                if p not in self.nodes:
                    raise GraphError(f"node {node.id} references missing parent {p}")
            if node.op == "input" and not 0 <= node.input_index < self.n_inputs:
                raise GraphError(f"node {node.id}: input index {node.input_index} out of range")
        self.order = self._toposort()

    def _toposort(self) -> tuple[int, ...]:
        state: dict[int, int] = {}
        order: list[int] = []
        for root in sorted(self.nodes):
            if root in state:
                continue
            stack = [(root, iter(self.nodes[root].parents))]
            state[root] = 1
            while stack:
                nid, it = stack[-1]
                for p in it:
                    s = state.get(p)
                    if s == 1:
                        raise GraphError(f"cycle detected through node {p}")
                    if s is None:
                        state[p] = 1
                        stack.append((p, iter(self.nodes[p].parents)))
                        break
                else:
                    stack.pop()
                    state[nid] = 2
                    order.append(nid)
        return tuple(order)

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self):
        return (self.nodes[i] for i in self.order)

    def __getitem__(self, nid: int) -> OpNode:
        return self.nodes[nid]

    def op_nodes(self) -> list[OpNode]:
        return [n for n in self if n.op not in LEAVES]

    def total_cost(self) -> float:
        return float(sum(n.unit_cost for n in self if n.op != "input"))

    def subgraphs(self) -> dict[frozenset, list[int]]:
        """Node ids grouped by dependency set."""
        groups: dict[frozenset, list[int]] = {}
        for n in self:
            groups.setdefault(n.dep_set, []).append(n.id)
        return groups

    def with_costs(self, costs: Mapping[str, float]) -> "ExprGraph":
        """Copy with per-op-kind unit costs overridden."""
        nodes = [replace(n, unit_cost=float(costs.get(n.op, n.unit_cost))) for n in self.nodes.values()]
        return ExprGraph(nodes, self.output, self.n_inputs, self.input_names, self.analyzed)

    def to_dict(self) -> dict:
        nodes = []
        for n in self:
            entry = {"id": n.id, "op": n.op, "parents": list(n.parents), "cost": n.unit_cost}
            if n.value is not None:
                entry["value"] = n.value
            if n.label:
                entry["label"] = n.label
            if self.analyzed:
                entry["deps"] = sorted(n.dep_set)
            nodes.append(entry)
        return {"n_inputs": self.n_inputs, "input_names": list(self.input_names),
                "output": self.output, "nodes": nodes}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, data: Mapping) -> "ExprGraph":
        nodes = [OpNode(int(e["id"]), e["op"], tuple(int(p) for p in e.get("parents", ())),
                        e.get("value"), unit_cost=float(e.get("cost", 1.0)), label=e.get("label", ""))
                 for e in data["nodes"]]
        g = cls(nodes, int(data["output"]), int(data["n_inputs"]), data.get("input_names"))
        return analyze_dependencies(g) if any("deps" in e for e in data["nodes"]) else g

    @classmethod
    def from_json(cls, text: str) -> "ExprGraph":
        return cls.from_dict(json.loads(text))


def analyze_dependencies(g: ExprGraph) -> ExprGraph:
    """Drop dead code and propagate input-dependency sets forward."""
    live = {g.output}
    for nid in reversed(g.order):
        if nid in live:
            live.update(g.nodes[nid].parents)
    deps: dict[int, frozenset] = {}
    nodes = []
    for nid in g.order:
        if nid not in live:
            continue
        node = g.nodes[nid]
        if node.op == "input":
            dep = frozenset((node.input_index,))
        else:
            dep = frozenset().union(*(deps[p] for p in node.parents))
        deps[nid] = dep
        nodes.append(replace(node, dep_set=dep))
    return ExprGraph(nodes, g.output, g.n_inputs, g.input_names, analyzed=True)


def _ensure_analyzed(g: ExprGraph) -> ExprGraph:
    return g if g.analyzed else analyze_dependencies(g)


def _apply(node: OpNode, args: list[np.ndarray]) -> np.ndarray:
    op = node.op
    if op == "add":
        return args[0] + args[1]
    if op == "sub":
        return args[0] - args[1]
    if op == "mul":
        return args[0] * args[1]
    if op == "div":
        return args[0] / args[1]
    if op == "neg":
        return -args[0]
    if op == "cos":
        return np.cos(args[0])
    if op == "sin":
        return np.sin(args[0])
    if op == "exp":
        return np.exp(args[0])
    if op == "sqrt":
        return np.sqrt(args[0])
    if op == "power":
        return args[0] ** node.value
    if op == "scale":
        return node.value * args[0]
    if op == "sum_of":
        out = args[0]
        for a in args[1:]:
            out = out + a
        return out
    raise GraphError(f"cannot apply op {op!r}")


@dataclass
class EvalResult:
    """Output values plus the per-node evaluation counters of one evaluation."""

    values: np.ndarray
    counters: dict[int, int]
    cost: float
    graph: ExprGraph = field(repr=False)

    def counter_by_label(self) -> dict[str, int]:
        return {self.graph[nid].label or f"{self.graph[nid].op}#{nid}": c for nid, c in self.counters.items()}

    def counters_by_op(self) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {}
        for nid, c in self.counters.items():
            out.setdefault(self.graph[nid].op, []).append(c)
        return out


def evaluate(g: ExprGraph, u) -> EvalResult:
    """Evaluate the graph at every row of ``u`` (original input space, shape ``(n, d)``)."""
    g = _ensure_analyzed(g)
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if u.shape[1] != g.n_inputs:
        raise GraphError(f"graph expects {g.n_inputs} inputs, got points of dimension {u.shape[1]}")
    n = u.shape[0]
    vals: dict[int, np.ndarray] = {}
    counters: dict[int, int] = {}
    for node in g:
        if node.op == "input":
            v = u[:, node.input_index]
        elif node.op == "const":
            v = np.full(n, float(node.value))
        else:
            with np.errstate(all="ignore"):
                v = _apply(node, [vals[p] for p in node.parents])
        vals[node.id] = v
        counters[node.id] = n
    cost = n * sum(node.unit_cost for node in g if node.op != "input")
    return EvalResult(vals[g.output], counters, float(cost), g)


def graph_function(g: ExprGraph):
    """Vectorized ``f(u) -> (n,)`` view of a graph."""
    g = _ensure_analyzed(g)

    def f(u):
        return evaluate(g, u).values

    return f


@dataclass(frozen=True)
class GridAxis:
    inputs: tuple[int, ...]
    nodes: np.ndarray  # (n_axis, len(inputs)), original input space

    @property
    def size(self) -> int:
        return self.nodes.shape[0]


class TensorGrid:
    """Cartesian product of per-axis node tables.

    Axes are stored sorted by their smallest input index; that order fixes
    the layout of every output tensor.
    """

    def __init__(self, axes: Iterable[tuple[Sequence[int], np.ndarray]]):
        built = []
        for inputs, nodes in axes:
            inputs = tuple(int(i) for i in inputs)
            nodes = np.asarray(nodes, dtype=float)
            if nodes.ndim == 1:
                nodes = nodes[:, None]
            if nodes.shape[1] != len(inputs):
                raise GraphError(f"axis {inputs}: node table has {nodes.shape[1]} columns")
            if len(set(inputs)) != len(inputs) or not inputs:
                raise GraphError(f"axis {inputs}: invalid input label set")
            order = np.argsort(inputs)
            built.append(GridAxis(tuple(inputs[i] for i in order), nodes[:, order]))
        built.sort(key=lambda a: a.inputs[0])
        seen: set[int] = set()
        for a in built:
            if seen & set(a.inputs):
                raise GraphError(f"grid axes overlap on inputs {sorted(seen & set(a.inputs))}")
            seen |= set(a.inputs)
        self.axes = tuple(built)
        self._axis_of = {i: k for k, a in enumerate(self.axes) for i in a.inputs}

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.size for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def inputs(self) -> tuple[int, ...]:
        return tuple(sorted(self._axis_of))

    def axis_of(self, i: int) -> int:
        return self._axis_of[i]

    def full_points(self) -> np.ndarray:
        """All grid points, row-major over the axes, shape ``(size, d)``."""
        d = max(self._axis_of) + 1
        pts = np.empty(self.shape + (d,))
        nd = len(self.axes)
        for k, a in enumerate(self.axes):
            view = [1] * nd
            view[k] = a.size
            for c, i in enumerate(a.inputs):
                pts[..., i] = a.nodes[:, c].reshape(view)
        return pts.reshape(self.size, d)

    def _check_covers(self, g: ExprGraph) -> None:
        missing = set(range(g.n_inputs)) - set(self._axis_of)
        if missing:
            raise GraphError(f"grid does not cover inputs {sorted(missing)}")


def eval_tensor_grid_naive(g: ExprGraph, grid: TensorGrid) -> EvalResult:
    """Evaluate every node once per full-grid point."""
    g = _ensure_analyzed(g)
    grid._check_covers(g)
    res = evaluate(g, grid.full_points()[:, : g.n_inputs])
    res.values = res.values.reshape(grid.shape)
    return res


def eval_tensor_grid_amtc(g: ExprGraph, grid: TensorGrid, strict: bool = False) -> EvalResult:
    """Dependency-aware tensor-grid evaluation.

    Each node's value array spans only the axes its dependency set touches
    (size-1 elsewhere), so the node is evaluated prod(touched axis sizes)
    times.  With ``strict=True`` a dependency set that covers only part of
    an axis's input group is an error; otherwise the node is evaluated over
    that whole axis.
    """
    g = _ensure_analyzed(g)
    grid._check_covers(g)
    nd = len(grid.axes)
    vals: dict[int, np.ndarray] = {}
    counters: dict[int, int] = {}
    for node in g:
        if strict:
            for k in {grid.axis_of(i) for i in node.dep_set}:
                if not set(grid.axes[k].inputs) <= node.dep_set:
                    raise GraphError(
                        f"node {node.id} ({node.op}{' ' + node.label if node.label else ''}) depends on "
                        f"{sorted(node.dep_set)}, which is not a union of grid axes "
                        f"(partially covers axis {grid.axes[k].inputs})")
        if node.op == "input":
            k = grid.axis_of(node.input_index)
            axis = grid.axes[k]
            view = [1] * nd
            view[k] = axis.size
            v = axis.nodes[:, axis.inputs.index(node.input_index)].reshape(view)
        elif node.op == "const":
            v = np.full((1,) * nd, float(node.value))
        else:
            with np.errstate(all="ignore"):
                v = _apply(node, [vals[p] for p in node.parents])
        vals[node.id] = v
        counters[node.id] = int(v.size)
    out = np.broadcast_to(vals[g.output], grid.shape).copy()
    cost = sum(counters[n.id] * n.unit_cost for n in g if n.op != "input")
    return EvalResult(out, counters, float(cost), g)


def naive_cost(g: ExprGraph, grid_size: int) -> float:
    g = _ensure_analyzed(g)
    return float(grid_size * g.total_cost())


def sparsity_ratio(g: ExprGraph, i: int) -> float:
    """Share of the graph's weighted cost spent in nodes influenced by input ``i``."""
    g = _ensure_analyzed(g)
    if not 0 <= i < g.n_inputs:
        raise GraphError(f"unknown input index {i} (graph has {g.n_inputs} inputs)")
    total = g.total_cost()
    if total <= 0:
        raise GraphError("graph has no costed operations")
    touched = sum(n.unit_cost for n in g if n.op != "input" and i in n.dep_set)
    return touched / total


def sparsity_ratios(g: ExprGraph) -> np.ndarray:
    g = _ensure_analyzed(g)
    return np.array([sparsity_ratio(g, i) for i in range(g.n_inputs)])


def identify_sparse_inputs(g: ExprGraph, threshold: float = 0.05) -> tuple[list[int], list[int]]:
    sr = sparsity_ratios(g)
    sparse = [i for i in range(g.n_inputs) if sr[i] < threshold]
    dense = [i for i in range(g.n_inputs) if sr[i] >= threshold]
    return sparse, dense


# --------------------------------------------------------------------------
# builder DSL


class Expr:
    __slots__ = ("builder", "id")
    __array_priority__ = 1000

    def __init__(self, builder: "GraphBuilder", nid: int):
        self.builder = builder
        self.id = nid

    def _lift(self, other) -> "Expr":
        if isinstance(other, Expr):
            return other
        return self.builder.const(float(other))

    def __add__(self, other):
        return self.builder.op("add", self, self._lift(other))

    def __radd__(self, other):
        return self.builder.op("add", self._lift(other), self)

    def __sub__(self, other):
        return self.builder.op("sub", self, self._lift(other))

    def __rsub__(self, other):
        return self.builder.op("sub", self._lift(other), self)

    def __mul__(self, other):
        if isinstance(other, Expr):
            return self.builder.op("mul", self, other)
        return self.builder.op("scale", self, value=float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Expr):
            return self.builder.op("div", self, other)
        return self.builder.op("scale", self, value=1.0 / float(other))

    def __rtruediv__(self, other):
        return self.builder.op("div", self._lift(other), self)

    def __neg__(self):
        return self.builder.op("neg", self)

    def __pow__(self, exponent):
        return self.builder.op("power", self, value=float(exponent))

    def named(self, label: str) -> "Expr":
        self.builder.label(self, label)
        return self


def _unary(op):
    def f(x: Expr) -> Expr:
        return x.builder.op(op, x)

    f.__name__ = op
    return f


cos = _unary("cos")
sin = _unary("sin")
exp = _unary("exp")
sqrt = _unary("sqrt")


def sum_of(*terms: Expr) -> Expr:
    terms = [t for t in terms]
    b = next(t.builder for t in terms if isinstance(t, Expr))
    return b.op("sum_of", *[t if isinstance(t, Expr) else b.const(float(t)) for t in terms])


class GraphBuilder:
    def __init__(self, n_inputs: int, names: Sequence[str] | None = None,
                 costs: Mapping[str, float] | None = None):
        self.n_inputs = n_inputs
        self.names = names
        self.costs = dict(DEFAULT_COSTS)
        if costs:
            self.costs.update(costs)
        self._nodes: list[OpNode] = []
        self._inputs = [self._add("input", (), float(i)) for i in range(n_inputs)]
        if names:
            for e, name in zip(self._inputs, names):
                self.label(e, name)

    def _add(self, op, parents, value=None) -> Expr:
        nid = len(self._nodes)
        self._nodes.append(OpNode(nid, op, tuple(parents), value, unit_cost=float(self.costs.get(op, 1.0))))
        return Expr(self, nid)

    def inputs(self) -> list[Expr]:
        return list(self._inputs)

    def const(self, value: float) -> Expr:
        return self._add("const", (), float(value))

    def op(self, op: str, *args: Expr, value: float | None = None) -> Expr:
        for a in args:
            if a.builder is not self:
                raise GraphError("cannot mix expressions from different builders")
        return self._add(op, [a.id for a in args], value)

    def label(self, e: Expr, label: str) -> None:
        self._nodes[e.id] = replace(self._nodes[e.id], label=label)

    def build(self, output: Expr, analyze: bool = True) -> ExprGraph:
        g = ExprGraph(self._nodes, output.id, self.n_inputs, self.names)
        return analyze_dependencies(g) if analyze else g


def random_graph(rng: np.random.Generator, n_inputs: int, depth: int = 8, width: int = 4,
                 bound: float = 50.0) -> ExprGraph:
    """Random bounded-valued graph over inputs in [-1, 1]; for property tests."""
    b = GraphBuilder(n_inputs)
    pool: list[tuple[Expr, float]] = [(x, 1.0) for x in b.inputs()]
    for _ in range(depth):
        layer = []
        for _ in range(width):
            kind = rng.choice(["unary", "binary", "sum"])
            x, bx = pool[rng.integers(len(pool))]
            if kind == "unary":
                op = rng.choice(["cos", "sin", "neg", "scale", "expsin"])
                if op == "scale":
                    c = float(rng.uniform(-1.5, 1.5))
                    e, be = x * c, abs(c) * bx
                elif op == "expsin":
                    e, be = exp(sin(x)), np.e
                elif op == "neg":
                    e, be = -x, bx
                else:
                    e, be = b.op(op, x), 1.0
            elif kind == "binary":
                y, by = pool[rng.integers(len(pool))]
                op = rng.choice(["add", "sub", "mul"])
                be = bx * by if op == "mul" else bx + by
                if be > bound:
                    e, be = cos(x) + sin(y), 2.0
                else:
                    e = b.op(op, x, y)
            else:
                picks = [pool[i] for i in rng.choice(len(pool), size=min(3, len(pool)), replace=False)]
                be = sum(p[1] for p in picks)
                if be > bound:
                    e, be = sum_of(*[sin(p[0]) for p in picks]), float(len(picks))
                else:
                    e = sum_of(*[p[0] for p in picks])
            layer.append((e, be))
        pool.extend(layer)
    # fold everything so no input is accidentally dead
    out = sum_of(*[sin(e) for e, _ in pool[-width:]], *[cos(x) for x in b.inputs()])
    return b.build(out)
