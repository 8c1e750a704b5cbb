import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asamtc.graph import (ExprGraph, GraphBuilder, GraphError, OpNode, TensorGrid, analyze_dependencies, cos,
                          eval_tensor_grid_amtc, eval_tensor_grid_naive, evaluate, exp, identify_sparse_inputs,
                          naive_cost, random_graph, sin, sparsity_ratio, sum_of)


def cos_exp_graph():
    b = GraphBuilder(2)
    u1, u2 = b.inputs()
    return b.build(cos(u1).named("cos") + exp((-u2).named("neg")).named("exp"))


def grid_1d_axes(k, d, seed=0):
    rng = np.random.default_rng(seed)
    return TensorGrid([((i,), rng.uniform(-1, 1, k)) for i in range(d)])


def by_op(res):
    return {op: c for op, c in ((res.graph[n].op, c) for n, c in res.counters.items()) if op not in ("input",)}


def test_dependency_sets_cos_exp():
    g = cos_exp_graph()
    deps = {n.label or n.op: n.dep_set for n in g}
    assert deps["cos"] == {0}
    assert deps["neg"] == {1} and deps["exp"] == {1}
    assert g[g.output].dep_set == {0, 1}


def test_constant_graph_has_empty_deps():
    b = GraphBuilder(1)
    c = b.const(2.0) * 3.0 + b.const(1.0)
    g = b.build(c)
    assert all(n.dep_set == frozenset() for n in g)
    assert g.n_inputs == 1


def test_product_dep_union():
    b = GraphBuilder(3)
    x, y, z = b.inputs()
    g = b.build(x * y * z)
    assert g[g.output].dep_set == {0, 1, 2}


def test_dependency_is_union_of_parents():
    g = random_graph(np.random.default_rng(3), 4)
    for n in g:
        if n.op == "input":
            assert n.dep_set == {n.input_index}
        elif n.parents:
            assert n.dep_set == frozenset().union(*(g[p].dep_set for p in n.parents))


def test_cos_exp_counters_naive_and_amtc():
    g = cos_exp_graph()
    grid = grid_1d_axes(4, 2)
    naive = eval_tensor_grid_naive(g, grid)
    amtc = eval_tensor_grid_amtc(g, grid)
    assert set(by_op(naive).values()) == {16}
    assert by_op(amtc) == {"cos": 4, "neg": 4, "exp": 4, "add": 16}
    np.testing.assert_allclose(amtc.values, naive.values, rtol=0, atol=1e-13)
    assert amtc.cost == 4 + 4 + 4 + 16
    assert naive.cost == naive_cost(g, 16) == 64


def test_one_point_grid_and_value_at_origin():
    g = cos_exp_graph()
    grid = TensorGrid([((0,), [0.0]), ((1,), [0.0])])
    res = eval_tensor_grid_naive(g, grid)
    assert all(c == 1 for c in res.counters.values())
    assert res.values.reshape(-1)[0] == pytest.approx(2.0)


def test_single_axis_grid_matches_naive_counters():
    g = cos_exp_graph()
    pts = np.random.default_rng(1).normal(size=(7, 2))
    grid = TensorGrid([((0, 1), pts)])
    assert eval_tensor_grid_amtc(g, grid).counters == eval_tensor_grid_naive(g, grid).counters


def test_group_axis_counts():
    # f = g(u1..u5) + u6 * h(u1..u5) on a 20 x 3 grid
    b = GraphBuilder(6)
    u = b.inputs()
    gpart = sum_of(*[cos(x) for x in u[:5]]).named("g")
    hpart = exp(sum_of(*[x * 0.1 for x in u[:5]])).named("h")
    prod = (u[5] * hpart).named("mul")
    out = (gpart + prod).named("out")
    g = b.build(out)
    rng = np.random.default_rng(0)
    grid = TensorGrid([(range(5), rng.normal(size=(20, 5))), ((5,), rng.normal(size=3))])
    res = eval_tensor_grid_amtc(g, grid)
    for n in g:
        if n.op in ("input", "const"):
            continue
        expect = 60 if n.label in ("mul", "out") else 20
        assert res.counters[n.id] == expect, n
    np.testing.assert_allclose(res.values, eval_tensor_grid_naive(g, grid).values, rtol=0, atol=1e-12)
    with pytest.raises(GraphError, match="not a union of grid axes"):
        eval_tensor_grid_amtc(g, grid, strict=True)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 4), sizes=st.lists(st.integers(1, 5), min_size=4, max_size=4))
def test_amtc_equals_naive_random(seed, d, sizes):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, d, depth=int(rng.integers(1, 9)))
    grid = TensorGrid([((i,), rng.uniform(-1, 1, sizes[i])) for i in range(d)])
    naive = eval_tensor_grid_naive(g, grid)
    amtc = eval_tensor_grid_amtc(g, grid)
    assert np.max(np.abs(naive.values - amtc.values)) <= 1e-12
    for n in g:
        touched = {grid.axis_of(i) for i in n.dep_set}
        assert amtc.counters[n.id] == int(np.prod([grid.shape[k] for k in touched]))
        assert naive.counters[n.id] == grid.size


def test_axis_order_independent_of_declaration():
    g = cos_exp_graph()
    a = TensorGrid([((1,), [0.1, 0.2]), ((0,), [0.3, 0.4, 0.5])])
    assert a.shape == (3, 2)
    res = eval_tensor_grid_amtc(g, a)
    assert res.values[2, 1] == pytest.approx(np.cos(0.5) + np.exp(-0.2))


def test_grid_errors():
    with pytest.raises(GraphError, match="overlap"):
        TensorGrid([((0, 1), np.zeros((2, 2))), ((1,), [0.0])])
    g = cos_exp_graph()
    with pytest.raises(GraphError, match="does not cover"):
        eval_tensor_grid_amtc(g, TensorGrid([((0,), [0.0])]))


def test_sparsity_ratio_examples():
    g = cos_exp_graph()
    assert sparsity_ratio(g, 0) == pytest.approx(0.5)
    assert sparsity_ratio(g, 1) == pytest.approx(0.75)
    # chain of 100 costed ops where u2 only enters the last add
    b = GraphBuilder(2)
    x, y = b.inputs()
    e = x
    for _ in range(99):
        e = sin(e)
    g = b.build(e + y)
    assert g.total_cost() == 100
    assert sparsity_ratio(g, 1) == pytest.approx(1 / 100)
    assert sparsity_ratio(g, 0) == pytest.approx(1.0)
    with pytest.raises(GraphError, match="unknown input"):
        sparsity_ratio(g, 5)


def test_identify_sparse_inputs():
    g = cos_exp_graph()
    assert identify_sparse_inputs(g, 0.0) == ([], [0, 1])
    assert identify_sparse_inputs(g, 0.6) == ([0], [1])


def test_dead_code_elimination():
    b = GraphBuilder(2)
    x, y = b.inputs()
    for _ in range(10):
        exp(y)  # unused work
    g = b.build(cos(x))
    assert g.total_cost() == 1
    assert sparsity_ratio(g, 1) == 0.0
    assert len(g) == 2  # the unused input is pruned too


def test_cycle_detection():
    nodes = [OpNode(0, "input", (), 0.0), OpNode(1, "add", (0, 2)), OpNode(2, "cos", (1,))]
    with pytest.raises(GraphError, match="cycle"):
        analyze_dependencies(ExprGraph(nodes, 2, 1))


@pytest.mark.parametrize("node", [
    dict(id=0, op="add", parents=(1,)),
    dict(id=0, op="input", parents=(1,), value=0.0),
    dict(id=0, op="power", parents=(1,)),
    dict(id=0, op="tanh", parents=(1,)),
])
def test_arity_checks(node):
    with pytest.raises(GraphError):
        OpNode(**node)


def test_json_round_trip():
    g = random_graph(np.random.default_rng(11), 3)
    g2 = ExprGraph.from_json(g.to_json())
    assert json.loads(g2.to_json()) == json.loads(g.to_json())
    u = np.random.default_rng(0).uniform(-1, 1, (5, 3))
    np.testing.assert_array_equal(evaluate(g, u).values, evaluate(g2, u).values)


def test_evaluation_is_reentrant():
    g = cos_exp_graph()
    r1 = eval_tensor_grid_amtc(g, grid_1d_axes(4, 2))
    r2 = eval_tensor_grid_amtc(g, grid_1d_axes(2, 2))
    r3 = eval_tensor_grid_amtc(g, grid_1d_axes(4, 2))
    assert r1.counters == r3.counters != r2.counters


def test_custom_costs():
    b = GraphBuilder(2, costs={"exp": 10.0})
    u1, u2 = b.inputs()
    g = b.build(cos(u1) + exp(-u2))
    assert g.total_cost() == 13
    assert sparsity_ratio(g, 0) == pytest.approx(2 / 13)


def test_dsl_arithmetic_matches_numpy():
    b = GraphBuilder(2)
    x, y = b.inputs()
    g = b.build((x - y) / (2.0 + x * x) + 3.0 * y ** 2 - 1.0 / (1.5 + y) + sin(x) / 4)
    u = np.random.default_rng(2).uniform(-1, 1, (9, 2))
    a, c = u[:, 0], u[:, 1]
    want = (a - c) / (2 + a * a) + 3 * c ** 2 - 1 / (1.5 + c) + np.sin(a) / 4
    np.testing.assert_allclose(evaluate(g, u).values, want, rtol=1e-14)
