import numpy as np
import pytest

from asamtc.distributions import Marginal, RandomVector
from asamtc.graph import GraphBuilder, TensorGrid, cos, eval_tensor_grid_amtc, exp
from asamtc.models import Model, piston, sparse_tail
from asamtc.quadrature import gauss_factor
from asamtc.pipelines import (AS_AMTC, AS_NIPC, MC, Seeds, StageError, convergence_study, loglog_slope, mc_oracle,
                              run_as_amtc, run_as_nipc, run_mc)

A = np.array([0.2, -0.3, 0.1, 0.3, -0.2])


def ridge_model(fn, grad):
    rv = RandomVector([Marginal.normal(0, 1)] * len(A))
    return Model("ridge", rv, fn, grad)


def test_mc_examples():
    rv = RandomVector([Marginal.normal(0, 1)])
    res = run_mc(Model("id", rv, lambda u: u[:, 0]), 100_000, seed=1)
    assert abs(res.mean) <= 0.01 and res.n_model_evals == 100_000
    res = run_mc(Model("five", rv, lambda u: np.full(len(u), 5.0)), 1000, seed=1)
    assert res.mean == 5.0 and res.variance == 0.0


def test_mc_nonfinite_output():
    rv = RandomVector([Marginal.normal(0, 1)])
    with pytest.raises(StageError, match=r"\[model evaluation\].*sample 0"):
        run_mc(Model("bad", rv, lambda u: np.full(len(u), np.nan)), 10, seed=1)


def test_exp_ridge_mean():
    model = ridge_model(lambda u: np.exp(u @ A), lambda u: np.exp(u @ A)[:, None] * A)
    res = run_as_nipc(model, m=1, k=7)
    assert res.n_model_evals == 7
    exact = np.exp(A @ A / 2)
    assert abs(res.mean - exact) / exact <= 1e-4


def test_linear_variance_exact():
    model = ridge_model(lambda u: 2.0 + u @ A, lambda u: np.tile(A, (len(u), 1)))
    res = run_as_nipc(model, k=3)
    assert res.settings["m"] == 1
    assert res.mean == pytest.approx(2.0, abs=1e-10)
    assert abs(res.variance - A @ A) <= 1e-8


def test_as_nipc_piston():
    model = piston()
    res = run_as_nipc(model, m=1, k=5)
    assert res.n_model_evals == 5 and res.n_grad_evals == 100
    oracle = mc_oracle(model)
    assert abs(res.mean - oracle) / abs(oracle) <= 1e-2
    assert res.weighted_op_cost == model.graph.total_cost() * 5


def test_stage_tag():
    model = ridge_model(lambda u: u @ A, lambda u: np.full(u.shape, np.nan))
    with pytest.raises(StageError, match=r"\[active subspace\]") as info:
        run_as_nipc(model, m=1, k=3)
    assert info.value.stage == "active subspace"


@pytest.fixture(scope="module")
def amtc_result():
    return run_as_amtc(sparse_tail(), m=1, k=5, k_sparse=3, n_nodes=20)


def test_as_amtc_cost_and_agreement(amtc_result):
    res = amtc_result
    assert res.details["sparse"] == [10, 11]
    assert res.n_model_evals == 20 * 9
    assert res.weighted_op_cost <= 0.25 * res.naive_op_cost
    assert res.details["naive_max_diff"] <= 1e-12
    assert res.naive_op_cost == pytest.approx(180 * sparse_tail().graph.total_cost())


def test_as_amtc_accuracy(amtc_result):
    model = sparse_tail()
    oracle = mc_oracle(model, 100_000)
    assert abs(amtc_result.mean - oracle) / abs(oracle) <= 2e-2


def test_as_amtc_one_sparse_input():
    res = run_as_amtc(sparse_tail(d_s=1), m=1, k=5, k_sparse=3, n_nodes=10)
    assert res.weighted_op_cost / res.naive_op_cost <= 0.5


def test_k_sparse_one_degenerates_to_core():
    model = sparse_tail(d_ns=6, d_s=1, chain_len=100)
    res = run_as_amtc(model, m=1, k=5, k_sparse=1)
    assert res.n_model_evals == len(res.details["core_rule"])
    # same as AS-NIPC on u_ns with the tail input pinned at its mean
    fixed = Model("pinned", model.rv.subset(range(6)),
                  lambda u: model.f(np.hstack([u, np.zeros((len(u), 1))])))
    core = res.details["core_rule"]
    direct = fixed.f(core.nodes) @ core.weights
    assert res.mean == pytest.approx(direct, rel=1e-12)


def test_amtc_cos_exp_counters():
    b = GraphBuilder(2)
    u1, u2 = b.inputs()
    g = b.build(cos(u1) + exp(-u2))
    rv = RandomVector([Marginal.normal(0, 1)] * 2)
    model = Model("cos-exp", rv, None, None, g)
    grid = TensorGrid([(f.inputs, f.nodes) for f in (gauss_factor(model.rv, i, 4) for i in range(2))])
    res = eval_tensor_grid_amtc(g, grid)
    ops = {g[n].op: c for n, c in res.counters.items()}
    assert ops["cos"] == 4 and ops["add"] == 16


def test_no_sparse_falls_back():
    res = run_as_amtc(piston(), m=1, k=3)
    assert res.method == AS_AMTC and res.settings["fallback"] == AS_NIPC
    assert "falling back" in res.warnings[0]


def test_as_amtc_needs_graph():
    with pytest.raises(ValueError, match="no computational graph"):
        run_as_amtc(ridge_model(lambda u: u @ A, None))


def test_seeds_are_distinct_and_stable():
    s = Seeds(3)
    vals = s.as_dict()
    assert len({vals[k] for k in ("grad", "gram", "rule", "mc")}) == 4
    assert Seeds(3).as_dict() == vals != Seeds(4).as_dict()


@pytest.fixture(scope="module")
def piston_study():
    model = piston()
    oracle = mc_oracle(model)
    mc_rows = convergence_study(model, [MC], [100, 1000, 10_000], repeats=20, oracle=oracle)
    as_rows = convergence_study(model, [AS_NIPC], [5, 15], repeats=3, oracle=oracle, m=1)
    return mc_rows, as_rows


def test_mc_convergence_slope(piston_study):
    mc_rows, _ = piston_study
    assert len(mc_rows) == 60
    assert -0.7 <= loglog_slope(mc_rows, MC) <= -0.3


def test_deterministic_methods_have_no_spread(piston_study):
    _, rows = piston_study
    for b in (5, 15):
        errs = {r["rel_error"] for r in rows if r["budget"] == b}
        assert len(errs) == 1


def test_as_nipc_plateau(piston_study):
    _, rows = piston_study
    e5 = next(r["rel_error"] for r in rows if r["budget"] == 5)
    e15 = next(r["rel_error"] for r in rows if r["budget"] == 15)
    assert e15 <= 3 * e5
    assert next(r["evals"] for r in rows if r["budget"] == 15) == 15


def test_parallel_study_matches_serial():
    model = piston()
    kw = dict(methods=[MC], budgets=[50, 200], repeats=3, oracle=0.6356)
    a = convergence_study(model, jobs=1, **kw)
    b = convergence_study(model, jobs=3, **kw)
    strip = lambda rows: [{k: v for k, v in r.items() if k != "seconds"} for r in rows]
    assert strip(a) == strip(b)


def test_study_rejects_empty_budgets():
    with pytest.raises(ValueError, match="empty"):
        convergence_study(piston(), [MC], [], oracle=1.0)
