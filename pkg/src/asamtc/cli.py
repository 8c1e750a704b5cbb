"""Command-line interface: ``run``, ``convergence`` and ``dump-graph``."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from . import graph as G
from . import io
from .config import ConfigError, RunConfig, input_distribution, load_config
from .models import MODELS, get_model
from .pipelines import AS_AMTC, AS_NIPC, MC, Seeds, StageError, convergence_study, mc_oracle, run_as_amtc, run_as_nipc, run_mc

log = logging.getLogger("asamtc")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _model_for(cfg: RunConfig):
    model = get_model(cfg.model, **cfg.model_params)
    rv = input_distribution(cfg, model.rv)
    if rv is not model.rv:
        grad = model.grad if cfg.model == "piston" else None
        model = replace(model, rv=rv, grad=grad)
    return model


def _execute(cfg: RunConfig):
    model = _model_for(cfg)
    seeds = Seeds(cfg.seed)
    if cfg.method == MC:
        res = run_mc(model, cfg.n_mc, seeds.mc)
    elif cfg.method == AS_NIPC:
        res = run_as_nipc(model, cfg.manual_m(), cfg.gap, cfg.k, cfg.p, cfg.n_grad, cfg.n_nodes, seeds,
                          cfg.restarts)
    else:
        res = run_as_amtc(model, cfg.sr_threshold, cfg.manual_m(), cfg.gap, cfg.k, cfg.k_sparse, cfg.p,
                          cfg.n_grad, cfg.n_nodes, seeds, cfg.restarts)
    return model, res


def cmd_run(args) -> int:
    cfg = load_config(args.config, "method")
    if args.seed is not None:
        cfg.seed = args.seed
    out = Path(args.out or cfg.out)
    t0 = time.perf_counter()
    model, res = _execute(cfg)
    rel = None
    if cfg.oracle is not None:
        rel = abs(res.mean - cfg.oracle) / abs(cfg.oracle)
    row = dict(res.row(), budget=res.n_model_evals, repeat=0, rel_error=rel)
    io.write_results(out / "results.csv", [row])
    d = res.details
    if "subspace" in d:
        io.write_eigenvalues(out / "eigenvalues.csv", d["subspace"].eigenvalues)
        io.write_basis(out / "basis.csv", d["basis"])
        io.write_rule(out / "rule.csv", d["rule"], model.rv.names)
        sur = d["surrogate"]
        io.write_coefficients(out / "coefficients.csv", sur.basis.labels(), sur.coefficients)
    manifest = {
        "version": __version__,
        "command": "run",
        "config": cfg.to_dict(),
        "seeds": Seeds(cfg.seed).as_dict(),
        "inputs": model.rv.to_list(),
        "result": {"method": res.method, "mean": res.mean, "variance": res.variance,
                   "n_model_evals": res.n_model_evals, "n_grad_evals": res.n_grad_evals,
                   "weighted_op_cost": res.weighted_op_cost, "naive_op_cost": res.naive_op_cost,
                   "settings": res.settings, "warnings": res.warnings},
        "wall_time": time.perf_counter() - t0,
    }
    io.write_json(out / "manifest.json", manifest)
    print(f"{res.method}: mean={res.mean:.10g} variance={res.variance:.6g} evals={res.n_model_evals} -> {out}")
    return EXIT_OK


def cmd_convergence(args) -> int:
    cfg = load_config(args.config, "methods")
    if args.seed is not None:
        cfg.seed = args.seed
    out = Path(args.out or cfg.out)
    t0 = time.perf_counter()
    model = _model_for(cfg)
    oracle = cfg.oracle if cfg.oracle is not None else mc_oracle(model, cfg.oracle_n)
    rows = convergence_study(model, cfg.methods, cfg.budgets, cfg.repeats, cfg.seed, oracle,
                             jobs=args.jobs, m=cfg.manual_m(), gap=cfg.gap, n_grad=cfg.n_grad,
                             restarts=cfg.restarts, k_sparse=cfg.k_sparse, sr_threshold=cfg.sr_threshold)
    io.write_results(out / "convergence.csv", rows)
    manifest = {
        "version": __version__,
        "command": "convergence",
        "config": cfg.to_dict(),
        "oracle": oracle,
        "jobs": args.jobs,
        "seconds": [r["seconds"] for r in rows],
        "wall_time": time.perf_counter() - t0,
    }
    io.write_json(out / "manifest.json", manifest)
    print(f"{len(rows)} rows -> {out / 'convergence.csv'}")
    return EXIT_OK


def cmd_dump_graph(args) -> int:
    if args.model not in MODELS:
        print(f"error: unknown model {args.model!r}; available: {', '.join(sorted(MODELS))}", file=sys.stderr)
        return EXIT_CONFIG
    model = get_model(args.model)
    g = model.graph
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{args.model}.graph.json").write_text(g.to_json(indent=1) + "\n")
    sr = G.sparsity_ratios(g)
    rows = [(i + 1, g.input_names[i], sr[i], int(sr[i] < args.threshold)) for i in range(g.n_inputs)]
    io.write_csv(out / f"{args.model}.sr.csv", ("input", "name", "sparsity_ratio", "sparse"), rows)
    print(f"{'input':>5}  {'name':<6}  {'SR':>8}  sparse")
    for i, name, r, s in rows:
        print(f"{i:>5}  {name:<6}  {r:>8.2%}  {'yes' if s else 'no'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="asamtc", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="base seed (overrides the config)")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers (default 1)")

    p = sub.add_parser("run", help="run one UQ method")
    common(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("convergence", help="error-vs-budget study")
    common(p)
    p.set_defaults(func=cmd_convergence)
    p = sub.add_parser("dump-graph", help="write a model's graph JSON and sparsity-ratio table")
    p.add_argument("model")
    p.add_argument("--out", help="output directory (default: current)")
    p.add_argument("--threshold", type=float, default=0.05)
    p.set_defaults(func=cmd_dump_graph)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
