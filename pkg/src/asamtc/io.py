"""CSV/JSON writers for results, eigenvalues, rules, bases and coefficients."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .quadrature import QuadratureRule
from .whitening import WhitenedBasis

RESULT_COLUMNS = ("method", "budget", "repeat", "mean", "variance", "rel_error", "evals", "op_cost")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_results(path, rows: Iterable[dict]) -> Path:
    return write_csv(path, RESULT_COLUMNS, ([r.get(c) for c in RESULT_COLUMNS] for r in rows))


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_eigenvalues(path, eigenvalues) -> Path:
    lam = np.asarray(eigenvalues, dtype=float)
    lam1 = lam[0] if lam[0] != 0 else 1.0
    return write_csv(path, ("rank", "lambda", "lambda_over_lambda1"),
                     ((i + 1, lam[i], lam[i] / lam1) for i in range(len(lam))))


def write_rule(path, rule: QuadratureRule, names: Sequence[str] | None = None) -> Path:
    """Nodes and weights as CSV plus a ``.json`` sidecar with the rule metadata."""
    path = Path(path)
    cols = [names[i] if names else f"u{i + 1}" for i in rule.inputs]
    write_csv(path, (*cols, "weight"), ((*row, w) for row, w in zip(rule.nodes, rule.weights)))
    side = dict(rule.meta, n=len(rule), residual_norm=rule.residual_norm, inputs=list(rule.inputs))
    if rule.factors:
        side["factors"] = [{"inputs": list(f.inputs), "size": f.size} for f in rule.factors]
    write_json(path.with_suffix(".json"), side)
    return path


def read_rule(path) -> QuadratureRule:
    path = Path(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    side = json.loads(path.with_suffix(".json").read_text())
    meta = {k: v for k, v in side.items() if k not in ("residual_norm", "inputs", "factors")}
    return QuadratureRule(data[:, :-1], data[:, -1], side["residual_norm"], tuple(side["inputs"]), None, meta)


def write_basis(path, basis: WhitenedBasis) -> Path:
    idx = basis.indices.indices
    labels = ["(" + ",".join(map(str, i)) + ")" for i in idx]
    return write_csv(path, ("index", *[f"m{lab}" for lab in labels]),
                     ((labels[r], *basis.M[r]) for r in range(len(labels))))


def write_coefficients(path, labels: Sequence[str], coefficients) -> Path:
    return write_csv(path, ("index", "alpha"), zip(labels, coefficients))
