"""Run configuration files (TOML)."""
from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .distributions import Marginal, RandomVector
from .models import MODELS
from .pipelines import METHODS


class ConfigError(ValueError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = f"line {line}: " if line else ""
        super().__init__(f"{where}{message}")
        self.field = field
        self.line = line


@dataclass
class RunConfig:
    model: str
    method: str | None = None
    methods: list[str] | None = None
    model_params: dict = field(default_factory=dict)
    inputs: list[dict] | None = None
    seed: int = 0
    m: int | str = "gap"
    gap: float = 1e-2
    k: int = 5
    p: int | None = None
    k_sparse: int = 3
    n_nodes: int | None = None
    n_grad: int = 100
    n_mc: int = 100_000
    restarts: int = 10
    sr_threshold: float = 0.05
    budgets: list[int] = field(default_factory=list)
    repeats: int = 20
    oracle: float | None = None
    oracle_n: int = 100_000
    out: str = "results"

    def manual_m(self) -> int | None:
        return None if self.m == "gap" else int(self.m)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_INT_FIELDS = ("seed", "k", "k_sparse", "n_grad", "n_mc", "restarts", "repeats", "oracle_n")


def _line_of(text: str, key: str) -> int | None:
    pat = re.compile(rf"^\s*(\[+\s*)?{re.escape(key)}\s*(=|\]|$)")
    for no, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return no
    return None


def parse_config(text: str, require: str = "method") -> RunConfig:
    """Parse and validate a config; ``require`` is "method" (run) or "methods" (convergence)."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"malformed config: {exc}", None, int(m.group(1)) if m else None) from None

    def fail(key, msg):
        raise ConfigError(f"field '{key}': {msg}", key, _line_of(text, key))

    for key in raw:
        if key not in _FIELDS:
            fail(key, f"unknown key (allowed: {', '.join(sorted(_FIELDS))})")
    if "model" not in raw:
        raise ConfigError("missing required field 'model'", "model")
    if raw["model"] not in MODELS:
        fail("model", f"unknown model {raw['model']!r}; available: {', '.join(sorted(MODELS))}")
    if require == "method" and "method" not in raw:
        raise ConfigError("missing required field 'method'", "method")
    if require == "methods" and "methods" not in raw and "method" not in raw:
        raise ConfigError("missing required field 'methods'", "methods")
    if "method" in raw and raw["method"] not in METHODS:
        fail("method", f"must be one of {', '.join(METHODS)}, got {raw['method']!r}")
    if "methods" in raw:
        if not isinstance(raw["methods"], list) or not raw["methods"]:
            fail("methods", "must be a non-empty list")
        for meth in raw["methods"]:
            if meth not in METHODS:
                fail("methods", f"unknown method {meth!r}")
    for key in _INT_FIELDS:
        if key in raw and (not isinstance(raw[key], int) or isinstance(raw[key], bool)):
            fail(key, f"must be an integer, got {raw[key]!r}")
    for key in ("k", "k_sparse", "n_grad", "n_mc", "restarts", "repeats"):
        if key in raw and raw[key] < 1:
            fail(key, "must be >= 1")
    if "m" in raw:
        if raw["m"] != "gap" and (not isinstance(raw["m"], int) or raw["m"] < 1):
            fail("m", "must be a positive integer or \"gap\"")
    for key in ("gap", "sr_threshold", "oracle"):
        if key in raw and not isinstance(raw[key], (int, float)):
            fail(key, "must be a number")
    for key in ("p", "n_nodes"):
        if key in raw and (not isinstance(raw[key], int) or raw[key] < 0):
            fail(key, "must be a non-negative integer")
    if "budgets" in raw:
        b = raw["budgets"]
        if not isinstance(b, list) or not all(isinstance(x, int) and x >= 1 for x in b):
            fail("budgets", "must be a list of positive integers")
    if require == "methods" and not raw.get("budgets"):
        fail("budgets", "must be a non-empty list for a convergence study")
    if "model_params" in raw and not isinstance(raw["model_params"], dict):
        fail("model_params", "must be a table")
    if "inputs" in raw:
        if not isinstance(raw["inputs"], list):
            fail("inputs", "must be an array of tables")
        for entry in raw["inputs"]:
            try:
                Marginal(entry["kind"], float(entry["param1"]), float(entry["param2"]))
            except (KeyError, TypeError, ValueError) as exc:
                fail("inputs", f"invalid marginal {entry!r}: {exc}")
    cfg = RunConfig(**raw)
    if cfg.methods is None and cfg.method is not None:
        cfg.methods = [cfg.method]
    return cfg


def load_config(path, require: str = "method") -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, require)


def input_distribution(cfg: RunConfig, default: RandomVector) -> RandomVector:
    if cfg.inputs is None:
        return default
    if len(cfg.inputs) != default.dim:
        raise ConfigError(f"field 'inputs': model {cfg.model!r} has {default.dim} inputs, "
                          f"config lists {len(cfg.inputs)}", "inputs")
    margs = [Marginal(e["kind"], float(e["param1"]), float(e["param2"])) for e in cfg.inputs]
    names = [e.get("name", n) for e, n in zip(cfg.inputs, default.names)]
    return RandomVector(margs, names)
