"""Experiment configs: TOML files describing a seeded parameter grid.

A config looks like::

    name = "fig1"
    seeds = [0, 1, 2, 3]

    [model]
    N = 20000
    kappa_u = 0.0
    kappa_v = 0.0

    [grid]
    d = [16, 32, 64]
    alpha = [1.5, 2.0]
    B = ["inf"]
    T = [1]

    [[optimizer]]
    kind = "muon-exact"
    eta = 2.0
    eta_schedule = "sqrt-d"

    [capacity]
    i_max_multiplier = 8
    check_all = false

    [output]
    csv = "fig1.csv"
    summary = "fig1.json"

``optimizer`` may be a single table or an array of tables.
"""
from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from ..distmodel import POPULATION, CovarianceSpec
from ..exceptions import ConfigError
from ..optimizers import KINDS, EtaSchedule, EvalOptions, LambdaSchedule, OptimizerSpec
from ..spectral import NewtonSchulzSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

TOP_KEYS = {"name", "seeds", "model", "grid", "optimizer", "capacity", "eval", "output"}
MODEL_KEYS = {"N", "kappa_u", "kappa_v"}
GRID_KEYS = {"d", "alpha", "B", "T"}
OPT_KEYS = {"kind", "label", "eta", "eta_schedule", "eta_values", "lambda", "lambda_schedule",
            "lambda_form", "ns_iterations", "ns_coefficients", "ns_prescale", "ridge", "gradient_mode"}
CAP_KEYS = {"i_max_multiplier", "check_all", "i_max"}
EVAL_KEYS = {"record_loss", "n_eval", "early_stop_window", "early_stop_tol", "record_steps", "timing"}
OUT_KEYS = {"csv", "summary"}


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    optimizers: tuple
    d: tuple
    alpha: tuple
    B: tuple                 # ints or POPULATION
    T: tuple
    n_items: int
    seeds: tuple
    kappa_u: float = 0.0
    kappa_v: float = 0.0
    i_max_multiplier: float = 8.0
    i_max: int | None = None
    check_all: bool = False
    record_loss: bool = False
    n_eval: int | None = None
    early_stop_window: int | None = None
    early_stop_tol: float = 0.005
    record_steps: str = "all"   # all | final
    timing: bool = False
    csv: str | None = None
    summary: str | None = None
    source: str | None = field(default=None, compare=False)

    def cov_u(self):
        return _cov(self.kappa_u)

    def cov_v(self):
        return _cov(self.kappa_v)

    def eval_options(self):
        return EvalOptions(i_max=self.i_max, check_all=self.check_all,
                           i_max_multiplier=self.i_max_multiplier, record_loss=self.record_loss,
                           n_eval=self.n_eval, early_stop_window=self.early_stop_window,
                           early_stop_tol=self.early_stop_tol)

    def with_overrides(self, seed_offset=0, check_all=None):
        spec = self
        if seed_offset:
            spec = replace(spec, seeds=tuple((s + seed_offset) % 2**64 for s in spec.seeds))
        if check_all is not None:
            spec = replace(spec, check_all=bool(check_all))
        return spec

    def canonical(self):
        """JSON-ready description of everything that affects the rows."""
        doc = asdict(self)
        for key in ("csv", "summary", "source"):
            doc.pop(key)
        doc["B"] = [str(b) for b in self.B]
        doc["optimizers"] = [_opt_doc(o) for o in self.optimizers]
        return doc

    def config_hash(self):
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _cov(kappa):
    return CovarianceSpec() if kappa == 0 else CovarianceSpec("power-law-diagonal", kappa)


def _opt_doc(o: OptimizerSpec):
    doc = {"kind": o.kind, "label": o.name, "eta": asdict(o.eta), "lambda": asdict(o.lam),
           "ridge": o.ridge, "gradient_mode": o.gradient_mode}
    doc["eta"]["values"] = list(o.eta.values)
    if o.ns_spec is not None:
        doc["ns"] = {"coefficients": list(o.ns_spec.coefficients), "iterations": o.ns_spec.iterations,
                     "prescale": o.ns_spec.prescale}
    return doc


def _check_keys(table, allowed, where, path):
    if not isinstance(table, dict):
        raise ConfigError(f"{path}: '{where}' must be a table")
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown key '{where + '.' if where else ''}{unknown[0]}'")


def _as_list(value, key, path):
    if isinstance(value, list):
        if not value:
            raise ConfigError(f"{path}: '{key}' must be non-empty")
        return value
    return [value]


def _number(value, key, path, integer=False, positive=True):
    ok = isinstance(value, int) if integer else isinstance(value, (int, float))
    if isinstance(value, bool) or not ok or (isinstance(value, float) and not math.isfinite(value)):
        raise ConfigError(f"{path}: '{key}' must be {'an integer' if integer else 'a number'}, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(f"{path}: '{key}' must be positive, got {value!r}")
    return value


def _batch(value, path):
    if isinstance(value, str) and value.lower() in ("inf", "population"):
        return POPULATION
    return _number(value, "grid.B", path, integer=True)


def _parse_optimizer(tab, path, i):
    where = f"optimizer[{i}]"
    _check_keys(tab, OPT_KEYS, where, path)
    kind = tab.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"{path}: '{where}.kind' must be one of {', '.join(KINDS)}, got {kind!r}")
    eta_val = _number(tab.get("eta", 1.0), f"{where}.eta", path)
    eta_kind = tab.get("eta_schedule", "constant")
    values = tuple(_number(v, f"{where}.eta_values", path) for v in tab.get("eta_values", []))
    if eta_kind == "explicit" and not values:
        raise ConfigError(f"{path}: '{where}.eta_values' required for an explicit schedule")
    lam_val = _number(tab.get("lambda", 0.0), f"{where}.lambda", path, positive=False)
    if lam_val < 0:
        raise ConfigError(f"{path}: '{where}.lambda' must be nonnegative")
    lam_kind = tab.get("lambda_schedule", "constant" if lam_val > 0 else "zero")
    iters = _number(tab.get("ns_iterations", 5), f"{where}.ns_iterations", path, integer=True)
    try:
        ns = None
        if kind == "muon-ns":
            ns = NewtonSchulzSpec(tuple(tab.get("ns_coefficients", (1.5, -0.5))), iters,
                                  tab.get("ns_prescale", "frobenius"))
        return OptimizerSpec(kind, EtaSchedule(eta_kind, float(eta_val), values),
                             LambdaSchedule(lam_kind, float(lam_val), tab.get("lambda_form", "next")),
                             ns_spec=ns, ridge=float(tab.get("ridge", 1e-8)),
                             gradient_mode=tab.get("gradient_mode", "exact"), label=tab.get("label"))
    except ValueError as exc:
        raise ConfigError(f"{path}: '{where}': {exc}") from exc


def parse_config_text(text, path="<string>") -> ExperimentSpec:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    _check_keys(doc, TOP_KEYS, "", path)
    for key in ("name", "seeds", "grid", "optimizer"):
        if key not in doc:
            raise ConfigError(f"{path}: missing required key '{key}'")
    name = doc["name"]
    if not isinstance(name, str) or not name or "," in name:
        raise ConfigError(f"{path}: 'name' must be a non-empty string without commas")

    seeds = doc["seeds"]
    if isinstance(seeds, int) and not isinstance(seeds, bool):
        seeds = list(range(seeds))
    seeds = tuple(_number(s, "seeds", path, integer=True, positive=False) for s in _as_list(seeds, "seeds", path))
    if any(s < 0 or s >= 2**64 for s in seeds):
        raise ConfigError(f"{path}: 'seeds' must be 64-bit unsigned integers")

    model = doc.get("model", {})
    _check_keys(model, MODEL_KEYS, "model", path)
    grid = doc["grid"]
    _check_keys(grid, GRID_KEYS, "grid", path)
    ds = tuple(_number(v, "grid.d", path, integer=True) for v in _as_list(grid.get("d", []), "grid.d", path))
    if any(v < 2 for v in ds):
        raise ConfigError(f"{path}: 'grid.d' entries must be >= 2")
    alphas = tuple(float(_number(v, "grid.alpha", path)) for v in _as_list(grid.get("alpha", []), "grid.alpha", path))
    Bs = tuple(_batch(v, path) for v in _as_list(grid.get("B", ["inf"]), "grid.B", path))
    Ts = tuple(_number(v, "grid.T", path, integer=True, positive=False) for v in _as_list(grid.get("T", [1]), "grid.T", path))
    if any(t < 0 for t in Ts):
        raise ConfigError(f"{path}: 'grid.T' entries must be >= 0")
    N = _number(model.get("N", 20000), "model.N", path, integer=True)
    ku = float(_number(model.get("kappa_u", 0.0), "model.kappa_u", path, positive=False))
    kv = float(_number(model.get("kappa_v", 0.0), "model.kappa_v", path, positive=False))

    opts = doc["optimizer"]
    opts = opts if isinstance(opts, list) else [opts]
    if not opts:
        raise ConfigError(f"{path}: at least one optimizer is required")
    optimizers = tuple(_parse_optimizer(t, path, i) for i, t in enumerate(opts))
    names = [o.name for o in optimizers]
    if len(set(names)) != len(names):
        raise ConfigError(f"{path}: optimizer labels must be unique, got {names}")

    cap = doc.get("capacity", {})
    _check_keys(cap, CAP_KEYS, "capacity", path)
    ev = doc.get("eval", {})
    _check_keys(ev, EVAL_KEYS, "eval", path)
    out = doc.get("output", {})
    _check_keys(out, OUT_KEYS, "output", path)
    record_steps = ev.get("record_steps", "all")
    if record_steps not in ("all", "final"):
        raise ConfigError(f"{path}: 'eval.record_steps' must be 'all' or 'final'")
    window = ev.get("early_stop_window")
    return ExperimentSpec(
        name=name, optimizers=optimizers, d=ds, alpha=alphas, B=Bs, T=Ts, n_items=N, seeds=seeds,
        kappa_u=ku, kappa_v=kv,
        i_max_multiplier=float(_number(cap.get("i_max_multiplier", 8.0), "capacity.i_max_multiplier", path)),
        i_max=None if "i_max" not in cap else _number(cap["i_max"], "capacity.i_max", path, integer=True),
        check_all=bool(cap.get("check_all", False)),
        record_loss=bool(ev.get("record_loss", False)),
        n_eval=None if "n_eval" not in ev else _number(ev["n_eval"], "eval.n_eval", path, integer=True),
        early_stop_window=None if window is None else _number(window, "eval.early_stop_window", path, integer=True),
        early_stop_tol=float(_number(ev.get("early_stop_tol", 0.005), "eval.early_stop_tol", path, positive=False)),
        record_steps=record_steps, timing=bool(ev.get("timing", False)),
        csv=out.get("csv"), summary=out.get("summary"), source=str(path),
    )


def parse_config(path) -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    return parse_config_text(text, path)
