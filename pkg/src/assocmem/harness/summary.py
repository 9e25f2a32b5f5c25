"""Aggregate result rows into fits, meta-fits and critical batch estimates."""
from __future__ import annotations

import json
import math
from collections import defaultdict

import numpy as np

from ..capacity import critical_batch_estimate
from ..distmodel import POPULATION
from ..exceptions import EstimationError, FitError
from ..scalingfit import fit_alpha_form, fit_power_law

FINAL = "final"


def _b_key(b):
    return math.inf if b is POPULATION else b


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _final_rows(rows):
    """Last recorded row of each trajectory, relabelled with step 'final'."""
    last = {}
    for r in rows:
        key = (r.name, r.optimizer, r.alpha, r.d, _b_key(r.B), r.T, r.seed)
        if key not in last or r.step > last[key].step:
            last[key] = r
    return list(last.values())


def capacity_means(rows):
    """Mean capacity over seeds per (name, optimizer, alpha, d, B, T, step).

    Multi-step trajectories also get a ``step = "final"`` entry from the last
    recorded step of each seed, which matters for early-stopped runs.
    """
    ok = [r for r in rows if r.ok]
    groups = defaultdict(list)
    for r in ok:
        groups[(r.name, r.optimizer, r.alpha, r.d, _b_key(r.B), r.T, r.step)].append(r)
    for r in _final_rows(ok):
        if r.T > 1:
            groups[(r.name, r.optimizer, r.alpha, r.d, _b_key(r.B), r.T, FINAL)].append(r)
    out = []
    for key in sorted(groups, key=lambda k: k[:6] + ((math.inf if k[6] == FINAL else k[6]),)):
        g = groups[key]
        name, opt, alpha, d, b, T, step = key
        losses = [r.loss for r in g if r.loss is not None]
        out.append({
            "name": name, "optimizer": opt, "alpha": alpha, "d": d, "N": g[0].N,
            "B": "inf" if b == math.inf else b, "T": T, "step": step, "n_seeds": len(g),
            "capacity_mean": float(np.mean([r.capacity_count for r in g])),
            "prefix_mean": float(np.mean([r.capacity_prefix for r in g])),
            "loss_mean": float(np.mean(losses)) if losses else None,
            "last_step_mean": float(np.mean([r.step for r in g])) if step == FINAL else None,
        })
    return out


def _fits(means):
    groups = defaultdict(list)
    for m in means:
        if m["step"] != 0:
            groups[(m["name"], m["optimizer"], m["alpha"], m["B"], m["T"], m["step"])].append(m)
    fits = []
    for key, g in groups.items():
        if len({m["d"] for m in g}) < 2:
            continue
        name, opt, alpha, B, T, step = key
        entry = {"name": name, "optimizer": opt, "alpha": alpha, "B": B, "T": T, "step": step,
                 "points": [[m["d"], m["capacity_mean"]] for m in sorted(g, key=lambda m: m["d"])]}
        try:
            res = fit_power_law([(m["d"], m["capacity_mean"]) for m in g], ceiling=max(m["N"] for m in g))
        except FitError as exc:
            entry["error"] = str(exc)
        else:
            entry.update(exponent=res.exponent, intercept=res.log_intercept, r_squared=res.r_squared,
                         points_used=res.n_points_used, dropped=[[x, why] for x, why in res.dropped])
        fits.append(entry)
    return fits


def _meta_fits(fits):
    groups = defaultdict(list)
    for f in fits:
        groups[(f["name"], f["optimizer"], f["B"], f["T"], f["step"])].append(f)
    out = []
    for (name, opt, B, T, step), g in groups.items():
        entry = {"name": name, "optimizer": opt, "B": B, "T": T, "step": step,
                 "alphas": sorted(f["alpha"] for f in g)}
        usable = [(f["alpha"], f["exponent"]) for f in g if "exponent" in f]
        try:
            c1, c2, r2 = fit_alpha_form(usable)
        except FitError as exc:
            entry.update(available=False, error=f"meta-fit unavailable: {exc}")
        else:
            entry.update(available=True, c1=c1, c2=c2, r_squared=r2)
        out.append(entry)
    return out


def _critical_batches(means):
    groups = defaultdict(list)
    for m in means:
        if m["B"] != "inf" and m["step"] == m["T"] and m["T"] >= 1:
            groups[(m["name"], m["optimizer"], m["alpha"], m["d"], m["T"])].append(m)
    out = []
    for (name, opt, alpha, d, T), g in groups.items():
        if len(g) < 2:
            continue
        g = sorted(g, key=lambda m: m["B"])
        entry = {"name": name, "optimizer": opt, "alpha": alpha, "d": d, "T": T,
                 "points": [[m["B"], m["capacity_mean"]] for m in g]}
        try:
            entry["B_star"] = critical_batch_estimate([(m["B"], m["capacity_mean"]) for m in g], alpha)
        except EstimationError as exc:
            entry["error"] = str(exc)
        out.append(entry)
    return out


def summarize(rows, name=None, config_hash=None):
    """Structured summary of a results table (plain dict, JSON-serializable)."""
    means = capacity_means(rows)
    fits = _fits(means)
    errors = [{"optimizer": r.optimizer, "alpha": r.alpha, "d": r.d, "B": str(r.B), "T": r.T,
               "seed": r.seed, "error": r.error} for r in rows if not r.ok]
    names = sorted({r.name for r in rows})
    return {
        "name": name if name is not None else ",".join(names),
        "config_hash": config_hash,
        "n_rows": sum(r.ok for r in rows),
        "n_failed_trajectories": len(errors),
        "means": means,
        "fits": fits,
        "meta_fits": _meta_fits(fits),
        "critical_batch": _critical_batches(means),
        "errors": errors,
    }


def _scrub(obj):
    if isinstance(obj, dict):
        return {k: _scrub(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_scrub(v) for v in obj]
    return _clean(obj)


def summary_json(summary) -> str:
    return json.dumps(_scrub(summary), indent=1, sort_keys=True, allow_nan=False) + "\n"


def find(entries, **match):
    """Entries of a summary block whose fields equal ``match``."""
    return [e for e in entries if all(e.get(k) == v for k, v in match.items())]
