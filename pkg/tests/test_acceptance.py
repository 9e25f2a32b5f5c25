"""Acceptance criteria, run on the desk-scale presets.

Each test prints one PASS/FAIL line (collected again in the terminal
summary). Preset outputs go to ``results/acceptance`` at the repository
root; set ``ASSOCMEM_REUSE=1`` to reuse CSVs whose config hash matches
instead of recomputing them.
"""
import math
import os
from pathlib import Path

import numpy as np
import pytest

from assocmem.harness import read_csv, run_grid, summarize, write_csv
from assocmem.harness.cli import preset_specs
from assocmem.harness.summary import find
from assocmem.selftest import run_selftest

pytestmark = pytest.mark.slow

OUT = Path(os.environ.get("ASSOCMEM_RESULTS", Path(__file__).resolve().parents[1] / "results" / "acceptance"))


def _load(spec):
    path = OUT / f"{spec.name}.csv"
    if os.environ.get("ASSOCMEM_REUSE") == "1" and path.exists():
        rows, h = read_csv(path)
        if h == spec.config_hash():
            return rows
    rows = run_grid(spec)
    write_csv(rows, spec.config_hash(), path)
    return rows


def _summaries(figure):
    return [summarize(_load(spec), spec.name, spec.config_hash()) for spec in preset_specs(figure)]


@pytest.fixture(scope="module")
def fig1():
    return _summaries("fig1")[0]


def _fit(summary, optimizer, alpha, step=1):
    (entry,) = find(summary["fits"], optimizer=optimizer, alpha=alpha, step=step)
    return entry.get("exponent", math.nan)


def _within(x, target, tol):
    return abs(x - target) <= tol


def test_criterion_1_muon_one_step_exponent(fig1, report):
    e15, e20 = _fit(fig1, "muon-exact", 1.5), _fit(fig1, "muon-exact", 2.0)
    ok = _within(e15, 4 / 3, 0.15) and _within(e20, 1.25, 0.15)
    report(1, ok, f"muon exponent alpha=1.5: {e15:.3f} (target 1.333 +- 0.15), "
                  f"alpha=2.0: {e20:.3f} (target 1.25 +- 0.15)")
    assert ok


def test_criterion_2_sgd_one_step_exponent(fig1, report):
    e15, e20 = _fit(fig1, "sgd", 1.5), _fit(fig1, "sgd", 2.0)
    (meta,) = find(fig1["meta_fits"], optimizer="sgd", step=1)
    c2 = meta.get("c2", math.nan)
    ok = _within(e15, 1 / 3, 0.25) and _within(e20, 0.25, 0.25) and _within(c2, 0.5, 0.2)
    report(2, ok, f"sgd exponent alpha=1.5: {e15:.3f} (target 0.333 +- 0.25), alpha=2.0: {e20:.3f} "
                  f"(target 0.25 +- 0.25), meta-fit c2 {c2:.3f} (target 0.5 +- 0.2)")
    assert ok


def test_criterion_3_exponent_functional_form(fig1, report):
    (meta,) = find(fig1["meta_fits"], optimizer="muon-exact", step=1)
    c1, c2 = meta.get("c1", math.nan), meta.get("c2", math.nan)
    ok = meta["alphas"] == [1.25, 1.5, 2.0] and _within(c1, 1.0, 0.2) and _within(c2, 0.5, 0.25)
    report(3, ok, f"muon meta-fit c1 {c1:.3f} (target 1.0 +- 0.2), c2 {c2:.3f} (target 0.5 +- 0.25)")
    assert ok


@pytest.fixture(scope="module")
def fig2():
    return _summaries("fig2")[0]


def test_criterion_4_critical_batch(fig2, report):
    alpha, d = 1.5, 64
    caps = {}
    for opt in ("sgd", "muon-exact"):
        caps[opt] = {m["B"]: m["capacity_mean"]
                     for m in find(fig2["means"], optimizer=opt, d=d, alpha=alpha, step=1)}
    bad_a = [(opt, B, c) for opt in caps for B, c in caps[opt].items()
             if B <= 2**7 and not (0.5 * B ** (1 / alpha) <= c <= 2 * B ** (1 / alpha))]
    ok_a = not bad_a
    bstar = {}
    for opt in caps:
        (cb,) = find(fig2["critical_batch"], optimizer=opt, d=d, alpha=alpha)
        bstar[opt] = cb.get("B_star", cb.get("error"))
    ok_b = all(isinstance(v, float) for v in bstar.values()) and bstar["muon-exact"] / bstar["sgd"] >= 8
    r_sgd = caps["sgd"][2**16] / caps["sgd"][2**10]
    r_muon = caps["muon-exact"][2**16] / caps["muon-exact"][2**10]
    ok_c = r_sgd <= 1.5 and r_muon >= 3
    ok = ok_a and ok_b and ok_c
    report(4, ok, f"(a) {'ok' if ok_a else 'outside factor 2 of B^(1/alpha): ' + ', '.join(f'{o} B={b} cap={c:.2f}' for o, b, c in bad_a)}; "
                  f"(b) B* muon {bstar['muon-exact']}, sgd {bstar['sgd']} (need ratio >= 8); "
                  f"(c) cap(2^16)/cap(2^10) sgd {r_sgd:.2f} (<= 1.5), muon {r_muon:.2f} (>= 3)")
    assert ok


@pytest.fixture(scope="module")
def fig3():
    return _summaries("fig3")


def test_criterion_5_multi_step_muon(fig3, report):
    steps, conv = fig3
    e2 = _fit(steps, "muon-exact", 1.5, step=2)
    e3 = _fit(steps, "muon-exact", 1.5, step=3)
    e_conv = _fit(conv, "muon-exact", 1.5, step="final")
    ok = _within(e2, 14 / 9, 0.25) and _within(e3, 2 - (2 / 3) ** 3, 0.3) and 1.7 <= e_conv <= 2.05
    report(5, ok, f"exponent T=2 {e2:.3f} (target 1.556 +- 0.25), T=3 {e3:.3f} (target 1.704 +- 0.3), "
                  f"converged {e_conv:.3f} (target [1.7, 2.05])")
    assert ok


@pytest.fixture(scope="module")
def fig6():
    return _summaries("fig6")


def test_criterion_6_newton_parity_and_anisotropy(fig6, report):
    ratios = {}
    for summary, kappa in zip(fig6, (0.0, 1.0, 1.5)):
        for d in (16, 32, 64):
            (n,) = find(summary["means"], optimizer="newton", d=d, step=1)
            (m,) = find(summary["means"], optimizer="muon-exact", d=d, step=1)
            ratios[kappa, d] = n["capacity_mean"] / m["capacity_mean"] if m["capacity_mean"] else math.inf
    iso = [ratios[0.0, d] for d in (16, 32, 64)]
    aniso = [ratios[1.5, d] for d in (16, 32, 64)]
    ok = all(0.67 <= r <= 1.5 for r in iso) and aniso[-1] >= 2 and all(np.diff(aniso) >= 0)
    report(6, ok, "newton/muon ratio kappa=0: " + ", ".join(f"{r:.2f}" for r in iso) + " (each in [0.67, 1.5]); "
                  "kappa=1.5: " + ", ".join(f"{r:.2f}" for r in aniso) + " (d=64 >= 2, nondecreasing)")
    assert ok


@pytest.fixture(scope="module")
def fig5a():
    return _summaries("fig5a")[0]


def test_criterion_7_early_acceleration(fig5a, report):
    def cap(opt, step):
        (m,) = find(fig5a["means"], optimizer=opt, d=64, step=step)
        return m["capacity_mean"]

    r2 = cap("muon-exact", 2) / max(cap("gd-increasing", 2), 1e-12)
    r12 = cap("muon-exact", 12) / max(cap("gd-increasing", 12), 1e-12)
    ok = r2 >= 5 and r12 < 3
    report(7, ok, f"muon/gd capacity ratio T=2 {r2:.2f} (>= 5), T=12 {r12:.2f} (< 3)")
    assert ok


def test_criterion_8_selftest(report):
    results = run_selftest()
    failed = [r.name for r in results if not r.passed]
    report(8, not failed, f"{len(results) - len(failed)}/{len(results)} oracle checks pass"
                          + (f"; failing: {', '.join(failed)}" if failed else ""))
    assert not failed
