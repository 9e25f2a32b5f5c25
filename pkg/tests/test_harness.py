import json
import math
from dataclasses import replace

import pytest

from assocmem.distmodel import POPULATION
from assocmem.exceptions import ConfigError
from assocmem.harness import (
    CSV_HEADER,
    ResultRow,
    parse_config,
    parse_config_text,
    read_csv,
    rows_to_csv,
    run_grid,
    summarize,
)
from assocmem.harness.cli import PRESETS, main, preset_specs

MINIMAL = """
name = "tiny"
seeds = [3]
[model]
N = 200
[grid]
d = [8]
alpha = [1.5]
[optimizer]
kind = "sgd"
"""

SMALL = """
name = "small"
seeds = [0, 1]
[model]
N = 150
[grid]
d = [4, 8]
alpha = [1.5, 2.0]
B = ["inf", 32]
T = [2]
[[optimizer]]
kind = "sgd"
[[optimizer]]
kind = "muon-exact"
eta = 1.0
eta_schedule = "sqrt-d"
[eval]
record_loss = true
"""


def test_minimal_config_defaults():
    spec = parse_config_text(MINIMAL)
    assert spec.name == "tiny" and spec.seeds == (3,)
    assert spec.B == (POPULATION,) and spec.T == (1,)
    assert spec.i_max_multiplier == 8.0 and not spec.check_all
    assert spec.optimizers[0].kind == "sgd" and spec.optimizers[0].eta.value == 1.0
    assert spec.kappa_u == spec.kappa_v == 0.0


def test_unknown_optimizer_kind_names_key():
    with pytest.raises(ConfigError, match=r"optimizer\[0\]\.kind"):
        parse_config_text(MINIMAL.replace('"sgd"', '"adam"'))


@pytest.mark.parametrize("bad, key", [
    (MINIMAL + "\n[capacity]\nimax = 3\n", "capacity.imax"),
    (MINIMAL.replace("seeds = [3]", "seeds = [3]\nsteps = 4"), "steps"),
    (MINIMAL.replace("d = [8]", "d = [1]"), "grid.d"),
    (MINIMAL.replace("d = [8]", "d = []"), "grid.d"),
    (MINIMAL.replace("N = 200", "N = -5"), "model.N"),
    (MINIMAL.replace('name = "tiny"', ""), "name"),
])
def test_validation_errors(bad, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        parse_config_text(bad)


def test_toml_syntax_error_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config_text("name = ")
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "nope.toml")


def test_fig1_preset_grid():
    (spec,) = preset_specs("fig1")
    assert spec.d == (16, 32, 64, 128, 256)
    assert spec.alpha == (1.25, 1.5, 2.0)
    assert spec.n_items == 20000 and len(spec.seeds) == 8
    assert spec.B == (POPULATION,) and spec.T == (1,)
    assert [o.kind for o in spec.optimizers] == ["sgd", "muon-exact"]


@pytest.mark.parametrize("scale", ["desk", "paper"])
@pytest.mark.parametrize("figure", sorted(PRESETS))
def test_all_presets_parse(figure, scale):
    specs = preset_specs(figure, scale)
    assert len(specs) == len(PRESETS[figure])


def test_preset_settings():
    (fig2,) = preset_specs("fig2")
    assert fig2.B == tuple(2**k for k in range(4, 17)) and fig2.alpha == (1.5,)
    fig3, conv = preset_specs("fig3")
    assert fig3.optimizers[0].eta.sequence(64, 1.5, 1) == [16.0]
    assert conv.early_stop_window == 10 and conv.early_stop_tol == 0.005
    (fig5a,) = preset_specs("fig5a")
    gd = fig5a.optimizers[0]
    assert gd.eta.sequence(64, 1.5, 1)[0] == pytest.approx(0.01 * 8)
    fig6 = preset_specs("fig6")
    assert [s.kappa_v for s in fig6] == [0.0, 1.0, 1.5]
    assert all(s.optimizers[0].ridge == 1e-8 for s in fig6)
    assert preset_specs("fig1", "paper")[0].n_items == 100000
    with pytest.raises(ConfigError):
        preset_specs("fig4")


def test_single_cell_rows():
    rows = run_grid(parse_config_text(MINIMAL))
    assert [r.step for r in rows] == [0, 1]
    assert rows[0].capacity_count == 0 and rows[1].capacity_count >= 0
    assert all(r.ok and r.loss is None and r.wall_ms is None for r in rows)


def test_grid_completeness_order_and_determinism():
    spec = parse_config_text(SMALL)
    rows = run_grid(spec)
    # 2 optimizers x 2 alphas x 2 d x 2 B x 1 T x 2 seeds x 3 steps
    assert len(rows) == 2 * 2 * 2 * 2 * 2 * 3
    assert rows == sorted(rows, key=ResultRow.sort_key)
    assert all(math.isfinite(r.loss) for r in rows)
    text = rows_to_csv(rows, spec.config_hash())
    assert text == rows_to_csv(run_grid(spec), spec.config_hash())
    assert text == rows_to_csv(run_grid(spec, jobs=2), spec.config_hash())
    lines = text.splitlines()
    assert lines[0] == f"# config_sha256={spec.config_hash()}"
    assert lines[1] == ",".join(CSV_HEADER)
    assert "inf" in {line.split(",")[5] for line in lines[2:]}


def test_seed_offset_and_check_all():
    spec = parse_config_text(MINIMAL)
    moved = spec.with_overrides(seed_offset=10, check_all=True)
    assert moved.seeds == (13,) and moved.check_all
    assert moved.config_hash() != spec.config_hash()
    assert spec.with_overrides().config_hash() == spec.config_hash()
    rows = run_grid(moved)
    assert {r.seed for r in rows} == {13}


def test_error_rows_do_not_abort():
    spec = parse_config_text(MINIMAL.replace('kind = "sgd"', 'kind = "newton"').replace(
        "alpha = [1.5]", "alpha = [1.5]\nT = [1, 2]"))
    rows = run_grid(spec)
    failed = [r for r in rows if not r.ok]
    assert len(failed) == 1 and failed[0].T == 2 and "newton" in failed[0].error
    assert [r.step for r in rows if r.ok] == [0, 1]
    summary = summarize(rows)
    assert summary["n_failed_trajectories"] == 1


def _row(opt, d, alpha, cap, seed=0, step=1, B=POPULATION, T=1, N=10**6):
    return ResultRow("syn", opt, d, N, alpha, B, T, step, seed, cap, cap)


def test_summary_exact_power_law():
    rows = [_row("muon", d, 1.5, d**1.5) for d in (16, 32, 64, 128)]
    fits = summarize(rows)["fits"]
    assert len(fits) == 1 and fits[0]["exponent"] == pytest.approx(1.5, abs=1e-12)
    meta = summarize(rows)["meta_fits"]
    assert meta[0]["available"] is False and "unavailable" in meta[0]["error"]


def test_summary_meta_fit_and_critical_batch():
    rows = [_row("muon", d, a, round(d ** (1 + 1 / (2 * a)) * 4)) for d in (64, 256, 1024) for a in (1.25, 1.5, 2.0)]
    meta = summarize(rows)["meta_fits"][0]
    assert meta["available"] and meta["c1"] == pytest.approx(1.0, abs=0.05) and meta["c2"] == pytest.approx(0.5, abs=0.1)
    rows = [_row("muon", 64, 1.5, min(2 ** (k / 1.5), 100.0), B=2**k) for k in range(4, 17)]
    (cb,) = summarize(rows)["critical_batch"]
    assert cb["B_star"] == pytest.approx(1000, rel=0.05)
    rows = [_row("sgd", 64, 1.5, 7.0, B=2**k) for k in range(4, 17)]
    assert "rising" in summarize(rows)["critical_batch"][0]["error"]


def test_summary_final_step_for_early_stop():
    rows = [_row("muon", 16, 1.5, c, seed=s, step=t, T=50) for s, last in ((0, 3), (1, 5))
            for t, c in enumerate(range(last + 1))]
    means = [m for m in summarize(rows)["means"] if m["step"] == "final"]
    assert means[0]["capacity_mean"] == 4.0 and means[0]["last_step_mean"] == 4.0


def test_cli_run_fit_roundtrip(tmp_path):
    cfg = tmp_path / "small.toml"
    cfg.write_text(SMALL)
    assert main(["run", str(cfg), "--out-dir", str(tmp_path / "out")]) == 0
    csv_path = tmp_path / "out" / "small.csv"
    summary = json.loads((tmp_path / "out" / "small.json").read_text())
    rows, h = read_csv(csv_path)
    assert h == summary["config_hash"] and len(rows) == summary["n_rows"]
    assert main(["fit", str(csv_path), "--out-dir", str(tmp_path / "fit")]) == 0
    refit = json.loads((tmp_path / "fit" / "small.summary.json").read_text())
    assert refit["fits"] == summary["fits"]
    assert refit["critical_batch"] == summary["critical_batch"]


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text(MINIMAL.replace('"sgd"', '"adam"'))
    assert main(["run", str(bad), "--out-dir", str(tmp_path)]) == 1
    assert main(["run", str(tmp_path / "missing.toml")]) == 1
    newton = MINIMAL.replace('kind = "sgd"', 'kind = "newton"')
    all_fail = tmp_path / "allfail.toml"
    all_fail.write_text(newton.replace("alpha = [1.5]", "alpha = [1.5]\nT = [2]"))
    assert main(["run", str(all_fail), "--out-dir", str(tmp_path)]) == 2
    partial = tmp_path / "partial.toml"
    partial.write_text(newton.replace("alpha = [1.5]", "alpha = [1.5]\nT = [1, 2]"))
    assert main(["run", str(partial), "--out-dir", str(tmp_path)]) == 3
    ok = tmp_path / "ok.toml"
    ok.write_text(MINIMAL)
    assert main(["run", str(ok), "--out-dir", str(tmp_path), "--seed-offset", "5", "--check-all"]) == 0
    rows, _ = read_csv(tmp_path / "tiny.csv")
    assert {r.seed for r in rows} == {8}


def test_cli_selftest(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 8 and all(line.startswith("PASS") for line in out)


def test_timing_column():
    spec = replace(parse_config_text(MINIMAL), timing=True)
    rows = run_grid(spec)
    assert all(r.wall_ms is not None and r.wall_ms >= 0 for r in rows)
