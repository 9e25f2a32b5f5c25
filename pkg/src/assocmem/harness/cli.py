"""Command line entry point: ``python -m assocmem``.

Exit codes: 0 success, 1 config error, 2 every cell failed, 3 some cells failed.
"""
from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

from ..exceptions import ConfigError
from .config import parse_config, parse_config_text
from .runner import read_csv, run_grid, write_csv
from .summary import summarize, summary_json

EXIT_OK, EXIT_CONFIG, EXIT_ALL_FAILED, EXIT_PARTIAL = 0, 1, 2, 3

PRESETS = {
    "fig1": ("fig1",),
    "fig2": ("fig2",),
    "fig3": ("fig3", "fig3_converge"),
    "fig5a": ("fig5a",),
    "fig6": ("fig6_kappa0", "fig6_kappa1", "fig6_kappa1p5"),
}


def preset_specs(figure, scale="desk"):
    """Parsed configs making up a preset."""
    if figure not in PRESETS:
        raise ConfigError(f"unknown preset {figure!r}; choose from {', '.join(PRESETS)}")
    if scale not in ("desk", "paper"):
        raise ConfigError(f"unknown scale {scale!r}")
    root = resources.files("assocmem.harness") / "presets" / scale
    return [parse_config_text((root / f"{stem}.toml").read_text(encoding="utf-8"), f"{scale}/{stem}.toml")
            for stem in PRESETS[figure]]


def _status(n_failed, n_total):
    if n_failed == 0:
        return EXIT_OK
    return EXIT_ALL_FAILED if n_failed == n_total else EXIT_PARTIAL


def execute(spec, out_dir, jobs=1, log=sys.stderr):
    """Run one spec, write its CSV and JSON summary; returns (summary, #failed, #trajectories)."""
    rows = run_grid(spec, jobs=jobs)
    h = spec.config_hash()
    out_dir = Path(out_dir)
    csv_path = write_csv(rows, h, out_dir / (spec.csv or f"{spec.name}.csv"))
    summary = summarize(rows, spec.name, h)
    sum_path = out_dir / (spec.summary or f"{spec.name}.json")
    sum_path.parent.mkdir(parents=True, exist_ok=True)
    sum_path.write_text(summary_json(summary), encoding="utf-8")
    n_traj = len(spec.optimizers) * len(spec.alpha) * len(spec.d) * len(spec.B) * len(spec.T) * len(spec.seeds)
    n_failed = summary["n_failed_trajectories"]
    print(f"{spec.name}: {n_traj - n_failed}/{n_traj} trajectories ok -> {csv_path}, {sum_path}", file=log)
    return summary, n_failed, n_traj


def _run_specs(specs, args):
    specs = [s.with_overrides(args.seed_offset, True if args.check_all else None) for s in specs]
    failed = total = 0
    for spec in specs:
        _, f, t = execute(spec, args.out_dir, args.jobs)
        failed += f
        total += t
    return _status(failed, total)


def _cmd_run(args):
    return _run_specs([parse_config(args.config)], args)


def _cmd_preset(args):
    return _run_specs(preset_specs(args.figure, args.scale), args)


def _cmd_fit(args):
    try:
        rows, h = read_csv(args.csv)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    text = summary_json(summarize(rows, config_hash=h))
    if args.out_dir:
        path = Path(args.out_dir) / (Path(args.csv).stem + ".summary.json")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        print(path, file=sys.stderr)
    else:
        sys.stdout.write(text)
    n_failed = sum(not r.ok for r in rows)
    return _status(n_failed, len(rows)) if n_failed else EXIT_OK


def _cmd_selftest(args):
    from ..selftest import run_selftest
    results = run_selftest()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    return _status(sum(not r.passed for r in results), len(results))


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed-offset", type=int, default=0, help="added to every seed in the config")
    common.add_argument("--jobs", type=int, default=1, help="worker processes over grid cells")
    common.add_argument("--out-dir", default=".", help="directory for CSV and summary files")
    common.add_argument("--check-all", action="store_true", help="check recovery for all N items")

    p = argparse.ArgumentParser(prog="python -m assocmem", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run an experiment config (TOML)")
    r.add_argument("config")
    r.set_defaults(func=_cmd_run)
    pr = sub.add_parser("preset", parents=[common], help="run a figure preset")
    pr.add_argument("figure", choices=sorted(PRESETS))
    pr.add_argument("--scale", choices=("desk", "paper"), default="desk")
    pr.set_defaults(func=_cmd_preset)
    f = sub.add_parser("fit", help="summarize an existing results CSV")
    f.add_argument("csv")
    f.add_argument("--out-dir", default=None)
    f.set_defaults(func=_cmd_fit)
    s = sub.add_parser("selftest", help="run the oracle and property checks")
    s.set_defaults(func=_cmd_selftest)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
