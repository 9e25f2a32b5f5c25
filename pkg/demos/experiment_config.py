"""
Running a grid from a config
============================

The harness reads a TOML file describing a grid of (optimizer, alpha, d,
B, T) cells and a list of seeds, writes one CSV row per recorded step and
a JSON summary with exponent fits. The same thing is available on the
command line as ``python -m assocmem run <config>``.
"""
import json
import tempfile
from pathlib import Path

from assocmem.harness import parse_config_text, rows_to_csv, run_grid, summarize

CONFIG = """
name = "demo"
seeds = [0, 1]

[model]
N = 2000

[grid]
d = [8, 16, 32]
alpha = [1.5, 2.0]
B = ["inf"]
T = [1]

[[optimizer]]
kind = "sgd"

[[optimizer]]
kind = "muon-exact"
"""

spec = parse_config_text(CONFIG)
rows = run_grid(spec)
csv_text = rows_to_csv(rows, spec.config_hash())
print("\n".join(csv_text.splitlines()[:6]))

summary = summarize(rows, spec.name, spec.config_hash())
for fit in summary["fits"]:
    print(f"{fit['optimizer']:11s} alpha={fit['alpha']}  exponent {fit.get('exponent', float('nan')):.2f}")
for meta in summary["meta_fits"]:
    print(meta["optimizer"], "c1, c2 =", round(meta["c1"], 2), round(meta["c2"], 2))

out = Path(tempfile.mkdtemp()) / "demo.json"
out.write_text(json.dumps(summary["fits"], indent=1))
print("fits written to", out)
