"""Grid execution and CSV serialization."""
from __future__ import annotations

import csv
import io
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from threadpoolctl import threadpool_limits

from ..distmodel import POPULATION, power_law_dist, sample_embeddings
from ..optimizers import run_trajectory
from .config import ExperimentSpec

CSV_HEADER = ("name", "optimizer", "d", "N", "alpha", "B", "T", "step", "seed",
              "capacity_count", "capacity_prefix", "loss", "wall_ms")


@dataclass(frozen=True)
class ResultRow:
    name: str
    optimizer: str
    d: int
    N: int
    alpha: float
    B: object           # int or POPULATION
    T: int
    step: int | None    # None on error rows
    seed: int
    capacity_count: int | None = None
    capacity_prefix: int | None = None
    loss: float | None = None
    wall_ms: float | None = None
    error: str | None = None

    @property
    def ok(self):
        return self.error is None

    def sort_key(self):
        b = math.inf if self.B is POPULATION else self.B
        return (self.name, self.optimizer, self.alpha, self.d, b, self.T,
                -1 if self.step is None else self.step, self.seed)

    def csv_fields(self):
        def num(x):
            return "" if x is None else repr(x) if isinstance(x, float) else str(x)
        return [self.name, self.optimizer, str(self.d), str(self.N), repr(self.alpha), str(self.B),
                str(self.T), num(self.step), str(self.seed), num(self.capacity_count),
                num(self.capacity_prefix), num(self.loss), num(self.wall_ms)]


def _run_group(spec: ExperimentSpec, d, seed):
    """All (optimizer, alpha, B, T) trajectories sharing one embedding draw."""
    rows = []
    N = spec.n_items
    opts = spec.eval_options()
    with threadpool_limits(limits=1):
        emb = sample_embeddings(d, N, spec.cov_u(), spec.cov_v(), seed=seed)
        for alpha in spec.alpha:
            dist = power_law_dist(N, alpha)
            for opt in spec.optimizers:
                for B in spec.B:
                    for T in spec.T:
                        base = dict(name=spec.name, optimizer=opt.name, d=d, N=N, alpha=alpha, B=B, T=T, seed=seed)
                        try:
                            rec = run_trajectory(emb, dist, opt, T, batch_size=B, seed=seed, options=opts)
                        except Exception as exc:   # recorded per cell, the grid continues
                            rows.append(ResultRow(step=None, error=f"{type(exc).__name__}: {exc}", **base))
                            continue
                        steps = rec.steps if spec.record_steps == "all" else rec.steps[-1:]
                        for s in steps:
                            rows.append(ResultRow(
                                step=s.step, capacity_count=s.capacity.recovered_count,
                                capacity_prefix=s.capacity.recovered_prefix,
                                loss=s.loss if spec.record_loss else None,
                                wall_ms=round(s.wall_ms, 3) if spec.timing else None, **base))
    return rows


def _run_group_star(args):
    return _run_group(*args)


def run_grid(spec: ExperimentSpec, jobs=1) -> list:
    """Run every (cell, seed) trajectory and return rows in canonical order."""
    groups = [(spec, d, seed) for d in spec.d for seed in spec.seeds]
    if jobs <= 1 or len(groups) == 1:
        chunks = [_run_group(*g) for g in groups]
    else:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=min(jobs, len(groups)), mp_context=ctx) as pool:
            chunks = list(pool.map(_run_group_star, groups))
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=ResultRow.sort_key)
    return rows


def rows_to_csv(rows, config_hash) -> str:
    buf = io.StringIO()
    buf.write(f"# config_sha256={config_hash}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow(r.csv_fields())
    return buf.getvalue()


def write_csv(rows, config_hash, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(rows_to_csv(rows, config_hash), encoding="utf-8")
    return path


def _parse_int(s):
    return None if s == "" else int(s)


def _parse_float(s):
    return None if s == "" else float(s)


def read_csv(path):
    """Rows of a results CSV; returns (rows, config_hash or None)."""
    text = Path(path).read_text(encoding="utf-8")
    config_hash = None
    lines = []
    for line in text.splitlines():
        if line.startswith("#"):
            if config_hash is None and "config_sha256=" in line:
                config_hash = line.split("=", 1)[1].strip()
            continue
        lines.append(line)
    reader = csv.reader(lines)
    header = tuple(next(reader, ()))
    if header != CSV_HEADER:
        raise ValueError(f"{path}: unexpected CSV header {','.join(header)}")
    rows = []
    for rec in reader:
        if not rec:
            continue
        f = dict(zip(CSV_HEADER, rec))
        step = _parse_int(f["step"])
        rows.append(ResultRow(
            name=f["name"], optimizer=f["optimizer"], d=int(f["d"]), N=int(f["N"]), alpha=float(f["alpha"]),
            B=POPULATION if f["B"] == "inf" else int(f["B"]), T=int(f["T"]), step=step, seed=int(f["seed"]),
            capacity_count=_parse_int(f["capacity_count"]), capacity_prefix=_parse_int(f["capacity_prefix"]),
            loss=_parse_float(f["loss"]), wall_ms=_parse_float(f["wall_ms"]),
            error=None if step is not None else "failed (details in the run summary)"))
    return rows, config_hash
