"""Recovery predicate, capacity counts and critical batch size estimation.

Item i is recovered when its signal logit ``u_i^T W v_i`` strictly beats
every competing logit ``u_j^T W v_i`` over all N outputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import EstimationError
from .objective import blocked_pass

# margins within this fraction of the row's largest |logit| count as ties
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class CapacityReport:
    checked_bound: int
    recovered_count: int
    recovered_prefix: int
    margin_min: float
    truncated: bool


def _recovered_mask(signal, best_other):
    margin = signal - best_other
    scale = np.maximum(np.abs(signal), np.abs(best_other))
    return margin > TIE_RTOL * scale, margin


def report_from_margins(signal, best_other, n_items) -> CapacityReport:
    """Build a report for inputs 0..len(signal)-1 from their signal/competitor logits."""
    signal = np.asarray(signal, dtype=np.float64)
    ok, margin = _recovered_mask(signal, np.asarray(best_other, dtype=np.float64))
    count = int(ok.sum())
    failed = np.flatnonzero(~ok)
    prefix = int(failed[0]) if failed.size else len(ok)
    mmin = float(margin[ok].min()) if count else math.nan
    return CapacityReport(len(ok), count, prefix, mmin, len(ok) < n_items)


def is_recovered(W, emb, i):
    """(recovered?, margin) for item ``i`` (0-based)."""
    if not 0 <= i < emb.n_items:
        raise IndexError(f"item index {i} out of range [0, {emb.n_items})")
    logits = emb.U.T @ (W @ emb.V[:, i])
    signal = logits[i]
    logits[i] = -np.inf
    best = logits.max() if emb.n_items > 1 else -np.inf
    ok, margin = _recovered_mask(np.array([signal]), np.array([best]))
    return bool(ok[0]), float(margin[0])


def capacity(W, emb, i_max=None, block_size=512) -> CapacityReport:
    """Count recovered items among 0..i_max-1; competitors always range over all N."""
    N = emb.n_items
    i_max = N if i_max is None else int(i_max)
    if not 1 <= i_max <= N:
        raise ValueError(f"i_max must lie in [1, {N}]")
    res = blocked_pass(W, emb, None, indices=np.arange(i_max), want_gradient=False,
                       want_loss=False, want_margins=True, block_size=block_size)
    return report_from_margins(res.signal, res.best_other, N)


def default_i_max(d, alpha, n_items, multi_step=False, multiplier=8.0) -> int:
    """How many top items to check.

    One step: ``multiplier * d^(1 + 1/(2 alpha))``, well past the one-step
    threshold. Several steps: ``multiplier * d^2``, the storage ceiling.
    """
    expo = 2.0 if multi_step else 1.0 + 1.0 / (2.0 * alpha)
    return int(min(n_items, math.ceil(multiplier * d**expo)))


def critical_batch_estimate(points, alpha, rise_fraction=0.6, plateau_spread=1.5) -> float:
    """Batch size where the B^(1/alpha) rise meets the large-B plateau.

    ``points`` are (B, mean capacity) pairs with B strictly increasing. The
    rise is fitted with slope fixed at 1/alpha on points below
    ``rise_fraction`` of the maximum; the plateau is the median of the three
    largest capacities and only counts as a plateau when those three agree
    within a factor ``plateau_spread``.
    """
    pts = [(float(b), float(c)) for b, c in points]
    if len(pts) < 4:
        raise EstimationError("need at least 4 (B, capacity) points")
    Bs = np.array([b for b, _ in pts])
    caps = np.array([c for _, c in pts])
    if np.any(np.diff(Bs) <= 0):
        raise EstimationError("batch sizes must be strictly increasing")
    top = np.sort(caps)[-3:]
    if top[0] <= 0 or top[-1] / top[0] > plateau_spread:
        raise EstimationError("no plateau: the largest capacities are still rising")
    plateau = float(np.median(top))
    rising = (caps < rise_fraction * caps.max()) & (caps > 0)
    if not np.any(rising):
        raise EstimationError("no rising region: no positive capacity below "
                              f"{rise_fraction:.0%} of the maximum")
    intercept = float(np.mean(np.log(caps[rising]) - np.log(Bs[rising]) / alpha))
    return float(np.exp(alpha * (math.log(plateau) - intercept)))
