"""Log-log power-law fits of capacity against dimension."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import FitError

SATURATION = 0.9


@dataclass(frozen=True)
class FitResult:
    exponent: float
    log_intercept: float    # base-2 intercept: log2 y = exponent * log2 x + log_intercept
    r_squared: float
    n_points_used: int
    dropped: list = field(default_factory=list)   # [(x, reason), ...]

    def predict(self, x):
        return 2.0 ** (self.log_intercept + self.exponent * np.log2(x))


def _r_squared(y, yhat):
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res <= 1e-24 else 0.0
    return float(min(1.0, max(0.0, 1.0 - ss_res / ss_tot)))


def fit_power_law(points, ceiling=None) -> FitResult:
    """OLS of log2 y on log2 x.

    Points with y <= 0 are dropped, as are points with y >= 0.9 * ceiling
    when a ceiling (e.g. the vocabulary size N) is given.
    """
    pts = sorted((float(x), float(y)) for x, y in points)
    used, dropped = [], []
    for x, y in pts:
        if x <= 0:
            dropped.append((x, "nonpositive x"))
        elif y <= 0:
            dropped.append((x, "nonpositive y"))
        elif ceiling is not None and y >= SATURATION * ceiling:
            dropped.append((x, "saturated"))
        else:
            used.append((x, y))
    if len({x for x, _ in used}) < 2:
        raise FitError(f"need at least 2 usable points with distinct x, got {len(used)}")
    lx = np.log2([x for x, _ in used])
    ly = np.log2([y for _, y in used])
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    return FitResult(float(slope), float(icpt), _r_squared(ly, A @ [slope, icpt]), len(used), dropped)


def fit_alpha_form(pairs):
    """Least squares of exponent = c1 + c2 / alpha; returns (c1, c2, r_squared)."""
    pairs = [(float(a), float(e)) for a, e in pairs]
    alphas = np.array([a for a, _ in pairs])
    if len(pairs) < 2 or np.unique(alphas).size < 2:
        raise FitError("need at least 2 distinct alpha values")
    y = np.array([e for _, e in pairs])
    A = np.column_stack([np.ones_like(alphas), 1.0 / alphas])
    (c1, c2), *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(c1), float(c2), _r_squared(y, A @ [c1, c2])
