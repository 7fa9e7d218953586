"""Temperature scaling, the post-hoc calibration baseline.

The temperature ``ts`` divides every logit before the softmax and is chosen
to minimize the validation negative log-likelihood.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyInput, MissingLabel, NonPositiveTemperature
from .inference import Method, ScoreVector, softmax_array
from .model import LogitRecord

TS_BOUNDS = (0.05, 20.0)
TS_TOL = 1e-4
GRID_POINTS = 400
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class TemperatureModel:
    ts: float

    def __post_init__(self):
        if not (math.isfinite(self.ts) and self.ts > 0):
            raise NonPositiveTemperature(f"temperature must be finite and > 0, got {self.ts}")


def _check_ts(ts: float):
    if not (math.isfinite(ts) and ts > 0):
        raise NonPositiveTemperature(f"temperature must be finite and > 0, got {ts}")


def apply_temperature_array(logits: np.ndarray, ts: float) -> np.ndarray:
    _check_ts(ts)
    logits = np.asarray(logits, dtype=np.float64)
    # ts == 1 must reproduce softmax bit for bit
    return softmax_array(logits if ts == 1.0 else logits / ts)


def apply_temperature(logits, ts: float) -> ScoreVector:
    return ScoreVector.from_scores(apply_temperature_array(logits, ts), Method.TS)


def nll(logits: np.ndarray, labels: np.ndarray, ts: float) -> float:
    """Summed negative log-likelihood of ``labels`` under ``softmax(logits / ts)``."""
    z = np.asarray(logits, dtype=np.float64) / ts
    rows = np.arange(z.shape[0])
    d = z - z[rows, labels][:, None]
    top = d.argmax(axis=1)
    m = d[rows, top]
    e = np.exp(d - m[:, None])
    e[rows, top] = 0.0
    # log1p keeps the tiny losses of confident correct samples distinguishable
    return float(np.sum(m + np.log1p(e.sum(axis=1))))


def golden_section(f: Callable[[float], float], lo: float, hi: float, tol: float = TS_TOL):
    """Minimize a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x))``."""
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def minimize_scalar_bounded(f: Callable[[float], float], lo: float, hi: float, tol: float = TS_TOL):
    """Golden-section search with a grid-scan fallback.

    When the one-sided slopes at the bracket ends do not point inward (no
    interior minimum is bracketed), a grid scan locates the best cell first and
    golden section refines inside it. The bracket endpoints always compete.
    """
    h = tol
    slope_lo = f(lo + h) - f(lo)
    slope_hi = f(hi) - f(hi - h)
    if slope_lo < 0 < slope_hi:
        candidates = [golden_section(f, lo, hi, tol)]
    else:
        grid = np.linspace(lo, hi, GRID_POINTS)
        values = [f(float(g)) for g in grid]
        k = int(np.argmin(values))
        a, b = float(grid[max(k - 1, 0)]), float(grid[min(k + 1, GRID_POINTS - 1)])
        candidates = [golden_section(f, a, b, tol), (float(grid[k]), values[k])]
    candidates += [(lo, f(lo)), (hi, f(hi))]
    # equal losses resolve to the smaller temperature
    return min(candidates, key=lambda c: (c[1], c[0]))


def _validation_arrays(validation: Sequence[LogitRecord]):
    if not validation:
        raise EmptyInput("empty validation set")
    for rec in validation:
        if rec.true_label is None:
            raise MissingLabel(f"validation record {rec.sample_id} has no label")
    logits = np.stack([r.logits for r in validation])
    labels = np.array([r.true_label for r in validation], dtype=np.intp)
    return logits, labels


def fit_temperature(
    validation: Sequence[LogitRecord],
    bounds: tuple[float, float] = TS_BOUNDS,
    tol: float = TS_TOL,
) -> TemperatureModel:
    logits, labels = _validation_arrays(validation)
    return fit_temperature_arrays(logits, labels, bounds, tol)


def fit_temperature_arrays(logits, labels, bounds=TS_BOUNDS, tol: float = TS_TOL) -> TemperatureModel:
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    if logits.shape[0] == 0:
        raise EmptyInput("empty validation set")
    lo, hi = bounds
    if not 0 < lo < hi:
        raise NonPositiveTemperature(f"invalid temperature bounds {bounds}")
    ts, _ = minimize_scalar_bounded(lambda t: nll(logits, labels, t), lo, hi, tol)
    return TemperatureModel(float(ts))
