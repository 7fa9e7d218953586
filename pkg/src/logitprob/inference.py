"""Score vectors from logits: SoftMax/Sigmoid baselines and ML/MAP functions.

ML and MAP follow the smoothed-likelihood recipe::

    ML_i  = (P(x_i | c_i) + lam) / sum_j (P(x_j | c_j) + lam)
    MAP_i = (P(x_i | c_i) N(x_i | mu_i, var_i) + lam) / sum_j (...)

where ``P(x_i | c_i)`` is the histogram bin mass of class ``i`` at logit
component ``i``. The Gaussian factor is evaluated at the test logit and is
not renormalized across classes. In detection mode the normalized vector is
multiplied by the record's objectness score.

Any ``lam > 0`` keeps ML/MAP scores strictly inside (0, 1) provided ``lam``
is not lost to rounding against the raw values; with masses <= 1 and
realistic prior densities that holds down to about ``lam = 1e-11``.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import AllZeroMass, DataError, LogitProbError, ModelArityMismatch
from .model import CalibrationModel, LogitRecord, Mode, lookup_likelihood_array


class Method(str, Enum):
    SOFTMAX = "softmax"
    SIGMOID = "sigmoid"
    ML = "ml"
    MAP = "map"
    TS = "ts"


@dataclass(frozen=True)
class ScoreVector:
    scores: np.ndarray
    predicted_class: int
    confidence: float
    method: Method

    @classmethod
    def from_scores(cls, scores, method: Method | str) -> ScoreVector:
        arr = np.array(scores, dtype=np.float64)
        arr.setflags(write=False)
        k = argmax_with_tiebreak(arr)
        return cls(arr, k, float(arr[k]), Method(method))


def argmax_with_tiebreak(scores) -> int:
    """Index of the largest score; ties go to the lowest index."""
    arr = np.asarray(scores)
    if arr.size == 0:
        raise DataError("argmax of an empty vector")
    # np.argmax returns the first occurrence
    return int(np.argmax(arr))


# -- array kernels (rows are samples) -------------------------------------

def softmax_array(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    with np.errstate(under="ignore"):
        e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid_array(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    with np.errstate(under="ignore"):
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def likelihood_array(model: CalibrationModel, logits: np.ndarray) -> np.ndarray:
    logits = np.atleast_2d(logits)
    return np.column_stack(
        [lookup_likelihood_array(d, logits[:, i]) for i, d in enumerate(model.densities)]
    )


def prior_array(model: CalibrationModel, logits: np.ndarray) -> np.ndarray:
    logits = np.atleast_2d(logits)
    mean = np.array([d.mean for d in model.densities])
    var = np.array([d.variance for d in model.densities])
    with np.errstate(under="ignore"):
        return np.exp(-0.5 * (logits - mean) ** 2 / var) / np.sqrt(2.0 * np.pi * var)


def _normalize_smoothed(raw: np.ndarray, lam: float, objectness: np.ndarray | None) -> np.ndarray:
    raw = raw + lam
    total = raw.sum(axis=1, keepdims=True)
    if np.any(total <= 0):
        bad = int(np.flatnonzero(total[:, 0] <= 0)[0])
        raise AllZeroMass(f"every class has zero mass and lambda = {lam}", row=bad)
    scores = raw / total
    if objectness is not None:
        scores = scores * objectness[:, None]
    return scores


def ml_array(model: CalibrationModel, logits: np.ndarray, objectness: np.ndarray | None = None):
    return _normalize_smoothed(likelihood_array(model, logits), model.lam, objectness)


def map_array(model: CalibrationModel, logits: np.ndarray, objectness: np.ndarray | None = None):
    raw = likelihood_array(model, logits) * prior_array(model, logits)
    return _normalize_smoothed(raw, model.lam, objectness)


# -- per-record scorers ----------------------------------------------------

def softmax(logits) -> ScoreVector:
    return ScoreVector.from_scores(softmax_array(np.asarray(logits, dtype=np.float64)), Method.SOFTMAX)


def sigmoid_scores(logits) -> ScoreVector:
    """Independent per-class sigmoids; the vector is not renormalized."""
    return ScoreVector.from_scores(sigmoid_array(np.asarray(logits, dtype=np.float64)), Method.SIGMOID)


def _check_arity(model: CalibrationModel, record: LogitRecord):
    if record.nc != model.nc:
        raise ModelArityMismatch(
            f"{record.sample_id}: {record.nc} logits for a {model.nc}-class model"
        )


def _objectness_for(model: CalibrationModel, records: Sequence[LogitRecord]) -> np.ndarray | None:
    present = [r.objectness is not None for r in records]
    if not any(present):
        return None
    if model.mode is not Mode.DETECTION:
        warnings.warn("objectness ignored outside detection mode", stacklevel=3)
        return None
    return np.array([1.0 if r.objectness is None else r.objectness for r in records])


def ml_score(model: CalibrationModel, record: LogitRecord) -> ScoreVector:
    _check_arity(model, record)
    obj = _objectness_for(model, [record])
    return ScoreVector.from_scores(ml_array(model, record.logits[None, :], obj)[0], Method.ML)


def map_score(model: CalibrationModel, record: LogitRecord) -> ScoreVector:
    _check_arity(model, record)
    obj = _objectness_for(model, [record])
    return ScoreVector.from_scores(map_array(model, record.logits[None, :], obj)[0], Method.MAP)


# -- batch driver ------------------------------------------------------------

def score_matrix(
    method: Method | str,
    logits: np.ndarray,
    model: CalibrationModel | None = None,
    temperature: float | None = None,
    objectness: np.ndarray | None = None,
) -> np.ndarray:
    """Vectorized scoring of an ``(n, nc)`` logit matrix."""
    method = Method(method)
    if method is Method.SOFTMAX:
        return softmax_array(logits)
    if method is Method.SIGMOID:
        return sigmoid_array(logits)
    if method is Method.TS:
        from .baselines import apply_temperature_array

        if temperature is None:
            raise LogitProbError("method 'ts' needs a fitted temperature")
        return apply_temperature_array(logits, temperature)
    if model is None:
        raise LogitProbError(f"method {method.value!r} needs a calibration model")
    if method is Method.ML:
        return ml_array(model, logits, objectness)
    return map_array(model, logits, objectness)


def score_batch(
    model: CalibrationModel | None,
    records: Sequence[LogitRecord],
    method: Method | str,
    temperature: float | None = None,
    workers: int = 1,
    chunk_size: int = 8192,
) -> list[ScoreVector]:
    """Score records in order; output does not depend on ``workers``.

    Rows are scored independently, so any chunking gives identical bits.
    """
    method = Method(method)
    if not records:
        return []
    nc = records[0].nc
    for rec in records:
        if rec.nc != nc:
            raise ModelArityMismatch(f"{rec.sample_id}: {rec.nc} logits, batch has {nc}")
        if model is not None and method in (Method.ML, Method.MAP) and rec.nc != model.nc:
            raise ModelArityMismatch(f"{rec.sample_id}: {rec.nc} logits for a {model.nc}-class model")
    logits = np.stack([r.logits for r in records])
    objectness = None
    if model is not None and method in (Method.ML, Method.MAP):
        objectness = _objectness_for(model, records)

    bounds = [(s, min(s + chunk_size, len(records))) for s in range(0, len(records), chunk_size)]

    def run(span):
        s, e = span
        obj = None if objectness is None else objectness[s:e]
        try:
            return score_matrix(method, logits[s:e], model, temperature, obj)
        except AllZeroMass as exc:
            row = s + exc.row
            raise AllZeroMass(f"{records[row].sample_id}: {exc}", row=row) from exc

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(b) for b in bounds]
    scores = np.concatenate(parts, axis=0)
    return [ScoreVector.from_scores(row, method) for row in scores]
