"""Domain records and per-class density fitting.

A fitted :class:`CalibrationModel` holds, for every class ``i``, a normalized
histogram of logit component ``i`` over the training samples labelled ``i``
(the likelihood) and a Gaussian fitted to the same values (the prior used by
MAP scoring).
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import (
    ClassUnderpopulated,
    ConfigError,
    DataError,
    DegenerateRange,
    EmptyInput,
    MissingLabel,
    NonPositiveVariance,
)

FORMAT_VERSION = 1
VARIANCE_EPS = 1e-12


class Split(str, Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"
    UNSEEN = "unseen"


class Mode(str, Enum):
    CLASSIFICATION = "classification"
    DETECTION = "detection"


@dataclass(frozen=True)
class LogitRecord:
    """Logit-layer output for one sample.

    ``true_label`` is ``None`` for unlabelled (e.g. unseen-class) samples and
    ``objectness`` is ``None`` outside detection workflows.
    """

    sample_id: str
    logits: np.ndarray
    true_label: int | None = None
    objectness: float | None = None
    split: Split = Split.TEST
    is_tp: bool | None = None

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=np.float64)
        if logits.ndim != 1 or logits.size == 0:
            raise DataError(f"{self.sample_id}: logits must be a non-empty vector")
        if not np.all(np.isfinite(logits)):
            raise DataError(f"{self.sample_id}: non-finite logit")
        logits.setflags(write=False)
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "split", Split(self.split))
        if self.true_label is not None and not 0 <= self.true_label < logits.size:
            raise DataError(f"{self.sample_id}: label {self.true_label} outside [0, {logits.size})")
        if self.objectness is not None and not 0.0 <= self.objectness <= 1.0:
            raise DataError(f"{self.sample_id}: objectness {self.objectness} outside [0, 1]")

    @property
    def nc(self) -> int:
        return self.logits.size


@dataclass(frozen=True)
class ClassDensity:
    class_index: int
    bin_edges: np.ndarray
    bin_mass: np.ndarray
    mean: float
    variance: float
    sample_count: int

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=np.float64)
        mass = np.asarray(self.bin_mass, dtype=np.float64)
        if edges.size != mass.size + 1 or mass.size < 2:
            raise DataError(f"class {self.class_index}: {edges.size} edges for {mass.size} bins")
        if not np.all(np.isfinite(edges)) or np.any(np.diff(edges) <= 0):
            raise DataError(f"class {self.class_index}: bin edges must be finite and strictly increasing")
        if np.any(mass < 0) or abs(mass.sum() - 1.0) > 1e-9:
            raise DataError(f"class {self.class_index}: bin masses must be >= 0 and sum to 1")
        if not self.variance > 0:
            raise NonPositiveVariance(f"class {self.class_index}: variance {self.variance}")
        edges.setflags(write=False)
        mass.setflags(write=False)
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "bin_mass", mass)

    @property
    def bin_count(self) -> int:
        return self.bin_mass.size

    def likelihood(self, x: float) -> float:
        return lookup_likelihood(self, x)

    def prior(self, x: float) -> float:
        return gaussian_pdf(self.mean, self.variance, x)


@dataclass(frozen=True)
class CalibrationModel:
    class_names: tuple[str, ...]
    densities: tuple[ClassDensity, ...]
    lam: float
    bin_count: int
    mode: Mode = Mode.CLASSIFICATION

    def __post_init__(self):
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "densities", tuple(self.densities))
        object.__setattr__(self, "mode", Mode(self.mode))
        if len(self.densities) != len(self.class_names):
            raise ConfigError(
                f"{len(self.class_names)} class names for {len(self.densities)} densities"
            )
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ConfigError(f"smoothing must be finite and >= 0, got {self.lam}")
        if self.bin_count < 2:
            raise ConfigError(f"bin count must be >= 2, got {self.bin_count}")
        for i, d in enumerate(self.densities):
            if d.class_index != i:
                raise ConfigError(f"density {i} carries class index {d.class_index}")
            if d.bin_count != self.bin_count:
                raise ConfigError(f"class {i} has {d.bin_count} bins, model declares {self.bin_count}")

    @property
    def nc(self) -> int:
        return len(self.class_names)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "class_names": list(self.class_names),
            "lambda": self.lam,
            "bin_count": self.bin_count,
            "mode": self.mode.value,
            "densities": [
                {
                    "class_index": d.class_index,
                    "sample_count": d.sample_count,
                    "mean": d.mean,
                    "variance": d.variance,
                    "bin_edges": d.bin_edges.tolist(),
                    "bin_mass": d.bin_mass.tolist(),
                }
                for d in self.densities
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> CalibrationModel:
        version = data.get("format_version")
        if version != FORMAT_VERSION:
            raise ConfigError(f"unsupported model format_version {version!r}")
        try:
            densities = [
                ClassDensity(
                    class_index=int(d["class_index"]),
                    bin_edges=np.array(d["bin_edges"], dtype=np.float64),
                    bin_mass=np.array(d["bin_mass"], dtype=np.float64),
                    mean=float(d["mean"]),
                    variance=float(d["variance"]),
                    sample_count=int(d["sample_count"]),
                )
                for d in data["densities"]
            ]
            return cls(
                class_names=tuple(data["class_names"]),
                densities=tuple(densities),
                lam=float(data["lambda"]),
                bin_count=int(data["bin_count"]),
                mode=Mode(data["mode"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed model file: {exc}") from exc

    def dumps(self) -> str:
        # json writes floats with repr(), which round-trips exactly
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def loads(cls, text: str) -> CalibrationModel:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"model file is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


def _as_finite_vector(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise EmptyInput("no values to fit")
    if not np.all(np.isfinite(arr)):
        raise DataError("values contain non-finite entries")
    return arr


def _bin_index(edges: np.ndarray, x):
    """Bin of each x: interior edges go right, the top edge goes to the last bin.

    Returns -1 for values outside [edges[0], edges[-1]].
    """
    x = np.asarray(x, dtype=np.float64)
    nbins = edges.size - 1
    idx = np.searchsorted(edges, x, side="right") - 1
    idx = np.where(x == edges[-1], nbins - 1, idx)
    inside = (x >= edges[0]) & (x <= edges[-1])
    return np.where(inside, idx, -1)


def fit_histogram(values, bin_count: int) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width normalized histogram over ``[min(values), max(values)]``.

    Returns ``(bin_edges, bin_mass)`` with ``bin_mass`` summing to one.
    """
    if bin_count < 2:
        raise ConfigError(f"bin count must be >= 2, got {bin_count}")
    arr = _as_finite_vector(values)
    lo, hi = float(arr.min()), float(arr.max())
    if hi == lo:
        raise DegenerateRange(f"all {arr.size} values equal {lo}")
    edges = np.linspace(lo, hi, bin_count + 1)
    if np.any(np.diff(edges) <= 0):
        raise DegenerateRange(f"range [{lo}, {hi}] too narrow for {bin_count} bins")
    counts = np.bincount(_bin_index(edges, arr), minlength=bin_count)
    return edges, counts / arr.size


def variance_floor(mean: float) -> float:
    return 1e-6 * max(1.0, mean * mean)


def fit_gaussian(values) -> tuple[float, float]:
    """Sample mean and unbiased variance, floored for degenerate inputs."""
    arr = _as_finite_vector(values)
    mean = float(arr.mean())
    var = float(arr.var(ddof=1)) if arr.size > 1 else 0.0
    if var < VARIANCE_EPS:
        var = variance_floor(mean)
    return mean, var


def fit_class_density(class_index: int, values, bin_count: int) -> ClassDensity:
    arr = _as_finite_vector(values)
    edges, mass = fit_histogram(arr, bin_count)
    mean, var = fit_gaussian(arr)
    return ClassDensity(class_index, edges, mass, mean, var, int(arr.size))


def fit_model(
    train: Sequence[LogitRecord],
    bin_count: int,
    lam: float,
    class_names: Sequence[str],
    mode: Mode | str = Mode.CLASSIFICATION,
) -> CalibrationModel:
    """Fit per-class histogram likelihoods and Gaussian priors.

    Class ``i`` is fitted on logit component ``i`` of the training records
    labelled ``i``.
    """
    nc = len(class_names)
    if bin_count < 2:
        raise ConfigError(f"bin count must be >= 2, got {bin_count}")
    if not (math.isfinite(lam) and lam >= 0):
        raise ConfigError(f"smoothing must be finite and >= 0, got {lam}")
    if lam == 0:
        warnings.warn("smoothing lambda = 0: out-of-range logits can produce all-zero scores",
                      stacklevel=2)

    per_class: list[list[float]] = [[] for _ in range(nc)]
    for rec in train:
        if rec.true_label is None:
            raise MissingLabel(f"training record {rec.sample_id} has no label")
        if rec.nc != nc:
            raise DataError(f"training record {rec.sample_id} has {rec.nc} logits, expected {nc}")
        per_class[rec.true_label].append(float(rec.logits[rec.true_label]))

    for i, vals in enumerate(per_class):
        if len(vals) < 2:
            raise ClassUnderpopulated(i, len(vals))

    densities = tuple(fit_class_density(i, vals, bin_count) for i, vals in enumerate(per_class))
    return CalibrationModel(tuple(class_names), densities, float(lam), int(bin_count), Mode(mode))


def lookup_likelihood(density: ClassDensity, x: float) -> float:
    """Mass of the histogram bin containing ``x``; zero outside the fitted range."""
    k = int(_bin_index(density.bin_edges, x))
    return 0.0 if k < 0 else float(density.bin_mass[k])


def lookup_likelihood_array(density: ClassDensity, x: np.ndarray) -> np.ndarray:
    k = _bin_index(density.bin_edges, x)
    return np.where(k >= 0, density.bin_mass[np.clip(k, 0, None)], 0.0)


def gaussian_pdf(mean: float, variance: float, x):
    if not variance > 0:
        raise NonPositiveVariance(f"variance must be > 0, got {variance}")
    z = (np.asarray(x, dtype=np.float64) - mean) ** 2 / variance
    out = np.exp(-0.5 * z) / math.sqrt(2.0 * math.pi * variance)
    return float(out) if out.ndim == 0 else out
