"""Seeded synthetic logit generator.

Each trained class is a diagonal Gaussian in logit space. An optional
``label_noise`` fraction of every class is drawn from another class's
cluster while keeping its own label, which is how the scenario produces
confidently wrong predictions. Splits are assigned by smooth weighted
round-robin so every prefix of a class stays within one sample of the
60/15/25 train/validation/test ratio.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidSpec
from .model import LogitRecord, Split

SPLIT_RATIOS = ((Split.TRAIN, 0.60), (Split.VALIDATION, 0.15), (Split.TEST, 0.25))


@dataclass(frozen=True)
class Cluster:
    mean: tuple[float, ...]
    std: tuple[float, ...]
    count: int

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(v) for v in self.mean))
        object.__setattr__(self, "std", tuple(float(v) for v in self.std))
        if len(self.mean) != len(self.std):
            raise InvalidSpec("mean and std lengths differ")
        if not all(np.isfinite(self.mean)):
            raise InvalidSpec("cluster means must be finite")
        if not all(s > 0 and np.isfinite(s) for s in self.std):
            raise InvalidSpec("cluster stddevs must be finite and > 0")
        if int(self.count) != self.count or self.count < 0:
            raise InvalidSpec(f"cluster count must be a non-negative integer, got {self.count}")


@dataclass(frozen=True)
class GeneratorSpec:
    nc: int
    per_class: tuple[Cluster, ...]
    unseen: Cluster | None = None
    seed: int = 0
    label_noise: float = 0.0
    class_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "per_class", tuple(self.per_class))
        if self.nc < 1 or len(self.per_class) != self.nc:
            raise InvalidSpec(f"need exactly nc={self.nc} class clusters, got {len(self.per_class)}")
        for c in self.per_class + ((self.unseen,) if self.unseen else ()):
            if len(c.mean) != self.nc:
                raise InvalidSpec(f"cluster dimension {len(c.mean)} != nc={self.nc}")
        if not 0.0 <= self.label_noise < 1.0:
            raise InvalidSpec(f"label_noise must lie in [0, 1), got {self.label_noise}")
        if self.label_noise > 0 and self.nc < 2:
            raise InvalidSpec("label_noise needs at least two classes")
        names = tuple(self.class_names) or tuple(f"class_{i}" for i in range(self.nc))
        if len(names) != self.nc:
            raise InvalidSpec(f"{len(names)} class names for nc={self.nc}")
        object.__setattr__(self, "class_names", names)

    @classmethod
    def from_dict(cls, data: dict) -> GeneratorSpec:
        try:
            unseen = data.get("unseen")
            return cls(
                nc=int(data["nc"]),
                per_class=tuple(Cluster(c["mean"], c["std"], c["count"]) for c in data["per_class"]),
                unseen=Cluster(unseen["mean"], unseen["std"], unseen["count"]) if unseen else None,
                seed=int(data.get("seed", 0)),
                label_noise=float(data.get("label_noise", 0.0)),
                class_names=tuple(data.get("class_names", ())),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidSpec(f"malformed generator spec: {exc}") from exc

    @classmethod
    def load(cls, path) -> GeneratorSpec:
        with open(path, encoding="utf-8") as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise InvalidSpec(f"{path}: {exc}") from exc

    def to_dict(self) -> dict:
        def c2d(c: Cluster):
            return {"mean": list(c.mean), "std": list(c.std), "count": c.count}

        return {
            "nc": self.nc,
            "class_names": list(self.class_names),
            "seed": self.seed,
            "label_noise": self.label_noise,
            "per_class": [c2d(c) for c in self.per_class],
            "unseen": c2d(self.unseen) if self.unseen else None,
        }


def split_sequence(count: int) -> list[Split]:
    """Smooth weighted round-robin over the train/validation/test ratios."""
    assigned = [0] * len(SPLIT_RATIOS)
    out = []
    for j in range(count):
        deficits = [r * (j + 1) - assigned[k] for k, (_, r) in enumerate(SPLIT_RATIOS)]
        k = int(np.argmax(deficits))
        assigned[k] += 1
        out.append(SPLIT_RATIOS[k][0])
    return out


def generate(spec: GeneratorSpec) -> list[LogitRecord]:
    rng = np.random.default_rng(spec.seed)
    records: list[LogitRecord] = []
    nc = spec.nc
    means = np.array([c.mean for c in spec.per_class]).reshape(nc, nc)
    stds = np.array([c.std for c in spec.per_class]).reshape(nc, nc)
    for i, cluster in enumerate(spec.per_class):
        n = cluster.count
        splits = split_sequence(n)
        # every class draws the same streams in the same order
        flip = rng.random(n) < spec.label_noise
        donor = rng.integers(0, nc - 1, size=n) if nc > 1 else np.zeros(n, dtype=np.int64)
        donor = np.where(donor >= i, donor + 1, donor)
        noise = rng.standard_normal((n, nc))
        src = np.where(flip, donor, i)
        logits = means[src] + stds[src] * noise
        for j in range(n):
            records.append(LogitRecord(f"c{i}-{j:06d}", logits[j], i, None, splits[j]))
    if spec.unseen is not None and spec.unseen.count:
        u = spec.unseen
        logits = np.array(u.mean) + np.array(u.std) * rng.standard_normal((u.count, nc))
        for j in range(u.count):
            records.append(LogitRecord(f"u-{j:06d}", logits[j], None, None, Split.UNSEEN))
    return records


# scenario constants; SCENARIO_BINS / SCENARIO_LAMBDA are the matching fit settings
SCENARIO_MARGIN = 12.0
SCENARIO_OFF_TARGET_STD = 2.0
SCENARIO_LABEL_NOISE = 0.05
SCENARIO_UNSEEN_STD = 8.0
SCENARIO_BINS = 25
SCENARIO_LAMBDA = 1e-3
SCENARIO_SEED = 2021


def overconfident_spec(seed: int = SCENARIO_SEED, per_class: int = 4000, unseen: int = 1000) -> GeneratorSpec:
    """Three well-separated classes plus an unseen cluster between them.

    Class ``i`` has logit ``i`` centred at 12 with unit spread and the other
    logits centred at 0 with spread 2, a margin of 6 standard deviations, so
    softmax confidences crowd near 1. Label noise makes 5% of those confident
    predictions wrong. The unseen cluster sits at the centroid of the class
    means with a wide spread, so no class dominates it.
    """
    clusters = []
    for i in range(3):
        mean = [0.0, 0.0, 0.0]
        std = [SCENARIO_OFF_TARGET_STD] * 3
        mean[i], std[i] = SCENARIO_MARGIN, 1.0
        clusters.append(Cluster(mean, std, per_class))
    centre = SCENARIO_MARGIN / 3.0
    return GeneratorSpec(
        nc=3,
        per_class=tuple(clusters),
        unseen=Cluster((centre,) * 3, (SCENARIO_UNSEEN_STD,) * 3, unseen),
        seed=seed,
        label_noise=SCENARIO_LABEL_NOISE,
        class_names=("pedestrian", "car", "cyclist"),
    )


def make_overconfident_scenario(seed: int = SCENARIO_SEED, per_class: int = 4000, unseen: int = 1000) -> list[LogitRecord]:
    return generate(overconfident_spec(seed, per_class, unseen))


def by_split(records: Sequence[LogitRecord]) -> dict[Split, list[LogitRecord]]:
    out: dict[Split, list[LogitRecord]] = {s: [] for s in Split}
    for r in records:
        out[r.split].append(r)
    return out
