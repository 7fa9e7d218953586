"""Experimental greedy IoU matcher turning raw boxes into TP/FP flags.

Per frame and class, detections are visited by descending score and each
takes the unmatched ground-truth box of its class with the highest IoU, if
that IoU reaches the threshold. No difficulty stratification is attempted.
"""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

from .errors import ParseError


@dataclass(frozen=True)
class Box:
    frame: str
    x1: float
    y1: float
    x2: float
    y2: float
    cls: int
    score: float = 0.0
    sample_id: str = ""


@dataclass(frozen=True)
class Match:
    sample_id: str
    label: int | None
    is_tp: bool


def iou(a: Box, b: Box) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter
    return inter / union if union > 0 else 0.0


def read_boxes(path, with_score: bool) -> list[Box]:
    path = Path(path)
    want = (["sample_id", "frame", "x1", "y1", "x2", "y2", "class", "score"] if with_score
            else ["frame", "x1", "y1", "x2", "y2", "class"])
    boxes = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != want:
            raise ParseError(path, 1, f"header must be {','.join(want)}")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(want):
                raise ParseError(path, line, f"{len(row)} fields, expected {len(want)}")
            try:
                if with_score:
                    sid, frame, *coords, cls, score = row
                    boxes.append(Box(frame, *map(float, coords), int(cls), float(score), sid))
                else:
                    frame, *coords, cls = row
                    boxes.append(Box(frame, *map(float, coords), int(cls)))
            except ValueError as exc:
                raise ParseError(path, line, str(exc)) from None
    return boxes


def greedy_match(detections: list[Box], truth: list[Box], threshold: float = 0.5):
    """Returns ``(matches, total_positives_by_class)``; matches keep input order."""
    gt_by_key = defaultdict(list)
    totals: dict[int, int] = defaultdict(int)
    for g in truth:
        gt_by_key[(g.frame, g.cls)].append(g)
        totals[g.cls] += 1
    used: set[int] = set()
    result: dict[int, Match] = {}
    order = sorted(range(len(detections)), key=lambda k: (-detections[k].score, k))
    for k in order:
        d = detections[k]
        best, best_iou = None, threshold
        for g in gt_by_key.get((d.frame, d.cls), ()):
            if id(g) in used:
                continue
            v = iou(d, g)
            if v >= threshold and (best is None or v > best_iou):
                best, best_iou = g, v
        if best is not None:
            used.add(id(best))
            result[k] = Match(d.sample_id, d.cls, True)
        else:
            result[k] = Match(d.sample_id, None, False)
    return [result[k] for k in range(len(detections))], dict(totals)
