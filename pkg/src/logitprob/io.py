"""Text file formats.

Logit files are comma-separated UTF-8 with LF endings and the header
``sample_id,label,objectness,logit_0,...,logit_{nc-1}`` plus an optional
``is_tp`` column for pre-matched detections. Empty ``label``/``objectness``
fields mean absent. Score files carry
``sample_id,method,score_0,...,score_{nc-1},predicted_class,confidence``.
Floats are written with ``repr`` so a write/read round trip is exact.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, ParseError
from .inference import Method, ScoreVector
from .model import LogitRecord, Split

LOGIT_FIXED = ("sample_id", "label", "objectness")


def _fmt(x: float) -> str:
    return repr(float(x))


def logit_header(nc: int, with_tp: bool = False) -> list[str]:
    cols = list(LOGIT_FIXED) + [f"logit_{i}" for i in range(nc)]
    if with_tp:
        cols.append("is_tp")
    return cols


def write_logit_file(path, records: Sequence[LogitRecord], nc: int | None = None) -> None:
    if nc is None:
        if not records:
            raise DataError("nc is required to write an empty logit file")
        nc = records[0].nc
    with_tp = any(r.is_tp is not None for r in records)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(logit_header(nc, with_tp))
        for r in records:
            row = [
                r.sample_id,
                "" if r.true_label is None else str(r.true_label),
                "" if r.objectness is None else _fmt(r.objectness),
                *(_fmt(v) for v in r.logits),
            ]
            if with_tp:
                row.append("" if r.is_tp is None else str(int(r.is_tp)))
            w.writerow(row)


def _parse_float(path, line, field, text):
    try:
        return float(text)
    except ValueError:
        raise ParseError(path, line, f"{field}: not a number: {text!r}") from None


def read_logit_file(path, split: Split | str = Split.TEST, nc: int | None = None) -> list[LogitRecord]:
    """Parse a logit file; rows whose logit count differs from ``nc`` are rejected."""
    path = Path(path)
    split = Split(split)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "missing header") from None
        if tuple(header[:3]) != LOGIT_FIXED:
            raise ParseError(path, 1, f"header must start with {','.join(LOGIT_FIXED)}")
        logit_cols = [k for k, h in enumerate(header) if h.startswith("logit_")]
        expected = [f"logit_{i}" for i in range(len(logit_cols))]
        if [header[k] for k in logit_cols] != expected or not logit_cols:
            raise ParseError(path, 1, "logit columns must be logit_0..logit_{nc-1}")
        if nc is not None and len(logit_cols) != nc:
            raise ParseError(path, 1, f"{len(logit_cols)} logit columns, model has {nc} classes")
        tp_col = header.index("is_tp") if "is_tp" in header else None
        width = len(header)
        records = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise ParseError(path, line, f"{len(row)} fields, expected {width} (arity mismatch)")
            label = None
            if row[1] != "":
                try:
                    label = int(row[1])
                except ValueError:
                    raise ParseError(path, line, f"label: not an integer: {row[1]!r}") from None
            obj = None if row[2] == "" else _parse_float(path, line, "objectness", row[2])
            logits = np.array([_parse_float(path, line, header[k], row[k]) for k in logit_cols])
            is_tp = None
            if tp_col is not None and row[tp_col] != "":
                if row[tp_col] not in ("0", "1"):
                    raise ParseError(path, line, f"is_tp must be 0 or 1, got {row[tp_col]!r}")
                is_tp = row[tp_col] == "1"
            try:
                records.append(LogitRecord(row[0], logits, label, obj, split, is_tp))
            except DataError as exc:
                raise ParseError(path, line, str(exc)) from None
    return records


@dataclass(frozen=True)
class ScoreRow:
    sample_id: str
    score: ScoreVector


def write_scores_file(path, sample_ids: Sequence[str], scores: Sequence[ScoreVector], nc: int) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "method", *(f"score_{i}" for i in range(nc)), "predicted_class", "confidence"])
        for sid, sv in zip(sample_ids, scores):
            w.writerow([sid, sv.method.value, *(_fmt(v) for v in sv.scores),
                        sv.predicted_class, _fmt(sv.confidence)])


def read_scores_file(path) -> list[ScoreRow]:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "missing header") from None
        nc = len(header) - 4
        if nc < 1 or header[:2] != ["sample_id", "method"] or header[-2:] != ["predicted_class", "confidence"]:
            raise ParseError(path, 1, "not a scores file header")
        rows = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(path, line, f"{len(row)} fields, expected {len(header)}")
            try:
                method = Method(row[1])
            except ValueError:
                raise ParseError(path, line, f"unknown method {row[1]!r}") from None
            vals = [_parse_float(path, line, header[2 + i], row[2 + i]) for i in range(nc)]
            sv = ScoreVector.from_scores(vals, method)
            rows.append(ScoreRow(row[0], sv))
    return rows


def write_json(path, data) -> None:
    # dict insertion order is the field order, so the bytes are stable
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_table(path, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, float) else v for v in row])
