"""Command-line entry point: ML/MAP calibration from logit files.

Subcommands: ``generate``, ``fit``, ``predict``, ``temp``, ``evaluate``,
``plots``, ``match`` (experimental IoU matcher) and ``run`` (the whole
pipeline). Settings come from built-in defaults, then ``--config`` (JSON),
then flags, each overriding the previous layer.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io
from .baselines import TS_BOUNDS, fit_temperature
from .datagen import (
    SCENARIO_BINS,
    SCENARIO_LAMBDA,
    SCENARIO_SEED,
    GeneratorSpec,
    by_split,
    generate,
    overconfident_spec,
)
from .errors import ConfigError, DataError, JoinMismatch, LogitProbError, MissingLabel
from .inference import Method, score_batch
from .matching import greedy_match, read_boxes
from .metrics import (
    DEFAULT_RELIABILITY_BINS,
    macro_fpr,
    macro_fscore,
    pr_curve,
    reliability,
    reliability_bin_index,
    unseen_stats,
)
from .model import CalibrationModel, Mode, Split, fit_model
from .plots import histogram_svg, reliability_svg

DEFAULT_BINS = 25
DEFAULT_LAMBDA = 1e-7
DETECTION_LAMBDA = 0.01

# (bins, lambda) per dataset / modality / scoring function
PRESETS = {
    "kitti-rgb-ml": (25, 3.5e-11),
    "kitti-rv-ml": (31, 2.5e-4),
    "ll5-rgb-ml": (25, 1.0e-4),
    "ll5-rv-ml": (25, 1.0e-7),
    "kitti-rgb-map": (32, 3.3e-6),
    "kitti-rv-map": (20, 3.1e-7),
    "ll5-rgb-map": (25, 1.0e-7),
    "ll5-rv-map": (30, 5.4e-7),
    "synthetic": (SCENARIO_BINS, SCENARIO_LAMBDA),
}

SPLIT_NAMES = tuple(s.value for s in Split)


@dataclass
class RunConfig:
    class_names: tuple[str, ...] | None = None
    bin_count: int = DEFAULT_BINS
    lam: float | None = None
    mode: str = Mode.CLASSIFICATION.value
    reliability_bins: int = DEFAULT_RELIABILITY_BINS
    ts_bounds: tuple[float, float] = TS_BOUNDS
    inputs: dict[str, str] = field(default_factory=dict)
    output_dir: str = "out"
    seed: int = SCENARIO_SEED
    workers: int = 1
    total_positives: tuple[int, ...] | None = None

    @property
    def smoothing(self) -> float:
        if self.lam is not None:
            return self.lam
        return DETECTION_LAMBDA if self.mode == Mode.DETECTION.value else DEFAULT_LAMBDA

    def validate(self) -> RunConfig:
        if not isinstance(self.bin_count, int) or self.bin_count < 2:
            raise ConfigError(f"bins must be an integer >= 2, got {self.bin_count}")
        if not isinstance(self.reliability_bins, int) or self.reliability_bins < 1:
            raise ConfigError(f"reliability bins must be an integer >= 1, got {self.reliability_bins}")
        if self.lam is not None and not (math.isfinite(self.lam) and self.lam >= 0):
            raise ConfigError(f"lambda must be finite and >= 0, got {self.lam}")
        if self.mode not in (m.value for m in Mode):
            raise ConfigError(f"mode must be classification or detection, got {self.mode!r}")
        lo, hi = self.ts_bounds
        if not 0 < lo < hi:
            raise ConfigError(f"ts bounds must satisfy 0 < low < high, got {self.ts_bounds}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        for split in self.inputs:
            if split not in SPLIT_NAMES:
                raise ConfigError(f"unknown input split {split!r}")
        return self

    def require(self, *splits: str) -> dict[str, Path]:
        out = {}
        for s in splits:
            p = self.inputs.get(s)
            if not p:
                raise ConfigError(f"no input file given for the {s} split")
            if not Path(p).is_file():
                raise ConfigError(f"{s} input {p} does not exist")
            out[s] = Path(p)
        return out


_CONFIG_KEYS = {
    "class_names": "class_names",
    "bins": "bin_count",
    "bin_count": "bin_count",
    "lambda": "lam",
    "mode": "mode",
    "reliability_bins": "reliability_bins",
    "ts_bounds": "ts_bounds",
    "inputs": "inputs",
    "output_dir": "output_dir",
    "seed": "seed",
    "workers": "workers",
    "total_positives": "total_positives",
    "preset": None,
}


def _apply_preset(cfg: RunConfig, name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    bins, lam = PRESETS[name]
    return replace(cfg, bin_count=bins, lam=lam)


def load_config(path) -> RunConfig:
    try:
        data = io.read_json(path)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(data) - set(_CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    cfg = RunConfig()
    if "preset" in data:
        cfg = _apply_preset(cfg, data["preset"])
    updates = {}
    for key, value in data.items():
        attr = _CONFIG_KEYS[key]
        if attr is None:
            continue
        if attr in ("class_names", "ts_bounds", "total_positives") and value is not None:
            value = tuple(value)
        if attr == "lam" and value is not None:
            value = float(value)
        updates[attr] = value
    return replace(cfg, **updates)


def build_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "preset", None):
        cfg = _apply_preset(cfg, args.preset)
    flag_map = {
        "bins": "bin_count",
        "lam": "lam",
        "mode": "mode",
        "reliability_bins": "reliability_bins",
        "seed": "seed",
        "out": "output_dir",
        "workers": "workers",
    }
    updates = {attr: getattr(args, flag) for flag, attr in flag_map.items()
               if getattr(args, flag, None) is not None}
    if getattr(args, "class_names", None):
        updates["class_names"] = tuple(args.class_names.split(","))
    if getattr(args, "ts_bounds", None):
        updates["ts_bounds"] = tuple(args.ts_bounds)
    inputs = dict(cfg.inputs)
    for split in SPLIT_NAMES:
        value = getattr(args, split, None)
        if value:
            inputs[split] = value
    updates["inputs"] = inputs
    return replace(cfg, **updates).validate()


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_split(cfg: RunConfig, split: str, nc: int | None = None):
    path = cfg.require(split)[split]
    return io.read_logit_file(path, split, nc)


# -- subcommands ---------------------------------------------------------------

def cmd_generate(cfg: RunConfig, spec: GeneratorSpec) -> dict[str, Path]:
    out = _out_dir(cfg)
    parts = by_split(generate(spec))
    written = {}
    for split in Split:
        path = out / f"{split.value}.csv"
        io.write_logit_file(path, parts[split], spec.nc)
        written[split.value] = path
    io.write_json(out / "generator_spec.json", spec.to_dict())
    print(" ".join(f"{s}={len(parts[Split(s)])}" for s in written))
    return written


def cmd_fit(cfg: RunConfig) -> Path:
    train = _read_split(cfg, "train")
    if not train:
        raise DataError("training file has no records")
    nc = train[0].nc
    names = cfg.class_names or tuple(f"class_{i}" for i in range(nc))
    if len(names) != nc:
        raise ConfigError(f"{len(names)} class names for {nc} logit columns")
    model = fit_model(train, cfg.bin_count, cfg.smoothing, names, cfg.mode)
    path = _out_dir(cfg) / "model.json"
    path.write_text(model.dumps(), encoding="utf-8")
    for name, d in zip(model.class_names, model.densities):
        print(f"{name}: n={d.sample_count} range=[{d.bin_edges[0]:.4g}, {d.bin_edges[-1]:.4g}] "
              f"mean={d.mean:.4g} var={d.variance:.4g}")
    print(f"wrote {path} (bins={model.bin_count}, lambda={model.lam:g}, mode={model.mode.value})")
    return path


def load_model(path) -> CalibrationModel:
    try:
        return CalibrationModel.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"model file {path} not found") from None


def load_temperature(path) -> float:
    try:
        return float(io.read_json(path)["ts"])
    except FileNotFoundError:
        raise ConfigError(f"temperature file {path} not found") from None
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: malformed temperature file ({exc})") from None


def cmd_predict(cfg: RunConfig, model_path, method: Method | str, input_path,
                temperature: float | None = None) -> Path:
    method = Method(method)
    model = load_model(model_path) if model_path else None
    if method in (Method.ML, Method.MAP) and model is None:
        raise ConfigError(f"method {method.value} needs --model")
    if method is Method.TS and temperature is None:
        raise ConfigError("method ts needs --temperature or --ts")
    input_path = Path(input_path)
    if not input_path.is_file():
        raise ConfigError(f"input {input_path} does not exist")
    records = io.read_logit_file(input_path, Split.TEST, model.nc if model else None)
    scores = score_batch(model, records, method, temperature, workers=cfg.workers)
    nc = model.nc if model else (records[0].nc if records else len(cfg.class_names or ()))
    path = _out_dir(cfg) / f"scores_{method.value}_{input_path.stem}.csv"
    io.write_scores_file(path, [r.sample_id for r in records], scores, nc)
    print(f"wrote {path} ({len(records)} rows)")
    return path


def cmd_temp(cfg: RunConfig) -> tuple[float, list[Path]]:
    validation = _read_split(cfg, "validation")
    tm = fit_temperature(validation, cfg.ts_bounds)
    out = _out_dir(cfg)
    io.write_json(out / "temperature.json", {"ts": tm.ts, "bounds": list(cfg.ts_bounds),
                                             "n_validation": len(validation)})
    print(f"ts={tm.ts!r}")
    written = []
    for split in ("test", "unseen"):
        if cfg.inputs.get(split):
            written.append(cmd_predict(cfg, None, Method.TS, cfg.inputs[split], tm.ts))
    return tm.ts, written


def _join(rows, labels_by_id: dict):
    ids = [r.sample_id for r in rows]
    orphans = sorted(set(ids) - set(labels_by_id)) + sorted(set(labels_by_id) - set(ids))
    if orphans:
        raise JoinMismatch(orphans)
    return [(r, labels_by_id[r.sample_id]) for r in rows]


def _unseen_block(rows, n_bins: int) -> dict:
    scores = [r.score for r in rows]
    mean, var = unseen_stats(scores)
    conf = np.array([s.confidence for s in scores])
    hist = np.bincount(reliability_bin_index(conf, n_bins), minlength=n_bins)
    return {"n": len(scores), "mean_confidence": mean, "variance_confidence": var,
            "histogram": [int(c) for c in hist]}


def cmd_evaluate(cfg: RunConfig, labels_path, score_paths: Sequence, unseen_paths: Sequence = (),
                 temperature: float | None = None) -> list[Path]:
    labels_path = Path(labels_path)
    if not labels_path.is_file():
        raise ConfigError(f"labels file {labels_path} does not exist")
    truth = {r.sample_id: r for r in io.read_logit_file(labels_path, Split.TEST)}
    detection = cfg.mode == Mode.DETECTION.value

    unseen_by_method = {}
    for p in unseen_paths:
        rows = io.read_scores_file(p)
        if rows:
            unseen_by_method[rows[0].score.method] = rows

    out = _out_dir(cfg)
    written = []
    for p in score_paths:
        rows = io.read_scores_file(p)
        if not rows:
            raise DataError(f"{p}: no score rows")
        method = rows[0].score.method
        pairs = _join(rows, truth)
        labelled = [(r.score, rec.true_label) for r, rec in pairs if rec.true_label is not None]
        if not detection and len(labelled) != len(pairs):
            missing = [r.sample_id for r, rec in pairs if rec.true_label is None]
            raise MissingLabel(f"{len(missing)} evaluation rows lack labels, e.g. {missing[0]}")
        rel = reliability(labelled, cfg.reliability_bins)
        report = {
            "method": method.value,
            "n": len(labelled),
            "macro_fscore": macro_fscore(labelled),
            "macro_fpr": macro_fpr(labelled),
            "ece": rel.ece,
            "mce": rel.mce,
            "temperature": temperature if method is Method.TS else None,
            "reliability": rel.to_dict(),
            "unseen": _unseen_block(unseen_by_method[method], cfg.reliability_bins)
            if method in unseen_by_method else None,
        }
        if detection:
            report["pr_curves"] = _pr_curves(cfg, pairs)
        rpath = out / f"report_{method.value}.json"
        io.write_json(rpath, report)
        tpath = out / f"reliability_{method.value}.csv"
        _write_reliability_table(tpath, rel.to_dict())
        written += [rpath, tpath]
        print(f"{method.value}: F={report['macro_fscore']:.4f} FPR={report['macro_fpr']:.4f} "
              f"ECE={rel.ece:.4f} MCE={rel.mce:.4f}"
              + (f" unseen_mean={report['unseen']['mean_confidence']:.3f}" if report["unseen"] else ""))
    return written


def _pr_curves(cfg: RunConfig, pairs) -> list[dict]:
    nc = pairs[0][0].score.scores.size
    if any(rec.is_tp is None for _, rec in pairs):
        raise DataError("detection evaluation needs an is_tp value on every row")
    curves = []
    for c in range(nc):
        dets = [(r.score, bool(rec.is_tp) and rec.true_label == c) for r, rec in pairs]
        if cfg.total_positives is not None:
            total = int(cfg.total_positives[c])
        else:
            total = sum(tp for _, tp in dets)
        if total == 0:
            curves.append({"class_index": c, "auc": None, "points": []})
            continue
        curves.append(pr_curve(dets, c, total).to_dict())
    return curves


def _write_reliability_table(path, rel: dict):
    io.write_table(path, ["low", "high", "count", "accuracy", "confidence", "gap"],
                   [[b["range_low"], b["range_high"], b["count"], b["accuracy"],
                     b["avg_confidence"], b["gap"]] for b in rel["bins"]])


def cmd_report_plots(cfg: RunConfig, report_paths: Sequence) -> list[Path]:
    from .metrics import ReliabilityReport

    out = _out_dir(cfg)
    written = []
    for p in report_paths:
        p = Path(p)
        if not p.is_file():
            raise ConfigError(f"report {p} does not exist")
        data = io.read_json(p)
        method = data["method"]
        rel = ReliabilityReport.from_dict(data["reliability"])
        svg = out / f"reliability_{method}.svg"
        svg.write_text(reliability_svg(rel, f"{method}: ECE={rel.ece:.4f} MCE={rel.mce:.4f}"),
                       encoding="utf-8")
        table = out / f"reliability_{method}.csv"
        _write_reliability_table(table, data["reliability"])
        written += [svg, table]
        if data.get("unseen"):
            hist = data["unseen"]["histogram"]
            usvg = out / f"unseen_{method}.svg"
            usvg.write_text(histogram_svg(hist, f"{method}: unseen confidence"), encoding="utf-8")
            utab = out / f"unseen_{method}.csv"
            m = len(hist)
            io.write_table(utab, ["low", "high", "count"],
                           [[k / m, (k + 1) / m, c] for k, c in enumerate(hist)])
            written += [usvg, utab]
    print(f"wrote {len(written)} plot files to {out}")
    return written


def cmd_match(cfg: RunConfig, detections_path, truth_path, logits_path, iou: float = 0.5) -> list[Path]:
    dets = read_boxes(detections_path, with_score=True)
    gts = read_boxes(truth_path, with_score=False)
    matches, totals = greedy_match(dets, gts, iou)
    records = io.read_logit_file(logits_path, Split.TEST)
    by_id = {m.sample_id: m for m in matches}
    merged = []
    for r in records:
        m = by_id.get(r.sample_id)
        if m is None:
            raise JoinMismatch([r.sample_id])
        merged.append(replace(r, true_label=m.label, is_tp=m.is_tp))
    out = _out_dir(cfg)
    nc = records[0].nc if records else max(totals, default=-1) + 1
    path = out / f"{Path(logits_path).stem}_matched.csv"
    io.write_logit_file(path, merged, nc)
    tpath = out / "total_positives.json"
    io.write_json(tpath, {"total_positives": [totals.get(c, 0) for c in range(nc)]})
    print(f"wrote {path}; TP={sum(m.is_tp for m in matches)} of {len(matches)} detections")
    return [path, tpath]


def cmd_run(cfg: RunConfig, spec: GeneratorSpec | None = None) -> list[Path]:
    """generate (optional) -> fit -> predict -> temp -> evaluate -> plots."""
    out = _out_dir(cfg)
    if spec is not None:
        files = cmd_generate(replace(cfg, output_dir=str(out / "data")), spec)
        cfg = replace(cfg, inputs={k: str(v) for k, v in files.items()},
                      class_names=cfg.class_names or spec.class_names)
    paths = cfg.require("train", "validation", "test")
    has_unseen = bool(cfg.inputs.get("unseen")) and Path(cfg.inputs["unseen"]).is_file()
    model_path = cmd_fit(cfg)
    ts, ts_files = cmd_temp(cfg)
    test_scores, unseen_scores = [], []
    for method in (Method.SOFTMAX, Method.ML, Method.MAP):
        test_scores.append(cmd_predict(cfg, model_path, method, paths["test"]))
        if has_unseen:
            unseen_scores.append(cmd_predict(cfg, model_path, method, cfg.inputs["unseen"]))
    test_scores.append(ts_files[0])
    if has_unseen:
        unseen_scores.append(ts_files[1])
    reports = cmd_evaluate(cfg, paths["test"], test_scores, unseen_scores, ts)
    plots = cmd_report_plots(cfg, [p for p in reports if p.suffix == ".json"])
    return [model_path, *ts_files, *test_scores, *unseen_scores, *reports, *plots]


# -- argument parsing ------------------------------------------------------------

def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file mirroring RunConfig")
    p.add_argument("--preset", choices=sorted(PRESETS), help="named (bins, lambda) setting")
    p.add_argument("--bins", type=int, help=f"histogram bins (default {DEFAULT_BINS})")
    p.add_argument("--lambda", dest="lam", type=float,
                   help=f"additive smoothing (default {DEFAULT_LAMBDA:g}; {DETECTION_LAMBDA:g} in detection mode)")
    p.add_argument("--mode", choices=[m.value for m in Mode])
    p.add_argument("--reliability-bins", type=int,
                   help=f"reliability diagram bins (default {DEFAULT_RELIABILITY_BINS})")
    p.add_argument("--seed", type=int, help=f"generator seed (default {SCENARIO_SEED})")
    p.add_argument("--out", help="output directory (default ./out)")
    p.add_argument("--workers", type=int, help="scoring threads (default 1)")
    p.add_argument("--class-names", help="comma-separated class names")
    for split in SPLIT_NAMES:
        p.add_argument(f"--{split}", help=f"{split} logit file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="logitprob", description=__doc__.split("\n")[0].split(": ", 1)[1])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write synthetic logit files")
    _common(p)
    p.add_argument("--spec", help="generator spec JSON (default: overconfident scenario)")
    p.add_argument("--per-class", type=int, default=4000)
    p.add_argument("--unseen-count", type=int, default=1000)

    p = sub.add_parser("fit", help="fit per-class densities on the train split")
    _common(p)

    p = sub.add_parser("predict", help="score a logit file")
    _common(p)
    p.add_argument("--model")
    p.add_argument("--method", choices=[m.value for m in Method], required=True)
    p.add_argument("--input", required=True, help="logit file to score")
    p.add_argument("--temperature", help="temperature.json written by 'temp'")
    p.add_argument("--ts", type=float, help="explicit temperature")

    p = sub.add_parser("temp", help="fit temperature scaling on the validation split")
    _common(p)
    p.add_argument("--ts-bounds", type=float, nargs=2, metavar=("LOW", "HIGH"))

    p = sub.add_parser("evaluate", help="metrics and reliability reports")
    _common(p)
    p.add_argument("--labels", required=True, help="labelled logit file the scores came from")
    p.add_argument("--scores", nargs="+", required=True)
    p.add_argument("--unseen-scores", nargs="*", default=[])
    p.add_argument("--temperature", help="temperature.json to record in the ts report")

    p = sub.add_parser("plots", help="render reports as SVG and flat tables")
    _common(p)
    p.add_argument("--reports", nargs="+", required=True)

    p = sub.add_parser("match", help="experimental greedy IoU matcher for detections")
    _common(p)
    p.add_argument("--detections", required=True, help="sample_id,frame,x1,y1,x2,y2,class,score")
    p.add_argument("--ground-truth", required=True, help="frame,x1,y1,x2,y2,class")
    p.add_argument("--logits", required=True, help="detection logit file to label")
    p.add_argument("--iou", type=float, default=0.5)

    p = sub.add_parser("run", help="full pipeline; generates the synthetic scenario if no inputs")
    _common(p)
    p.add_argument("--spec", help="generator spec JSON")
    p.add_argument("--per-class", type=int, default=4000)
    p.add_argument("--unseen-count", type=int, default=1000)
    p.add_argument("--ts-bounds", type=float, nargs=2, metavar=("LOW", "HIGH"))
    return parser


def _spec_from_args(args, cfg: RunConfig) -> GeneratorSpec:
    if args.spec:
        spec = GeneratorSpec.load(args.spec)
        return replace(spec, seed=args.seed) if args.seed is not None else spec
    return overconfident_spec(cfg.seed, args.per_class, args.unseen_count)


def dispatch(args: argparse.Namespace):
    cfg = build_config(args)
    cmd = args.command
    if cmd == "generate":
        return cmd_generate(cfg, _spec_from_args(args, cfg))
    if cmd == "fit":
        return cmd_fit(cfg)
    if cmd == "predict":
        ts = args.ts
        if args.temperature:
            ts = load_temperature(args.temperature)
        return cmd_predict(cfg, args.model, args.method, args.input, ts)
    if cmd == "temp":
        return cmd_temp(cfg)
    if cmd == "evaluate":
        ts = load_temperature(args.temperature) if args.temperature else None
        return cmd_evaluate(cfg, args.labels, args.scores, args.unseen_scores, ts)
    if cmd == "plots":
        return cmd_report_plots(cfg, args.reports)
    if cmd == "match":
        return cmd_match(cfg, args.detections, args.ground_truth, args.logits, args.iou)
    if cmd == "run":
        spec = None
        if args.spec or not cfg.inputs:
            spec = _spec_from_args(args, cfg)
            if args.preset is None and not args.config and not args.spec:
                cfg = replace(cfg, lam=SCENARIO_LAMBDA if args.lam is None else args.lam,
                              bin_count=SCENARIO_BINS if args.bins is None else args.bins)
        return cmd_run(cfg, spec)
    raise ConfigError(f"unknown command {cmd}")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            dispatch(args)
    except LogitProbError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FloatingPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
