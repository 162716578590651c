"""Command-line surface.

Commands: validate, stats, split, train, evaluate, predict, analyze.
Exit codes: 0 success, 1 usage error, 2 data error, 3 training/inference
error. The run-directory root defaults to $CLAIMCHECK_RUNS (else ./runs).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

from .corpus import (
    CorpusError,
    dump_corpus,
    compute_stats,
    load_corpus,
    split_corpus,
    validate_sample,
)
from .classifier import COMPONENT_LABELS, StageBModel, TYPE_LABELS
from .encoders import atomic_write_text
from .encoding import EncodingError
from .entity_typer import COARSE_LABELS, StageCModel, fine_needs_coarse
from .harness import UsageError, load_train_config, run_training
from .metrics import (
    analyze_span_errors,
    classification_report,
    coverage_by_length,
    exact_match,
    token_iou,
)
from .pipeline import (
    DEFAULT_COVERAGE_BUCKETS,
    Pipeline,
    PipelineConfig,
    PipelineError,
    bundle_to_json,
)
from .span_extractor import StageAModel
from .training import TrainingError

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="claimcheck", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="report invariant violations per sample")
    p.add_argument("--data", required=True)
    p.add_argument("--out")

    p = sub.add_parser("stats", help="corpus statistics as JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--out")

    p = sub.add_parser("split", help="write train/valid/test JSONL files")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=13)
    p.add_argument("--stratified", action="store_true")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("train", help="train one pipeline stage")
    p.add_argument("--stage", required=True, choices=["a", "b", "c"])
    p.add_argument("--strategy", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--valid")
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--checkpoint", dest="checkpoint_family")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-seq-len", type=int)
    p.add_argument("--select", choices=["best", "last"])
    p.add_argument("--out")

    p = sub.add_parser("evaluate", help="score a checkpoint or the full pipeline")
    p.add_argument("--stage", required=True, choices=["a", "b", "c", "pipeline"])
    p.add_argument("--checkpoint", help="stage checkpoint dir (stages a/b/c)")
    p.add_argument("--config", help="pipeline config JSON (stage=pipeline)")
    p.add_argument("--data", required=True)
    p.add_argument("--split", help="evaluate only this split of --data (train/valid/test)")
    p.add_argument("--seed", type=int, default=13, help="split seed when --split is used")
    p.add_argument("--out", required=True)

    p = sub.add_parser("predict", help="emit one explanation JSON per input line")
    p.add_argument("--config", required=True)
    p.add_argument("--input", required=True, help="JSONL with claim/context fields")
    p.add_argument("--out")

    p = sub.add_parser("analyze", help="span-error histogram, coverage table, confusion CSV")
    p.add_argument("--pred", required=True, help="explanations JSONL from `predict`")
    p.add_argument("--data", required=True, help="gold corpus JSONL")
    p.add_argument("--out", required=True)
    return parser


def _write_or_print(payload: str, out: str | None) -> None:
    if out:
        atomic_write_text(Path(out), payload)
    else:
        print(payload)


def _cmd_validate(args) -> int:
    samples = load_corpus(args.data)
    report = {s.id: v for s in samples if (v := validate_sample(s))}
    payload = json.dumps({"samples": len(samples), "violations": report}, indent=2)
    _write_or_print(payload, args.out)
    return 0 if not report else 2


def _cmd_stats(args) -> int:
    stats = compute_stats(load_corpus(args.data))
    _write_or_print(json.dumps(stats.to_json(), indent=2), args.out)
    return 0


def _cmd_split(args) -> int:
    samples = load_corpus(args.data)
    train, valid, test = split_corpus(samples, args.seed, stratified=args.stratified)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", train), ("valid", valid), ("test", test)):
        dump_corpus(part, out_dir / f"{name}.jsonl")
    print(json.dumps({"train": len(train), "valid": len(valid), "test": len(test)}))
    return 0


def _cmd_train(args) -> int:
    overrides = {
        "checkpoint_family": args.checkpoint_family,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "learning_rate": args.lr,
        "seed": args.seed,
        "max_sequence_length": args.max_seq_len,
        "select": args.select,
    }
    config = load_train_config(args.config, overrides)
    out = args.out
    if out is None:
        root = os.environ.get("CLAIMCHECK_RUNS", "runs")
        out = str(Path(root) / f"{args.stage}_{args.strategy}_{time.strftime('%Y%m%d-%H%M%S')}")
    report = run_training(args.stage, args.strategy, config, args.data, out, args.valid)
    print(json.dumps({"out": out, "checkpoint": report.checkpoint_dir, "final": report.final_metrics}))
    return 0


def _select_split(samples, args):
    if not args.split:
        return samples
    parts = dict(zip(("train", "valid", "test"), split_corpus(samples, args.seed)))
    if args.split not in parts:
        raise UsageError(f"unknown split {args.split!r}")
    return parts[args.split]


def _cmd_evaluate(args) -> int:
    samples = _select_split(load_corpus(args.data), args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.stage == "pipeline":
        if not args.config:
            raise UsageError("--config is required for stage=pipeline")
        config = PipelineConfig.load(args.config)
        pipeline = Pipeline.from_config(config)
        bundle = pipeline.evaluate(samples)
        payload = bundle_to_json(bundle)
        payload["config"] = config.to_json()
        payload["config_hash"] = hashlib.sha256(
            json.dumps(config.to_json(), sort_keys=True).encode()
        ).hexdigest()[:16]
        atomic_write_text(out_dir / "metrics.json", json.dumps(payload, indent=2))
        atomic_write_text(out_dir / "type_confusion.csv", bundle["type_confusion_csv"])
        coverage = {("%s-%s" % b if b[1] is not None else "%s+" % b[0]): v
                    for b, v in bundle["coverage_by_length"].items()}
        atomic_write_text(out_dir / "coverage_by_length.json", json.dumps(coverage, indent=2))
        print(json.dumps({"n_samples": bundle["n_samples"], "out": str(out_dir)}))
        return 0

    if not args.checkpoint:
        raise UsageError("--checkpoint is required for stages a/b/c")
    if args.stage == "a":
        model = StageAModel.load(args.checkpoint)
        sums: dict = {}
        for s in samples:
            triple, cspan = model.predict_all(s.claim, s.context, s.triple)
            pairs = {"context_span": (cspan.text, s.incon_context_span.text)}
            if triple is not None:
                for f in ("source", "relation", "target"):
                    pairs[f] = (getattr(triple, f).text, s.triple.part(f).text)
            for f, (p, g) in pairs.items():
                agg = sums.setdefault(f, {"em": 0.0, "iou": 0.0})
                agg["em"] += exact_match(p, g)
                agg["iou"] += token_iou(p, g)
        result = {f: {k: v / len(samples) for k, v in agg.items()} for f, agg in sums.items()}
    elif args.stage == "b":
        model = StageBModel.load(args.checkpoint)
        tp, cp = [], []
        for s in samples:
            t, c = model.predict(s.claim, s.context, s.triple, s.incon_context_span)
            tp.append(t.label)
            cp.append(c.label)
        result = {
            "input_mode": "gold",
            "type": classification_report(tp, [s.itype for s in samples], TYPE_LABELS).to_json(),
            "component": classification_report(cp, [s.component for s in samples], COMPONENT_LABELS).to_json(),
        }
    else:
        model = StageCModel.load(args.checkpoint)
        eligible = [s for s in samples if s.has_entity_type]
        if not eligible:
            raise CorpusError("no entity-labeled samples to evaluate")
        coarse_pred, fine_pred = [], []
        for s in eligible:
            span = s.claim_span_for_component()
            coarse_pred.append(model.predict_coarse(s.incon_context_span, span).label)
            fine_pred.append(
                model.predict_fine(
                    s.incon_context_span, span,
                    s.coarse if fine_needs_coarse(model.strategy) else None,
                ).label
            )
        fine_golds = [s.fine for s in eligible]
        fine_order = model.fine_vocab.labels if set(fine_golds) | set(fine_pred) <= set(model.fine_vocab.labels) else None
        result = {
            "input_mode": "gold",
            "scored": len(eligible),
            "not_entity_typed": len(samples) - len(eligible),
            "coarse": classification_report(coarse_pred, [s.coarse for s in eligible], COARSE_LABELS).to_json(),
            "fine": classification_report(fine_pred, fine_golds, fine_order).to_json(),
        }
    atomic_write_text(out_dir / "metrics.json", json.dumps(result, indent=2))
    print(json.dumps({"n_samples": len(samples), "out": str(out_dir)}))
    return 0


def _cmd_predict(args) -> int:
    pipeline = Pipeline.from_config(PipelineConfig.load(args.config))
    lines_out = []
    with open(args.input, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            obj = json.loads(raw)
            if "claim" not in obj or "context" not in obj:
                raise CorpusError(f"line {lineno}: predict input needs claim and context fields")
            explanation = pipeline.explain(obj["claim"], obj["context"])
            record = explanation.to_json()
            if "id" in obj:
                record = {"id": obj["id"], **record}
            lines_out.append(json.dumps(record, ensure_ascii=False))
    payload = "\n".join(lines_out) + ("\n" if lines_out else "")
    if args.out:
        atomic_write_text(Path(args.out), payload)
    else:
        sys.stdout.write(payload)
    return 0


def _cmd_analyze(args) -> int:
    golds = load_corpus(args.data)
    preds = []
    with open(args.pred, encoding="utf-8") as handle:
        for raw in handle:
            if raw.strip():
                preds.append(json.loads(raw))
    if len(preds) != len(golds):
        raise CorpusError(f"prediction count {len(preds)} != gold count {len(golds)}")
    by_id = {p["id"]: p for p in preds if "id" in p}
    if len(by_id) == len(golds) and all(s.id in by_id for s in golds):
        preds = [by_id[s.id] for s in golds]

    span_preds = [p["incon_context_span"]["text"] for p in preds]
    span_golds = [s.incon_context_span.text for s in golds]
    type_preds = [p["inconsistency_type"] for p in preds]
    type_golds = [s.itype.value for s in golds]

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    analysis = analyze_span_errors(span_preds, span_golds)
    atomic_write_text(out_dir / "span_errors.json", json.dumps(analysis.to_json(), indent=2))
    coverage = coverage_by_length(span_preds, span_golds, DEFAULT_COVERAGE_BUCKETS)
    coverage_json = {("%s-%s" % b if b[1] is not None else "%s+" % b[0]): v for b, v in coverage.items()}
    atomic_write_text(out_dir / "coverage_by_length.json", json.dumps(coverage_json, indent=2))
    report = classification_report(type_preds, type_golds, [t.value for t in TYPE_LABELS])
    atomic_write_text(out_dir / "type_confusion.csv", report.confusion_csv())
    print(json.dumps({"n_samples": len(golds), "out": str(out_dir)}))
    return 0


_COMMANDS = {
    "validate": _cmd_validate,
    "stats": _cmd_stats,
    "split": _cmd_split,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "predict": _cmd_predict,
    "analyze": _cmd_analyze,
}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("CLAIMCHECK_LOGLEVEL", "WARNING"))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (CorpusError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (TrainingError, PipelineError, EncodingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
