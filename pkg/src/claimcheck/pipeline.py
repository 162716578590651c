"""End-to-end orchestration of the four models, and end-to-end evaluation.

Stage A predicts the claim fact triple and the inconsistent context span;
Stage B consumes them for inconsistency type + claim component; the claim
span named by the component plus the context span feed the coarse entity
typer, whose output feeds the fine typer. The default configuration is the
best-performing cell per subtask: multi_task Stage A, multi_task Stage B,
embedding-based coarse prediction with two_step_mix fine prediction.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .corpus import (
    CharSpan,
    ClaimComponent,
    CoarseEntityType,
    EMPTY_SPAN,
    FactTriple,
    InconsistencyType,
    Sample,
)
from .classifier import COMPONENT_LABELS, StageBModel, TYPE_LABELS
from .entity_typer import COARSE_LABELS, StageCModel, fine_needs_coarse
from .metrics import (
    analyze_span_errors,
    classification_report,
    coverage_by_length,
    exact_match,
    token_iou,
)
from .span_extractor import ExtractionStrategy, SpanPrediction, StageAModel, TriplePrediction

logger = logging.getLogger(__name__)

DEFAULT_COVERAGE_BUCKETS = ((1, 2), (3, 4), (5, 7), (8, 12), (13, None))


class PipelineError(Exception):
    pass


@dataclass
class PipelineConfig:
    """Checkpoint references plus low-confidence thresholds per stage."""

    stage_a: str
    stage_b: str
    stage_c: str
    thresholds: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "stage_a": self.stage_a,
            "stage_b": self.stage_b,
            "stage_c": self.stage_c,
            "thresholds": self.thresholds,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PipelineConfig":
        return cls(
            stage_a=obj["stage_a"],
            stage_b=obj["stage_b"],
            stage_c=obj["stage_c"],
            thresholds=obj.get("thresholds", {}),
        )

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


# Strategy selection of the best observed configuration.
DEFAULT_STRATEGIES = {
    "stage_a": "multi_task",
    "stage_b": "multi_task",
    "stage_c": "two_step_mix",  # embedding coarse + 60-way classified fine
}


@dataclass
class Explanation:
    """Structured output for one (claim, context) pair."""

    triple: FactTriple
    incon_context_span: CharSpan
    component: ClaimComponent
    itype: InconsistencyType
    coarse: Optional[CoarseEntityType]
    fine: Optional[str]
    scores: dict = field(default_factory=dict)
    flags: tuple = ()

    def __post_init__(self):
        if (self.coarse is None) != (self.fine is None):
            raise PipelineError("coarse and fine entity types must be both present or both absent")

    def to_json(self) -> dict:
        return {
            "source": self.triple.source.to_json(),
            "relation": self.triple.relation.to_json(),
            "target": self.triple.target.to_json(),
            "incon_context_span": self.incon_context_span.to_json(),
            "claim_component": self.component.value,
            "inconsistency_type": self.itype.value,
            "coarse_entity_type": self.coarse.value if self.coarse else None,
            "fine_entity_type": self.fine,
            "scores": self.scores,
            "flags": list(self.flags),
        }


def _as_char_span(pred: SpanPrediction) -> CharSpan:
    if pred.span is not None:
        return pred.span
    # Generated text that could not be located keeps its surface form.
    return CharSpan(0, 0, pred.text)


class Pipeline:
    """Immutable after construction; stages run sequentially per sample."""

    def __init__(self, stage_a, stage_b, stage_c, thresholds: Optional[dict] = None):
        self.stage_a = stage_a
        self.stage_b = stage_b
        self.stage_c = stage_c
        self.thresholds = dict(thresholds or {})
        strategy = getattr(stage_a, "strategy", None)
        if strategy in (ExtractionStrategy.STRUCTURE_IGNORANT, ExtractionStrategy.ORACLE_STRUCTURE):
            raise PipelineError(
                f"stage A strategy {strategy.value} does not produce a fact triple at inference "
                "time; the pipeline needs two_step or multi_task"
            )
        self._check_manifest_agreement()

    def _check_manifest_agreement(self):
        schemes = []
        for stage in (self.stage_a, self.stage_b, self.stage_c):
            encoder = getattr(stage, "input_encoder", None)
            if encoder is not None:
                schemes.append(encoder.scheme.to_json())
        if schemes and any(s != schemes[0] for s in schemes[1:]):
            raise PipelineError("stage checkpoints disagree on the special-token scheme")

    @classmethod
    def from_config(cls, config: PipelineConfig) -> "Pipeline":
        try:
            stage_a = StageAModel.load(config.stage_a)
        except Exception as exc:
            raise PipelineError(f"stage A checkpoint failed to load: {exc}") from exc
        try:
            stage_b = StageBModel.load(config.stage_b)
        except Exception as exc:
            raise PipelineError(f"stage B checkpoint failed to load: {exc}") from exc
        try:
            stage_c = StageCModel.load(config.stage_c)
        except Exception as exc:
            raise PipelineError(f"stage C checkpoint failed to load: {exc}") from exc
        return cls(stage_a, stage_b, stage_c, config.thresholds)

    # -- inference -----------------------------------------------------------

    def explain(self, claim: str, context: str) -> Explanation:
        try:
            triple_pred, cspan_pred = self.stage_a.predict_all(claim, context)
        except Exception as exc:
            raise PipelineError(f"stage A failed: {exc}") from exc
        if triple_pred is None:
            raise PipelineError("stage A produced no fact triple")
        triple = triple_pred.to_fact_triple()
        cspan = _as_char_span(cspan_pred)

        try:
            type_pred, comp_pred = self.stage_b.predict(claim, context, triple, cspan)
        except Exception as exc:
            raise PipelineError(f"stage B failed: {exc}") from exc

        # The component names a head/modifier sub-span stage A does not
        # produce; the full S/R/T span stands in as the claim-side input.
        claim_side = triple.part(comp_pred.label.triple_part)
        try:
            coarse_pred = self.stage_c.predict_coarse(cspan, claim_side)
            fine_coarse = coarse_pred.label if fine_needs_coarse(self.stage_c.strategy) else None
            fine_pred = self.stage_c.predict_fine(cspan, claim_side, fine_coarse)
        except Exception as exc:
            raise PipelineError(f"stage C failed: {exc}") from exc

        scores = {
            "source": triple_pred.source.score,
            "relation": triple_pred.relation.score,
            "target": triple_pred.target.score,
            "context_span": cspan_pred.score,
            "type": float(max(type_pred.scores)),
            "component": float(max(comp_pred.scores)),
            "coarse": float(max(coarse_pred.scores)),
            "fine": float(max(fine_pred.scores)),
        }
        flags = tuple(
            f"low_confidence:{name}"
            for name, threshold in sorted(self.thresholds.items())
            if name in scores and scores[name] < threshold
        )
        return Explanation(
            triple=triple,
            incon_context_span=cspan,
            component=comp_pred.label,
            itype=type_pred.label,
            coarse=coarse_pred.label,
            fine=fine_pred.label,
            scores=scores,
            flags=flags,
        )

    # -- evaluation ------------------------------------------------------------

    def evaluate(self, samples: Sequence[Sample]) -> dict:
        """Per-field report bundle over a sample list.

        Stage B/C are scored twice: with pipeline inputs (upstream
        predictions) and with gold inputs. Entity metrics cover only
        samples carrying gold entity labels; the rest are counted as
        not-entity-typed (stage C still runs on them).
        """
        if not samples:
            raise PipelineError("cannot evaluate an empty sample list")

        span_preds = {f: [] for f in ("source", "relation", "target", "context_span")}
        span_golds = {f: [] for f in ("source", "relation", "target", "context_span")}
        b_pipe = {"type": [], "component": []}
        b_gold = {"type": [], "component": []}
        gold_types, gold_components = [], []
        c_pipe = {"coarse": [], "fine": []}
        c_gold = {"coarse": [], "fine": []}
        gold_coarse, gold_fine = [], []
        not_entity_typed = 0

        for s in samples:
            triple_pred, cspan_pred = self.stage_a.predict_all(s.claim, s.context, s.triple)
            if triple_pred is None:
                raise PipelineError("stage A produced no fact triple during evaluation")
            triple = triple_pred.to_fact_triple()
            cspan = _as_char_span(cspan_pred)

            for f in ("source", "relation", "target"):
                span_preds[f].append(getattr(triple_pred, f).text)
                span_golds[f].append(s.triple.part(f).text)
            span_preds["context_span"].append(cspan_pred.text)
            span_golds["context_span"].append(s.incon_context_span.text)

            tp, cp = self.stage_b.predict(s.claim, s.context, triple, cspan)
            b_pipe["type"].append(tp.label)
            b_pipe["component"].append(cp.label)
            tp_g, cp_g = self.stage_b.predict(s.claim, s.context, s.triple, s.incon_context_span)
            b_gold["type"].append(tp_g.label)
            b_gold["component"].append(cp_g.label)
            gold_types.append(s.itype)
            gold_components.append(s.component)

            claim_side_pred = triple.part(cp.label.triple_part)
            needs_coarse = fine_needs_coarse(getattr(self.stage_c, "strategy", None))
            coarse_p = self.stage_c.predict_coarse(cspan, claim_side_pred)
            fine_p = self.stage_c.predict_fine(cspan, claim_side_pred, coarse_p.label if needs_coarse else None)

            if not s.has_entity_type:
                not_entity_typed += 1
                continue
            c_pipe["coarse"].append(coarse_p.label)
            c_pipe["fine"].append(fine_p.label)
            coarse_g = self.stage_c.predict_coarse(s.incon_context_span, s.claim_span_for_component())
            fine_g = self.stage_c.predict_fine(
                s.incon_context_span, s.claim_span_for_component(), s.coarse if needs_coarse else None
            )
            c_gold["coarse"].append(coarse_g.label)
            c_gold["fine"].append(fine_g.label)
            gold_coarse.append(s.coarse)
            gold_fine.append(s.fine)

        bundle: dict = {"n_samples": len(samples), "warnings": []}
        bundle["stage_a"] = {
            f: {
                "em": sum(exact_match(p, g) for p, g in zip(span_preds[f], span_golds[f])) / len(samples),
                "iou": sum(token_iou(p, g) for p, g in zip(span_preds[f], span_golds[f])) / len(samples),
            }
            for f in span_preds
        }

        fine_order = None
        vocab = getattr(self.stage_c, "fine_vocab", None)
        if vocab is not None:
            observed = set(gold_fine) | set(c_pipe["fine"]) | set(c_gold["fine"])
            fine_order = tuple(vocab.labels) if observed <= set(vocab.labels) else None

        bundle["stage_b"] = {
            "pipeline_inputs": {
                "type": classification_report(b_pipe["type"], gold_types, TYPE_LABELS),
                "component": classification_report(b_pipe["component"], gold_components, COMPONENT_LABELS),
            },
            "gold_inputs": {
                "type": classification_report(b_gold["type"], gold_types, TYPE_LABELS),
                "component": classification_report(b_gold["component"], gold_components, COMPONENT_LABELS),
            },
        }
        bundle["stage_c"] = {"not_entity_typed": not_entity_typed, "scored": len(gold_coarse)}
        if gold_coarse:
            bundle["stage_c"]["pipeline_inputs"] = {
                "coarse": classification_report(c_pipe["coarse"], gold_coarse, COARSE_LABELS),
                "fine": classification_report(c_pipe["fine"], gold_fine, fine_order),
            }
            bundle["stage_c"]["gold_inputs"] = {
                "coarse": classification_report(c_gold["coarse"], gold_coarse, COARSE_LABELS),
                "fine": classification_report(c_gold["fine"], gold_fine, fine_order),
            }

        # Oracle-input dominance is statistical; violations warn, never fail.
        for stage_name, tasks in (("stage_b", ("type", "component")), ("stage_c", ("coarse", "fine"))):
            part = bundle[stage_name]
            if "pipeline_inputs" not in part:
                continue
            for task in tasks:
                gold_f1 = part["gold_inputs"][task].weighted_f1
                pipe_f1 = part["pipeline_inputs"][task].weighted_f1
                if gold_f1 < pipe_f1:
                    message = (
                        f"oracle-dominance violated for {stage_name}/{task}: "
                        f"gold-input F1 {gold_f1:.3f} < pipeline-input F1 {pipe_f1:.3f}"
                    )
                    logger.warning(message)
                    bundle["warnings"].append(message)

        bundle["type_confusion_csv"] = bundle["stage_b"]["pipeline_inputs"]["type"].confusion_csv()
        bundle["span_errors"] = analyze_span_errors(span_preds["context_span"], span_golds["context_span"])
        bundle["coverage_by_length"] = coverage_by_length(
            span_preds["context_span"], span_golds["context_span"], DEFAULT_COVERAGE_BUCKETS
        )
        return bundle


def bundle_to_json(bundle: dict) -> dict:
    """Lower a report bundle into plain JSON-serializable data."""

    def lower(value):
        if hasattr(value, "to_json"):
            return value.to_json()
        if isinstance(value, dict):
            return {_bucket_key(k): lower(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [lower(v) for v in value]
        return value

    return lower(bundle)


def _bucket_key(key):
    if isinstance(key, tuple):
        lo, hi = key
        return f"{lo}-{hi}" if hi is not None else f"{lo}+"
    return key


def run_pipeline(pipeline: Pipeline | PipelineConfig, claim: str, context: str) -> Explanation:
    if isinstance(pipeline, PipelineConfig):
        pipeline = Pipeline.from_config(pipeline)
    return pipeline.explain(claim, context)


def evaluate_pipeline(pipeline: Pipeline | PipelineConfig, samples: Sequence[Sample]) -> dict:
    if isinstance(pipeline, PipelineConfig):
        pipeline = Pipeline.from_config(pipeline)
    return pipeline.evaluate(samples)
