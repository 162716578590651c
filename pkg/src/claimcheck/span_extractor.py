"""Stage A: predict the inconsistent claim fact triple (source, relation,
target) and the inconsistent context span.

Four strategies are supported. Structure-ignorant predicts the context
span straight from claim+context; two-step first predicts the triple, then
feeds it back for the context span; multi-task predicts all four spans
jointly; oracle-structure consumes the gold triple.

Discriminative checkpoints decode spans from start/end token classifiers;
generative checkpoints emit a marker-linearized string whose spans are
recovered by normalized substring match into the claim/context.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .corpus import CharSpan, EMPTY_SPAN, FactTriple, Sample
from .encoders import (
    FamilyBundle,
    build_family,
    clone_backbone,
    collate_ids,
    load_bundle,
    save_bundle,
    seed_everything,
)
from .encoding import (
    AlignmentError,
    EncodedInput,
    EncodingError,
    GenerationFields,
    InputEncoder,
    NULL_TOKEN_SPAN,
    SectionBoundaryError,
    SpecialTokenScheme,
    TokenSpan,
    build_generation_target,
    parse_generation_output,
)
from .metrics import exact_match, token_iou
from .training import FitResult, TrainConfig, TrainingError, fit, seq2seq_loss

logger = logging.getLogger(__name__)

_WORD_RE = re.compile(r"\w+|[^\w\s]")


class ExtractionStrategy(str, Enum):
    STRUCTURE_IGNORANT = "structure_ignorant"
    TWO_STEP = "two_step"
    MULTI_TASK = "multi_task"
    ORACLE_STRUCTURE = "oracle_structure"


SPAN_FIELDS = ("source", "relation", "target", "context_span")
FIELD_SECTION = {"source": "claim", "relation": "claim", "target": "claim", "context_span": "context"}

# Decode-time span length caps (tokens). Gold context spans run to 94 words
# in the wild but 30 covers >99%; actual coverage is recomputed and logged
# at train time.
DEFAULT_MAX_SPAN_TOKENS = {"source": 20, "relation": 20, "target": 20, "context_span": 30}


class IncompatibleModelError(TrainingError):
    pass


@dataclass
class SpanHeadOutput:
    field: str
    start_scores: np.ndarray
    end_scores: np.ndarray


@dataclass
class SpanPrediction:
    field: str
    text: str
    span: Optional[CharSpan]  # None when a generated span cannot be located
    score: float

    @property
    def is_empty(self) -> bool:
        return self.text == ""


@dataclass
class TriplePrediction:
    source: SpanPrediction
    relation: SpanPrediction
    target: SpanPrediction

    def to_fact_triple(self) -> FactTriple:
        def span_of(p: SpanPrediction) -> CharSpan:
            return p.span if p.span is not None else CharSpan(0, 0, p.text)

        return FactTriple(span_of(self.source), span_of(self.relation), span_of(self.target))


# ---------------------------------------------------------------------------
# span decoding


def best_span_pair(
    start_scores,
    end_scores,
    legal: TokenSpan,
    max_len: Optional[int] = None,
    null_score: Optional[float] = None,
) -> tuple[TokenSpan, float]:
    """Argmax over token pairs (i, j) with i <= j inside ``legal`` and
    j - i + 1 <= max_len, scored start[i] + end[j]. Ties break toward
    smaller i, then smaller j. When ``null_score`` is given, the null span
    wins only by strictly exceeding the best pair score.
    """
    start_scores = np.asarray(start_scores, dtype=np.float64)
    end_scores = np.asarray(end_scores, dtype=np.float64)
    lo, hi = legal
    if lo > hi or lo < 0 or hi >= len(start_scores):
        raise ValueError(f"legal region {legal} is empty or out of range")
    n = hi - lo + 1
    pair = start_scores[lo : hi + 1, None] + end_scores[None, lo : hi + 1]
    valid = np.triu(np.ones((n, n), dtype=bool))
    if max_len is not None:
        valid &= ~np.triu(np.ones((n, n), dtype=bool), k=max_len)
    scored = np.where(valid, pair, -np.inf)
    flat = int(np.argmax(scored))
    i, j = divmod(flat, n)
    best = float(scored[i, j])
    if null_score is not None and null_score > best:
        return NULL_TOKEN_SPAN, float(null_score)
    return TokenSpan(lo + i, lo + j), best


def select_best_span(
    output: SpanHeadOutput,
    encoder: InputEncoder,
    encoded: EncodedInput,
    max_len: Optional[int] = None,
    allow_null: Optional[bool] = None,
) -> SpanPrediction:
    """Decode one head output into the best legal span of its field."""
    section = encoded.sections[FIELD_SECTION[output.field]]
    if allow_null is None:
        allow_null = output.field == "target"
    if max_len is None:
        max_len = DEFAULT_MAX_SPAN_TOKENS[output.field]
    if section.token_end <= section.token_start:
        return SpanPrediction(output.field, "", EMPTY_SPAN, 0.0)
    null_score = (
        float(output.start_scores[0] + output.end_scores[0]) if allow_null else None
    )
    tspan, score = best_span_pair(
        output.start_scores, output.end_scores, section.token_range, max_len, null_score
    )
    _, span = encoder.token_span_to_char_span(encoded, tspan)
    return SpanPrediction(output.field, span.text, span, score)


def locate_text(haystack: str, text: str) -> Optional[CharSpan]:
    """First character range of ``haystack`` whose normalized tokens equal
    those of ``text``; None when no window matches."""
    needle = [m.group().casefold() for m in _WORD_RE.finditer(text)]
    if not needle:
        return None
    hay = [(m.group().casefold(), m.start(), m.end()) for m in _WORD_RE.finditer(haystack)]
    for i in range(len(hay) - len(needle) + 1):
        if [t[0] for t in hay[i : i + len(needle)]] == needle:
            start, end = hay[i][1], hay[i + len(needle) - 1][2]
            return CharSpan(start, end, haystack[start:end])
    return None


# ---------------------------------------------------------------------------
# discriminative model


class SpanHeadNet(nn.Module):
    """Shared encoder with one start/end linear head pair per span field."""

    def __init__(self, backbone: nn.Module, hidden_size: int, fields: Sequence[str]):
        super().__init__()
        self.backbone = backbone
        self.fields = tuple(fields)
        self.heads = nn.ModuleDict({f: nn.Linear(hidden_size, 2) for f in fields})

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> dict[str, tuple[torch.Tensor, torch.Tensor]]:
        hidden = self.backbone(ids, mask)
        out = {}
        for name, head in self.heads.items():
            logits = head(hidden)
            neg = torch.finfo(logits.dtype).min
            start = logits[..., 0].masked_fill(~mask, neg)
            end = logits[..., 1].masked_fill(~mask, neg)
            out[name] = (start, end)
        return out


def _head_outputs(net: SpanHeadNet, encoded: EncodedInput, pad_id: int) -> dict[str, SpanHeadOutput]:
    ids, mask = collate_ids([encoded.ids], pad_id)
    with torch.no_grad():
        net.eval()
        raw = net(ids, mask)
    return {
        f: SpanHeadOutput(f, start[0].numpy(), end[0].numpy()) for f, (start, end) in raw.items()
    }


@dataclass
class _SpanExample:
    encoded: EncodedInput
    targets: dict[str, TokenSpan]


def _prepare_span_examples(
    samples: Sequence[Sample],
    input_encoder: InputEncoder,
    strategy: ExtractionStrategy,
    fields: Sequence[str],
    with_srt_input: bool,
) -> tuple[list[_SpanExample], int]:
    """Encode samples and align gold spans; unalignable samples (for
    example a context span truncated away) are excluded and counted."""
    examples, excluded = [], 0
    for s in samples:
        try:
            encoded = input_encoder.build_stage_a_input(
                s.claim, s.context, strategy.value, s.triple if with_srt_input else None
            )
            targets = {}
            for f in fields:
                gold = s.triple.part(f) if f != "context_span" else s.incon_context_span
                targets[f] = input_encoder.char_span_to_token_span(encoded, gold, FIELD_SECTION[f])
            examples.append(_SpanExample(encoded, targets))
        except (AlignmentError, SectionBoundaryError, EncodingError):
            excluded += 1
    return examples, excluded


def _span_loss(net: SpanHeadNet, batch: list[_SpanExample], pad_id: int) -> torch.Tensor:
    ids, mask = collate_ids([ex.encoded.ids for ex in batch], pad_id)
    raw = net(ids, mask)
    loss = torch.zeros((), dtype=torch.float32)
    for f in net.fields:
        start_logits, end_logits = raw[f]
        starts = torch.tensor([ex.targets[f].start for ex in batch], dtype=torch.long)
        ends = torch.tensor([ex.targets[f].end for ex in batch], dtype=torch.long)
        loss = loss + F.cross_entropy(start_logits, starts) + F.cross_entropy(end_logits, ends)
    return loss


class StageAModel:
    """A trained Stage A predictor (one or two checkpoints, per strategy)."""

    def __init__(
        self,
        strategy: ExtractionStrategy,
        bundle: FamilyBundle,
        input_encoder: InputEncoder,
        span_net: Optional[SpanHeadNet] = None,
        srt_net: Optional[SpanHeadNet] = None,
        gen_net: Optional[nn.Module] = None,
        gen_srt_net: Optional[nn.Module] = None,
        max_span_tokens: Optional[dict] = None,
        config: Optional[TrainConfig] = None,
    ):
        self.strategy = strategy
        self.bundle = bundle
        self.input_encoder = input_encoder
        self.span_net = span_net
        self.srt_net = srt_net
        self.gen_net = gen_net
        self.gen_srt_net = gen_srt_net
        self.max_span_tokens = dict(max_span_tokens or DEFAULT_MAX_SPAN_TOKENS)
        self.config = config

    @property
    def is_generative(self) -> bool:
        return self.gen_net is not None

    # -- prediction --------------------------------------------------------

    def _decode_fields(self, net: SpanHeadNet, encoded: EncodedInput, fields) -> dict[str, SpanPrediction]:
        outputs = _head_outputs(net, encoded, self.bundle.tokenizer.pad_id)
        return {
            f: select_best_span(outputs[f], self.input_encoder, encoded, self.max_span_tokens[f])
            for f in fields
        }

    def _generate_fields(
        self, encoded: EncodedInput, claim: str, context: str, net: Optional[nn.Module] = None
    ) -> dict[str, SpanPrediction]:
        ids, mask = collate_ids([encoded.ids], self.bundle.tokenizer.pad_id)
        out_ids = (net or self.gen_net).generate(ids, mask)[0]
        text = self.bundle.tokenizer.decode(out_ids)
        parsed = parse_generation_output(text, self.input_encoder.scheme)
        preds = {}
        for f, host in (("source", claim), ("relation", claim), ("target", claim), ("context_span", context)):
            raw = getattr(parsed.fields, f)
            if raw is None:
                continue
            located = locate_text(host, raw)
            if f == "target" and raw == "":
                located = EMPTY_SPAN
            preds[f] = SpanPrediction(f, located.text if located else raw, located, 0.0)
        return preds

    def predict_srt(self, claim: str, context: str) -> TriplePrediction:
        """Predict the inconsistent fact triple. Only strategies that carry
        an SRT predictor (two_step, multi_task) support this."""
        if self.strategy not in (ExtractionStrategy.TWO_STEP, ExtractionStrategy.MULTI_TASK):
            raise IncompatibleModelError(
                f"strategy {self.strategy.value} has no source/relation/target predictor"
            )
        encoded = self.input_encoder.build_stage_a_input(claim, context, self.strategy.value, None)
        if self.is_generative:
            gen = self.gen_srt_net if self.strategy is ExtractionStrategy.TWO_STEP else self.gen_net
            preds = self._generate_fields(encoded, claim, context, gen)
            empty = SpanPrediction("target", "", EMPTY_SPAN, 0.0)
            return TriplePrediction(
                preds.get("source", SpanPrediction("source", "", None, 0.0)),
                preds.get("relation", SpanPrediction("relation", "", None, 0.0)),
                preds.get("target", empty),
            )
        net = self.srt_net if self.strategy is ExtractionStrategy.TWO_STEP else self.span_net
        preds = self._decode_fields(net, encoded, ("source", "relation", "target"))
        return TriplePrediction(preds["source"], preds["relation"], preds["target"])

    def predict_context_span(self, claim: str, context: str, srt: Optional[FactTriple] = None) -> SpanPrediction:
        """Predict the inconsistent context span. ``srt`` is consumed only
        by two_step (predicted triple) and oracle_structure (gold triple)."""
        needs_srt = self.strategy in (ExtractionStrategy.TWO_STEP, ExtractionStrategy.ORACLE_STRUCTURE)
        if needs_srt and srt is None:
            if self.strategy is ExtractionStrategy.TWO_STEP:
                srt = self.predict_srt(claim, context).to_fact_triple()
            else:
                raise TrainingError("oracle_structure requires the gold triple")
        if not needs_srt and srt is not None:
            raise TrainingError(f"strategy {self.strategy.value} does not take a triple")
        encoded = self.input_encoder.build_stage_a_input(
            claim, context, self.strategy.value, srt if needs_srt else None
        )
        if self.is_generative:
            preds = self._generate_fields(encoded, claim, context)
            return preds.get("context_span", SpanPrediction("context_span", "", None, 0.0))
        return self._decode_fields(self.span_net, encoded, ("context_span",))["context_span"]

    def predict_all(self, claim: str, context: str, gold_srt: Optional[FactTriple] = None):
        """(TriplePrediction | None, SpanPrediction) in one pass."""
        if self.strategy is ExtractionStrategy.ORACLE_STRUCTURE:
            return None, self.predict_context_span(claim, context, gold_srt)
        if self.strategy is ExtractionStrategy.STRUCTURE_IGNORANT:
            return None, self.predict_context_span(claim, context)
        if self.strategy is ExtractionStrategy.TWO_STEP:
            triple = self.predict_srt(claim, context)
            return triple, self.predict_context_span(claim, context, triple.to_fact_triple())
        encoded = self.input_encoder.build_stage_a_input(claim, context, self.strategy.value, None)
        if self.is_generative:
            preds = self._generate_fields(encoded, claim, context)
            empty = SpanPrediction("target", "", EMPTY_SPAN, 0.0)
            triple = TriplePrediction(
                preds.get("source", SpanPrediction("source", "", None, 0.0)),
                preds.get("relation", SpanPrediction("relation", "", None, 0.0)),
                preds.get("target", empty),
            )
            return triple, preds.get("context_span", SpanPrediction("context_span", "", None, 0.0))
        preds = self._decode_fields(self.span_net, encoded, self.span_net.fields)
        triple = None
        if {"source", "relation", "target"} <= set(preds):
            triple = TriplePrediction(preds["source"], preds["relation"], preds["target"])
        return triple, preds.get("context_span", SpanPrediction("context_span", "", None, 0.0))

    # -- persistence ---------------------------------------------------------

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        manifest = {
            "stage": "a",
            "strategy": self.strategy.value,
            "family": self.bundle.name,
            "kind": self.bundle.kind,
            "scheme": self.input_encoder.scheme.to_json(),
            "max_sequence_length": self.input_encoder.max_len,
            "max_span_tokens": self.max_span_tokens,
            "tiny_kwargs": (self.config.tiny_kwargs if self.config else {}),
            "parts": [],
        }
        nets = {}
        if self.srt_net is not None:
            nets["srt"] = self.srt_net
        if self.span_net is not None:
            nets["span"] = self.span_net
        if self.gen_net is not None:
            nets["gen"] = self.gen_net
        if self.gen_srt_net is not None:
            nets["gen_srt"] = self.gen_srt_net
        manifest["parts"] = sorted(nets)
        manifest["fields"] = {
            name: list(net.fields) if hasattr(net, "fields") else [] for name, net in nets.items()
        }
        save_bundle(directory, self.bundle, manifest, nets)

    @classmethod
    def load(cls, directory: str | Path) -> "StageAModel":
        directory = Path(directory)
        manifest, bundle, states = load_bundle(directory)
        if manifest.get("stage") != "a":
            raise TrainingError(f"checkpoint at {directory} is not a Stage A checkpoint")
        input_encoder = InputEncoder(
            bundle.tokenizer,
            SpecialTokenScheme.from_json(manifest["scheme"]),
            manifest["max_sequence_length"],
        )
        kwargs = {}
        for part, state in states.items():
            if part == "gen":
                bundle.backbone.load_state_dict(state)
                kwargs["gen_net"] = bundle.backbone
            elif part == "gen_srt":
                net = clone_backbone(bundle, manifest)
                net.load_state_dict(state)
                kwargs["gen_srt_net"] = net
            else:
                fields = manifest["fields"][part]
                net = SpanHeadNet(clone_backbone(bundle, manifest), bundle.hidden_size, fields)
                net.load_state_dict(state)
                kwargs["srt_net" if part == "srt" else "span_net"] = net
        return cls(
            ExtractionStrategy(manifest["strategy"]),
            bundle,
            input_encoder,
            max_span_tokens=manifest["max_span_tokens"],
            **kwargs,
        )


# ---------------------------------------------------------------------------
# training


@dataclass
class StageATrainResult:
    model: StageAModel
    logs: dict[str, FitResult]
    excluded: int

    @property
    def checkpoint_count(self) -> int:
        return len(self.logs)


def _eval_spans(model: StageAModel, samples: Sequence[Sample], fields: Sequence[str]) -> dict:
    """Mean EM and IoU per field over a sample list, plus their average."""
    sums = {f: {"em": 0.0, "iou": 0.0} for f in fields}
    for s in samples:
        triple, cspan = model.predict_all(s.claim, s.context, s.triple)
        for f in fields:
            if f == "context_span":
                pred_text = cspan.text
                gold_text = s.incon_context_span.text
            else:
                pred_text = getattr(triple, f).text if triple else ""
                gold_text = s.triple.part(f).text
            sums[f]["em"] += exact_match(pred_text, gold_text)
            sums[f]["iou"] += token_iou(pred_text, gold_text)
    n = max(1, len(samples))
    out = {}
    for f in fields:
        out[f"{f}_em"] = sums[f]["em"] / n
        out[f"{f}_iou"] = sums[f]["iou"] / n
    out["mean_iou"] = sum(sums[f]["iou"] for f in fields) / (n * len(fields))
    return out


def _log_span_length_coverage(samples: Sequence[Sample], max_span_tokens: dict) -> dict[str, float]:
    coverage = {}
    for f in SPAN_FIELDS:
        cap = max_span_tokens[f]
        lengths = []
        for s in samples:
            text = (s.incon_context_span if f == "context_span" else s.triple.part(f)).text
            lengths.append(len(text.split()))
        covered = sum(1 for n in lengths if n <= cap) / max(1, len(lengths))
        coverage[f] = covered
        logger.info("decode cap %s<=%d tokens covers %.1f%% of gold spans", f, cap, 100 * covered)
    return coverage


def train_stage_a(
    train: Sequence[Sample],
    valid: Optional[Sequence[Sample]],
    strategy: ExtractionStrategy | str,
    config: TrainConfig,
    scheme: Optional[SpecialTokenScheme] = None,
) -> StageATrainResult:
    """Train Stage A under the given strategy.

    two_step trains two checkpoints (triple, then context span with gold
    triples appended to the input); every other strategy trains one. The
    multi-task loss is the unweighted sum of the four span cross-entropies.
    Per-epoch validation EM/IoU is logged; the best-validation checkpoint
    is retained.
    """
    strategy = ExtractionStrategy(getattr(strategy, "value", strategy))
    config.validate()
    seed_everything(config.seed)
    if not train:
        raise TrainingError("empty training set")
    if valid is None or not valid:
        valid = train
    scheme = scheme or SpecialTokenScheme()

    texts = [s.claim for s in train] + [s.context for s in train]
    bundle = build_family(
        config.checkpoint_family,
        scheme,
        train_texts=texts,
        max_len=config.max_sequence_length,
        tiny_kwargs=config.tiny_kwargs,
    )
    input_encoder = InputEncoder(bundle.tokenizer, scheme, config.max_sequence_length)
    max_span_tokens = dict(DEFAULT_MAX_SPAN_TOKENS)
    _log_span_length_coverage(train, max_span_tokens)

    if bundle.is_generative:
        return _train_stage_a_generative(train, valid, strategy, config, bundle, input_encoder, max_span_tokens)

    pad_id = bundle.tokenizer.pad_id
    logs: dict[str, FitResult] = {}
    excluded_total = 0

    def run_fit(net, examples, model_for_eval, fields):
        return fit(
            net,
            examples,
            lambda m, batch: _span_loss(m, batch, pad_id),
            config,
            eval_fn=lambda m: _eval_spans(model_for_eval, valid, fields),
            select_metric="mean_iou",
        )

    if strategy is ExtractionStrategy.TWO_STEP:
        srt_backbone = bundle.backbone
        srt_net = SpanHeadNet(srt_backbone, bundle.hidden_size, ("source", "relation", "target"))
        examples, excluded = _prepare_span_examples(train, input_encoder, strategy, srt_net.fields, False)
        excluded_total += excluded
        srt_model = StageAModel(
            ExtractionStrategy.MULTI_TASK, bundle, input_encoder, span_net=srt_net, config=config
        )
        logs["srt"] = run_fit(srt_net, examples, srt_model, ("source", "relation", "target"))

        span_bundle = build_family(
            config.checkpoint_family,
            scheme,
            tokenizer=bundle.tokenizer if bundle.name == "tiny" else None,
            train_texts=texts,
            max_len=config.max_sequence_length,
            tiny_kwargs=config.tiny_kwargs,
        )
        span_net = SpanHeadNet(span_bundle.backbone, span_bundle.hidden_size, ("context_span",))
        examples, excluded = _prepare_span_examples(train, input_encoder, strategy, span_net.fields, True)
        excluded_total += excluded
        model = StageAModel(
            strategy, bundle, input_encoder,
            span_net=span_net, srt_net=srt_net,
            max_span_tokens=max_span_tokens, config=config,
        )
        oracle_eval = StageAModel(
            ExtractionStrategy.ORACLE_STRUCTURE, bundle, input_encoder,
            span_net=span_net, max_span_tokens=max_span_tokens, config=config,
        )
        logs["span"] = run_fit(span_net, examples, oracle_eval, ("context_span",))
        return StageATrainResult(model, logs, excluded_total)

    fields = SPAN_FIELDS if strategy is ExtractionStrategy.MULTI_TASK else ("context_span",)
    with_srt = strategy is ExtractionStrategy.ORACLE_STRUCTURE
    net = SpanHeadNet(bundle.backbone, bundle.hidden_size, fields)
    examples, excluded_total = _prepare_span_examples(train, input_encoder, strategy, fields, with_srt)
    model = StageAModel(
        strategy, bundle, input_encoder, span_net=net,
        max_span_tokens=max_span_tokens, config=config,
    )
    logs["span"] = run_fit(net, examples, model, fields)
    return StageATrainResult(model, logs, excluded_total)


def _gen_target_for(strategy: ExtractionStrategy, s: Sample, scheme: SpecialTokenScheme, part: str) -> str:
    if part == "srt":
        fields = GenerationFields(
            source=s.triple.source.text, relation=s.triple.relation.text, target=s.triple.target.text
        )
    elif strategy is ExtractionStrategy.MULTI_TASK:
        fields = GenerationFields(
            source=s.triple.source.text,
            relation=s.triple.relation.text,
            target=s.triple.target.text,
            context_span=s.incon_context_span.text,
        )
    else:
        fields = GenerationFields(context_span=s.incon_context_span.text)
    return build_generation_target(fields, scheme)


def _train_stage_a_generative(train, valid, strategy, config, bundle, input_encoder, max_span_tokens):
    tok = bundle.tokenizer
    scheme = input_encoder.scheme

    def make_pairs(samples, part, with_srt):
        pairs, excluded = [], 0
        for s in samples:
            try:
                encoded = input_encoder.build_stage_a_input(
                    s.claim, s.context, strategy.value, s.triple if with_srt else None
                )
            except EncodingError:
                excluded += 1
                continue
            target = _gen_target_for(strategy, s, scheme, part)
            tgt_ids = [tok.bos_id] + tok.encode_string(target) + [tok.eos_id]
            pairs.append((encoded.ids, tuple(tgt_ids)))
        return pairs, excluded

    logs: dict[str, FitResult] = {}

    if strategy is ExtractionStrategy.TWO_STEP:
        # two checkpoints: a triple generator, then a context-span
        # generator whose input carries the (gold, at train time) triple
        srt_net = bundle.backbone
        srt_model = StageAModel(
            ExtractionStrategy.MULTI_TASK, bundle, input_encoder, gen_net=srt_net,
            max_span_tokens=max_span_tokens, config=config,
        )
        pairs, excluded = make_pairs(train, "srt", False)
        logs["srt"] = fit(
            srt_net, pairs,
            lambda m, batch: seq2seq_loss(m, batch, tok.pad_id), config,
            eval_fn=lambda m: _eval_spans(srt_model, valid, ("source", "relation", "target")),
            select_metric="mean_iou",
        )
        span_net = build_family(
            config.checkpoint_family, input_encoder.scheme, tokenizer=tok,
            max_len=config.max_sequence_length, tiny_kwargs=config.tiny_kwargs,
        ).backbone
        span_model = StageAModel(
            ExtractionStrategy.ORACLE_STRUCTURE, bundle, input_encoder, gen_net=span_net,
            max_span_tokens=max_span_tokens, config=config,
        )
        pairs2, excluded2 = make_pairs(train, "span", True)
        logs["span"] = fit(
            span_net, pairs2,
            lambda m, batch: seq2seq_loss(m, batch, tok.pad_id), config,
            eval_fn=lambda m: _eval_spans(span_model, valid, ("context_span",)),
            select_metric="mean_iou",
        )
        model = StageAModel(
            strategy, bundle, input_encoder, gen_net=span_net, gen_srt_net=srt_net,
            max_span_tokens=max_span_tokens, config=config,
        )
        return StageATrainResult(model, logs, excluded + excluded2)

    model = StageAModel(
        strategy, bundle, input_encoder, gen_net=bundle.backbone,
        max_span_tokens=max_span_tokens, config=config,
    )
    with_srt = strategy is ExtractionStrategy.ORACLE_STRUCTURE
    part = "multi" if strategy is ExtractionStrategy.MULTI_TASK else "span"
    pairs, excluded = make_pairs(train, part, with_srt)
    fields = SPAN_FIELDS if strategy is ExtractionStrategy.MULTI_TASK else ("context_span",)
    logs["gen"] = fit(
        bundle.backbone,
        pairs,
        lambda m, batch: seq2seq_loss(m, batch, tok.pad_id),
        config,
        eval_fn=lambda m: _eval_spans(model, valid, fields),
        select_metric="mean_iou",
    )
    return StageATrainResult(model, logs, excluded)


# ---------------------------------------------------------------------------
# functional wrappers matching the public operation names


def predict_srt(model: StageAModel, claim: str, context: str) -> TriplePrediction:
    return model.predict_srt(claim, context)


def predict_context_span(
    model: StageAModel,
    claim: str,
    context: str,
    strategy: ExtractionStrategy | str | None = None,
    srt: Optional[FactTriple] = None,
) -> SpanPrediction:
    if strategy is not None and ExtractionStrategy(getattr(strategy, "value", strategy)) is not model.strategy:
        raise TrainingError(
            f"model was trained with strategy {model.strategy.value}, not {strategy}"
        )
    return model.predict_context_span(claim, context, srt)
