"""Stage B: predict the inconsistency type (5-way) and the inconsistent
claim component (6-way) from claim, context, triple, and context span.

Strategies: individual (two separate checkpoints), two_step (component
first, its prediction appended to the type input), multi_task (one shared
encoder, both heads, summed cross-entropies). Per the published component
results, two_step runs component -> type only, never the reverse.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .corpus import CharSpan, ClaimComponent, FactTriple, InconsistencyType, Sample
from .encoders import FamilyBundle, build_family, collate_ids, load_bundle, save_bundle, seed_everything
from .encoding import (
    EncodedInput,
    GenerationFields,
    InputEncoder,
    SpecialTokenScheme,
    build_generation_target,
    parse_generation_output,
)
from .encoders import clone_backbone
from .metrics import classification_report
from .training import FitResult, TrainConfig, TrainingError, fit, seq2seq_loss

logger = logging.getLogger(__name__)


class StageBStrategy(str, Enum):
    INDIVIDUAL = "individual"
    TWO_STEP = "two_step"
    MULTI_TASK = "multi_task"


TYPE_LABELS: tuple[InconsistencyType, ...] = tuple(InconsistencyType)
COMPONENT_LABELS: tuple[ClaimComponent, ...] = tuple(ClaimComponent)


@dataclass
class LabelPrediction:
    """A predicted label plus the score distribution it was drawn from."""

    label: object
    scores: np.ndarray
    labels: tuple

    def __post_init__(self):
        if len(self.scores) != len(self.labels):
            raise ValueError("score vector and label order disagree")


class SequenceClassifierNet(nn.Module):
    """Shared encoder; one linear head per task over the summary vector."""

    def __init__(self, backbone: nn.Module, hidden_size: int, tasks: dict[str, int]):
        super().__init__()
        self.backbone = backbone
        self.tasks = dict(tasks)
        # keys are prefixed: ModuleDict forbids names that shadow nn.Module
        # attributes ("type" does)
        self.heads = nn.ModuleDict({f"head_{t}": nn.Linear(hidden_size, n) for t, n in tasks.items()})

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> dict[str, torch.Tensor]:
        summary = self.backbone(ids, mask)[:, 0]
        return {t: self.heads[f"head_{t}"](summary) for t in self.tasks}


def classify_one(
    net: SequenceClassifierNet, encoded: EncodedInput, pad_id: int, task: str, labels: tuple
) -> LabelPrediction:
    ids, mask = collate_ids([encoded.ids], pad_id)
    with torch.no_grad():
        net.eval()
        logits = net(ids, mask)[task][0]
        probs = torch.softmax(logits, dim=-1).numpy()
    return LabelPrediction(labels[int(probs.argmax())], probs, labels)


def _classifier_loss(net, batch, pad_id, class_weights=None):
    ids, mask = collate_ids([encoded.ids for encoded, _ in batch], pad_id)
    logits = net(ids, mask)
    loss = torch.zeros(())
    for task in net.tasks:
        gold = torch.tensor([targets[task] for _, targets in batch], dtype=torch.long)
        weight = class_weights.get(task) if class_weights else None
        loss = loss + F.cross_entropy(logits[task], gold, weight=weight)
    return loss


def _warn_on_empty_classes(samples: Sequence[Sample]) -> None:
    for labels, getter, name in (
        (TYPE_LABELS, lambda s: s.itype, "inconsistency type"),
        (COMPONENT_LABELS, lambda s: s.component, "claim component"),
    ):
        present = {getter(s) for s in samples}
        missing = [l.value for l in labels if l not in present]
        if missing:
            logger.warning("training split has no %s samples for: %s", name, ", ".join(missing))


class StageBModel:
    """Trained Stage B predictor."""

    def __init__(
        self,
        strategy: StageBStrategy,
        bundle: FamilyBundle,
        input_encoder: InputEncoder,
        nets: dict[str, nn.Module],
        config: Optional[TrainConfig] = None,
    ):
        self.strategy = strategy
        self.bundle = bundle
        self.input_encoder = input_encoder
        self.nets = nets
        self.config = config

    @property
    def is_generative(self) -> bool:
        return self.bundle.kind == "generative"

    def _generate_labels(self, net, encoded) -> tuple[Optional[InconsistencyType], Optional[ClaimComponent]]:
        ids, mask = collate_ids([encoded.ids], self.bundle.tokenizer.pad_id)
        text = self.bundle.tokenizer.decode(net.generate(ids, mask)[0])
        parsed = parse_generation_output(text, self.input_encoder.scheme)
        return parsed.itype, parsed.component

    def _one_hot(self, label, labels) -> LabelPrediction:
        scores = np.zeros(len(labels))
        scores[labels.index(label)] = 1.0
        return LabelPrediction(label, scores, labels)

    def predict(
        self, claim: str, context: str, srt: FactTriple, cspan: CharSpan
    ) -> tuple[LabelPrediction, LabelPrediction]:
        """Returns (type prediction, component prediction). Under two_step
        the component is predicted first and appended to the type input."""
        pad_id = self.bundle.tokenizer.pad_id
        base = self.input_encoder.build_stage_b_input(claim, context, srt, cspan)

        if self.is_generative:
            if self.strategy is StageBStrategy.MULTI_TASK:
                itype, component = self._generate_labels(self.nets["joint"], base)
            elif self.strategy is StageBStrategy.INDIVIDUAL:
                itype, _ = self._generate_labels(self.nets["type"], base)
                _, component = self._generate_labels(self.nets["component"], base)
            else:
                _, component = self._generate_labels(self.nets["component"], base)
                augmented = self.input_encoder.build_stage_b_input(
                    claim, context, srt, cspan, component or COMPONENT_LABELS[0]
                )
                itype, _ = self._generate_labels(self.nets["type"], augmented)
            itype = itype or TYPE_LABELS[0]
            component = component or COMPONENT_LABELS[0]
            return self._one_hot(itype, TYPE_LABELS), self._one_hot(component, COMPONENT_LABELS)

        if self.strategy is StageBStrategy.MULTI_TASK:
            net = self.nets["joint"]
            tp = classify_one(net, base, pad_id, "type", TYPE_LABELS)
            cp = classify_one(net, base, pad_id, "component", COMPONENT_LABELS)
            return tp, cp
        if self.strategy is StageBStrategy.INDIVIDUAL:
            tp = classify_one(self.nets["type"], base, pad_id, "type", TYPE_LABELS)
            cp = classify_one(self.nets["component"], base, pad_id, "component", COMPONENT_LABELS)
            return tp, cp
        cp = classify_one(self.nets["component"], base, pad_id, "component", COMPONENT_LABELS)
        augmented = self.input_encoder.build_stage_b_input(claim, context, srt, cspan, cp.label)
        tp = classify_one(self.nets["type"], augmented, pad_id, "type", TYPE_LABELS)
        return tp, cp

    # -- persistence ---------------------------------------------------------

    def save(self, directory: str | Path) -> None:
        manifest = {
            "stage": "b",
            "strategy": self.strategy.value,
            "family": self.bundle.name,
            "kind": self.bundle.kind,
            "scheme": self.input_encoder.scheme.to_json(),
            "max_sequence_length": self.input_encoder.max_len,
            "tiny_kwargs": (self.config.tiny_kwargs if self.config else {}),
            "type_labels": [l.value for l in TYPE_LABELS],
            "component_labels": [l.value for l in COMPONENT_LABELS],
            "parts": sorted(self.nets),
            "tasks": {
                name: getattr(net, "tasks", {}) for name, net in self.nets.items()
            },
        }
        save_bundle(Path(directory), self.bundle, manifest, self.nets)

    @classmethod
    def load(cls, directory: str | Path) -> "StageBModel":
        manifest, bundle, states = load_bundle(Path(directory))
        if manifest.get("stage") != "b":
            raise TrainingError(f"checkpoint at {directory} is not a Stage B checkpoint")
        input_encoder = InputEncoder(
            bundle.tokenizer, SpecialTokenScheme.from_json(manifest["scheme"]), manifest["max_sequence_length"]
        )
        nets = {}
        for part, state in states.items():
            if manifest["kind"] == "generative":
                net = clone_backbone(bundle, manifest)
            else:
                tasks = {t: int(n) for t, n in manifest["tasks"][part].items()}
                net = SequenceClassifierNet(clone_backbone(bundle, manifest), bundle.hidden_size, tasks)
            net.load_state_dict(state)
            nets[part] = net
        return cls(StageBStrategy(manifest["strategy"]), bundle, input_encoder, nets)


# ---------------------------------------------------------------------------
# training


@dataclass
class StageBTrainResult:
    model: StageBModel
    logs: dict[str, FitResult]
    input_mode: str = "gold"

    @property
    def checkpoint_count(self) -> int:
        return len(self.logs)

    @property
    def training_order(self) -> tuple[str, ...]:
        return tuple(self.logs)


def _eval_stage_b(model: StageBModel, samples: Sequence[Sample]) -> dict:
    type_pred, type_gold, comp_pred, comp_gold = [], [], [], []
    for s in samples:
        tp, cp = model.predict(s.claim, s.context, s.triple, s.incon_context_span)
        type_pred.append(tp.label)
        type_gold.append(s.itype)
        comp_pred.append(cp.label)
        comp_gold.append(s.component)
    tr = classification_report(type_pred, type_gold, TYPE_LABELS)
    cr = classification_report(comp_pred, comp_gold, COMPONENT_LABELS)
    return {
        "type_accuracy": tr.accuracy,
        "type_weighted_f1": tr.weighted_f1,
        "component_accuracy": cr.accuracy,
        "component_weighted_f1": cr.weighted_f1,
        "mean_weighted_f1": (tr.weighted_f1 + cr.weighted_f1) / 2,
    }


def train_stage_b(
    train: Sequence[Sample],
    valid: Optional[Sequence[Sample]],
    strategy: StageBStrategy | str,
    config: TrainConfig,
    scheme: Optional[SpecialTokenScheme] = None,
    class_weighted: bool = False,
) -> StageBTrainResult:
    """Train Stage B on gold triple/context-span inputs (predicted inputs
    are an evaluation-time mode). multi_task sums the two cross-entropies;
    an empty class in the training split warns and proceeds."""
    strategy = StageBStrategy(getattr(strategy, "value", strategy))
    config.validate()
    seed_everything(config.seed)
    if not train:
        raise TrainingError("empty training set")
    if valid is None or not valid:
        valid = train
    scheme = scheme or SpecialTokenScheme()
    _warn_on_empty_classes(train)

    texts = [s.claim for s in train] + [s.context for s in train]
    bundle = build_family(
        config.checkpoint_family,
        scheme,
        train_texts=texts + [l.value for l in TYPE_LABELS] + [l.value for l in COMPONENT_LABELS],
        max_len=config.max_sequence_length,
        tiny_kwargs=config.tiny_kwargs,
    )
    input_encoder = InputEncoder(bundle.tokenizer, scheme, config.max_sequence_length)
    pad_id = bundle.tokenizer.pad_id

    if bundle.is_generative:
        return _train_stage_b_generative(train, valid, strategy, config, bundle, input_encoder)

    weights = None
    if class_weighted:
        def inverse_freq(labels, getter):
            counts = np.array([max(1, sum(1 for s in train if getter(s) == l)) for l in labels], dtype=np.float32)
            w = counts.sum() / (len(labels) * counts)
            return torch.tensor(w)

        weights = {
            "type": inverse_freq(TYPE_LABELS, lambda s: s.itype),
            "component": inverse_freq(COMPONENT_LABELS, lambda s: s.component),
        }

    def examples_for(component_in_input: bool):
        out = []
        for s in train:
            encoded = input_encoder.build_stage_b_input(
                s.claim, s.context, s.triple, s.incon_context_span,
                s.component if component_in_input else None,
            )
            out.append((encoded, {"type": TYPE_LABELS.index(s.itype), "component": COMPONENT_LABELS.index(s.component)}))
        return out

    def fresh_net(tasks: dict[str, int]) -> SequenceClassifierNet:
        fresh = build_family(
            config.checkpoint_family,
            scheme,
            tokenizer=bundle.tokenizer if bundle.name == "tiny" else None,
            train_texts=texts,
            max_len=config.max_sequence_length,
            tiny_kwargs=config.tiny_kwargs,
        )
        return SequenceClassifierNet(fresh.backbone, fresh.hidden_size, tasks)

    logs: dict[str, FitResult] = {}
    n_type, n_comp = len(TYPE_LABELS), len(COMPONENT_LABELS)

    if strategy is StageBStrategy.MULTI_TASK:
        net = SequenceClassifierNet(bundle.backbone, bundle.hidden_size, {"type": n_type, "component": n_comp})
        model = StageBModel(strategy, bundle, input_encoder, {"joint": net}, config)
        logs["joint"] = fit(
            net, examples_for(False),
            lambda m, b: _classifier_loss(m, b, pad_id, weights),
            config,
            eval_fn=lambda m: _eval_stage_b(model, valid),
            select_metric="mean_weighted_f1",
        )
        return StageBTrainResult(model, logs)

    if strategy is StageBStrategy.INDIVIDUAL:
        type_net = SequenceClassifierNet(bundle.backbone, bundle.hidden_size, {"type": n_type})
        comp_net = fresh_net({"component": n_comp})
        model = StageBModel(strategy, bundle, input_encoder, {"type": type_net, "component": comp_net}, config)
        logs["type"] = fit(
            type_net, examples_for(False),
            lambda m, b: _classifier_loss(m, b, pad_id, weights), config,
            eval_fn=lambda m: _eval_stage_b(model, valid), select_metric="type_weighted_f1",
        )
        logs["component"] = fit(
            comp_net, examples_for(False),
            lambda m, b: _classifier_loss(m, b, pad_id, weights), config,
            eval_fn=lambda m: _eval_stage_b(model, valid), select_metric="component_weighted_f1",
        )
        return StageBTrainResult(model, logs)

    # two_step: component checkpoint is trained before the type checkpoint,
    # whose training input carries the gold component section.
    comp_net = SequenceClassifierNet(bundle.backbone, bundle.hidden_size, {"component": n_comp})
    type_net = fresh_net({"type": n_type})
    model = StageBModel(strategy, bundle, input_encoder, {"component": comp_net, "type": type_net}, config)
    logs["component"] = fit(
        comp_net, examples_for(False),
        lambda m, b: _classifier_loss(m, b, pad_id, weights), config,
        eval_fn=lambda m: _eval_stage_b(model, valid), select_metric="component_weighted_f1",
    )
    logs["type"] = fit(
        type_net, examples_for(True),
        lambda m, b: _classifier_loss(m, b, pad_id, weights), config,
        eval_fn=lambda m: _eval_stage_b(model, valid), select_metric="type_weighted_f1",
    )
    return StageBTrainResult(model, logs)


def _train_stage_b_generative(train, valid, strategy, config, bundle, input_encoder):
    tok = bundle.tokenizer
    scheme = input_encoder.scheme

    def pairs_for(fields_of, component_in_input: bool):
        out = []
        for s in train:
            encoded = input_encoder.build_stage_b_input(
                s.claim, s.context, s.triple, s.incon_context_span,
                s.component if component_in_input else None,
            )
            target = build_generation_target(fields_of(s), scheme)
            out.append((encoded.ids, tuple([tok.bos_id] + tok.encode_string(target) + [tok.eos_id])))
        return out

    type_fields = lambda s: GenerationFields(itype=s.itype.value)
    comp_fields = lambda s: GenerationFields(claim_component=s.component.value)
    joint_fields = lambda s: GenerationFields(claim_component=s.component.value, itype=s.itype.value)

    logs: dict[str, FitResult] = {}

    def gen_net():
        fresh = build_family(
            config.checkpoint_family, scheme, tokenizer=tok,
            max_len=config.max_sequence_length, tiny_kwargs=config.tiny_kwargs,
        )
        return fresh.backbone

    if strategy is StageBStrategy.MULTI_TASK:
        net = bundle.backbone
        model = StageBModel(strategy, bundle, input_encoder, {"joint": net}, config)
        logs["joint"] = fit(
            net, pairs_for(joint_fields, False),
            lambda m, b: seq2seq_loss(m, b, tok.pad_id), config,
            eval_fn=lambda m: _eval_stage_b(model, valid), select_metric="mean_weighted_f1",
        )
        return StageBTrainResult(model, logs)

    comp_net = bundle.backbone
    type_net = gen_net()
    model = StageBModel(strategy, bundle, input_encoder, {"component": comp_net, "type": type_net}, config)
    logs["component"] = fit(
        comp_net, pairs_for(comp_fields, False),
        lambda m, b: seq2seq_loss(m, b, tok.pad_id), config,
        eval_fn=lambda m: _eval_stage_b(model, valid), select_metric="component_weighted_f1",
    )
    logs["type"] = fit(
        type_net, pairs_for(type_fields, strategy is StageBStrategy.TWO_STEP),
        lambda m, b: seq2seq_loss(m, b, tok.pad_id), config,
        eval_fn=lambda m: _eval_stage_b(model, valid), select_metric="type_weighted_f1",
    )
    return StageBTrainResult(model, logs)


def predict_stage_b(
    model: StageBModel,
    claim: str,
    context: str,
    srt: FactTriple,
    cspan: CharSpan,
    strategy: StageBStrategy | str | None = None,
) -> tuple[LabelPrediction, LabelPrediction]:
    if strategy is not None and StageBStrategy(getattr(strategy, "value", strategy)) is not model.strategy:
        raise TrainingError(f"model was trained with strategy {model.strategy.value}, not {strategy}")
    return model.predict(claim, context, srt, cspan)
