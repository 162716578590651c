"""Stage C: predict coarse (20-way) and fine-grained (60-way) inconsistent
entity types from the inconsistent context span and the claim-side span of
the inconsistent component.

Classification variants use a softmax head. Embedding variants encode each
class *name* with the same encoder, keep the L2-normalized summary vectors
in a table, and predict by cosine argmax; they train with a cosine
embedding objective (all other classes act as negatives, margin 0).
Embedding variants are only defined for discriminative checkpoints.
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

from .corpus import (
    CharSpan,
    CoarseEntityType,
    FineLabelVocab,
    Sample,
    build_fine_label_vocab,
)
from .classifier import LabelPrediction, SequenceClassifierNet, classify_one
from .encoders import FamilyBundle, build_family, clone_backbone, collate_ids, load_bundle, save_bundle, seed_everything
from .encoding import (
    GenerationFields,
    InputEncoder,
    SpecialTokenScheme,
    build_generation_target,
    parse_generation_output,
)
from .metrics import classification_report
from .training import FitResult, TrainConfig, TrainingError, fit, seq2seq_loss

logger = logging.getLogger(__name__)


class StageCStrategy(str, Enum):
    INDIVIDUAL = "individual"
    TWO_STEP = "two_step"
    INDIVIDUAL_EMBEDDING = "individual_embedding"
    TWO_STEP_EMBEDDING = "two_step_embedding"
    TWO_STEP_MIX = "two_step_mix"


COARSE_LABELS: tuple[CoarseEntityType, ...] = tuple(CoarseEntityType)

_EMBEDDING_STRATEGIES = {
    StageCStrategy.INDIVIDUAL_EMBEDDING,
    StageCStrategy.TWO_STEP_EMBEDDING,
    StageCStrategy.TWO_STEP_MIX,
}
_TWO_STEP_STRATEGIES = {
    StageCStrategy.TWO_STEP,
    StageCStrategy.TWO_STEP_EMBEDDING,
    StageCStrategy.TWO_STEP_MIX,
}


def coarse_uses_embedding(strategy: StageCStrategy) -> bool:
    return strategy in _EMBEDDING_STRATEGIES


def fine_uses_embedding(strategy: StageCStrategy) -> bool:
    return strategy in (StageCStrategy.INDIVIDUAL_EMBEDDING, StageCStrategy.TWO_STEP_EMBEDDING)


def fine_needs_coarse(strategy: StageCStrategy) -> bool:
    return strategy in _TWO_STEP_STRATEGIES


@dataclass(frozen=True)
class ClassEmbeddingTable:
    """One unit-norm vector per class name, in label order."""

    labels: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self):
        if len(self.labels) != len(self.vectors):
            raise ValueError("one vector per label required")

    def save(self, path: Path) -> None:
        np.savez(path, labels=np.array(self.labels), vectors=self.vectors)

    @classmethod
    def load(cls, path: Path) -> "ClassEmbeddingTable":
        data = np.load(path, allow_pickle=False)
        return cls(tuple(str(l) for l in data["labels"]), data["vectors"])


class EmbeddingNet(nn.Module):
    """Backbone whose summary vector is compared against class-name vectors."""

    def __init__(self, backbone: nn.Module, hidden_size: int):
        super().__init__()
        self.backbone = backbone
        self.hidden_size = hidden_size

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        return self.backbone(ids, mask)[:, 0]


def _summary_vectors(net: EmbeddingNet, encoded_list, pad_id: int, grad: bool = False) -> torch.Tensor:
    ids, mask = collate_ids([e.ids for e in encoded_list], pad_id)
    if grad:
        return net(ids, mask)
    with torch.no_grad():
        net.eval()
        return net(ids, mask)


def embed_class_names(
    net: EmbeddingNet, input_encoder: InputEncoder, labels: Sequence[str]
) -> ClassEmbeddingTable:
    """Encode each class name as a single input; its L2-normalized summary
    vector becomes the class vector. Duplicate labels are an error."""
    if not labels:
        raise ValueError("labels must be non-empty")
    if len(set(labels)) != len(labels):
        raise ValueError("duplicate class labels")
    encoded = [input_encoder.encode_plain(label) for label in labels]
    vectors = _summary_vectors(net, encoded, input_encoder.tokenizer.pad_id)
    vectors = F.normalize(vectors, dim=-1).numpy().astype(np.float64)
    return ClassEmbeddingTable(tuple(labels), vectors)


def cosine_embedding_objective(input_vec, positive_class_vec, negative_class_vecs, margin: float = 0.0):
    """(1 - cos(input, positive)) + sum over negatives of
    max(0, cos(input, negative) - margin). Works on torch tensors (keeping
    the graph) or array-likes; raises on dimension mismatch."""
    v = input_vec if torch.is_tensor(input_vec) else torch.as_tensor(np.asarray(input_vec, dtype=np.float64))
    p = positive_class_vec if torch.is_tensor(positive_class_vec) else torch.as_tensor(
        np.asarray(positive_class_vec, dtype=np.float64)
    )
    if v.shape[-1] != p.shape[-1]:
        raise ValueError(f"dimension mismatch: input {v.shape[-1]} vs positive {p.shape[-1]}")
    loss = 1.0 - F.cosine_similarity(v, p, dim=-1)
    for neg in negative_class_vecs:
        n = neg if torch.is_tensor(neg) else torch.as_tensor(np.asarray(neg, dtype=np.float64))
        if n.shape[-1] != v.shape[-1]:
            raise ValueError(f"dimension mismatch: input {v.shape[-1]} vs negative {n.shape[-1]}")
        loss = loss + torch.clamp(F.cosine_similarity(v, n, dim=-1) - margin, min=0.0)
    return loss


def cosine_argmax(input_vec: np.ndarray, table: ClassEmbeddingTable) -> tuple[str, np.ndarray]:
    """Nearest class by cosine; invariant to positive rescaling of input."""
    v = np.asarray(input_vec, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm > 0:
        v = v / norm
    scores = table.vectors @ v
    return table.labels[int(np.argmax(scores))], scores


# ---------------------------------------------------------------------------
# model


class StageCModel:
    """Trained coarse+fine entity typer (two checkpoints, coarse then fine)."""

    def __init__(
        self,
        strategy: StageCStrategy,
        bundle: FamilyBundle,
        input_encoder: InputEncoder,
        fine_vocab: FineLabelVocab,
        coarse_net: nn.Module,
        fine_net: nn.Module,
        coarse_table: Optional[ClassEmbeddingTable] = None,
        fine_table: Optional[ClassEmbeddingTable] = None,
        config: Optional[TrainConfig] = None,
    ):
        self.strategy = strategy
        self.bundle = bundle
        self.input_encoder = input_encoder
        self.fine_vocab = fine_vocab
        self.coarse_net = coarse_net
        self.fine_net = fine_net
        self.coarse_table = coarse_table
        self.fine_table = fine_table
        self.config = config
        if coarse_uses_embedding(strategy) and coarse_table is None:
            raise TrainingError("embedding strategy requires a class embedding table for coarse labels")
        if fine_uses_embedding(strategy) and fine_table is None:
            raise TrainingError("embedding strategy requires a class embedding table for fine labels")

    @property
    def is_generative(self) -> bool:
        return self.bundle.kind == "generative"

    def _generate_label(self, net, encoded, want: str) -> Optional[str]:
        ids, mask = collate_ids([encoded.ids], self.bundle.tokenizer.pad_id)
        text = self.bundle.tokenizer.decode(net.generate(ids, mask)[0])
        parsed = parse_generation_output(text, self.input_encoder.scheme, fine_labels=self.fine_vocab.labels)
        if want == "coarse":
            return parsed.coarse.value if parsed.coarse else None
        return parsed.fine

    def predict_coarse(self, cspan: CharSpan, claim_span: CharSpan) -> LabelPrediction:
        encoded = self.input_encoder.build_stage_c_input(cspan, claim_span)
        pad_id = self.input_encoder.tokenizer.pad_id
        if self.is_generative:
            raw = self._generate_label(self.coarse_net, encoded, "coarse") or COARSE_LABELS[0].value
            label = CoarseEntityType(raw)
            scores = np.zeros(len(COARSE_LABELS))
            scores[COARSE_LABELS.index(label)] = 1.0
            return LabelPrediction(label, scores, COARSE_LABELS)
        if coarse_uses_embedding(self.strategy):
            vec = _summary_vectors(self.coarse_net, [encoded], pad_id)[0].numpy()
            label, scores = cosine_argmax(vec, self.coarse_table)
            return LabelPrediction(CoarseEntityType(label), scores, tuple(CoarseEntityType(l) for l in self.coarse_table.labels))
        return classify_one(self.coarse_net, encoded, pad_id, "coarse", COARSE_LABELS)

    def predict_fine(
        self, cspan: CharSpan, claim_span: CharSpan, coarse: Optional[CoarseEntityType] = None
    ) -> LabelPrediction:
        if fine_needs_coarse(self.strategy) and coarse is None:
            raise TrainingError(f"strategy {self.strategy.value} requires a coarse label for fine prediction")
        if not fine_needs_coarse(self.strategy):
            coarse = None
        encoded = self.input_encoder.build_stage_c_input(cspan, claim_span, coarse)
        pad_id = self.input_encoder.tokenizer.pad_id
        if self.is_generative:
            raw = self._generate_label(self.fine_net, encoded, "fine") or self.fine_vocab.labels[0]
            scores = np.zeros(len(self.fine_vocab.labels))
            scores[self.fine_vocab.labels.index(raw)] = 1.0
            return LabelPrediction(raw, scores, self.fine_vocab.labels)
        if fine_uses_embedding(self.strategy):
            vec = _summary_vectors(self.fine_net, [encoded], pad_id)[0].numpy()
            label, scores = cosine_argmax(vec, self.fine_table)
            return LabelPrediction(label, scores, self.fine_table.labels)
        return classify_one(self.fine_net, encoded, pad_id, "fine", self.fine_vocab.labels)

    # -- persistence ---------------------------------------------------------

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        manifest = {
            "stage": "c",
            "strategy": self.strategy.value,
            "family": self.bundle.name,
            "kind": self.bundle.kind,
            "pooling": "summary-token-final-layer",
            "scheme": self.input_encoder.scheme.to_json(),
            "max_sequence_length": self.input_encoder.max_len,
            "tiny_kwargs": (self.config.tiny_kwargs if self.config else {}),
            "coarse_labels": [l.value for l in COARSE_LABELS],
            "fine_labels": list(self.fine_vocab.labels),
            "fine_to_coarse": {k: v.value for k, v in self.fine_vocab.fine_to_coarse.items()},
            "parts": ["coarse", "fine"],
            "tasks": {
                name: getattr(net, "tasks", {})
                for name, net in (("coarse", self.coarse_net), ("fine", self.fine_net))
            },
        }
        save_bundle(directory, self.bundle, manifest, {"coarse": self.coarse_net, "fine": self.fine_net})
        if self.coarse_table is not None:
            self.coarse_table.save(directory / "coarse_class_embeddings.npz")
        if self.fine_table is not None:
            self.fine_table.save(directory / "fine_class_embeddings.npz")

    @classmethod
    def load(cls, directory: str | Path) -> "StageCModel":
        directory = Path(directory)
        manifest, bundle, states = load_bundle(directory)
        if manifest.get("stage") != "c":
            raise TrainingError(f"checkpoint at {directory} is not a Stage C checkpoint")
        strategy = StageCStrategy(manifest["strategy"])
        input_encoder = InputEncoder(
            bundle.tokenizer, SpecialTokenScheme.from_json(manifest["scheme"]), manifest["max_sequence_length"]
        )
        fine_vocab = FineLabelVocab(
            tuple(manifest["fine_labels"]),
            {k: CoarseEntityType(v) for k, v in manifest["fine_to_coarse"].items()},
        )
        nets = {}
        for part, state in states.items():
            if manifest["kind"] == "generative":
                net = clone_backbone(bundle, manifest)
            elif manifest["tasks"][part]:
                tasks = {t: int(n) for t, n in manifest["tasks"][part].items()}
                net = SequenceClassifierNet(clone_backbone(bundle, manifest), bundle.hidden_size, tasks)
            else:
                net = EmbeddingNet(clone_backbone(bundle, manifest), bundle.hidden_size)
            net.load_state_dict(state)
            nets[part] = net
        coarse_table = fine_table = None
        if (directory / "coarse_class_embeddings.npz").exists():
            coarse_table = ClassEmbeddingTable.load(directory / "coarse_class_embeddings.npz")
        if (directory / "fine_class_embeddings.npz").exists():
            fine_table = ClassEmbeddingTable.load(directory / "fine_class_embeddings.npz")
        return cls(
            strategy, bundle, input_encoder, fine_vocab,
            nets["coarse"], nets["fine"], coarse_table, fine_table,
        )


# ---------------------------------------------------------------------------
# training


@dataclass
class StageCTrainResult:
    model: StageCModel
    logs: dict[str, FitResult]  # insertion order records training order
    eligible: int
    excluded: int

    @property
    def training_order(self) -> tuple[str, ...]:
        return tuple(self.logs)


def _stage_c_inputs(s: Sample, input_encoder: InputEncoder, coarse: Optional[CoarseEntityType]):
    return input_encoder.build_stage_c_input(
        s.incon_context_span, s.claim_span_for_component(), coarse
    )


def _embedding_batch_loss(
    net: EmbeddingNet,
    batch,
    input_encoder: InputEncoder,
    label_texts: tuple[str, ...],
    margin: float = 0.0,
):
    """Batch form of the cosine embedding objective. Deterministically,
    every other class in the batch's label space (the classes the batch's
    gold labels span) serves as a negative; no stochastic sampling."""
    pad_id = input_encoder.tokenizer.pad_id
    inputs = _summary_vectors(net, [encoded for encoded, _ in batch], pad_id, grad=True)
    class_encoded = [input_encoder.encode_plain(l) for l in label_texts]
    classes = _summary_vectors(net, class_encoded, pad_id, grad=True)
    cos = F.cosine_similarity(inputs.unsqueeze(1), classes.unsqueeze(0), dim=-1)  # [B, N]
    gold = torch.tensor([gi for _, gi in batch], dtype=torch.long)
    pos = cos.gather(1, gold.unsqueeze(1)).squeeze(1)
    negative_mask = torch.zeros_like(cos, dtype=torch.bool)
    negative_mask[:, sorted(set(gold.tolist()))] = True
    negative_mask.scatter_(1, gold.unsqueeze(1), False)
    hinge = torch.clamp(cos - margin, min=0.0) * negative_mask
    return ((1.0 - pos) + hinge.sum(dim=1)).mean()


def _mean_cosine_to_gold(net, examples, input_encoder, label_texts) -> float:
    pad_id = input_encoder.tokenizer.pad_id
    inputs = _summary_vectors(net, [encoded for encoded, _ in examples], pad_id)
    classes = _summary_vectors(net, [input_encoder.encode_plain(l) for l in label_texts], pad_id)
    cos = F.cosine_similarity(inputs.unsqueeze(1), classes.unsqueeze(0), dim=-1)
    gold = torch.tensor([gi for _, gi in examples], dtype=torch.long)
    return float(cos.gather(1, gold.unsqueeze(1)).mean())


def train_stage_c(
    train: Sequence[Sample],
    valid: Optional[Sequence[Sample]],
    strategy: StageCStrategy | str,
    config: TrainConfig,
    scheme: Optional[SpecialTokenScheme] = None,
) -> StageCTrainResult:
    """Train Stage C on entity-labeled samples only (others are excluded
    and counted). Two checkpoints are produced in coarse-then-fine order;
    two-step variants append the coarse label to the fine input (gold at
    train time, predicted at evaluation time).
    """
    strategy = StageCStrategy(getattr(strategy, "value", strategy))
    config.validate()
    seed_everything(config.seed)
    eligible = [s for s in train if s.has_entity_type]
    excluded = len(train) - len(eligible)
    if not eligible:
        raise TrainingError("no entity-labeled samples to train on")
    valid_eligible = [s for s in (valid or []) if s.has_entity_type] or eligible
    scheme = scheme or SpecialTokenScheme()

    fine_vocab = build_fine_label_vocab(eligible)
    label_texts = [l.value for l in COARSE_LABELS] + list(fine_vocab.labels)
    texts = (
        [s.incon_context_span.text for s in eligible]
        + [s.claim_span_for_component().text for s in eligible]
        + label_texts
    )
    bundle = build_family(
        config.checkpoint_family, scheme,
        train_texts=texts, max_len=config.max_sequence_length, tiny_kwargs=config.tiny_kwargs,
    )
    if bundle.is_generative and strategy in _EMBEDDING_STRATEGIES:
        raise TrainingError("embedding-based strategies are not defined for generative checkpoint families")
    input_encoder = InputEncoder(bundle.tokenizer, scheme, config.max_sequence_length)
    pad_id = bundle.tokenizer.pad_id

    if bundle.is_generative:
        return _train_stage_c_generative(
            eligible, valid_eligible, strategy, config, bundle, input_encoder, fine_vocab, excluded
        )

    def fresh_backbone():
        return build_family(
            config.checkpoint_family, scheme,
            tokenizer=bundle.tokenizer if bundle.name == "tiny" else None,
            train_texts=texts, max_len=config.max_sequence_length, tiny_kwargs=config.tiny_kwargs,
        ).backbone

    logs: dict[str, FitResult] = {}
    coarse_values = tuple(l.value for l in COARSE_LABELS)

    # -- coarse checkpoint (first) -----------------------------------------
    coarse_examples = [
        (_stage_c_inputs(s, input_encoder, None), COARSE_LABELS.index(s.coarse)) for s in eligible
    ]
    if coarse_uses_embedding(strategy):
        coarse_net = EmbeddingNet(bundle.backbone, bundle.hidden_size)

        def eval_coarse(net):
            table = embed_class_names(net, input_encoder, coarse_values)
            pred, gold = [], []
            for s in valid_eligible:
                vec = _summary_vectors(net, [_stage_c_inputs(s, input_encoder, None)], pad_id)[0].numpy()
                label, _ = cosine_argmax(vec, table)
                pred.append(CoarseEntityType(label))
                gold.append(s.coarse)
            report = classification_report(pred, gold, COARSE_LABELS)
            return {"coarse_accuracy": report.accuracy, "coarse_weighted_f1": report.weighted_f1}

        logs["coarse"] = fit(
            coarse_net, coarse_examples,
            lambda m, b: _embedding_batch_loss(m, b, input_encoder, coarse_values),
            config,
            eval_fn=eval_coarse,
            select_metric="coarse_weighted_f1",
            extra_log=lambda m: {
                "mean_cos_gold": _mean_cosine_to_gold(m, coarse_examples, input_encoder, coarse_values)
            },
        )
        coarse_table = embed_class_names(coarse_net, input_encoder, coarse_values)
    else:
        coarse_net = SequenceClassifierNet(bundle.backbone, bundle.hidden_size, {"coarse": len(COARSE_LABELS)})

        def eval_coarse(net):
            pred = [
                classify_one(net, _stage_c_inputs(s, input_encoder, None), pad_id, "coarse", COARSE_LABELS).label
                for s in valid_eligible
            ]
            report = classification_report(pred, [s.coarse for s in valid_eligible], COARSE_LABELS)
            return {"coarse_accuracy": report.accuracy, "coarse_weighted_f1": report.weighted_f1}

        def coarse_loss(net, batch):
            ids, mask = collate_ids([e.ids for e, _ in batch], pad_id)
            logits = net(ids, mask)["coarse"]
            return F.cross_entropy(logits, torch.tensor([g for _, g in batch], dtype=torch.long))

        logs["coarse"] = fit(
            coarse_net, coarse_examples, coarse_loss, config,
            eval_fn=eval_coarse, select_metric="coarse_weighted_f1",
        )
        coarse_table = None

    # -- fine checkpoint (second) -------------------------------------------
    with_coarse = fine_needs_coarse(strategy)
    fine_examples = [
        (_stage_c_inputs(s, input_encoder, s.coarse if with_coarse else None), fine_vocab.index(s.fine))
        for s in eligible
    ]
    fine_values = fine_vocab.labels

    if fine_uses_embedding(strategy):
        fine_net = EmbeddingNet(fresh_backbone(), bundle.hidden_size)

        def eval_fine(net):
            table = embed_class_names(net, input_encoder, fine_values)
            pred, gold = [], []
            for s in valid_eligible:
                encoded = _stage_c_inputs(s, input_encoder, s.coarse if with_coarse else None)
                vec = _summary_vectors(net, [encoded], pad_id)[0].numpy()
                label, _ = cosine_argmax(vec, table)
                pred.append(label)
                gold.append(s.fine)
            report = classification_report(pred, gold, fine_values)
            return {"fine_accuracy": report.accuracy, "fine_weighted_f1": report.weighted_f1}

        logs["fine"] = fit(
            fine_net, fine_examples,
            lambda m, b: _embedding_batch_loss(m, b, input_encoder, fine_values),
            config,
            eval_fn=eval_fine,
            select_metric="fine_weighted_f1",
            extra_log=lambda m: {
                "mean_cos_gold": _mean_cosine_to_gold(m, fine_examples, input_encoder, fine_values)
            },
        )
        fine_table = embed_class_names(fine_net, input_encoder, fine_values)
    else:
        fine_net = SequenceClassifierNet(fresh_backbone(), bundle.hidden_size, {"fine": len(fine_values)})

        def eval_fine(net):
            pred = []
            for s in valid_eligible:
                encoded = _stage_c_inputs(s, input_encoder, s.coarse if with_coarse else None)
                pred.append(classify_one(net, encoded, pad_id, "fine", fine_values).label)
            report = classification_report(pred, [s.fine for s in valid_eligible], fine_values)
            return {"fine_accuracy": report.accuracy, "fine_weighted_f1": report.weighted_f1}

        def fine_loss(net, batch):
            ids, mask = collate_ids([e.ids for e, _ in batch], pad_id)
            logits = net(ids, mask)["fine"]
            return F.cross_entropy(logits, torch.tensor([g for _, g in batch], dtype=torch.long))

        logs["fine"] = fit(
            fine_net, fine_examples, fine_loss, config,
            eval_fn=eval_fine, select_metric="fine_weighted_f1",
        )
        fine_table = None

    model = StageCModel(
        strategy, bundle, input_encoder, fine_vocab,
        coarse_net, fine_net, coarse_table, fine_table, config,
    )
    _log_fine_coarse_consistency(model, valid_eligible)
    return StageCTrainResult(model, logs, len(eligible), excluded)


def _log_fine_coarse_consistency(model: StageCModel, samples: Sequence[Sample]) -> None:
    """Fraction of fine predictions whose mapped coarse label agrees with
    the provided coarse label (logged, not asserted)."""
    agree = total = 0
    for s in samples:
        fine = model.predict_fine(
            s.incon_context_span, s.claim_span_for_component(),
            s.coarse if fine_needs_coarse(model.strategy) else None,
        )
        mapped = model.fine_vocab.fine_to_coarse.get(fine.label)
        if mapped is not None:
            total += 1
            agree += int(mapped == s.coarse)
    if total:
        logger.info("fine->coarse consistency with gold coarse: %.3f", agree / total)


def _train_stage_c_generative(eligible, valid, strategy, config, bundle, input_encoder, fine_vocab, excluded):
    tok = bundle.tokenizer
    scheme = input_encoder.scheme
    with_coarse = fine_needs_coarse(strategy)

    def pairs(kind):
        out = []
        for s in eligible:
            coarse_in = s.coarse if (kind == "fine" and with_coarse) else None
            encoded = _stage_c_inputs(s, input_encoder, coarse_in)
            fields = (
                GenerationFields(coarse=s.coarse.value) if kind == "coarse" else GenerationFields(fine=s.fine)
            )
            target = build_generation_target(fields, scheme)
            out.append((encoded.ids, tuple([tok.bos_id] + tok.encode_string(target) + [tok.eos_id])))
        return out

    fresh = build_family(
        config.checkpoint_family, scheme, tokenizer=tok,
        max_len=config.max_sequence_length, tiny_kwargs=config.tiny_kwargs,
    )
    coarse_net, fine_net = bundle.backbone, fresh.backbone
    model = StageCModel(strategy, bundle, input_encoder, fine_vocab, coarse_net, fine_net, config=config)

    def eval_coarse(net):
        pred = [model.predict_coarse(s.incon_context_span, s.claim_span_for_component()).label for s in valid]
        report = classification_report(pred, [s.coarse for s in valid], COARSE_LABELS)
        return {"coarse_accuracy": report.accuracy, "coarse_weighted_f1": report.weighted_f1}

    def eval_fine(net):
        pred = [
            model.predict_fine(
                s.incon_context_span, s.claim_span_for_component(), s.coarse if with_coarse else None
            ).label
            for s in valid
        ]
        report = classification_report(pred, [s.fine for s in valid], fine_vocab.labels)
        return {"fine_accuracy": report.accuracy, "fine_weighted_f1": report.weighted_f1}

    logs = {
        "coarse": fit(
            coarse_net, pairs("coarse"), lambda m, b: seq2seq_loss(m, b, tok.pad_id), config,
            eval_fn=eval_coarse, select_metric="coarse_weighted_f1",
        ),
        "fine": fit(
            fine_net, pairs("fine"), lambda m, b: seq2seq_loss(m, b, tok.pad_id), config,
            eval_fn=eval_fine, select_metric="fine_weighted_f1",
        ),
    }
    return StageCTrainResult(model, logs, len(eligible), excluded)


# ---------------------------------------------------------------------------
# functional wrappers matching the public operation names


def predict_coarse(model: StageCModel, cspan: CharSpan, claim_span: CharSpan) -> LabelPrediction:
    return model.predict_coarse(cspan, claim_span)


def predict_fine(
    model: StageCModel,
    cspan: CharSpan,
    claim_span: CharSpan,
    coarse: Optional[CoarseEntityType] = None,
) -> LabelPrediction:
    return model.predict_fine(cspan, claim_span, coarse)
