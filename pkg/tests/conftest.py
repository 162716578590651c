"""Shared fixtures: a deterministic synthetic corpus plus session-scoped
trained tiny models reused by the stage, pipeline, CLI, and acceptance
tests (training once keeps the suite fast)."""

from __future__ import annotations

import random

import pytest

from claimcheck.corpus import (
    CharSpan,
    ClaimComponent,
    CoarseEntityType,
    EMPTY_SPAN,
    FactTriple,
    InconsistencyType,
    Sample,
    dump_corpus,
)
from claimcheck.classifier import StageBStrategy, train_stage_b
from claimcheck.entity_typer import StageCStrategy, train_stage_c
from claimcheck.span_extractor import ExtractionStrategy, train_stage_a
from claimcheck.training import TrainConfig

SUBJECTS = [
    "alice kent", "bob marsh", "the red team", "doctor iva", "captain rey",
    "the museum board", "senator paz", "the harbor crew", "mira chen", "old tom",
    "the youth choir", "engineer kade", "the north club", "professor lin", "mayor ruiz",
    "the film union",
]
RELATIONS = [
    "opened", "painted", "visited", "sold", "closed", "guarded", "repaired",
    "designed", "toured", "funded", "mapped", "judged",
]
TARGETS = [
    "the old bridge", "a small gallery", "the north wing", "three boats",
    "the city archive", "a stone tower", "the summer fair", "two gardens",
    "the glass hall", "a long canal", "the west gate", "four murals",
]
MODIFIERS = ["quietly", "proudly", "slowly", "twice", "rarely", "openly", "early", "late"]
FILLERS = [
    "records from the archive show that",
    "a report published that winter says",
    "witnesses at the scene recall that",
    "the official registry states that",
]
TAILS = [
    "during the spring festival",
    "before the renovation started",
    "while the council watched",
    "after years of delay",
]

# fine label -> coarse label, a small consistent taxonomy
FINE_TO_COARSE = {
    "brand": CoarseEntityType.ENTERTAINMENT,
    "musician": CoarseEntityType.NAME,
    "age": CoarseEntityType.TIME,
    "sport": CoarseEntityType.PROFESSION,
    "ordinal": CoarseEntityType.QUANTITY,
    "river": CoarseEntityType.GEOGRAPHY,
    "tool": CoarseEntityType.MATERIAL,
    "club": CoarseEntityType.ORGANIZATION,
}
FINE_LABELS = sorted(FINE_TO_COARSE)


def _span_at(prefix: str, text: str) -> CharSpan:
    return CharSpan(len(prefix), len(prefix) + len(text), text)


def make_sample(rng: random.Random, sid: int, with_entity: bool = True) -> Sample:
    subj = rng.choice(SUBJECTS)
    rel = rng.choice(RELATIONS)
    tgt = rng.choice(TARGETS)
    mod = rng.choice(MODIFIERS)
    empty_target = rng.random() < 0.15

    # claim: "<subj> <mod> <rel>[ <tgt>]."
    claim = subj
    source = CharSpan(0, len(subj), subj)
    relation_text = f"{mod} {rel}"
    claim += " "
    relation = _span_at(claim, relation_text)
    claim += relation_text
    if empty_target:
        target = EMPTY_SPAN
        claim += "."
    else:
        claim += " "
        target = _span_at(claim, tgt)
        claim += tgt + "."

    # context contradicts one component; its inconsistent span is the
    # replacement phrase
    component = rng.choice(list(ClaimComponent))
    if empty_target and component in (ClaimComponent.TARGET_HEAD, ClaimComponent.TARGET_MODIFIER):
        component = ClaimComponent.RELATION_HEAD

    alt_subj = rng.choice([s for s in SUBJECTS if s != subj])
    alt_rel = rng.choice([r for r in RELATIONS if r != rel])
    alt_tgt = rng.choice([t for t in TARGETS if t != tgt])
    alt_mod = rng.choice([m for m in MODIFIERS if m != mod])

    if component in (ClaimComponent.SUBJECT_HEAD, ClaimComponent.SUBJECT_MODIFIER):
        replacement = alt_subj
        ctx_core = f"{replacement} {mod} {rel}" + ("" if empty_target else f" {tgt}")
    elif component is ClaimComponent.RELATION_HEAD:
        replacement = alt_rel
        ctx_core = f"{subj} {mod} {replacement}" + ("" if empty_target else f" {tgt}")
    elif component is ClaimComponent.RELATION_MODIFIER:
        replacement = alt_mod
        ctx_core = f"{subj} {replacement} {rel}" + ("" if empty_target else f" {tgt}")
    else:
        replacement = alt_tgt
        ctx_core = f"{subj} {mod} {rel} {replacement}"

    filler = rng.choice(FILLERS)
    tail = rng.choice(TAILS)
    prefix = f"{filler} "
    context = f"{prefix}{ctx_core} {tail}."
    at = context.index(replacement, len(prefix) - 1)
    incon_span = CharSpan(at, at + len(replacement), replacement)

    # head = last word, modifier = the words before it (when multiword)
    def head_mod(span: CharSpan):
        if span.is_empty:
            return None, None
        words = span.text.split()
        if len(words) == 1:
            return span, None
        head_text = words[-1]
        head_start = span.end - len(head_text)
        mod_text = span.text[: len(span.text) - len(head_text) - 1]
        return (
            CharSpan(head_start, span.end, head_text),
            CharSpan(span.start, span.start + len(mod_text), mod_text),
        )

    s_head, s_mod = head_mod(source)
    r_head, r_mod = head_mod(relation)
    t_head, t_mod = head_mod(target)

    itype = rng.choice(list(InconsistencyType))
    if with_entity:
        fine = rng.choice(FINE_LABELS)
        coarse = FINE_TO_COARSE[fine]
    else:
        fine = coarse = None

    return Sample(
        id=f"s{sid:04d}",
        claim=claim,
        context=context,
        triple=FactTriple(
            source=source,
            relation=relation,
            target=target,
            source_head=s_head,
            source_modifier=s_mod,
            relation_head=r_head,
            relation_modifier=r_mod,
            target_head=t_head,
            target_modifier=t_mod,
        ),
        incon_context_span=incon_span,
        component=component,
        itype=itype,
        coarse=coarse,
        fine=fine,
    )


def make_samples(n: int, seed: int = 7, entity_fraction: float = 1.0) -> list[Sample]:
    rng = random.Random(seed)
    return [make_sample(rng, i, with_entity=rng.random() < entity_fraction) for i in range(n)]


TINY = {"d_model": 96, "nhead": 4, "num_layers": 2, "dim_feedforward": 192}


def tiny_config(epochs: int, lr: float = 3e-4, seed: int = 11, family: str = "tiny") -> TrainConfig:
    return TrainConfig(
        checkpoint_family=family,
        batch_size=16,
        epochs=epochs,
        learning_rate=lr,
        seed=seed,
        max_sequence_length=128,
        tiny_kwargs=dict(TINY),
    )


@pytest.fixture(scope="session")
def corpus32():
    return make_samples(32, seed=5)


@pytest.fixture(scope="session")
def corpus64():
    return make_samples(64, seed=9)


@pytest.fixture(scope="session")
def stage_a_overfit(corpus32):
    """Stage A multi_task memorized on 32 samples (acceptance criterion)."""
    return train_stage_a(corpus32, corpus32, ExtractionStrategy.MULTI_TASK, tiny_config(epochs=100))


@pytest.fixture(scope="session")
def stage_b_overfit(corpus64):
    """Stage B multi_task memorized on 64 samples."""
    return train_stage_b(corpus64, corpus64, StageBStrategy.MULTI_TASK, tiny_config(epochs=60))


@pytest.fixture(scope="session")
def stage_c_overfit(corpus64):
    """Stage C two_step_mix memorized on 64 samples (the embedding-based
    coarse model needs a higher learning rate than the softmax heads)."""
    return train_stage_c(corpus64, corpus64, StageCStrategy.TWO_STEP_MIX, tiny_config(epochs=120, lr=1e-3))


@pytest.fixture(scope="session")
def trained_checkpoints(tmp_path_factory, stage_a_overfit, stage_b_overfit, stage_c_overfit):
    """Session checkpoint directory with all three stages saved."""
    root = tmp_path_factory.mktemp("checkpoints")
    stage_a_overfit.model.save(root / "stage_a")
    stage_b_overfit.model.save(root / "stage_b")
    stage_c_overfit.model.save(root / "stage_c")
    return root


@pytest.fixture()
def corpus_file(tmp_path, corpus64):
    path = tmp_path / "corpus.jsonl"
    dump_corpus(corpus64, path)
    return path
