"""Data model, loading, validation, splitting, and statistics for the
claim/context inconsistency corpus.

The corpus is a JSONL file, one record per line. Each record pairs a claim
sentence with a context sentence and carries the annotated explanation:
the inconsistent fact triple (source/relation/target spans in the claim,
with optional head/modifier sub-spans), the inconsistent context span, the
claim component that carries the inconsistency, the inconsistency type,
and (when the inconsistency is entity-driven) coarse and fine entity types.

All span fields are objects ``{"start": int, "end": int, "text": str}`` or
``null``. Offsets are 0-based character offsets, end-exclusive, into the
owning sentence. An empty target serializes as ``{"start": 0, "end": 0,
"text": ""}``.
"""

from __future__ import annotations

import json
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence


class CorpusError(Exception):
    """Raised for unusable corpus-level input (missing file, bad sizes)."""


class CorpusFormatError(CorpusError):
    """A malformed record. Carries the 1-based line number and field name."""

    def __init__(self, message: str, *, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if field is not None:
            prefix += f"field '{field}': "
        super().__init__(prefix + message)


# ---------------------------------------------------------------------------
# spans and labels


@dataclass(frozen=True)
class CharSpan:
    """A character span plus its redundant surface text.

    Text is authoritative for metrics; offsets are authoritative for
    localization. Keeping both makes corruption detectable.
    """

    start: int
    end: int
    text: str

    @property
    def is_empty(self) -> bool:
        return self.start == 0 and self.end == 0 and self.text == ""

    def violations(self, host: str | None = None, name: str = "span") -> list[str]:
        """Invariant checks; returns human-readable violation strings."""
        out = []
        if self.is_empty:
            return out
        if not (0 <= self.start < self.end):
            out.append(f"{name}: offsets must satisfy 0 <= start < end, got [{self.start},{self.end})")
        if self.text == "":
            out.append(f"{name}: non-empty span has empty text")
        if host is not None and not out and host[self.start : self.end] != self.text:
            out.append(
                f"{name}: text {self.text!r} does not match host substring "
                f"{host[self.start:self.end]!r} at [{self.start},{self.end})"
            )
        return out

    def to_json(self) -> dict:
        return {"start": self.start, "end": self.end, "text": self.text}


EMPTY_SPAN = CharSpan(0, 0, "")


def _normalize_label(raw: str) -> str:
    return " ".join(raw.replace("-", " ").replace("_", " ").split()).casefold()


class InconsistencyType(str, Enum):
    SIMPLE = "simple"
    GRADABLE = "gradable"
    TAXONOMIC_RELATIONS = "taxonomic relations"
    NEGATION = "negation"
    SET_BASED = "set based"

    @classmethod
    def parse(cls, raw: str) -> "InconsistencyType":
        key = _normalize_label(raw)
        aliases = {
            "taxonomic relation": cls.TAXONOMIC_RELATIONS,
            "taxonomicrelations": cls.TAXONOMIC_RELATIONS,
            "setbased": cls.SET_BASED,
        }
        for member in cls:
            if key == member.value or key == _normalize_label(member.name):
                return member
        if key in aliases:
            return aliases[key]
        raise ValueError(f"unknown inconsistency type {raw!r}")


class ClaimComponent(str, Enum):
    SUBJECT_HEAD = "subject-head"
    SUBJECT_MODIFIER = "subject-modifier"
    RELATION_HEAD = "relation-head"
    RELATION_MODIFIER = "relation-modifier"
    TARGET_HEAD = "target-head"
    TARGET_MODIFIER = "target-modifier"

    @classmethod
    def parse(cls, raw: str) -> "ClaimComponent":
        # "Source-*" is an accepted legacy spelling of "Subject-*".
        key = _normalize_label(raw).replace("source", "subject")
        for member in cls:
            if key == member.value.replace("-", " ") or key == _normalize_label(member.name):
                return member
        raise ValueError(f"unknown claim component {raw!r}")

    @property
    def triple_part(self) -> str:
        """Which part of the fact triple this component lives in."""
        return {"subject": "source"}.get(self.value.split("-")[0], self.value.split("-")[0])

    @property
    def granularity(self) -> str:
        return self.value.split("-")[1]


class CoarseEntityType(str, Enum):
    ACTION = "action"
    ANIMAL = "animal"
    ENTERTAINMENT = "entertainment"
    GENDER = "gender"
    GEOGRAPHY = "geography"
    IDENTITY = "identity"
    MATERIAL = "material"
    NAME = "name"
    NATIONALITY = "nationality"
    ORGANIZATION = "organization"
    OTHERS = "others"
    POLITICS = "politics"
    PROFESSION = "profession"
    QUANTITY = "quantity"
    REALITY = "reality"
    RELATIONSHIP = "relationship"
    SENTIMENT = "sentiment"
    SPORT = "sport"
    TECHNOLOGY = "technology"
    TIME = "time"

    @classmethod
    def parse(cls, raw: str) -> "CoarseEntityType":
        key = _normalize_label(raw)
        for member in cls:
            if key == member.value:
                return member
        raise ValueError(f"unknown coarse entity type {raw!r}")


@dataclass(frozen=True)
class FactTriple:
    """The inconsistent fact inside the claim: source, relation, target spans.

    Head/modifier sub-spans, when present, must lie within their parent
    span. The target may be the designated EMPTY span (intransitive facts).
    """

    source: CharSpan
    relation: CharSpan
    target: CharSpan
    source_head: Optional[CharSpan] = None
    source_modifier: Optional[CharSpan] = None
    relation_head: Optional[CharSpan] = None
    relation_modifier: Optional[CharSpan] = None
    target_head: Optional[CharSpan] = None
    target_modifier: Optional[CharSpan] = None

    def part(self, name: str) -> CharSpan:
        return {"source": self.source, "relation": self.relation, "target": self.target}[name]

    def sub_span(self, component: ClaimComponent) -> Optional[CharSpan]:
        return getattr(self, f"{component.triple_part}_{component.granularity}")


SPAN_FIELD_NAMES = (
    "source",
    "relation",
    "target",
    "source_head",
    "source_modifier",
    "relation_head",
    "relation_modifier",
    "target_head",
    "target_modifier",
)


@dataclass(frozen=True)
class Sample:
    """One annotated (claim, context) pair."""

    id: str
    claim: str
    context: str
    triple: FactTriple
    incon_context_span: CharSpan
    component: ClaimComponent
    itype: InconsistencyType
    coarse: Optional[CoarseEntityType] = None
    fine: Optional[str] = None

    @property
    def has_entity_type(self) -> bool:
        return self.coarse is not None and self.fine is not None

    def claim_span_for_component(self, use_sub_span: bool = True) -> CharSpan:
        """The claim-side span named by the annotated component.

        Falls back to the full parent S/R/T span when the head/modifier
        sub-span is not annotated.
        """
        if use_sub_span:
            sub = self.triple.sub_span(self.component)
            if sub is not None:
                return sub
        return self.triple.part(self.component.triple_part)


# ---------------------------------------------------------------------------
# serialization


def _span_from_json(obj, *, line: int, name: str, required: bool) -> Optional[CharSpan]:
    if obj is None:
        if required:
            raise CorpusFormatError("span is required but null", line=line, field=name)
        return None
    if not isinstance(obj, dict):
        raise CorpusFormatError(f"span must be an object, got {type(obj).__name__}", line=line, field=name)
    try:
        start, end, text = obj["start"], obj["end"], obj["text"]
    except KeyError as exc:
        raise CorpusFormatError(f"span object missing key {exc.args[0]!r}", line=line, field=name)
    if not isinstance(start, int) or not isinstance(end, int) or not isinstance(text, str):
        raise CorpusFormatError("span keys must be (int, int, str)", line=line, field=name)
    span = CharSpan(start, end, text)
    if span.is_empty:
        return span
    if not (0 <= start < end):
        raise CorpusFormatError(f"offsets must satisfy 0 <= start < end, got [{start},{end})", line=line, field=name)
    return span


def sample_from_json(obj: dict, line: int = 0) -> Sample:
    if not isinstance(obj, dict):
        raise CorpusFormatError("record must be a JSON object", line=line)

    def want(name, types):
        if name not in obj:
            raise CorpusFormatError("missing field", line=line, field=name)
        value = obj[name]
        if not isinstance(value, types):
            raise CorpusFormatError(f"expected {types}, got {type(value).__name__}", line=line, field=name)
        return value

    sid = obj.get("id")
    if isinstance(sid, int):
        sid = str(sid)
    if not isinstance(sid, str):
        raise CorpusFormatError("id must be a string", line=line, field="id")

    claim = want("claim", str)
    context = want("context", str)
    spans = {}
    for name in SPAN_FIELD_NAMES:
        required = name in ("source", "relation", "target")
        spans[name] = _span_from_json(obj.get(name), line=line, name=name, required=required)
    cspan = _span_from_json(obj.get("incon_context_span"), line=line, name="incon_context_span", required=True)

    try:
        component = ClaimComponent.parse(want("claim_component", str))
    except ValueError as exc:
        raise CorpusFormatError(str(exc), line=line, field="claim_component")
    try:
        itype = InconsistencyType.parse(want("inconsistency_type", str))
    except ValueError as exc:
        raise CorpusFormatError(str(exc), line=line, field="inconsistency_type")

    coarse_raw = obj.get("coarse_entity_type")
    coarse = None
    if coarse_raw is not None:
        try:
            coarse = CoarseEntityType.parse(want("coarse_entity_type", str))
        except ValueError as exc:
            raise CorpusFormatError(str(exc), line=line, field="coarse_entity_type")
    fine_raw = obj.get("fine_entity_type")
    if fine_raw is not None and not isinstance(fine_raw, str):
        raise CorpusFormatError("fine_entity_type must be a string or null", line=line, field="fine_entity_type")

    return Sample(
        id=sid,
        claim=claim,
        context=context,
        triple=FactTriple(**spans),
        incon_context_span=cspan,
        component=component,
        itype=itype,
        coarse=coarse,
        fine=fine_raw,
    )


def sample_to_json(s: Sample) -> dict:
    out = {"id": s.id, "claim": s.claim, "context": s.context}
    for name in SPAN_FIELD_NAMES:
        span = getattr(s.triple, name) if name not in ("source", "relation", "target") else s.triple.part(name)
        out[name] = span.to_json() if span is not None else None
    out["incon_context_span"] = s.incon_context_span.to_json()
    out["claim_component"] = s.component.value
    out["inconsistency_type"] = s.itype.value
    out["coarse_entity_type"] = s.coarse.value if s.coarse is not None else None
    out["fine_entity_type"] = s.fine
    return out


def load_corpus(path: str | Path) -> list[Sample]:
    """Load a JSONL corpus file. Order is preserved.

    Raises CorpusError for a missing file, CorpusFormatError (naming the
    line and field) for a malformed record.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus file not found: {path}")
    samples = []
    with path.open(encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"invalid JSON: {exc.msg}", line=lineno)
            samples.append(sample_from_json(obj, line=lineno))
    return samples


def dump_corpus(samples: Iterable[Sample], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for s in samples:
            handle.write(json.dumps(sample_to_json(s), ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# validation


def validate_sample(s: Sample) -> list[str]:
    """Check all type invariants. Violations are data, not exceptions."""
    out: list[str] = []
    if not s.claim:
        out.append("claim: must be non-empty")
    if not s.context:
        out.append("context: must be non-empty")

    for name in ("source", "relation"):
        span = s.triple.part(name)
        if span.is_empty:
            out.append(f"{name}: may not be the EMPTY span")
        out.extend(span.violations(s.claim, name))
    out.extend(s.triple.target.violations(s.claim, "target"))

    for parent_name in ("source", "relation", "target"):
        parent = s.triple.part(parent_name)
        for gran in ("head", "modifier"):
            sub = getattr(s.triple, f"{parent_name}_{gran}")
            if sub is None:
                continue
            sub_name = f"{parent_name}_{gran}"
            out.extend(sub.violations(s.claim, sub_name))
            if not sub.is_empty and not (parent.start <= sub.start and sub.end <= parent.end):
                out.append(f"{sub_name}: [{sub.start},{sub.end}) not inside parent {parent_name} [{parent.start},{parent.end})")

    if s.incon_context_span.is_empty:
        out.append("incon_context_span: may not be the EMPTY span")
    out.extend(s.incon_context_span.violations(s.context, "incon_context_span"))

    if (s.coarse is None) != (s.fine is None):
        out.append("entity types: coarse and fine must be both present or both absent")
    return out


def quarantine_invalid(samples: Sequence[Sample]) -> tuple[list[Sample], dict[str, list[str]]]:
    """Partition samples into (clean, violations-by-id). Nothing is dropped
    silently; callers decide what to do with the quarantined report."""
    clean, bad = [], {}
    for s in samples:
        violations = validate_sample(s)
        if violations:
            bad[s.id] = violations
        else:
            clean.append(s)
    return clean, bad


# ---------------------------------------------------------------------------
# splits


def split_corpus(
    samples: Sequence[Sample], seed: int, stratified: bool = False
) -> tuple[list[Sample], list[Sample], list[Sample]]:
    """Deterministic 80/10/10 split: sizes floor(0.8n), floor(0.1n), rest.

    With ``stratified=True`` the split additionally balances inconsistency
    types across the three parts while preserving the exact global sizes.
    """
    n = len(samples)
    if n < 10:
        raise CorpusError(f"need at least 10 samples to split, got {n}")
    n_train = n * 8 // 10
    n_valid = n // 10

    rng = random.Random(seed)
    order = list(range(n))
    rng.shuffle(order)

    if not stratified:
        picked = [samples[i] for i in order]
        return (
            picked[:n_train],
            picked[n_train : n_train + n_valid],
            picked[n_train + n_valid :],
        )

    groups: dict[InconsistencyType, list[int]] = defaultdict(list)
    for i in order:
        groups[samples[i].itype].append(i)

    def allocate(total: int, already: dict) -> dict:
        # Largest-remainder allocation of `total` slots across groups.
        floors, fracs = {}, []
        for itype, members in groups.items():
            avail = len(members) - already.get(itype, 0)
            exact = total * len(members) / n
            floors[itype] = min(int(exact), avail)
            fracs.append((-(exact - int(exact)), itype.value, itype))
        short = total - sum(floors.values())
        for _, _, itype in sorted(fracs):
            if short == 0:
                break
            if floors[itype] + already.get(itype, 0) < len(groups[itype]):
                floors[itype] += 1
                short -= 1
        return floors

    train_take = allocate(n_train, {})
    valid_take = allocate(n_valid, train_take)
    train, valid, test = [], [], []
    for itype, members in groups.items():
        a, b = train_take[itype], train_take[itype] + valid_take[itype]
        train.extend(samples[i] for i in members[:a])
        valid.extend(samples[i] for i in members[a:b])
        test.extend(samples[i] for i in members[b:])
    return train, valid, test


# ---------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class LengthStats:
    min: int
    avg: float
    max: int


@dataclass
class CorpusStats:
    total: int
    by_type: dict[InconsistencyType, int]
    by_component: dict[ClaimComponent, int]
    by_coarse: dict[CoarseEntityType, int]
    lengths: dict[str, LengthStats]

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "by_type": {k.value: v for k, v in self.by_type.items()},
            "by_component": {k.value: v for k, v in self.by_component.items()},
            "by_coarse_entity_type": {k.value: v for k, v in self.by_coarse.items()},
            "lengths_words": {
                k: {"min": v.min, "avg": v.avg, "max": v.max} for k, v in self.lengths.items()
            },
        }


def word_count(text: str) -> int:
    """Whitespace-token count after trimming. The EMPTY span counts 0."""
    return len(text.split())


def compute_stats(samples: Sequence[Sample]) -> CorpusStats:
    if not samples:
        raise CorpusError("cannot compute statistics of an empty corpus")

    by_type = Counter(s.itype for s in samples)
    by_component = Counter(s.component for s in samples)
    by_coarse = Counter(s.coarse for s in samples if s.coarse is not None)

    texts = {
        "claim": [s.claim for s in samples],
        "context": [s.context for s in samples],
        "source": [s.triple.source.text for s in samples],
        "relation": [s.triple.relation.text for s in samples],
        "target": [s.triple.target.text for s in samples],
        "context_span": [s.incon_context_span.text for s in samples],
    }
    lengths = {}
    for name, values in texts.items():
        counts = [word_count(t) for t in values]
        lengths[name] = LengthStats(min(counts), sum(counts) / len(counts), max(counts))

    return CorpusStats(
        total=len(samples),
        by_type={t: by_type.get(t, 0) for t in InconsistencyType},
        by_component={c: by_component.get(c, 0) for c in ClaimComponent},
        by_coarse={c: by_coarse[c] for c in CoarseEntityType if c in by_coarse},
        lengths=lengths,
    )


# ---------------------------------------------------------------------------
# fine-grained label vocabulary


@dataclass(frozen=True)
class FineLabelVocab:
    """Lexicographically sorted fine labels plus the fine->coarse majority map."""

    labels: tuple[str, ...]
    fine_to_coarse: dict[str, CoarseEntityType]

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)


def build_fine_label_vocab(samples: Sequence[Sample]) -> FineLabelVocab:
    """Vocabulary of fine labels observed with entity annotations.

    The fine->coarse map picks the majority co-occurring coarse label; ties
    break lexicographically on the coarse label value.
    """
    pair_counts: dict[str, Counter] = defaultdict(Counter)
    for s in samples:
        if s.fine is not None and s.coarse is not None:
            pair_counts[s.fine][s.coarse] += 1
    labels = tuple(sorted(pair_counts))
    mapping = {}
    for fine in labels:
        counts = pair_counts[fine]
        best = min(counts.items(), key=lambda kv: (-kv[1], kv[0].value))
        mapping[fine] = best[0]
    return FineLabelVocab(labels=labels, fine_to_coarse=mapping)
