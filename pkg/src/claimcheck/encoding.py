"""Serialize stage inputs/outputs into model-consumable sequences.

Semantic units are introduced by special marker tokens (one per unit:
claim, context, source, relation, target, contextSpan, claimComponent,
type, coarseEntityType, fineEntityType). Discriminative encoders prepend a
classification-summary token whose final hidden state summarizes the
sequence; generative models produce marker-linearized target strings that
are parsed back into structured fields.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields as dc_fields
from typing import NamedTuple, Optional, Protocol, Sequence

from .corpus import (
    CharSpan,
    ClaimComponent,
    CoarseEntityType,
    EMPTY_SPAN,
    FactTriple,
    InconsistencyType,
)

logger = logging.getLogger(__name__)


class EncodingError(ValueError):
    pass


class SectionBoundaryError(EncodingError):
    """A char span does not fit inside its named section."""


class AlignmentError(EncodingError):
    """A char span cannot be covered by any token interval."""


@dataclass(frozen=True)
class SpecialTokenScheme:
    """Marker surface forms, configurable per checkpoint family.

    Markers must be pairwise distinct and no marker may be a substring of
    another (the output parser scans for raw occurrences).
    """

    claim: str = "<claim>"
    context: str = "<context>"
    source: str = "<source>"
    relation: str = "<relation>"
    target: str = "<target>"
    context_span: str = "<contextSpan>"
    claim_component: str = "<claimComponent>"
    itype: str = "<type>"
    coarse: str = "<coarseEntityType>"
    fine: str = "<fineEntityType>"
    summary: str = "[SUM]"

    def __post_init__(self):
        markers = [getattr(self, f.name) for f in dc_fields(self)]
        if len(set(markers)) != len(markers):
            raise EncodingError("special-token markers must be distinct")
        for a in markers:
            for b in markers:
                if a != b and a in b:
                    raise EncodingError(f"marker {a!r} is a substring of {b!r}")

    def marker(self, section: str) -> str:
        return getattr(self, section)

    def all_markers(self) -> tuple[str, ...]:
        return tuple(getattr(self, f.name) for f in dc_fields(self))

    def to_json(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dc_fields(self)}

    @classmethod
    def from_json(cls, obj: dict) -> "SpecialTokenScheme":
        return cls(**obj)


# Canonical section order, fixed for every built sequence.
CANONICAL_SECTIONS = (
    "claim",
    "context",
    "source",
    "relation",
    "target",
    "context_span",
    "claim_component",
    "itype",
    "coarse",
    "fine",
)


class TokenSpan(NamedTuple):
    """Inclusive token-index interval into an encoded sequence."""

    start: int
    end: int


# The designated null span points at the summary token (position 0).
NULL_TOKEN_SPAN = TokenSpan(0, 0)


class Tokenizer(Protocol):
    pad_id: int

    def encode_text(self, text: str) -> tuple[list[int], list[tuple[int, int]]]: ...

    def marker_id(self, marker: str) -> int: ...


@dataclass(frozen=True)
class Section:
    name: str
    text: str
    token_start: int  # absolute index of first content token
    token_end: int  # absolute, exclusive
    char_offsets: tuple[tuple[int, int], ...]  # per token, relative to text

    @property
    def token_range(self) -> TokenSpan:
        return TokenSpan(self.token_start, self.token_end - 1)


@dataclass(frozen=True)
class EncodedInput:
    ids: tuple[int, ...]
    sections: dict[str, Section]
    scheme: SpecialTokenScheme
    truncated: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.ids)


class InputEncoder:
    """Builds marked sequences for one tokenizer + marker scheme.

    Stateless after construction; the tokenizer is treated as a read-only
    shared resource, so concurrent encoding is safe.
    """

    def __init__(self, tokenizer: Tokenizer, scheme: SpecialTokenScheme, max_len: int = 256):
        self.tokenizer = tokenizer
        self.scheme = scheme
        self.max_len = max_len

    # -- sequence assembly ------------------------------------------------

    def _assemble(self, parts: Sequence[tuple[str, str]]) -> EncodedInput:
        """parts: ordered (section_name, text). Context is truncated from
        the right when the budget overflows; the claim never is."""
        tokenized = {}
        for name, text in parts:
            ids, offsets = self.tokenizer.encode_text(text)
            tokenized[name] = (list(ids), list(offsets))

        overhead = 1 + len(parts)  # summary token + one marker per section
        budget = self.max_len - overhead
        total = sum(len(ids) for ids, _ in tokenized.values())
        truncated = []
        if total > budget and "context" in tokenized:
            keep = max(1, len(tokenized["context"][0]) - (total - budget))
            if keep < len(tokenized["context"][0]):
                ids, offsets = tokenized["context"]
                tokenized["context"] = (ids[:keep], offsets[:keep])
                truncated.append("context")
                total = sum(len(ids) for ids, _ in tokenized.values())
        if total > budget:
            raise EncodingError(
                f"sequence needs {total + overhead} tokens, budget is {self.max_len}; "
                "only the context section may be truncated"
            )

        ids = [self.tokenizer.marker_id(self.scheme.summary)]
        sections = {}
        for name, text in parts:
            sec_ids, offsets = tokenized[name]
            ids.append(self.tokenizer.marker_id(self.scheme.marker(name)))
            start = len(ids)
            ids.extend(sec_ids)
            sections[name] = Section(
                name=name,
                text=text,
                token_start=start,
                token_end=len(ids),
                char_offsets=tuple(offsets),
            )
        return EncodedInput(
            ids=tuple(ids), sections=sections, scheme=self.scheme, truncated=tuple(truncated)
        )

    def encode_plain(self, text: str) -> EncodedInput:
        """A bare [summary] + tokens sequence (used for class-name inputs)."""
        ids, offsets = self.tokenizer.encode_text(text)
        ids = [self.tokenizer.marker_id(self.scheme.summary)] + list(ids)
        section = Section("text", text, 1, len(ids), tuple(offsets))
        return EncodedInput(ids=tuple(ids), sections={"text": section}, scheme=self.scheme)

    def build_stage_a_input(
        self,
        claim: str,
        context: str,
        strategy: str = "structure_ignorant",
        srt: Optional[FactTriple] = None,
    ) -> EncodedInput:
        """[SUM] <claim> C <context> X, plus S/R/T sections when the
        strategy consumes a (gold or previously predicted) triple.

        two_step accepts srt=None for its first pass (predict the triple)
        and a triple for its second pass (predict the context span).
        """
        strategy = getattr(strategy, "value", strategy)
        wants_srt = {
            "structure_ignorant": False,
            "multi_task": False,
            "oracle_structure": True,
            "two_step": srt is not None,
        }
        if strategy not in wants_srt:
            raise EncodingError(f"unknown extraction strategy {strategy!r}")
        if wants_srt[strategy] and srt is None:
            raise EncodingError(f"strategy {strategy!r} requires a source/relation/target triple")
        if not wants_srt[strategy] and srt is not None:
            raise EncodingError(f"strategy {strategy!r} does not take a triple")

        parts = [("claim", claim), ("context", context)]
        if srt is not None:
            parts += [
                ("source", srt.source.text),
                ("relation", srt.relation.text),
                ("target", srt.target.text),
            ]
        return self._assemble(parts)

    def build_stage_b_input(
        self,
        claim: str,
        context: str,
        srt: FactTriple,
        cspan: CharSpan,
        component: Optional[ClaimComponent] = None,
    ) -> EncodedInput:
        parts = [
            ("claim", claim),
            ("context", context),
            ("source", srt.source.text),
            ("relation", srt.relation.text),
            ("target", srt.target.text),
            ("context_span", cspan.text),
        ]
        if component is not None:
            parts.append(("claim_component", component.value))
        return self._assemble(parts)

    def build_stage_c_input(
        self,
        cspan: CharSpan,
        claim_span: CharSpan,
        coarse: Optional[CoarseEntityType] = None,
    ) -> EncodedInput:
        parts = [("context_span", cspan.text), ("claim_component", claim_span.text)]
        if coarse is not None:
            parts.append(("coarse", coarse.value))
        return self._assemble(parts)

    # -- alignment ---------------------------------------------------------

    def char_span_to_token_span(self, encoded: EncodedInput, span: CharSpan, section: str) -> TokenSpan:
        """Smallest token interval covering all characters of the span."""
        if span.is_empty:
            return NULL_TOKEN_SPAN
        if section not in encoded.sections:
            raise SectionBoundaryError(f"no section {section!r} in this encoding")
        sec = encoded.sections[section]
        if span.end > len(sec.text) or span.start < 0:
            raise SectionBoundaryError(
                f"span [{span.start},{span.end}) crosses the {section!r} section boundary "
                f"(section has {len(sec.text)} chars)"
            )
        first = last = None
        for t, (cs, ce) in enumerate(sec.char_offsets):
            if ce > span.start and cs < span.end:
                if first is None:
                    first = t
                last = t
        if first is None:
            raise AlignmentError(f"span [{span.start},{span.end}) covers no token in {section!r}")
        return TokenSpan(sec.token_start + first, sec.token_start + last)

    def token_span_to_char_span(self, encoded: EncodedInput, tspan: TokenSpan) -> tuple[str, CharSpan]:
        """Inverse alignment; returns (section name, char span). The null
        token span decodes to the EMPTY span."""
        if tspan == NULL_TOKEN_SPAN:
            return "", EMPTY_SPAN
        for sec in encoded.sections.values():
            if sec.token_start <= tspan.start and tspan.end < sec.token_end:
                cs = sec.char_offsets[tspan.start - sec.token_start][0]
                ce = sec.char_offsets[tspan.end - sec.token_start][1]
                return sec.name, CharSpan(cs, ce, sec.text[cs:ce])
        raise SectionBoundaryError(f"token span {tspan} does not fall inside a single section")


# ---------------------------------------------------------------------------
# generative targets


@dataclass(frozen=True)
class GenerationFields:
    """Field texts of a linearized generation target. None = omitted;
    empty string = present-but-empty (the EMPTY target convention)."""

    source: Optional[str] = None
    relation: Optional[str] = None
    target: Optional[str] = None
    context_span: Optional[str] = None
    claim_component: Optional[str] = None
    itype: Optional[str] = None
    coarse: Optional[str] = None
    fine: Optional[str] = None

    def present(self) -> dict[str, str]:
        return {f.name: getattr(self, f.name) for f in dc_fields(self) if getattr(self, f.name) is not None}


_TARGET_ORDER = ("source", "relation", "target", "context_span", "claim_component", "itype", "coarse", "fine")


def build_generation_target(fields: GenerationFields, scheme: SpecialTokenScheme) -> str:
    """Linearize fields as "<marker> text <marker> text ..." in canonical
    marker order. Raises when no field is present."""
    present = fields.present()
    if not present:
        raise EncodingError("generation target needs at least one field")
    parts = []
    for name in _TARGET_ORDER:
        if name in present:
            parts.append(scheme.marker(name))
            if present[name]:
                parts.append(present[name])
    return " ".join(parts)


def _levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _resolve_label(raw: str, surfaces: Sequence[str], field_name: str) -> tuple[Optional[str], bool]:
    """Case-insensitive exact match first, else nearest by edit distance
    (logged). Returns (surface or None, was_exact)."""
    key = " ".join(raw.replace("-", " ").replace("_", " ").split()).casefold()
    if not key:
        return None, True
    by_key = {" ".join(s.replace("-", " ").split()).casefold(): s for s in surfaces}
    if key in by_key:
        return by_key[key], True
    best = min(sorted(surfaces), key=lambda s: _levenshtein(key, s.casefold()))
    logger.warning("fuzzy-matched %s label %r to %r", field_name, raw, best)
    return best, False


@dataclass
class ParsedGeneration:
    """Structured reading of a generated string. ``fields`` holds the raw
    segment texts; label fields additionally resolve to closed vocabularies
    when possible. ``clean`` is False when duplicates were dropped or a
    label needed fuzzy matching."""

    fields: GenerationFields
    itype: Optional[InconsistencyType] = None
    component: Optional[ClaimComponent] = None
    coarse: Optional[CoarseEntityType] = None
    fine: Optional[str] = None
    clean: bool = True
    warnings: tuple[str, ...] = ()


def parse_generation_output(
    text: str,
    scheme: SpecialTokenScheme,
    fine_labels: Optional[Sequence[str]] = None,
) -> ParsedGeneration:
    """Greedy left-to-right segmentation of a generated string on markers.

    Unknown text before the first marker is ignored. A duplicated marker
    keeps its first occurrence and flags the parse. Returns a partial
    result; never raises on model output.
    """
    warnings: list[str] = []
    clean = True

    # Every marker occurrence is a segment boundary; only the first
    # occurrence of each marker defines its field.
    hits: list[tuple[int, str, int]] = []
    for name in _TARGET_ORDER:
        marker = scheme.marker(name)
        at = 0
        while (pos := text.find(marker, at)) != -1:
            hits.append((pos, name, len(marker)))
            at = pos + len(marker)
    hits.sort()

    first_at: dict[str, int] = {}
    for pos, name, _ in hits:
        if name in first_at:
            if f"duplicated marker for {name!r}; first occurrence wins" not in warnings:
                warnings.append(f"duplicated marker for {name!r}; first occurrence wins")
            clean = False
        else:
            first_at[name] = pos

    segments: dict[str, str] = {}
    for i, (pos, name, mlen) in enumerate(hits):
        if first_at.get(name) != pos:
            continue
        begin = pos + mlen
        end = hits[i + 1][0] if i + 1 < len(hits) else len(text)
        seg = text[begin:end]
        if seg.startswith(" "):
            seg = seg[1:]
        if seg.endswith(" "):
            seg = seg[:-1]
        segments[name] = seg

    parsed = ParsedGeneration(fields=GenerationFields(**segments), warnings=(), clean=clean)

    if "itype" in segments:
        surface, exact = _resolve_label(segments["itype"], [t.value for t in InconsistencyType], "type")
        if surface is not None:
            parsed.itype = InconsistencyType(surface)
        clean = clean and exact
    if "claim_component" in segments:
        surface, exact = _resolve_label(
            segments["claim_component"], [c.value for c in ClaimComponent], "component"
        )
        if surface is not None:
            parsed.component = ClaimComponent(surface)
        clean = clean and exact
    if "coarse" in segments:
        surface, exact = _resolve_label(segments["coarse"], [c.value for c in CoarseEntityType], "coarse")
        if surface is not None:
            parsed.coarse = CoarseEntityType(surface)
        clean = clean and exact
    if "fine" in segments:
        if fine_labels:
            surface, exact = _resolve_label(segments["fine"], list(fine_labels), "fine")
            parsed.fine = surface
            clean = clean and exact
        else:
            parsed.fine = segments["fine"] or None

    parsed.clean = clean
    parsed.warnings = tuple(warnings)
    return parsed


def fields_from_sample_texts(
    srt: Optional[FactTriple] = None,
    cspan: Optional[CharSpan] = None,
    component: Optional[ClaimComponent] = None,
    itype: Optional[InconsistencyType] = None,
    coarse: Optional[CoarseEntityType] = None,
    fine: Optional[str] = None,
) -> GenerationFields:
    """Convenience: lift structured values into generation field texts."""
    return GenerationFields(
        source=srt.source.text if srt else None,
        relation=srt.relation.text if srt else None,
        target=srt.target.text if srt else None,
        context_span=cspan.text if cspan is not None else None,
        claim_component=component.value if component else None,
        itype=itype.value if itype else None,
        coarse=coarse.value if coarse else None,
        fine=fine,
    )
