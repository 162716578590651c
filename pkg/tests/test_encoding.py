import pytest
from hypothesis import given, settings, strategies as st

from claimcheck.corpus import (
    CharSpan,
    ClaimComponent,
    CoarseEntityType,
    EMPTY_SPAN,
    FactTriple,
    InconsistencyType,
)
from claimcheck.encoders import WordTokenizer
from claimcheck.encoding import (
    AlignmentError,
    EncodingError,
    GenerationFields,
    InputEncoder,
    NULL_TOKEN_SPAN,
    SectionBoundaryError,
    SpecialTokenScheme,
    TokenSpan,
    build_generation_target,
    fields_from_sample_texts,
    parse_generation_output,
)
from conftest import make_samples

SCHEME = SpecialTokenScheme()


@pytest.fixture(scope="module")
def encoder():
    samples = make_samples(60, seed=21)
    texts = [s.claim for s in samples] + [s.context for s in samples]
    tok = WordTokenizer.build(texts, SCHEME)
    return InputEncoder(tok, SCHEME, max_len=128)


@pytest.fixture(scope="module")
def sample():
    return make_samples(1, seed=22)[0]


# ---------------------------------------------------------------------------
# scheme


def test_scheme_markers_distinct():
    with pytest.raises(EncodingError):
        SpecialTokenScheme(claim="<x>", context="<x>")


def test_scheme_rejects_substring_markers():
    with pytest.raises(EncodingError):
        SpecialTokenScheme(claim="<c>", context="x<c>y")


# ---------------------------------------------------------------------------
# stage inputs


def test_stage_a_structure_ignorant_layout(encoder, sample):
    e = encoder.build_stage_a_input(sample.claim, sample.context, "structure_ignorant")
    assert list(e.sections) == ["claim", "context"]
    assert e.ids[0] == encoder.tokenizer.marker_id(SCHEME.summary)
    assert e.ids[1] == encoder.tokenizer.marker_id(SCHEME.claim)
    assert e.sections["claim"].text == sample.claim


def test_stage_a_oracle_appends_triple(encoder, sample):
    e = encoder.build_stage_a_input(sample.claim, sample.context, "oracle_structure", sample.triple)
    assert list(e.sections) == ["claim", "context", "source", "relation", "target"]
    assert e.sections["source"].text == sample.triple.source.text


def test_stage_a_empty_target_section_present(encoder, sample):
    triple = FactTriple(sample.triple.source, sample.triple.relation, EMPTY_SPAN)
    e = encoder.build_stage_a_input(sample.claim, sample.context, "oracle_structure", triple)
    assert "target" in e.sections
    assert e.sections["target"].text == ""
    assert e.sections["target"].token_start == e.sections["target"].token_end


def test_stage_a_srt_required_iff(encoder, sample):
    with pytest.raises(EncodingError):
        encoder.build_stage_a_input(sample.claim, sample.context, "oracle_structure", None)
    with pytest.raises(EncodingError):
        encoder.build_stage_a_input(sample.claim, sample.context, "structure_ignorant", sample.triple)
    with pytest.raises(EncodingError):
        encoder.build_stage_a_input(sample.claim, sample.context, "multi_task", sample.triple)
    # two_step accepts both: None = first pass, triple = second pass
    encoder.build_stage_a_input(sample.claim, sample.context, "two_step", None)
    encoder.build_stage_a_input(sample.claim, sample.context, "two_step", sample.triple)


def test_stage_a_prefix_stable_under_srt(encoder, sample):
    bare = encoder.build_stage_a_input(sample.claim, sample.context, "multi_task")
    with_srt = encoder.build_stage_a_input(sample.claim, sample.context, "oracle_structure", sample.triple)
    assert with_srt.ids[: len(bare.ids)] == bare.ids


def test_stage_b_canonical_order(encoder, sample):
    e = encoder.build_stage_b_input(sample.claim, sample.context, sample.triple, sample.incon_context_span)
    assert list(e.sections) == ["claim", "context", "source", "relation", "target", "context_span"]


def test_stage_b_component_appended(encoder, sample):
    e = encoder.build_stage_b_input(
        sample.claim, sample.context, sample.triple, sample.incon_context_span, ClaimComponent.TARGET_HEAD
    )
    assert list(e.sections)[-1] == "claim_component"
    assert e.sections["claim_component"].text == "target-head"


def test_stage_b_deterministic(encoder, sample):
    e1 = encoder.build_stage_b_input(sample.claim, sample.context, sample.triple, sample.incon_context_span)
    e2 = encoder.build_stage_b_input(sample.claim, sample.context, sample.triple, sample.incon_context_span)
    assert e1.ids == e2.ids


def test_stage_c_sections(encoder, sample):
    cspan = sample.incon_context_span
    claim_span = sample.claim_span_for_component()
    e = encoder.build_stage_c_input(cspan, claim_span)
    assert list(e.sections) == ["context_span", "claim_component"]
    e2 = encoder.build_stage_c_input(cspan, claim_span, CoarseEntityType.NAME)
    assert list(e2.sections) == ["context_span", "claim_component", "coarse"]
    assert e2.sections["coarse"].text == "name"


def test_stage_c_empty_claim_span_ok(encoder, sample):
    e = encoder.build_stage_c_input(sample.incon_context_span, EMPTY_SPAN)
    assert e.sections["claim_component"].text == ""


# ---------------------------------------------------------------------------
# alignment


def test_char_to_token_whole_section(encoder, sample):
    e = encoder.build_stage_a_input(sample.claim, sample.context, "multi_task")
    span = CharSpan(0, len(sample.claim), sample.claim)
    ts = encoder.char_span_to_token_span(e, span, "claim")
    sec = e.sections["claim"]
    assert ts == TokenSpan(sec.token_start, sec.token_end - 1)


def test_empty_span_is_null(encoder, sample):
    e = encoder.build_stage_a_input(sample.claim, sample.context, "multi_task")
    assert encoder.char_span_to_token_span(e, EMPTY_SPAN, "claim") == NULL_TOKEN_SPAN
    section, back = encoder.token_span_to_char_span(e, NULL_TOKEN_SPAN)
    assert back == EMPTY_SPAN


def test_alignment_round_trip_contains_original(encoder):
    for s in make_samples(40, seed=23):
        e = encoder.build_stage_a_input(s.claim, s.context, "multi_task")
        for span, section in ((s.triple.source, "claim"), (s.incon_context_span, "context")):
            ts = encoder.char_span_to_token_span(e, span, section)
            _, back = encoder.token_span_to_char_span(e, ts)
            assert back.start <= span.start and span.end <= back.end
            # word-aligned spans decode exactly
            assert back == span


def test_cross_boundary_span_errors(encoder, sample):
    e = encoder.build_stage_a_input(sample.claim, sample.context, "multi_task")
    too_long = CharSpan(0, len(sample.claim) + 10, sample.claim + "XXXXXXXXXX")
    with pytest.raises(SectionBoundaryError):
        encoder.char_span_to_token_span(e, too_long, "claim")


def test_context_truncation_flagged_and_claim_never_truncated(sample):
    tok = WordTokenizer.build([sample.claim, sample.context], SCHEME)
    tight = InputEncoder(tok, SCHEME, max_len=16)
    e = tight.build_stage_a_input(sample.claim, sample.context, "multi_task")
    assert e.truncated == ("context",)
    assert e.sections["claim"].text == sample.claim
    assert len(e.ids) <= 16
    # a gold span past the truncation point cannot be aligned
    with pytest.raises((AlignmentError, SectionBoundaryError)):
        tight.char_span_to_token_span(e, sample.incon_context_span, "context")


# ---------------------------------------------------------------------------
# generation targets


def test_target_single_field():
    assert build_generation_target(GenerationFields(itype="negation"), SCHEME) == "<type> negation"


def test_target_canonical_marker_order():
    fields = GenerationFields(source="s", relation="r", target="t", context_span="c")
    text = build_generation_target(fields, SCHEME)
    assert text == "<source> s <relation> r <target> t <contextSpan> c"


def test_target_empty_subset_rejected():
    with pytest.raises(EncodingError):
        build_generation_target(GenerationFields(), SCHEME)


def test_target_empty_text_round_trips():
    fields = GenerationFields(source="a b", target="")
    parsed = parse_generation_output(build_generation_target(fields, SCHEME), SCHEME)
    assert parsed.fields == fields


def test_parse_single_label():
    parsed = parse_generation_output("<type> negation", SCHEME)
    assert parsed.itype is InconsistencyType.NEGATION
    assert parsed.clean


def test_parse_ignores_leading_junk():
    parsed = parse_generation_output("model says: <type> simple", SCHEME)
    assert parsed.itype is InconsistencyType.SIMPLE
    assert parsed.clean


def test_parse_duplicate_marker_first_wins():
    parsed = parse_generation_output("<type> negation <type> simple", SCHEME)
    assert parsed.itype is InconsistencyType.NEGATION
    assert not parsed.clean
    assert parsed.warnings


def test_parse_label_normalization():
    assert parse_generation_output("<type> set based", SCHEME).itype is InconsistencyType.SET_BASED
    assert parse_generation_output("<type> SET-BASED", SCHEME).itype is InconsistencyType.SET_BASED


def test_parse_fuzzy_label(caplog):
    import logging

    with caplog.at_level(logging.WARNING, logger="claimcheck.encoding"):
        parsed = parse_generation_output("<type> negaton", SCHEME)
    assert parsed.itype is InconsistencyType.NEGATION
    assert not parsed.clean
    assert any("fuzzy" in r.message for r in caplog.records)


def test_parse_component_and_coarse():
    parsed = parse_generation_output("<claimComponent> target-head <coarseEntityType> name", SCHEME)
    assert parsed.component is ClaimComponent.TARGET_HEAD
    assert parsed.coarse is CoarseEntityType.NAME


def test_parse_fine_uses_vocab():
    parsed = parse_generation_output("<fineEntityType> brand", SCHEME, fine_labels=["age", "brand"])
    assert parsed.fine == "brand"
    fuzzy = parse_generation_output("<fineEntityType> brend", SCHEME, fine_labels=["age", "brand"])
    assert fuzzy.fine == "brand"
    assert not fuzzy.clean


def test_sample_round_trip_on_corpus():
    for s in make_samples(200, seed=24, entity_fraction=0.5):
        fields = fields_from_sample_texts(
            srt=s.triple, cspan=s.incon_context_span, component=s.component,
            itype=s.itype, coarse=s.coarse, fine=s.fine,
        )
        parsed = parse_generation_output(build_generation_target(fields, SCHEME), SCHEME)
        assert parsed.fields == fields
        assert parsed.itype is s.itype
        assert parsed.component is s.component
        assert parsed.coarse is s.coarse


field_text = st.text(
    alphabet=st.characters(blacklist_characters="<>[]", blacklist_categories=("Cs", "Cc")),
    min_size=0,
    max_size=24,
).map(lambda t: " ".join(t.split()))


@settings(max_examples=150, deadline=None)
@given(field_text, field_text, field_text)
def test_round_trip_property(source, cspan, fine):
    fields = GenerationFields(source=source, context_span=cspan, fine=fine)
    text = build_generation_target(fields, SCHEME)
    parsed = parse_generation_output(text, SCHEME)
    assert parsed.fields.source == source
    assert parsed.fields.context_span == cspan
    assert (parsed.fine or "") == fine
