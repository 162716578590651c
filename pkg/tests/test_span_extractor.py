import numpy as np
import pytest

from claimcheck.corpus import EMPTY_SPAN
from claimcheck.encoding import NULL_TOKEN_SPAN, TokenSpan
from claimcheck.span_extractor import (
    DEFAULT_MAX_SPAN_TOKENS,
    ExtractionStrategy,
    IncompatibleModelError,
    StageAModel,
    best_span_pair,
    locate_text,
    predict_context_span,
    predict_srt,
    train_stage_a,
)
from claimcheck.training import TrainConfig, TrainingError
from conftest import make_samples, tiny_config


def brute_force_best_pair(start, end, legal, max_len, null_score=None):
    best, best_pair = -np.inf, None
    for i in range(legal[0], legal[1] + 1):
        for j in range(i, legal[1] + 1):
            if max_len is not None and j - i + 1 > max_len:
                continue
            score = start[i] + end[j]
            if score > best:
                best, best_pair = score, (i, j)
    if null_score is not None and null_score > best:
        return NULL_TOKEN_SPAN, null_score
    return TokenSpan(*best_pair), best


# ---------------------------------------------------------------------------
# decoding


def test_single_token_legal_region_is_forced():
    start, end = np.array([5.0, 0.0, 0.0]), np.array([1.0, 0.0, 9.0])
    span, _ = best_span_pair(start, end, TokenSpan(1, 1), max_len=5)
    assert span == TokenSpan(1, 1)


def test_start_after_end_peak_is_rejected():
    # best raw pair would be start at 3, end at 1 (invalid i > j); the
    # best valid pairs score 10 and the tie goes to the smallest (i, j)
    start = np.array([0.0, 0.0, 0.0, 10.0])
    end = np.array([0.0, 10.0, 0.0, 0.0])
    span, score = best_span_pair(start, end, TokenSpan(0, 3), max_len=4)
    assert span.start <= span.end
    assert span == TokenSpan(0, 1)
    assert score == 10.0


def test_uniform_scores_tie_breaks_leftmost_minimal():
    start = np.zeros(6)
    end = np.zeros(6)
    span, _ = best_span_pair(start, end, TokenSpan(1, 4), max_len=3)
    assert span == TokenSpan(1, 1)


def test_max_len_enforced():
    start = np.array([0.0, 9.0, 0.0, 0.0, 0.0])
    end = np.array([0.0, 0.0, 0.0, 0.0, 9.0])
    span, _ = best_span_pair(start, end, TokenSpan(0, 4), max_len=2)
    assert span.end - span.start + 1 <= 2


def test_null_wins_only_when_strictly_greater():
    start = np.array([1.0, 2.0, 0.0])
    end = np.array([1.0, 2.0, 0.0])
    span, score = best_span_pair(start, end, TokenSpan(1, 2), max_len=2, null_score=4.0)
    assert span == TokenSpan(1, 1)  # ties go to the span, not null
    span, score = best_span_pair(start, end, TokenSpan(1, 2), max_len=2, null_score=4.5)
    assert span == NULL_TOKEN_SPAN
    assert score == 4.5


def test_empty_legal_region_raises():
    with pytest.raises(ValueError):
        best_span_pair(np.zeros(3), np.zeros(3), TokenSpan(2, 1), max_len=2)


def test_decode_matches_brute_force_enumeration():
    rng = np.random.default_rng(123)
    for _ in range(300):
        n = int(rng.integers(1, 13))
        start = rng.normal(size=n)
        end = rng.normal(size=n)
        lo = int(rng.integers(0, n))
        hi = int(rng.integers(lo, n))
        max_len = int(rng.integers(1, n + 1))
        null_score = float(start[0] + end[0]) if rng.random() < 0.5 else None
        got = best_span_pair(start, end, TokenSpan(lo, hi), max_len, null_score)
        want = brute_force_best_pair(start, end, (lo, hi), max_len, null_score)
        assert got[0] == want[0]
        assert got[1] == pytest.approx(want[1])


# ---------------------------------------------------------------------------
# locate


def test_locate_text_normalized_window():
    span = locate_text("Kong: Skull Island is a reboot.", "kong : skull island")
    assert span is not None
    assert span.text == "Kong: Skull Island"


def test_locate_text_absent():
    assert locate_text("a b c", "z q") is None


# ---------------------------------------------------------------------------
# training and prediction contracts


def test_overfit_multi_task_memorizes(stage_a_overfit, corpus32):
    final = stage_a_overfit.logs["span"].log[-1]
    assert final["context_span_iou"] >= 0.95
    assert final["mean_iou"] >= 0.95
    assert stage_a_overfit.logs["span"].log[0]["train_loss"] > stage_a_overfit.logs["span"].final_loss


def test_overfit_predictions_stay_in_legal_sections(stage_a_overfit, corpus32):
    model = stage_a_overfit.model
    for s in corpus32[:8]:
        triple, cspan = model.predict_all(s.claim, s.context)
        for pred in (triple.source, triple.relation, triple.target):
            if pred.span is not None and not pred.span.is_empty:
                assert s.claim[pred.span.start : pred.span.end] == pred.span.text
        if cspan.span is not None and not cspan.span.is_empty:
            assert s.context[cspan.span.start : cspan.span.end] == cspan.span.text


def test_predict_srt_requires_compatible_strategy(corpus32):
    config = tiny_config(epochs=2)
    result = train_stage_a(corpus32[:12], corpus32[:12], ExtractionStrategy.STRUCTURE_IGNORANT, config)
    with pytest.raises(IncompatibleModelError):
        result.model.predict_srt(corpus32[0].claim, corpus32[0].context)


def test_two_step_produces_two_checkpoints(corpus32):
    config = tiny_config(epochs=2)
    result = train_stage_a(corpus32[:12], corpus32[:12], ExtractionStrategy.TWO_STEP, config)
    assert result.checkpoint_count == 2
    assert list(result.logs) == ["srt", "span"]
    triple = result.model.predict_srt(corpus32[0].claim, corpus32[0].context)
    assert triple.source.text is not None
    pred = result.model.predict_context_span(corpus32[0].claim, corpus32[0].context)
    assert pred.field == "context_span"


def test_oracle_structure_needs_gold_triple(corpus32):
    config = tiny_config(epochs=2)
    result = train_stage_a(corpus32[:12], corpus32[:12], ExtractionStrategy.ORACLE_STRUCTURE, config)
    s = corpus32[0]
    pred = result.model.predict_context_span(s.claim, s.context, s.triple)
    assert pred.span is None or pred.span.text == pred.text
    with pytest.raises(TrainingError):
        result.model.predict_context_span(s.claim, s.context, None)


def test_strategy_argument_mismatch_raises(stage_a_overfit, corpus32):
    s = corpus32[0]
    with pytest.raises(TrainingError):
        predict_context_span(stage_a_overfit.model, s.claim, s.context, "structure_ignorant")
    with pytest.raises(TrainingError):
        stage_a_overfit.model.predict_context_span(s.claim, s.context, s.triple)


def test_empty_training_set_rejected():
    with pytest.raises(TrainingError):
        train_stage_a([], [], ExtractionStrategy.MULTI_TASK, tiny_config(epochs=1))


def test_empty_target_allowed_in_predictions(stage_a_overfit, corpus32):
    empties = [s for s in corpus32 if s.triple.target.is_empty]
    assert empties, "overfit corpus should include empty targets"
    triple = predict_srt(stage_a_overfit.model, empties[0].claim, empties[0].context)
    assert triple.target.text == ""
    assert triple.target.span == EMPTY_SPAN


def test_save_load_round_trip(tmp_path, stage_a_overfit, corpus32):
    stage_a_overfit.model.save(tmp_path / "ckpt")
    reloaded = StageAModel.load(tmp_path / "ckpt")
    s = corpus32[0]
    before = stage_a_overfit.model.predict_all(s.claim, s.context)
    after = reloaded.predict_all(s.claim, s.context)
    assert before[0].source.text == after[0].source.text
    assert before[1].text == after[1].text
    assert reloaded.max_span_tokens == DEFAULT_MAX_SPAN_TOKENS


def test_degenerate_identical_claim_context_still_total(stage_a_overfit):
    text = "alice kent quietly opened the old bridge."
    pred = stage_a_overfit.model.predict_context_span(text, text)
    assert pred.field == "context_span"
    assert isinstance(pred.score, float)


# ---------------------------------------------------------------------------
# generative family


@pytest.fixture(scope="module")
def gen_stage_a():
    samples = make_samples(8, seed=25)
    config = tiny_config(epochs=150, lr=1e-3, family="tiny-gen")
    return train_stage_a(samples, samples, ExtractionStrategy.MULTI_TASK, config), samples


def test_generative_multi_task_learns(gen_stage_a):
    result, samples = gen_stage_a
    log = result.logs["gen"].log
    assert log[-1]["train_loss"] < 0.5 * log[0]["train_loss"]
    assert log[-1]["mean_iou"] >= 0.9  # memorized


def test_generative_predictions_locate_spans(gen_stage_a):
    result, samples = gen_stage_a
    s = samples[0]
    triple, cspan = result.model.predict_all(s.claim, s.context)
    assert triple.source.text
    if triple.source.span is not None:
        assert s.claim[triple.source.span.start : triple.source.span.end] == triple.source.span.text


def test_generative_two_step_trains_two_checkpoints():
    samples = make_samples(8, seed=26)
    result = train_stage_a(
        samples, samples, ExtractionStrategy.TWO_STEP, tiny_config(epochs=30, lr=1e-3, family="tiny-gen")
    )
    assert result.checkpoint_count == 2
    assert list(result.logs) == ["srt", "span"]
    s = samples[0]
    triple, cspan = result.model.predict_all(s.claim, s.context)
    assert triple is not None
    assert cspan.field == "context_span"
