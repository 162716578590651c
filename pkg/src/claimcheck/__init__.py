"""claimcheck: detect, classify, and explain factual inconsistencies
between a claim sentence and a context sentence."""

__version__ = "0.1.0"

from .corpus import (
    CharSpan,
    ClaimComponent,
    CoarseEntityType,
    CorpusError,
    CorpusFormatError,
    CorpusStats,
    EMPTY_SPAN,
    FactTriple,
    FineLabelVocab,
    InconsistencyType,
    Sample,
    build_fine_label_vocab,
    compute_stats,
    load_corpus,
    split_corpus,
    validate_sample,
)
from .metrics import (
    ClassificationReport,
    SpanErrorCategory,
    categorize_span_error,
    classification_report,
    coverage_by_length,
    exact_match,
    token_iou,
)
from .encoding import (
    EncodedInput,
    GenerationFields,
    InputEncoder,
    SpecialTokenScheme,
    TokenSpan,
    build_generation_target,
    parse_generation_output,
)
from .training import TrainConfig

__all__ = [
    "CharSpan",
    "ClaimComponent",
    "ClassificationReport",
    "CoarseEntityType",
    "CorpusError",
    "CorpusFormatError",
    "CorpusStats",
    "EMPTY_SPAN",
    "EncodedInput",
    "FactTriple",
    "FineLabelVocab",
    "GenerationFields",
    "InconsistencyType",
    "InputEncoder",
    "Sample",
    "SpanErrorCategory",
    "SpecialTokenScheme",
    "TokenSpan",
    "TrainConfig",
    "build_fine_label_vocab",
    "build_generation_target",
    "categorize_span_error",
    "classification_report",
    "compute_stats",
    "coverage_by_length",
    "exact_match",
    "load_corpus",
    "parse_generation_output",
    "split_corpus",
    "token_iou",
    "validate_sample",
]
