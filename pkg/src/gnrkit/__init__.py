"""Toolkit for gender-neutral rewriting of Italian text.

Covers the full loop: few-shot prompt construction, backend dispatch,
binary neutrality judging, meaning-preservation scoring, human-level
threshold derivation, similarity-based training-data curation, SFT
export, fine-tuning plan emission, and two-axis reporting.
"""

__version__ = "0.1.0"

from .analysis import (
    CorrelationReport,
    EvalRecord,
    ReportFormat,
    RunReport,
    aggregate,
    correlate,
    detect_metric_gaming,
    emit_report,
)
from .corpus import (
    CorpusEntry,
    CorpusFormatError,
    Subset,
    TrainingPair,
    load_corpus,
    load_training_pairs,
    select_gnr_inputs,
)
from .curation import (
    DataSplit,
    FilterSummary,
    export_chat_sft,
    median_filter,
    score_pairs,
    split_stats,
)
from .finetune import LoraPlan, ModelSizeClass, load_plan, make_lora_plan, write_plan
from .gateway import (
    BackendDescriptor,
    BackendKind,
    Gateway,
    GenerationRequest,
    GenerationResult,
    HttpBackend,
    MockBackend,
)
from .judge import Judge, JudgeError, JudgeVerdict, VerdictLabel, neutrality_accuracy, parse_verdict
from .prompting import (
    ChatMessage,
    Language,
    PromptCondition,
    Role,
    ShotPair,
    Template,
    build_messages,
    load_shots,
)
from .similarity import (
    HashTokenEncoder,
    Metric,
    SimilarityScore,
    TableEncoder,
    ThresholdReport,
    derive_threshold,
    likelihood_score,
    score_reference_pairs,
    token_similarity,
)

__all__ = [
    "__version__",
    "BackendDescriptor",
    "BackendKind",
    "ChatMessage",
    "CorpusEntry",
    "CorpusFormatError",
    "CorrelationReport",
    "DataSplit",
    "EvalRecord",
    "FilterSummary",
    "Gateway",
    "GenerationRequest",
    "GenerationResult",
    "HashTokenEncoder",
    "HttpBackend",
    "Judge",
    "JudgeError",
    "JudgeVerdict",
    "Language",
    "LoraPlan",
    "Metric",
    "MockBackend",
    "ModelSizeClass",
    "PromptCondition",
    "ReportFormat",
    "Role",
    "RunReport",
    "ShotPair",
    "SimilarityScore",
    "Subset",
    "TableEncoder",
    "Template",
    "ThresholdReport",
    "TrainingPair",
    "VerdictLabel",
    "aggregate",
    "build_messages",
    "correlate",
    "derive_threshold",
    "detect_metric_gaming",
    "emit_report",
    "export_chat_sft",
    "likelihood_score",
    "load_corpus",
    "load_plan",
    "load_shots",
    "load_training_pairs",
    "make_lora_plan",
    "median_filter",
    "neutrality_accuracy",
    "parse_verdict",
    "score_pairs",
    "score_reference_pairs",
    "select_gnr_inputs",
    "split_stats",
    "token_similarity",
    "write_plan",
]
