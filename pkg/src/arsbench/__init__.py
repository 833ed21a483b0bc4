"""Certainty-gated suppression of redundant reasoning during decoding.

The package implements a training-free decoding controller: a difficulty
heuristic picks a reasoning mode, periodic checkpoints probe the model
for its tentative answer, probe entropy becomes a confidence score, and
a trend-adapted threshold converts confidence into the probability of
suppressing redundant reflection triggers. A benchmark harness compares
the controller against ungated, statically suppressed, and
budget-prompted decoding, and a synthetic lab checks the empirical
token-overhead bound.
"""

from .answers import extract_final_answer, normalize_answer, score_answer
from .backends import (
    EOS_TOKEN,
    FALLBACK_TOKEN,
    BackendDescriptor,
    GeneratorBackend,
    HttpCompletionsBackend,
    ProbeStyle,
    ReflectionLoop,
    ScriptedBackend,
    ScriptedReasonerSpec,
    TokenDistribution,
    dump_scripts,
    eos_distribution,
    greedy_token,
    load_scripts,
    one_hot,
    sample,
)
from .bound_lab import (
    BoundReport,
    InstanceOutcome,
    SyntheticFamilySpec,
    empirical_bound_check,
    low_certainty_instances,
    query_for_script,
    reflection_required_instances,
    run_bound_lab,
    synth_instances,
)
from .certainty import (
    AdaptationConfig,
    CheckpointRecord,
    ProbeConfig,
    adaptive_threshold,
    compute_trend,
    entropy_confidence,
    probe_answer,
    suppression_probability,
)
from .config import AppConfig
from .difficulty import (
    DEFAULT_KEYWORDS,
    CoDFastPolicy,
    DatasetKind,
    DeepReflectPolicy,
    DifficultyLexicon,
    DifficultyScore,
    ElasticModeratePolicy,
    ModeTag,
    Query,
    ReasoningMode,
    build_prompt,
    heuristic_difficulty,
    schedule_mode,
)
from .engine import (
    DEFAULT_TRIGGER_WORDS,
    GenerationTrace,
    StopReason,
    SuppressionConfig,
    SuppressionEvent,
    TriggerSet,
    derive_seed,
    detect_trigger,
    generate_with_ars,
    majority_vote,
    resample_non_trigger,
)
from .errors import (
    BackendError,
    CapabilityError,
    ConfigurationError,
    DatasetError,
    DegenerateDistributionError,
    InvalidDistributionError,
    ScriptDesyncError,
)
from .harness import (
    BaselineConfig,
    BaselineKind,
    EnergyMode,
    EnergyModel,
    RunMetrics,
    aggregate_metrics,
    emit_report,
    load_dataset,
    run_baseline,
    run_benchmark,
)

__version__ = "0.1.0"
