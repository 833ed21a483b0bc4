"""Difficulty scoring, reasoning-mode scheduling, and prompt construction.

A query's difficulty is a weighted blend of three clamped signals: word
count, math-keyword hits, and math-symbol density. The score selects one
of three reasoning modes (fast drafting, token-budgeted, or deep
self-consistency), and each mode renders its own instruction block into
the generation prompt.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Union

from .errors import ConfigurationError

DEFAULT_KEYWORDS: tuple[str, ...] = (
    "prove", "integral", "derivative", "limit", "matrix", "probability",
    "polynomial", "modulo", "equation", "inequality", "geometry",
    "triangle", "angle", "prime", "sequence", "series", "function",
    "remainder", "factor", "root",
)

DEFAULT_SYMBOL_CHARS = "+-*/=<>^_\\%(){}[]∑∫√π≤≥≠"

SYSTEM_PREAMBLE = "You are a careful problem solver."
ANSWER_FORMAT_INSTRUCTION = "End with 'Final answer: \\boxed{...}'."

# Every prompt ends with this block. Backends that replay a fixed script
# use its last occurrence to locate where their own output begins.
SOLUTION_MARKER = ANSWER_FORMAT_INSTRUCTION + "\nSolution:"


class DatasetKind(str, Enum):
    GSM8K_STYLE = "gsm8k"
    MATH_STYLE = "math"
    PLAIN = "plain"


@dataclass(frozen=True)
class Query:
    """One benchmark problem."""

    id: str
    text: str
    gold_answer: str | None = None
    dataset_kind: DatasetKind = DatasetKind.PLAIN


@dataclass(frozen=True)
class DifficultyLexicon:
    """Keyword list and symbol class consulted by the difficulty heuristic."""

    keywords: tuple[str, ...] = DEFAULT_KEYWORDS
    symbol_chars: frozenset[str] = frozenset(DEFAULT_SYMBOL_CHARS)

    def __post_init__(self) -> None:
        object.__setattr__(self, "keywords", tuple(self.keywords))
        object.__setattr__(self, "symbol_chars", frozenset(self.symbol_chars))
        if not self.keywords:
            raise ConfigurationError("difficulty lexicon needs at least one keyword")
        if any(k != k.lower() for k in self.keywords):
            raise ConfigurationError("lexicon keywords must be lowercase")
        if len(set(self.keywords)) != len(self.keywords):
            raise ConfigurationError("lexicon keywords must be unique")


DEFAULT_LEXICON = DifficultyLexicon()


@dataclass(frozen=True)
class DifficultyScore:
    """Difficulty in [0, 1] along with its three contributing terms."""

    value: float
    length_term: float
    keyword_term: float
    symbol_term: float


class ModeTag(str, Enum):
    FAST = "fast"
    MOD = "moderate"
    DEEP = "deep"


@dataclass(frozen=True)
class CoDFastPolicy:
    """Chain-of-drafts style prompting: few short drafts, then commit."""

    drafts: int = 2
    per_draft: int = 10


@dataclass(frozen=True)
class ElasticModeratePolicy:
    """Budget-constrained reasoning prompt."""

    budget_tokens: int = 64


@dataclass(frozen=True)
class DeepReflectPolicy:
    """Self-consistency over several independent reasoning samples."""

    sc_k: int = 3


PolicyParams = Union[CoDFastPolicy, ElasticModeratePolicy, DeepReflectPolicy]

_POLICY_FOR_TAG: dict[ModeTag, type] = {
    ModeTag.FAST: CoDFastPolicy,
    ModeTag.MOD: ElasticModeratePolicy,
    ModeTag.DEEP: DeepReflectPolicy,
}


@dataclass(frozen=True)
class ReasoningMode:
    tag: ModeTag
    params: PolicyParams

    def __post_init__(self) -> None:
        expected = _POLICY_FOR_TAG[self.tag]
        if not isinstance(self.params, expected):
            raise ConfigurationError(
                f"mode {self.tag.value} cannot carry {type(self.params).__name__} parameters"
            )


def heuristic_difficulty(query: Query, lexicon: DifficultyLexicon = DEFAULT_LEXICON) -> DifficultyScore:
    """Blend of clamped word-count, keyword, and symbol signals.

    Words are maximal non-whitespace runs; keyword hits are case-insensitive
    whole-word matches summed over the lexicon; symbols are single-character
    membership counts. Each term is clamped before weighting, so the total
    always lands in [0, 1].
    """
    text = query.text
    words = len(text.split())
    lowered = text.lower()
    hits = 0
    for keyword in lexicon.keywords:
        hits += len(re.findall(rf"\b{re.escape(keyword)}\b", lowered))
    symbols = sum(1 for ch in text if ch in lexicon.symbol_chars)

    length_term = 0.4 * min(1.0, words / 80.0)
    keyword_term = 0.4 * min(1.0, hits / (3.0 * len(lexicon.keywords)))
    symbol_term = 0.2 * min(1.0, symbols / 10.0)
    value = length_term + keyword_term + symbol_term
    return DifficultyScore(value=value, length_term=length_term,
                           keyword_term=keyword_term, symbol_term=symbol_term)


def schedule_mode(score: DifficultyScore | float, low_cut: float = 0.35,
                  high_cut: float = 0.65) -> ReasoningMode:
    """Step schedule: below low_cut fast, below high_cut moderate, else deep.

    Boundary values resolve to the harder mode.
    """
    if not (0.0 <= low_cut < high_cut <= 1.0):
        raise ConfigurationError(
            f"difficulty cuts must satisfy 0 <= low < high <= 1, got ({low_cut}, {high_cut})"
        )
    value = score.value if isinstance(score, DifficultyScore) else float(score)
    if value < low_cut:
        tag = ModeTag.FAST
    elif value < high_cut:
        tag = ModeTag.MOD
    else:
        tag = ModeTag.DEEP
    return ReasoningMode(tag=tag, params=_POLICY_FOR_TAG[tag]())


_KIND_HINTS: dict[DatasetKind, str] = {
    DatasetKind.GSM8K_STYLE: "Give the final result as a single number.",
    DatasetKind.MATH_STYLE: "Give the final result in simplest form.",
    DatasetKind.PLAIN: "",
}


def build_prompt(mode: ReasoningMode, query: Query,
                 dataset_kind: DatasetKind | None = None) -> str:
    """Render the full generation prompt for a query under a mode.

    Layout: fixed preamble, mode instruction, optional dataset hint, the
    query text verbatim, then the answer-format block that terminates
    every prompt.
    """
    kind = dataset_kind if dataset_kind is not None else query.dataset_kind
    params = mode.params
    if mode.tag is ModeTag.FAST:
        instruction = (
            f"Sketch at most {params.drafts} drafts of at most "
            f"{params.per_draft} words each, then commit to the best one."
        )
    elif mode.tag is ModeTag.MOD:
        instruction = (
            f"Work through the problem, keeping the reasoning within "
            f"{params.budget_tokens} tokens."
        )
    else:
        instruction = (
            "Reason carefully step by step and verify each intermediate "
            "claim before concluding."
        )
    pieces = [SYSTEM_PREAMBLE, instruction]
    hint = _KIND_HINTS[kind]
    if hint:
        pieces.append(hint)
    header = " ".join(pieces)
    return f"{header}\n\nProblem: {query.text}\n\n{SOLUTION_MARKER}"
