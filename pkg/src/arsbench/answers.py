"""Final-answer extraction, normalization, and scoring."""

from __future__ import annotations

import re
from fractions import Fraction

from .difficulty import DatasetKind

_HASH_RE = re.compile(r"####\s*([^\n]*)")
_ANSWER_IS_RE = re.compile(r"answer\s+is\s*:?\s*([^\n]*)", re.IGNORECASE)
_NUMBER_RE = re.compile(r"[-+]?\d[\d,]*(?:\.\d+)?(?:/\d+)?")


def _last_boxed(text: str) -> str | None:
    marker = "\\boxed{"
    start = text.rfind(marker)
    if start < 0:
        return None
    depth = 1
    idx = start + len(marker)
    while idx < len(text):
        ch = text[idx]
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start + len(marker):idx]
        idx += 1
    return None  # unclosed box: fall through to weaker extractors


def _last_number(text: str) -> str | None:
    matches = _NUMBER_RE.findall(text)
    return matches[-1] if matches else None


def extract_final_answer(text: str, dataset_kind: DatasetKind = DatasetKind.PLAIN) -> str:
    """Pull the final answer out of generated text.

    Precedence: last boxed expression, then a #### line, then an
    "answer is" phrase, then the last number anywhere. Returns "" when
    nothing matches.
    """
    boxed = _last_boxed(text)
    if boxed is not None:
        return normalize_answer(boxed)
    hashed = _HASH_RE.findall(text)
    if hashed:
        return normalize_answer(hashed[-1])
    phrases = _ANSWER_IS_RE.findall(text)
    if phrases:
        tail = phrases[-1]
        number = _NUMBER_RE.search(tail)
        if number:
            return normalize_answer(number.group(0))
        return normalize_answer(tail)
    number = _last_number(text)
    if number is not None:
        return normalize_answer(number)
    return ""


def normalize_answer(raw: str) -> str:
    """Canonical comparison form: no commas, currency, or trailing zeros."""
    value = raw.strip().strip("$").strip()
    value = value.rstrip(".")
    value = value.replace(",", "").replace(" ", "")
    if re.fullmatch(r"[-+]?\d+\.\d*", value):
        value = value.rstrip("0").rstrip(".")
    value = value.lstrip("+")
    return value


def score_answer(prediction: str, gold: str | None,
                 dataset_kind: DatasetKind = DatasetKind.PLAIN) -> bool:
    """Exact-match scoring with numeric equivalence.

    Fraction comparison makes "1/2" and "0.5" agree; anything that does
    not parse as a rational falls back to normalized string equality.
    """
    if gold is None:
        raise ValueError("cannot score without a gold answer")
    pred_norm = normalize_answer(prediction)
    gold_norm = normalize_answer(gold)
    if not pred_norm:
        return False
    if pred_norm == gold_norm:
        return True
    try:
        return Fraction(pred_norm) == Fraction(gold_norm)
    except (ValueError, ZeroDivisionError):
        return False
