"""Token-generation backends.

The decoding loop consumes one ``TokenDistribution`` per step from a
backend. Two implementations are provided:

* ``ScriptedBackend`` replays a declarative script (solution tokens plus
  optional reflection loops) fully deterministically. It is stateless per
  call: each call re-derives its position from the context suffix the
  backend itself previously emitted, so concurrent generations and probe
  side-branches need no session handles. Parsed positions are memoized
  with precomputed successors to keep long generations cheap.
* ``HttpCompletionsBackend`` talks to an OpenAI-style ``/completions``
  endpoint, requesting a single token with top-k log-probabilities per
  step. It retries transient failures and refuses to fabricate a
  distribution when the endpoint cannot report log-probabilities.
"""

from __future__ import annotations

import json
import math
import os
import threading
import time
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol

import httpx

from .difficulty import SOLUTION_MARKER
from .errors import (
    BackendError,
    CapabilityError,
    ConfigurationError,
    DatasetError,
    DegenerateDistributionError,
    InvalidDistributionError,
    ScriptDesyncError,
)

# Sentinel token marking end of sequence. Never part of emitted text.
EOS_TOKEN = "<|eos|>"

# Emitted when suppression masks away every candidate of a step.
FALLBACK_TOKEN = "\n"

DEFAULT_PROBE_MARKER = "\nAnswer so far: "

# First candidate of the undecided probe distribution; greedy probes
# therefore decode it as the tentative answer before the script commits.
UNDECIDED_PROBE_TOKEN = "unsure"


@dataclass(frozen=True)
class TokenDistribution:
    """Next-token candidates with probabilities; top-k truncation allowed.

    Probabilities must be non-negative and may sum to less than one when
    ``truncated`` is set. A sum above one (beyond float tolerance) is
    rejected.
    """

    candidates: tuple[tuple[str, float], ...]
    truncated: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "candidates", tuple(tuple(c) for c in self.candidates))
        if not self.candidates:
            raise InvalidDistributionError("distribution has no candidates")
        total = 0.0
        for token, prob in self.candidates:
            if prob < 0.0:
                raise InvalidDistributionError(f"negative probability for {token!r}")
            total += prob
        if total > 1.0 + 1e-6:
            raise InvalidDistributionError(f"probabilities sum to {total:.8f} > 1")

    @property
    def is_eos(self) -> bool:
        return len(self.candidates) == 1 and self.candidates[0][0] == EOS_TOKEN


def one_hot(token: str) -> TokenDistribution:
    return TokenDistribution(((token, 1.0),))


def eos_distribution() -> TokenDistribution:
    return one_hot(EOS_TOKEN)


@dataclass(frozen=True)
class BackendDescriptor:
    """Static capabilities of a backend."""

    kind: str
    concurrent_safe: bool
    top_k: int

    def __post_init__(self) -> None:
        if self.top_k < 2:
            raise ConfigurationError("backend top_k must be at least 2")


class GeneratorBackend(Protocol):
    descriptor: BackendDescriptor

    def next_distribution(self, context: str) -> TokenDistribution:
        """Return the next-token distribution given the full context."""
        ...


def sample(dist: TokenDistribution, rng, mask: Callable[[str], bool] | None = None) -> str:
    """Draw a candidate proportionally to probability, restricted to unmasked ones.

    Consumes exactly one uniform draw per call, so seeded token streams stay
    aligned across configurations that sample the same positions.
    """
    kept = [(t, p) for t, p in dist.candidates if mask is None or mask(t)]
    total = sum(p for _, p in kept)
    if not kept or total <= 0.0:
        raise DegenerateDistributionError("no unmasked probability mass to sample from")
    point = rng.random() * total
    acc = 0.0
    for token, prob in kept:
        acc += prob
        if point < acc:
            return token
    return kept[-1][0]


def greedy_token(dist: TokenDistribution) -> str:
    """Highest-probability candidate; first one wins on ties."""
    best, best_p = dist.candidates[0]
    for token, prob in dist.candidates[1:]:
        if prob > best_p:
            best, best_p = token, prob
    return best


class ProbeStyle(str, Enum):
    """Shape of probe distributions before the script knows its answer."""

    UNIFORM_TOPK = "uniform_topk"
    ONE_HOT = "one_hot"


@dataclass(frozen=True)
class ReflectionLoop:
    """A redundant reflection cycle anchored at a solution position.

    While the cursor sits at ``position`` the script offers
    ``trigger_word`` with probability ``emit_prob`` (the pending solution
    token gets the rest). An emitted trigger is followed by
    ``body_tokens``, after which the cursor is back at ``position``; with
    ``max_fires=None`` the cycle re-arms until the solution token finally
    gets sampled, which is what makes unsuppressed reflection expensive.
    A fallback newline at the anchor retires the loop without firing it.
    """

    position: int
    trigger_word: str
    body_tokens: tuple[str, ...]
    emit_prob: float
    max_fires: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "body_tokens", tuple(self.body_tokens))
        if self.position < 0:
            raise ConfigurationError("loop position must be non-negative")
        if not self.trigger_word:
            raise ConfigurationError("loop trigger word must be non-empty")
        if not (0.0 <= self.emit_prob <= 1.0):
            raise ConfigurationError(f"emit_prob must lie in [0, 1], got {self.emit_prob}")
        if self.max_fires is not None and self.max_fires < 1:
            raise ConfigurationError("max_fires must be positive when set")


@dataclass(frozen=True)
class ScriptedReasonerSpec:
    """Declarative description of one synthetic reasoning problem.

    ``answer_known_at`` is the number of solution tokens after which a
    probe decodes the gold answer one-hot; before that, probes follow
    ``pre_solution_probe_entropy``. Loop positions are strictly increasing and may
    not exceed the script length.
    """

    instance_id: str
    solution_tokens: tuple[str, ...]
    answer_known_at: int
    gold_answer: str
    loops: tuple[ReflectionLoop, ...] = ()
    pre_solution_probe_entropy: ProbeStyle = ProbeStyle.UNIFORM_TOPK
    per_token_latency: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "solution_tokens", tuple(self.solution_tokens))
        object.__setattr__(self, "loops", tuple(self.loops))
        if not self.solution_tokens:
            raise ConfigurationError("script needs at least one solution token")
        if not (0 <= self.answer_known_at <= len(self.solution_tokens)):
            raise ConfigurationError(
                f"answer_known_at {self.answer_known_at} outside script of "
                f"length {len(self.solution_tokens)}"
            )
        positions = [loop.position for loop in self.loops]
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise ConfigurationError("loop positions must be strictly increasing")
        if positions and positions[-1] > len(self.solution_tokens):
            raise ConfigurationError("loop position beyond end of script")
        if self.per_token_latency < 0.0:
            raise ConfigurationError("per_token_latency must be non-negative")


def simulated_latency(tokens: int, spec: ScriptedReasonerSpec) -> float:
    """Deterministic wall time for a scripted run: tokens times unit latency."""
    if tokens < 0:
        raise ConfigurationError("token count must be non-negative")
    return tokens * spec.per_token_latency


@dataclass(frozen=True)
class _Cursor:
    """Parser position inside a script.

    ``loop_ptr`` is the first loop not yet passed; ``fires`` and
    ``skipped`` describe only that loop and reset when the solution
    advances beyond it. ``body_loop`` >= 0 while inside a fired body.
    """

    sol_idx: int = 0
    loop_ptr: int = 0
    fires: int = 0
    skipped: bool = False
    body_loop: int = -1
    body_off: int = 0


class ScriptedBackend:
    """Deterministic backend replaying a ``ScriptedReasonerSpec``.

    Position recovery: every generation prompt ends with the solution
    marker, so everything after its last occurrence is this backend's own
    emission and can be re-parsed into a cursor. A context that cannot be
    parsed that way raises ``ScriptDesyncError``.
    """

    def __init__(self, spec: ScriptedReasonerSpec, *, top_k: int = 20,
                 probe_marker: str = DEFAULT_PROBE_MARKER,
                 prompt_marker: str = SOLUTION_MARKER,
                 cache_limit: int = 65536):
        if not probe_marker or not prompt_marker:
            raise ConfigurationError("markers must be non-empty")
        self.spec = spec
        self.descriptor = BackendDescriptor(kind="scripted", concurrent_safe=True, top_k=top_k)
        self._probe_marker = probe_marker
        self._prompt_marker = prompt_marker
        self._cache_limit = max(64, cache_limit)
        self._cursors: dict[str, _Cursor] = {}
        self._lock = threading.Lock()

    # ---- public protocol ----

    def next_distribution(self, context: str) -> TokenDistribution:
        generated, probe_text = self._split(context)
        cursor = self._cursor_for(generated)
        if probe_text is not None:
            return self._probe_distribution(cursor, probe_text)
        dist = self._dist_for(cursor)
        self._remember_successors(generated, cursor, dist)
        return dist

    def simulated_latency(self, tokens: int) -> float:
        return simulated_latency(tokens, self.spec)

    # ---- context handling ----

    def _split(self, context: str) -> tuple[str, str | None]:
        anchor = context.rfind(self._prompt_marker)
        tail = context[anchor + len(self._prompt_marker):] if anchor >= 0 else ""
        probe_at = tail.rfind(self._probe_marker)
        if probe_at >= 0:
            return tail[:probe_at], tail[probe_at + len(self._probe_marker):]
        return tail, None

    def _cursor_for(self, generated: str) -> _Cursor:
        with self._lock:
            cursor = self._cursors.get(generated)
        if cursor is None:
            cursor = self._parse(generated)
            with self._lock:
                self._cursors[generated] = cursor
        return cursor

    def _remember_successors(self, generated: str, cursor: _Cursor,
                             dist: TokenDistribution) -> None:
        successors: dict[str, _Cursor] = {}
        for token, _ in dist.candidates:
            if token != EOS_TOKEN:
                successors[generated + token] = self._advance(cursor, token)
        successors[generated + FALLBACK_TOKEN] = self._advance(cursor, FALLBACK_TOKEN)
        with self._lock:
            self._cursors.update(successors)
            while len(self._cursors) > self._cache_limit:
                self._cursors.pop(next(iter(self._cursors)))

    def _parse(self, generated: str) -> _Cursor:
        cursor = _Cursor()
        pos = 0
        end = len(generated)
        while pos < end:
            dist = self._dist_for(cursor)
            options = {token for token, _ in dist.candidates if token != EOS_TOKEN}
            options.add(FALLBACK_TOKEN)
            matched = None
            for token in sorted(options, key=lambda t: (-len(t), t)):
                if generated.startswith(token, pos):
                    matched = token
                    break
            if matched is None:
                raise ScriptDesyncError(
                    f"context does not match script {self.spec.instance_id!r} at offset {pos}"
                )
            cursor = self._advance(cursor, matched)
            pos += len(matched)
        return cursor

    # ---- script state machine ----

    def _pending_token(self, cursor: _Cursor) -> str:
        if cursor.sol_idx < len(self.spec.solution_tokens):
            return self.spec.solution_tokens[cursor.sol_idx]
        return EOS_TOKEN

    def _live_loop(self, cursor: _Cursor) -> ReflectionLoop | None:
        loops = self.spec.loops
        if cursor.loop_ptr >= len(loops):
            return None
        loop = loops[cursor.loop_ptr]
        if loop.position != cursor.sol_idx or cursor.skipped:
            return None
        if loop.max_fires is not None and cursor.fires >= loop.max_fires:
            return None
        if loop.emit_prob <= 0.0:
            return None
        return loop

    def _dist_for(self, cursor: _Cursor) -> TokenDistribution:
        if cursor.body_loop >= 0:
            body = self.spec.loops[cursor.body_loop].body_tokens
            return one_hot(body[cursor.body_off])
        loop = self._live_loop(cursor)
        pending = self._pending_token(cursor)
        if loop is None:
            return one_hot(pending)
        if loop.emit_prob >= 1.0:
            return one_hot(loop.trigger_word)
        return TokenDistribution((
            (loop.trigger_word, loop.emit_prob),
            (pending, 1.0 - loop.emit_prob),
        ))

    def _advance(self, cursor: _Cursor, token: str) -> _Cursor:
        if token == EOS_TOKEN:
            return cursor
        if cursor.body_loop >= 0:
            body = self.spec.loops[cursor.body_loop].body_tokens
            if cursor.body_off < len(body) and token == body[cursor.body_off]:
                nxt = cursor.body_off + 1
                if nxt >= len(body):
                    return replace(cursor, body_loop=-1, body_off=0)
                return replace(cursor, body_off=nxt)
            if token == FALLBACK_TOKEN:
                # suppressed mid-body: abandon the cycle and retire the loop
                return replace(cursor, body_loop=-1, body_off=0, skipped=True)
            raise ScriptDesyncError(f"unexpected token {token!r} inside reflection body")
        loop = self._live_loop(cursor)
        pending = self._pending_token(cursor)
        if loop is not None and token == loop.trigger_word:
            fired = replace(cursor, fires=cursor.fires + 1)
            if loop.body_tokens:
                return replace(fired, body_loop=cursor.loop_ptr, body_off=0)
            return fired
        if token == pending and pending != EOS_TOKEN:
            return self._advance_solution(cursor)
        if token == FALLBACK_TOKEN:
            if loop is not None:
                return replace(cursor, skipped=True)
            # masked one-hot outside a loop: a filler newline, no progress
            return cursor
        raise ScriptDesyncError(
            f"unexpected token {token!r} at solution position {cursor.sol_idx}"
        )

    def _advance_solution(self, cursor: _Cursor) -> _Cursor:
        idx = cursor.sol_idx + 1
        ptr, fires, skipped = cursor.loop_ptr, cursor.fires, cursor.skipped
        loops = self.spec.loops
        while ptr < len(loops) and loops[ptr].position < idx:
            ptr += 1
            fires = 0
            skipped = False
        return replace(cursor, sol_idx=idx, loop_ptr=ptr, fires=fires, skipped=skipped)

    # ---- probing ----

    def _probe_distribution(self, cursor: _Cursor, probe_text: str) -> TokenDistribution:
        if probe_text:
            # single-step probe: one answer token, then end of sequence
            return eos_distribution()
        if cursor.sol_idx >= self.spec.answer_known_at:
            return one_hot(self.spec.gold_answer)
        if self.spec.pre_solution_probe_entropy is ProbeStyle.ONE_HOT:
            return one_hot(UNDECIDED_PROBE_TOKEN)
        k = self.descriptor.top_k
        share = 1.0 / k
        candidates = [(UNDECIDED_PROBE_TOKEN, share)]
        candidates += [(f"{UNDECIDED_PROBE_TOKEN}-{i}", share) for i in range(1, k)]
        return TokenDistribution(tuple(candidates), truncated=True)


# ---- script files ----

def dump_scripts(specs: list[ScriptedReasonerSpec], path: str | Path) -> Path:
    """Write scripts as line-delimited JSON, one document per problem."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for spec in specs:
            record = {
                "instance_id": spec.instance_id,
                "solution_tokens": list(spec.solution_tokens),
                "answer_known_at": spec.answer_known_at,
                "gold_answer": spec.gold_answer,
                "loops": [
                    {
                        "position": loop.position,
                        "trigger_word": loop.trigger_word,
                        "body_tokens": list(loop.body_tokens),
                        "emit_prob": loop.emit_prob,
                        "max_fires": loop.max_fires,
                    }
                    for loop in spec.loops
                ],
                "pre_solution_probe_entropy": spec.pre_solution_probe_entropy.value,
                "per_token_latency": spec.per_token_latency,
            }
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path


def load_scripts(path: str | Path) -> list[ScriptedReasonerSpec]:
    """Load a line-delimited script file written by ``dump_scripts``."""
    path = Path(path)
    specs: list[ScriptedReasonerSpec] = []
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                loops = tuple(
                    ReflectionLoop(
                        position=entry["position"],
                        trigger_word=entry["trigger_word"],
                        body_tokens=tuple(entry["body_tokens"]),
                        emit_prob=entry["emit_prob"],
                        max_fires=entry.get("max_fires"),
                    )
                    for entry in record.get("loops", [])
                )
                specs.append(ScriptedReasonerSpec(
                    instance_id=str(record["instance_id"]),
                    solution_tokens=tuple(record["solution_tokens"]),
                    answer_known_at=record["answer_known_at"],
                    gold_answer=str(record["gold_answer"]),
                    loops=loops,
                    pre_solution_probe_entropy=ProbeStyle(record.get("pre_solution_probe_entropy", "uniform_topk")),
                    per_token_latency=record.get("per_token_latency", 0.0),
                ))
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"{path}:{lineno}: bad script record: {exc}") from exc
    if not specs:
        raise DatasetError(f"{path}: no script records found")
    return specs


# ---- HTTP backend ----

class HttpCompletionsBackend:
    """OpenAI-style ``/completions`` client fetching one token per request.

    Each call asks for ``max_tokens=1`` with ``logprobs=top_k`` and converts
    the returned log-probabilities into a truncated distribution. Transient
    failures (transport errors, 429, 5xx) are retried with exponential
    backoff; an endpoint that omits log-probabilities raises
    ``CapabilityError`` instead of being papered over with a guess.
    """

    def __init__(self, base_url: str, model: str, *, top_k: int = 20,
                 api_key_env: str = "ARS_HTTP_API_KEY", timeout: float = 30.0,
                 max_retries: int = 3, backoff_base: float = 0.5,
                 max_in_flight: int = 4, transport: httpx.BaseTransport | None = None):
        if max_retries < 1:
            raise ConfigurationError("max_retries must be positive")
        headers = {}
        api_key = os.environ.get(api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self.model = model
        self.descriptor = BackendDescriptor(kind="http", concurrent_safe=True, top_k=top_k)
        self._client = httpx.Client(base_url=base_url, timeout=timeout,
                                    headers=headers, transport=transport)
        self._retries = max_retries
        self._backoff = backoff_base
        self._gate = threading.Semaphore(max_in_flight)

    def next_distribution(self, context: str) -> TokenDistribution:
        payload = {
            "model": self.model,
            "prompt": context,
            "max_tokens": 1,
            "logprobs": self.descriptor.top_k,
            "temperature": 1.0,
        }
        data = self._post_with_retry(payload)
        try:
            choice = data["choices"][0]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed completion response: {exc}") from exc
        text = choice.get("text", "")
        finished = choice.get("finish_reason")
        logprobs = choice.get("logprobs") or {}
        top_list = logprobs.get("top_logprobs") or []
        top = top_list[0] if top_list else None
        if not top:
            if finished == "stop" and not text:
                return eos_distribution()
            raise CapabilityError(
                "endpoint returned no token log-probabilities; "
                "refusing to fabricate a distribution"
            )
        if finished == "stop" and not text:
            return eos_distribution()
        pairs = sorted(((tok, math.exp(lp)) for tok, lp in top.items()),
                       key=lambda kv: (-kv[1], kv[0]))
        total = sum(p for _, p in pairs)
        if total > 1.0:
            pairs = [(t, p / total) for t, p in pairs]
        return TokenDistribution(tuple(pairs), truncated=True)

    def _post_with_retry(self, payload: dict) -> dict:
        failure: BackendError | None = None
        for attempt in range(1, self._retries + 1):
            try:
                with self._gate:
                    response = self._client.post("/completions", json=payload)
            except httpx.TransportError as exc:
                failure = BackendError(f"transport failure: {exc}", attempts=attempt)
            else:
                if response.status_code == 200:
                    return response.json()
                if response.status_code == 429 or response.status_code >= 500:
                    failure = BackendError(
                        f"retryable status {response.status_code}",
                        status=response.status_code, attempts=attempt,
                    )
                else:
                    raise BackendError(
                        f"request rejected with status {response.status_code}",
                        status=response.status_code, attempts=attempt,
                    )
            if attempt < self._retries:
                time.sleep(self._backoff * (2 ** (attempt - 1)))
        assert failure is not None
        raise failure
