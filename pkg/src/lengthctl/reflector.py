"""State reflector: the multi-round length-control loop.

Each round the reflector turns the current :class:`LengthState` into a
natural-language status message, appends it to the transcript, asks the
backend for the next segment, and folds the reply back into the state. The
loop keeps going while the output is no longer than ``requested + deviation``
and the model has not declared itself done.

Two reflector behaviours are provided:

* trivial (``multi_round``): report requested and produced word counts and ask
  for roughly one more sentence;
* binary (``binary_search``): ask for half of the remaining budget each round,
  dropping back to trivial prompts once the remainder is at or below
  ``fallback_threshold`` words.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import NamedTuple

from .backend import BackendError, ChatBackend, TokenLedger
from .core import (
    ControlConfig,
    LengthState,
    Message,
    Strategy,
    Transcript,
    append_output,
    count_words,
    extract_json_object,
    join_segments,
    remaining_words,
)

log = logging.getLogger(__name__)

SENTINEL = "Summary complete"
_SENTINEL_RE = re.compile(re.escape(SENTINEL) + r"[.!]?")

TERMINATION_REASONS = ("model_done", "length_reached", "round_cap")


class MalformedReply(ValueError):
    """A reply carried neither a JSON payload nor the done sentinel."""


# -- prompt templates ---------------------------------------------------------


@dataclass(frozen=True)
class PromptTemplates:
    template_id: str
    single: str
    trivial: str
    binary: str


def render(template: str, **slots: int) -> str:
    """Fill ``{name}`` slots; other braces (JSON examples) are left alone."""
    out = template
    for name, value in slots.items():
        out = out.replace("{" + name + "}", str(value))
    return out


@lru_cache(maxsize=None)
def _builtin_templates(template_id: str) -> PromptTemplates:
    root = resources.files("lengthctl").joinpath("templates", template_id)
    if not root.is_dir():
        raise KeyError(f"no built-in prompt templates with id {template_id!r}")
    parts = {name: root.joinpath(f"{name}.txt").read_text(encoding="utf-8").strip()
             for name in ("single", "trivial", "binary")}
    return PromptTemplates(template_id, **parts)


def load_templates(template_id: str = "v1", directory: str | Path | None = None) -> PromptTemplates:
    """Load ``single.txt``, ``trivial.txt`` and ``binary.txt`` for an id.

    Without ``directory`` the packaged templates are used; otherwise the files
    are read from ``directory / template_id``.
    """
    if directory is None:
        return _builtin_templates(template_id)
    root = Path(directory) / template_id
    parts = {name: (root / f"{name}.txt").read_text(encoding="utf-8").strip()
             for name in ("single", "trivial", "binary")}
    return PromptTemplates(template_id, **parts)


# -- directives ----------------------------------------------------------------


@dataclass(frozen=True)
class ReflectorDirective:
    prompt_text: str
    target_words_this_round: int
    mode: str  # "trivial" | "binary"


@dataclass(frozen=True)
class Terminate:
    reason: str  # "length_reached" | "round_cap"


def next_directive(
    config: ControlConfig,
    state: LengthState,
    templates: PromptTemplates | None = None,
) -> ReflectorDirective | Terminate:
    """Decide the next reflector message, or that the loop is over."""
    if state.done:
        raise ValueError("session already finished")
    if state.produced_words > state.requested_words + state.deviation:
        return Terminate("length_reached")
    if state.round >= config.max_rounds:
        return Terminate("round_cap")

    templates = templates or load_templates(config.prompt_template_id)
    remaining = remaining_words(state)
    slots = dict(requested=state.requested_words, produced=state.produced_words)

    if config.strategy is Strategy.BINARY_SEARCH and remaining > config.fallback_threshold:
        target = remaining // 2
        return ReflectorDirective(render(templates.binary, target=target, **slots), target, "binary")

    # trivial prompts cap the round at whatever budget is left
    target = max(1, remaining)
    return ReflectorDirective(render(templates.trivial, target=target, **slots), target, "trivial")


# -- reply parsing -------------------------------------------------------------


class ParsedReply(NamedTuple):
    segment_text: str
    done: bool


def _as_bool(value: object) -> bool:
    if isinstance(value, str):
        return value.strip().lower() in ("true", "yes", "1")
    return bool(value)


def parse_reply(raw: str) -> ParsedReply:
    """Extract ``{"text": ..., "done": ...}`` from a model reply.

    Chatter around the JSON object is ignored. The reply counts as done when
    ``"done"`` is true or the text contains the sentinel; a reply with no JSON
    object at all is accepted only if it contains the sentinel.
    """
    obj = extract_json_object(raw)
    if obj is not None and isinstance(obj.get("text"), str):
        text = obj["text"]
        done = _as_bool(obj.get("done", False)) or SENTINEL in text
        return ParsedReply(text, done)
    if SENTINEL in raw:
        return ParsedReply("", True)
    raise MalformedReply(f"no JSON payload or completion sentinel in reply: {raw[:120]!r}")


def strip_sentinel(text: str) -> str:
    return " ".join(_SENTINEL_RE.sub(" ", text).split())


# -- sessions ------------------------------------------------------------------


@dataclass
class SessionOutcome:
    final_text: str
    final_words: int
    rounds: int
    terminated_by: str
    error: str | None = None
    transcript: Transcript = field(default_factory=Transcript, repr=False)
    ledger: TokenLedger = field(default_factory=TokenLedger)

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        return {
            "final_words": self.final_words,
            "rounds": self.rounds,
            "terminated_by": self.terminated_by,
            "error": self.error,
            "ledger": self.ledger.to_dict(),
        }


class _Session:
    def __init__(self, config: ControlConfig, backend: ChatBackend, templates: PromptTemplates) -> None:
        self.config = config
        self.backend = backend
        self.templates = templates
        self.transcript = Transcript()
        self.segments: list[str] = []
        self.calls = 0
        self.ledger_start = backend.ledger

    def ask(self) -> ParsedReply | str:
        """One backend exchange with the malformed-reply retry budget.

        Returns the parsed reply, or the failure reason: ``"malformed_reply"``
        when retries run out, ``"round_cap"`` when the call budget does.
        """
        for attempt in range(self.config.retries + 1):
            if self.calls >= self.config.max_rounds:
                return "malformed_reply" if attempt else "round_cap"
            self.calls += 1
            try:
                reply = self.backend.complete(self.transcript)
            except BackendError as err:
                err.transcript = self.transcript
                err.partial_text = join_segments(self.segments)
                raise
            try:
                parsed = parse_reply(reply.content)
            except MalformedReply as err:
                log.warning("malformed reply (attempt %d of %d): %s",
                            attempt + 1, self.config.retries + 1, err)
                continue
            segment = strip_sentinel(parsed.segment_text)
            self.transcript.append(Message("assistant", reply.content, payload_words=count_words(segment)))
            return ParsedReply(segment, parsed.done)
        return "malformed_reply"

    def outcome(self, terminated_by: str, error: str | None = None) -> SessionOutcome:
        text = join_segments(self.segments)
        return SessionOutcome(
            final_text=text,
            final_words=count_words(text),
            rounds=self.calls,
            terminated_by=terminated_by,
            error=error,
            transcript=self.transcript,
            ledger=self.backend.ledger - self.ledger_start,
        )


def run_session(
    config: ControlConfig,
    initial_input: str,
    backend: ChatBackend,
    templates: PromptTemplates | None = None,
) -> SessionOutcome:
    """Drive one length-controlled generation session to completion.

    ``BackendError`` propagates with ``transcript`` and ``partial_text``
    attached. Malformed replies are retried ``config.retries`` times; after
    that the session stops with ``terminated_by="round_cap"`` and ``error``
    set.
    """
    templates = templates or load_templates(config.prompt_template_id)
    session = _Session(config, backend, templates)
    input_words = count_words(initial_input)

    if config.strategy is Strategy.SINGLE_ROUND:
        prompt = render(templates.single, requested=config.requested_words)
        content = f"{initial_input}\n\n{prompt}" if initial_input else prompt
        session.transcript.append(Message("user", content, payload_words=input_words))
        parsed = session.ask()
        if isinstance(parsed, str):
            return session.outcome("round_cap", error=parsed)
        session.segments.append(parsed.segment_text)
        return session.outcome("model_done" if parsed.done else "length_reached")

    session.transcript.append(Message("user", initial_input, payload_words=input_words))
    state = config.initial_state()
    while True:
        directive = next_directive(config, state, templates)
        if isinstance(directive, Terminate):
            return session.outcome(directive.reason)
        if session.calls >= config.max_rounds:
            return session.outcome("round_cap")
        session.transcript.append(Message("user", directive.prompt_text, payload_words=0))
        parsed = session.ask()
        if isinstance(parsed, str):
            return session.outcome("round_cap", error=None if parsed == "round_cap" else parsed)
        state = append_output(state, parsed.segment_text)
        session.segments.append(parsed.segment_text)
        if parsed.done:
            return session.outcome("model_done")
