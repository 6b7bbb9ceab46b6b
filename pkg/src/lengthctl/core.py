"""Shared domain types: chat messages, transcripts, and the length state.

Words are maximal runs of non-whitespace characters (Unicode whitespace, as
understood by :meth:`str.split`). Output segments are joined with a single
space, so word counts are exactly additive across rounds.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Iterator

ROLES = ("system", "user", "assistant")


class ProtocolError(RuntimeError):
    """Raised when a caller drives a session state out of order."""


def count_words(text: str) -> int:
    return len(text.split())


def join_segments(segments: Iterable[str]) -> str:
    """Concatenate output segments with single spaces, dropping empty ones."""
    return " ".join(s.strip() for s in segments if s.strip())


@dataclass(frozen=True)
class Message:
    """One chat message.

    ``payload_words`` optionally records how many of the content's words
    belong to the task itself (source text or generated summary) rather than
    to control framing. The token accountant uses it for the idealized cost
    view; ``None`` means "infer".
    """

    role: str
    content: str
    payload_words: int | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}; expected one of {ROLES}")
        if not isinstance(self.content, str):
            raise TypeError("message content must be text")

    def to_dict(self) -> dict[str, str]:
        return {"role": self.role, "content": self.content}


class Transcript:
    """Append-only, chronologically ordered message list."""

    def __init__(self, messages: Iterable[Message] = ()) -> None:
        self._messages: list[Message] = list(messages)

    def append(self, message: Message) -> None:
        self._messages.append(message)

    @property
    def messages(self) -> tuple[Message, ...]:
        return tuple(self._messages)

    def __iter__(self) -> Iterator[Message]:
        return iter(self._messages)

    def __len__(self) -> int:
        return len(self._messages)

    def __getitem__(self, idx: int) -> Message:
        return self._messages[idx]

    def to_list(self) -> list[dict[str, str]]:
        return [m.to_dict() for m in self._messages]

    @classmethod
    def from_list(cls, rows: Iterable[dict[str, str]]) -> "Transcript":
        return cls(Message(r["role"], r["content"]) for r in rows)

    def __repr__(self) -> str:
        return f"Transcript({len(self._messages)} messages)"


class Strategy(str, enum.Enum):
    SINGLE_ROUND = "single_round"
    MULTI_ROUND = "multi_round"
    BINARY_SEARCH = "binary_search"

    @classmethod
    def parse(cls, value: "str | Strategy") -> "Strategy":
        if isinstance(value, Strategy):
            return value
        aliases = {"single": "single_round", "multi": "multi_round", "binary": "binary_search",
                   "trivial": "multi_round"}
        key = str(value).strip().lower().replace("-", "_")
        return cls(aliases.get(key, key))


def default_deviation(requested_words: int) -> int:
    """Default tolerance: 5% of the request, never below 10 words."""
    return max(10, requested_words // 20)


@dataclass(frozen=True)
class ControlConfig:
    strategy: Strategy
    requested_words: int
    deviation: int | None = None
    max_rounds: int = 64
    fallback_threshold: int = 30
    prompt_template_id: str = "v1"
    retries: int = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "strategy", Strategy.parse(self.strategy))
        if self.deviation is None:
            object.__setattr__(self, "deviation", default_deviation(self.requested_words))
        if self.requested_words < 1:
            raise ValueError("requested_words must be >= 1")
        if self.deviation < 0:
            raise ValueError("deviation must be >= 0")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.fallback_threshold < 1:
            raise ValueError("fallback_threshold must be >= 1")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")

    def initial_state(self) -> "LengthState":
        return LengthState(requested_words=self.requested_words, deviation=self.deviation)


@dataclass(frozen=True)
class LengthState:
    requested_words: int
    produced_words: int = 0
    deviation: int = 0
    round: int = 0
    done: bool = False

    def __post_init__(self) -> None:
        if self.requested_words < 1:
            raise ValueError("requested_words must be >= 1")
        if self.produced_words < 0 or self.deviation < 0 or self.round < 0:
            raise ValueError("counts must be non-negative")

    def finish(self) -> "LengthState":
        return replace(self, done=True)


def remaining_words(state: LengthState) -> int:
    """Signed gap to the request; negative once the output overshoots."""
    return state.requested_words - state.produced_words


def append_output(state: LengthState, text: str) -> LengthState:
    if state.done:
        raise ProtocolError("cannot append output to a finished session")
    return replace(
        state,
        produced_words=state.produced_words + count_words(text),
        round=state.round + 1,
    )


def extract_json_object(raw: str) -> dict[str, Any] | None:
    """Return the first JSON object embedded in ``raw``.

    Objects carrying a ``"text"`` key win over earlier objects without one, so
    stray braces in surrounding chatter do not shadow the real payload.
    """
    decoder = json.JSONDecoder()
    first: dict[str, Any] | None = None
    pos = raw.find("{")
    while pos != -1:
        try:
            obj, _ = decoder.raw_decode(raw, pos)
        except ValueError:
            obj = None
        if isinstance(obj, dict):
            if "text" in obj:
                return obj
            if first is None:
                first = obj
        pos = raw.find("{", pos + 1)
    return first
