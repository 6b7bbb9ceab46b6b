"""Token accounting with prefix-based context caching.

Every call's transcript is serialized into a word sequence. Words in the
longest common prefix with the previously seen sequence are billed as cached
input; the rest are fresh. The previously seen sequence is the last call's
transcript followed by the reply it produced, so a model's own earlier output
is cache-hit when the next round sends it back.

Alongside the raw counts the ledger keeps a *payload* view restricted to task
words (source text and generated summary). That view drops control framing
such as reflector prompts and JSON wrappers and is what the closed-form cost
equations describe.
"""

from __future__ import annotations

import threading
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from typing import Sequence

from ..core import Message, count_words, extract_json_object


@dataclass(frozen=True)
class TokenLedger:
    fresh_input_words: int = 0
    cached_input_words: int = 0
    output_words: int = 0
    payload_fresh_input_words: int = 0
    payload_cached_input_words: int = 0
    payload_output_words: int = 0
    calls: int = 0

    def __add__(self, other: "TokenLedger") -> "TokenLedger":
        return TokenLedger(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    def __sub__(self, other: "TokenLedger") -> "TokenLedger":
        return TokenLedger(*(getattr(self, f.name) - getattr(other, f.name) for f in fields(self)))

    @property
    def input_words(self) -> int:
        return self.fresh_input_words + self.cached_input_words

    def payload(self) -> "TokenLedger":
        """Ledger restricted to task words (framing excluded)."""
        return TokenLedger(
            fresh_input_words=self.payload_fresh_input_words,
            cached_input_words=self.payload_cached_input_words,
            output_words=self.payload_output_words,
            payload_fresh_input_words=self.payload_fresh_input_words,
            payload_cached_input_words=self.payload_cached_input_words,
            payload_output_words=self.payload_output_words,
            calls=self.calls,
        )

    def to_dict(self) -> dict[str, int]:
        return asdict(self)


def billed_cost(ledger: TokenLedger, k: float, c: float) -> float:
    """Cost in input-word units: fresh + c * cached + k * output."""
    if not 0 < c < 1:
        raise ValueError(f"cache coefficient c must lie in (0, 1), got {c}")
    if k <= 0:
        raise ValueError(f"output price ratio k must be positive, got {k}")
    return ledger.fresh_input_words + c * ledger.cached_input_words + k * ledger.output_words


def uncached_cost(ledger: TokenLedger, k: float) -> float:
    """Cost with caching ignored: every input word at full price."""
    if k <= 0:
        raise ValueError(f"output price ratio k must be positive, got {k}")
    return ledger.input_words + k * ledger.output_words


@lru_cache(maxsize=65536)
def _words(text: str) -> tuple[str, ...]:
    return tuple(text.split())


def reply_payload_words(content: str) -> int:
    """Words of the ``"text"`` field when the reply is JSON, else all words."""
    obj = extract_json_object(content)
    if obj is not None and isinstance(obj.get("text"), str):
        return count_words(obj["text"])
    return count_words(content)


def payload_words(message: Message) -> int:
    if message.payload_words is not None:
        return min(message.payload_words, count_words(message.content))
    if message.role == "assistant":
        return reply_payload_words(message.content)
    if message.role == "system":
        return 0
    return count_words(message.content)


# A serialized message: role, word tuple, payload word count. Payload words are
# taken to be the leading words of the message; only counts matter.
_Block = tuple[str, tuple[str, ...], int]


def _serialize(messages: Sequence[Message]) -> list[_Block]:
    return [(m.role, _words(m.content), payload_words(m)) for m in messages]


def _common_prefix(prev: list[_Block], cur: list[_Block]) -> tuple[int, int]:
    """Return (words, payload words) of ``cur`` shared with ``prev`` as a prefix.

    Message boundaries and roles take part in the comparison, so equal text
    under a different role or split differently is not a cache hit.
    """
    words = payload = 0
    for a, b in zip(prev, cur):
        if a[0] == b[0] and a[1] == b[1]:
            words += len(b[1])
            payload += b[2]
            continue
        if a[0] == b[0]:
            n = 0
            for x, y in zip(a[1], b[1]):
                if x != y:
                    break
                n += 1
            words += n
            payload += min(n, b[2])
        break
    return words, payload


class TokenAccountant:
    """Thread-safe ledger plus the cache state of the previous call."""

    def __init__(self, cache_replies: bool = True) -> None:
        self.cache_replies = cache_replies
        self._lock = threading.Lock()
        self._ledger = TokenLedger()
        self._prev: list[_Block] = []

    @property
    def ledger(self) -> TokenLedger:
        with self._lock:
            return self._ledger

    def record(self, messages: Sequence[Message], reply: Message) -> TokenLedger:
        """Account one completed call; returns that call's own ledger entry."""
        cur = _serialize(messages)
        total = sum(len(b[1]) for b in cur)
        total_payload = sum(b[2] for b in cur)
        out_words = count_words(reply.content)
        out_payload = payload_words(reply)
        with self._lock:
            cached, cached_payload = _common_prefix(self._prev, cur)
            entry = TokenLedger(
                fresh_input_words=total - cached,
                cached_input_words=cached,
                output_words=out_words,
                payload_fresh_input_words=total_payload - cached_payload,
                payload_cached_input_words=cached_payload,
                payload_output_words=out_payload,
                calls=1,
            )
            self._ledger = self._ledger + entry
            self._prev = cur + _serialize([reply]) if self.cache_replies else cur
        return entry
