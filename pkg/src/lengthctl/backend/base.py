from __future__ import annotations

import abc
from typing import Callable, Iterable, Sequence

from ..core import Message, Transcript
from .ledger import TokenAccountant, TokenLedger

ERROR_KINDS = ("network", "auth", "rate_limited", "malformed_upstream")


class BackendError(RuntimeError):
    """A chat call failed. ``kind`` is one of :data:`ERROR_KINDS`.

    When raised out of a session, ``transcript`` and ``partial_text`` carry
    what had been exchanged and produced before the failure.
    """

    def __init__(self, kind: str, message: str, *, status: int | None = None) -> None:
        if kind not in ERROR_KINDS:
            raise ValueError(f"unknown backend error kind {kind!r}")
        super().__init__(f"{kind}: {message}")
        self.kind = kind
        self.status = status
        self.transcript: Transcript | None = None
        self.partial_text: str | None = None


class ChatBackend(abc.ABC):
    """Takes a whole transcript per call and returns one assistant message.

    Backends keep no conversation state; everything the model sees travels in
    the transcript. The only state is the cumulative :class:`TokenLedger`.
    """

    max_concurrent: int = 1

    def __init__(self, *, cache_replies: bool = True) -> None:
        self._accountant = TokenAccountant(cache_replies=cache_replies)

    @property
    def ledger(self) -> TokenLedger:
        return self._accountant.ledger

    def complete(self, transcript: Transcript | Iterable[Message]) -> Message:
        messages = list(transcript)
        if not messages:
            raise ValueError("cannot complete an empty transcript")
        if messages[-1].role == "assistant":
            raise ValueError("last message must not be an assistant message")
        reply = Message("assistant", self._generate(messages))
        self._accountant.record(messages, reply)
        return reply

    @abc.abstractmethod
    def _generate(self, messages: Sequence[Message]) -> str:
        """Return the raw assistant content for ``messages``."""

    @abc.abstractmethod
    def spawn(self) -> "ChatBackend":
        """Fresh backend with the same configuration and an empty ledger."""


class ScriptedBackend(ChatBackend):
    """Replays canned replies.

    ``script`` is either a callable mapping the message list to a reply, or a
    sequence of replies returned in order (the last one repeats).
    """

    def __init__(
        self,
        script: Callable[[Sequence[Message]], str] | Sequence[str],
        *,
        cache_replies: bool = True,
    ) -> None:
        super().__init__(cache_replies=cache_replies)
        if not callable(script) and not script:
            raise ValueError("scripted backend needs at least one reply")
        self._script = script
        self._cursor = 0

    def _generate(self, messages: Sequence[Message]) -> str:
        if callable(self._script):
            return self._script(messages)
        reply = self._script[min(self._cursor, len(self._script) - 1)]
        self._cursor += 1
        return reply

    def spawn(self) -> "ScriptedBackend":
        return ScriptedBackend(self._script, cache_replies=self._accountant.cache_replies)
