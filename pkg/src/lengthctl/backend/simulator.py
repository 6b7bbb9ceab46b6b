"""Deterministic stand-in for a chat model.

The simulator reads the numbers the reflector states in its prompt (words
written so far, words requested, words asked for this round) and answers with
seeded filler text of the corresponding length, wrapped in the JSON reply
schema. Replies depend only on the profile and the transcript.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import asdict, dataclass
from typing import Sequence

from ..core import Message
from .base import ChatBackend
from .ledger import reply_payload_words

STATUS_RE = re.compile(r"written (\d+) of (\d+) words")
BINARY_RE = re.compile(r"[Ww]rite the next (\d+) words")
SINGLE_RE = re.compile(r"summary of (\d+) words")
_AFTER_RE = re.compile(r"after_n_rounds[(:](\d+)\)?$")

# Filler vocabulary. Deliberately free of "summary" and "complete".
VOCABULARY = (
    "the king city people plague oracle truth seeks answers shepherd messenger "
    "prophet queen palace road crossroads stranger fate story chorus elders "
    "fear pity grief light darkness blind sight house gate river field market "
    "letter journey night morning voice silence promise memory mountain valley "
    "old young brother sister friend enemy return leaves finds hears sees tells "
    "asks knows believes remembers learns hides reveals waits arrives slowly "
    "quietly finally again still already perhaps"
).split()


@dataclass(frozen=True)
class SimulatorProfile:
    """How the simulated model behaves.

    compliance: ``"exact"`` writes exactly the requested count; ``"noisy"``
        draws the count uniformly within ``target * (1 +- noise_fraction)``.
    sentence_words: length of a trivial-mode sentence.
    done_policy: ``"never"``, ``"after_n_rounds(N)"`` (done on call N+1), or
        ``"on_source_exhausted"`` (done once the stated budget is used up).
    """

    compliance: str = "exact"
    noise_fraction: float = 0.1
    sentence_words: int = 20
    seed: int = 0
    done_policy: str = "on_source_exhausted"

    def __post_init__(self) -> None:
        if self.compliance not in ("exact", "noisy"):
            raise ValueError(f"compliance must be 'exact' or 'noisy', got {self.compliance!r}")
        if not 0 <= self.noise_fraction < 1:
            raise ValueError("noise_fraction must lie in [0, 1)")
        if self.sentence_words < 1:
            raise ValueError("sentence_words must be >= 1")
        if self.done_policy not in ("never", "on_source_exhausted") and self.done_after is None:
            raise ValueError(f"unknown done_policy {self.done_policy!r}")

    @property
    def done_after(self) -> int | None:
        m = _AFTER_RE.match(self.done_policy)
        return int(m.group(1)) if m else None

    def to_dict(self) -> dict:
        return asdict(self)


def filler_text(n_words: int, rng: random.Random) -> str:
    """``n_words`` words of sentence-shaped filler."""
    words: list[str] = []
    while len(words) < n_words:
        length = min(rng.randint(6, 14), n_words - len(words))
        sentence = [rng.choice(VOCABULARY) for _ in range(length)]
        sentence[0] = sentence[0].capitalize()
        sentence[-1] += "."
        words.extend(sentence)
    return " ".join(words)


def synthetic_corpus(n_docs: int, length_range: tuple[int, int], seed: int = 0) -> list[dict]:
    """Documents of filler text with lengths uniform in ``length_range``."""
    rng = random.Random(seed)
    lo, hi = length_range
    return [
        {"id": f"doc-{i:04d}", "text": filler_text(rng.randint(lo, hi), rng)}
        for i in range(n_docs)
    ]


class SimulatedBackend(ChatBackend):
    max_concurrent = 4

    def __init__(self, profile: SimulatorProfile | None = None, *, cache_replies: bool = True) -> None:
        super().__init__(cache_replies=cache_replies)
        self.profile = profile or SimulatorProfile()

    def spawn(self) -> "SimulatedBackend":
        return SimulatedBackend(self.profile, cache_replies=self._accountant.cache_replies)

    def _rng(self, messages: Sequence[Message]) -> random.Random:
        blob = json.dumps([self.profile.seed, [m.to_dict() for m in messages]], ensure_ascii=False)
        digest = hashlib.sha256(blob.encode("utf-8")).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))

    def _draw(self, target: int, rng: random.Random) -> int:
        if self.profile.compliance == "exact" or target <= 0:
            return max(target, 0)
        spread = self.profile.noise_fraction * target
        return max(1, round(rng.uniform(target - spread, target + spread)))

    def _generate(self, messages: Sequence[Message]) -> str:
        prof = self.profile
        rng = self._rng(messages)
        prompt = messages[-1].content
        earlier = [m for m in messages if m.role == "assistant"]

        requested: int | None = None
        status = STATUS_RE.search(prompt)
        if status:
            produced, requested = int(status.group(1)), int(status.group(2))
        else:
            produced = sum(reply_payload_words(m.content) for m in earlier)

        single = SINGLE_RE.search(prompt)
        binary = BINARY_RE.search(prompt)
        if single:
            requested = int(single.group(1))
            target = requested
        elif binary:
            target = int(binary.group(1))
        elif requested is not None:
            target = min(prof.sentence_words, requested - produced)
        else:
            target = prof.sentence_words

        if prof.done_policy == "on_source_exhausted" and requested is not None and produced >= requested:
            return json.dumps({"text": "", "done": True})
        if target <= 0:
            target = prof.sentence_words

        n = self._draw(target, rng)
        if prof.done_policy == "never":
            done = False
        elif prof.done_after is not None:
            done = len(earlier) >= prof.done_after
        else:
            done = bool(single) or (requested is not None and produced + n >= requested)
        return json.dumps({"text": filler_text(n, rng), "done": done})
