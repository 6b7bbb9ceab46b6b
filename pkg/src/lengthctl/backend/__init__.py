"""Chat backends and the token accounting they share."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .base import ERROR_KINDS, BackendError, ChatBackend, ScriptedBackend
from .ledger import (
    TokenAccountant,
    TokenLedger,
    billed_cost,
    payload_words,
    reply_payload_words,
    uncached_cost,
)
from .remote import OpenAIChatBackend
from .simulator import SimulatedBackend, SimulatorProfile, filler_text, synthetic_corpus

__all__ = [
    "ERROR_KINDS",
    "BackendConfig",
    "BackendError",
    "ChatBackend",
    "OpenAIChatBackend",
    "ScriptedBackend",
    "SimulatedBackend",
    "SimulatorProfile",
    "TokenAccountant",
    "TokenLedger",
    "billed_cost",
    "build_backend",
    "filler_text",
    "load_backend_config",
    "payload_words",
    "reply_payload_words",
    "synthetic_corpus",
    "uncached_cost",
]


@dataclass(frozen=True)
class BackendConfig:
    """Backend settings as stored in a JSON config file.

    ``kind`` is ``"simulator"`` or ``"openai"``. Simulator runs read the
    ``simulator`` table (a :class:`SimulatorProfile`); remote runs read the
    connection fields.
    """

    kind: str = "simulator"
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4o-mini"
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = 0.0
    request_timeout_seconds: float = 60.0
    max_concurrent: int = 4
    simulator: SimulatorProfile = field(default_factory=SimulatorProfile)

    def __post_init__(self) -> None:
        if self.kind not in ("simulator", "openai"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if isinstance(self.simulator, dict):
            object.__setattr__(self, "simulator", SimulatorProfile(**self.simulator))

    @classmethod
    def from_dict(cls, data: dict) -> "BackendConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown backend config keys: {sorted(unknown)}")
        return cls(**data)


def load_backend_config(path: str | Path) -> BackendConfig:
    with open(path, encoding="utf-8") as fh:
        return BackendConfig.from_dict(json.load(fh))


def build_backend(config: BackendConfig) -> ChatBackend:
    if config.kind == "simulator":
        return SimulatedBackend(config.simulator)
    return OpenAIChatBackend(
        config.base_url,
        config.model,
        api_key_env=config.api_key_env,
        temperature=config.temperature,
        request_timeout_seconds=config.request_timeout_seconds,
        max_concurrent=config.max_concurrent,
    )
