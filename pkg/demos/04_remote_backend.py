"""
Talking to an OpenAI-compatible server
======================================

The same session code drives any chat-completions endpoint. The API key is
read from the environment variable named in the config; nothing is sent if it
is missing. Set LENGTHCTL_DEMO_URL (and the key) to try a real server, for
example a local vLLM or llama.cpp instance.
"""

import json
import os
from pathlib import Path

from lengthctl import ControlConfig, run_session
from lengthctl.backend import BackendError, build_backend, load_backend_config

config_path = Path(__file__).with_name("backend.remote.json")
backend_config = load_backend_config(config_path)
print(json.dumps(json.loads(config_path.read_text()), indent=2))

if os.environ.get("LENGTHCTL_DEMO_URL"):
    from dataclasses import replace

    backend_config = replace(backend_config, base_url=os.environ["LENGTHCTL_DEMO_URL"])

try:
    backend = build_backend(backend_config)
except BackendError as exc:
    # missing credentials are reported before any request goes out
    print(f"backend unavailable ({exc.kind}): {exc}")
    raise SystemExit(0)

source = Path(__file__).with_name("sample_source.txt").read_text()
try:
    outcome = run_session(ControlConfig("binary", 150), source, backend)
except BackendError as exc:
    print(f"{exc.kind} error after {len(exc.transcript or [])} messages; partial text:")
    print(exc.partial_text)
else:
    print(f"{outcome.final_words} words in {outcome.rounds} rounds ({outcome.terminated_by})")
    print(outcome.final_text)
    print("ledger:", outcome.ledger.to_dict())
