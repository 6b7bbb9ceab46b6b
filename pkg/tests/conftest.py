import json
from contextlib import contextmanager

import pytest

from lengthctl.backend import synthetic_corpus

# criterion number -> (label, passed); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, bool]] = {}


@pytest.fixture
def write_jsonl(tmp_path):
    def _write(rows, name="corpus.jsonl"):
        path = tmp_path / name
        with open(path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write((row if isinstance(row, str) else json.dumps(row)) + "\n")
        return path

    return _write


@pytest.fixture
def long_corpus(write_jsonl):
    """128 filler documents of 2000-2500 words."""
    return write_jsonl(synthetic_corpus(128, (2000, 2500), seed=1))


@pytest.fixture
def criterion():
    """Record whether the body of ``with criterion(n, label):`` passed."""

    @contextmanager
    def record(number, label):
        try:
            yield
        except BaseException:
            ACCEPTANCE[number] = (label, False)
            raise
        ACCEPTANCE[number] = (label, True)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        label, passed = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {number}. {label}")
