import numpy as np
import pytest

from aekit.gateway import ChatMessage


class FixedEmbeddingProvider:
    """Maps (system_prompt, document) to preset vectors; zeros otherwise."""

    def __init__(self, dim, table=None, default=None, provider_id="fixed-test"):
        self.dim = dim
        self.table = dict(table or {})
        self.default = np.zeros(dim) if default is None else np.asarray(default, dtype=float)
        self.provider_id = provider_id
        self.calls = []

    def embed(self, system_prompt, document):
        self.calls.append((system_prompt, document))
        key = (system_prompt, document)
        if key in self.table:
            return np.asarray(self.table[key], dtype=float)
        if document in self.table:
            return np.asarray(self.table[document], dtype=float)
        return self.default.copy()


class CountingChat:
    """Wraps a chat provider and counts next_message calls."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def next_message(self, history):
        self.calls += 1
        return self.inner.next_message(history)


def run_message(command):
    return ChatMessage("assistant", f"ACTION: RUN\n```\n{command}\n```")


def done_message(summary="looks good"):
    return ChatMessage("assistant", f"ACTION: DONE {summary}")


def fail_message(reason="giving up"):
    return ChatMessage("assistant", f"ACTION: FAIL {reason}")


@pytest.fixture
def mock_corpus_path():
    from pathlib import Path

    return Path(__file__).parent / "data" / "mock_corpus"


@pytest.fixture
def prepare_scripts_path():
    from pathlib import Path

    return Path(__file__).parent / "data" / "prepare_scripts.json"
