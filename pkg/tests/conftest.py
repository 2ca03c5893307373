import numpy as np
import pytest

from sje.embeddings import InputEmbeddingSet, OutputEmbeddingTable
from sje.synth import generate_planted_task


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def two_class_table():
    return OutputEmbeddingTable(("a", "b"), np.eye(2), "attributes-continuous")


@pytest.fixture
def identity_data():
    return InputEmbeddingSet(np.eye(2), np.array([0, 1]), ("a", "b"))


@pytest.fixture(scope="session")
def planted():
    return generate_planted_task(seed=0)


# (criterion, passed, detail) lines recorded by the acceptance suite
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for name, ok, detail in ACCEPTANCE:
            terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
