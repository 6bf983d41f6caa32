import sys
from importlib import resources
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nifcheck import parse_document

CORPUS = Path(str(resources.files("nifcheck") / "corpus"))


def read_corpus(name: str) -> str:
    return (CORPUS / name).read_text()


@pytest.fixture(scope="session")
def corpus_dir() -> Path:
    return CORPUS


@pytest.fixture(scope="session")
def figure1():
    return parse_document(read_corpus("figure1.nif")).base


@pytest.fixture(scope="session")
def figure2_doc():
    return parse_document(read_corpus("figure2.nif"))


@pytest.fixture(scope="session")
def figure3():
    return parse_document(read_corpus("figure3.nif")).base


@pytest.fixture(scope="session")
def figure4_doc():
    return parse_document(read_corpus("figure4.nif"))
