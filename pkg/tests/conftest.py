import json
from pathlib import Path

import pytest

from mpisentinel import corpus as corpus_mod

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def add_loop_text() -> str:
    return (FIXTURES / "add_loop.ll").read_text()


@pytest.fixture(scope="session")
def add_loop_golden() -> dict:
    return json.loads((FIXTURES / "add_loop.golden.json").read_text())


@pytest.fixture(scope="session")
def two_fn_call_text() -> str:
    return (FIXTURES / "two_fn_call.ll").read_text()


def corpus_ll_files() -> list[Path]:
    return sorted(FIXTURES.rglob("*.ll"))


@pytest.fixture(scope="session")
def all_fixture_modules():
    from mpisentinel import ircore
    return [(p, ircore.parse_ir(p.read_text(), p.stem)) for p in corpus_ll_files()]


def build_fixture_manifest() -> corpus_mod.Manifest:
    """Manifest over the bundled synthetic corpus (pre-compiled IR)."""
    samples = corpus_mod.ingest_mbi(FIXTURES / "corpus_mbi")
    samples += corpus_mod.ingest_corrbench(FIXTURES / "corpus_corrbench")
    corpus_mod.attach_ir(samples, "none")
    return corpus_mod.Manifest(samples, provenance={"suite": "synthetic", "seed": 0})


@pytest.fixture(scope="session")
def fixture_manifest() -> corpus_mod.Manifest:
    return build_fixture_manifest()
