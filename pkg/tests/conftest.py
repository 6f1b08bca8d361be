import sys
from pathlib import Path

import pytest

from phenokit.metrics import labels_from_csv
from phenokit.store import Store
from phenokit.synthgen import generate, load_config
from phenokit.vocab import load_vocabulary

sys.path.insert(0, str(Path(__file__).resolve().parent))

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def vocab():
    return load_vocabulary(FIXTURES / "vocab")


@pytest.fixture(scope="session")
def small_store():
    return Store.load(FIXTURES / "store_small")


@pytest.fixture(scope="session")
def sim_small_dir(tmp_path_factory, vocab) -> Path:
    out = tmp_path_factory.mktemp("sim") / "sim_small"
    generate(load_config(FIXTURES / "sim_small.json"), vocab, out)
    return out


@pytest.fixture(scope="session")
def sim_small_store(sim_small_dir):
    return Store.load(sim_small_dir)


@pytest.fixture(scope="session")
def sim_small_labels(sim_small_dir):
    return labels_from_csv((sim_small_dir / "labels.csv").read_text(encoding="utf-8"))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for line in RESULTS:
        terminalreporter.write_line(line)
