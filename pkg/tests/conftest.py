import logging

import numpy as np
import pytest

from gsp_amr.config import TrainConfig
from gsp_amr.decoder import GSPModel
from gsp_amr.synthetic import toy_parallel_corpus
from gsp_amr.training import train
from gsp_amr.vocab import build_vocabularies


@pytest.fixture(scope="session")
def toy_corpus():
    return toy_parallel_corpus(20, seed=0)


@pytest.fixture(scope="session")
def toy_pairs(toy_corpus):
    return toy_corpus[0]


@pytest.fixture(scope="session")
def toy_bundle(toy_corpus):
    pairs, alignments = toy_corpus
    return build_vocabularies(pairs, alignments)


@pytest.fixture
def fresh_model(toy_bundle):
    return GSPModel(TrainConfig.toy(), toy_bundle, seed=0)


@pytest.fixture(scope="session")
def trained(toy_corpus):
    """A model overfit on the toy corpus (stops at perfect training Smatch)."""
    pairs, alignments = toy_corpus
    logging.getLogger("gsp_amr").setLevel(logging.ERROR)
    return train(pairs, TrainConfig.toy(), alignments=alignments)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", {})
    lines = [results[k] for k in sorted(results)]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
