import pytest

from fullrange_hpe.data import CorpusConfig, build_corpus
from fullrange_hpe.train import TrainConfig

TINY_CORPUS = CorpusConfig(n_train=96, n_val=32, n_test=32, n_anchor_ids=6, n_test_ids=3,
                           n_positive_ids=6, positive_views=2, image_size=16)
SMALL_CORPUS = CorpusConfig(n_train=300, n_val=40, n_test=10, n_anchor_ids=10, n_test_ids=2,
                            n_positive_ids=10, image_size=16)
TINY_TRAIN = TrainConfig(batch_size=16, epochs=2, head_epochs=2, hidden=32, embed_dim=16, patience=5)


@pytest.fixture(scope="session")
def tiny_corpus():
    return build_corpus(TINY_CORPUS, seed=0)


@pytest.fixture
def tiny_train():
    return TINY_TRAIN


@pytest.fixture(scope="session")
def small_corpus():
    return build_corpus(SMALL_CORPUS, seed=0)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
