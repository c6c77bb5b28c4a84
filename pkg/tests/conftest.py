import numpy as np
import pytest

from bitextmine.encoder import EncoderConfig, init_params
from bitextmine.toydata import make_toy_corpus
from bitextmine.vocab import build_vocab


@pytest.fixture(scope="session")
def toy_small():
    """Small cipher corpus for unit tests (fast to train on)."""
    return make_toy_corpus(300, 60, seed=7, lexicon_size=50, min_words=3, max_words=5)


@pytest.fixture(scope="session")
def toy_vocab(toy_small):
    corpora = {
        "aa": [p.src for p in toy_small.train_pairs],
        "bb": [p.tgt for p in toy_small.train_pairs],
    }
    return build_vocab(corpora, target_size=600)


@pytest.fixture(scope="session")
def toy_encoder_config(toy_vocab):
    return EncoderConfig(vocab_size=len(toy_vocab), hidden_dim=16, num_layers=2, max_seq_len=16)


@pytest.fixture()
def toy_params(toy_encoder_config):
    return init_params(toy_encoder_config, seed=11)


def unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    X = rng.normal(size=(n, d))
    return X / np.linalg.norm(X, axis=1, keepdims=True)
