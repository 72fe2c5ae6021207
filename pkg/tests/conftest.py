import numpy as np
import pytest

from textcav.classifier import TrainingConfig, train
from textcav.data import Dataset, Utterance, concept_from_texts
from textcav.encoder import EmbeddingStore
from textcav.synthcorpus import CorpusSpec, generate


@pytest.fixture(scope="session")
def corpus():
    return generate(CorpusSpec())


@pytest.fixture(scope="session")
def base_clf(corpus):
    return train(corpus.base_train, corpus.base_dev, TrainingConfig())


@pytest.fixture(scope="session")
def concepts(corpus):
    return {name: concept_from_texts(name, texts) for name, texts in corpus.concepts.items()}


@pytest.fixture(scope="session")
def inputs(corpus):
    return list(corpus.random_inputs.items)


def cluster_data(n, m=16, seed=0, sep=3.0, prefix="c"):
    """Two Gaussian clusters on either side of the hyperplane w.r = 0; returns (dataset, store, w)."""
    rng = np.random.default_rng(seed)
    w = np.zeros(m)
    w[0] = 1.0
    y = rng.integers(0, 2, n)
    x = rng.standard_normal((n, m)) * 0.5
    x[:, 0] += np.where(y == 1, sep / 2, -sep / 2)
    items = tuple(Utterance(f"{prefix}{i}", f"point {i}", int(y[i])) for i in range(n))
    return Dataset(prefix, items), EmbeddingStore(tuple(u.id for u in items), x.astype(np.float32)), w


def tiny_spec(**kw):
    """A small corpus for tests that retrain many times."""
    sizes = dict(base_train=600, base_dev=200, base_test=200, new_pool=200, new_test=200, random_inputs=200, concept_size=20)
    sizes.update(kw)
    return CorpusSpec(**sizes)


SMALL_TRAIN = TrainingConfig(buckets=2**12, epochs=3)
