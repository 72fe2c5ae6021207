import numpy as np
import pytest

from conftest import tiny_spec
from textcav.data import LabelMap, load_concept, load_dataset
from textcav.synthcorpus import CorpusSpec, CorpusSpecError, generate, write_corpus


def words(text):
    return set(text.split())


def test_full_signal_is_linearly_separable():
    c = generate(tiny_spec(gamma=1.0, noise=0.0))
    hostile = set(c.vocab.topics["new"]["hostile"])
    neutral = set(c.vocab.topics["new"]["neutral"])
    implicit = [u for u in c.new_test if u.explicitness == "implicit"]
    negatives = [u for u in c.new_test if u.label == 0]
    assert implicit and negatives

    # linear rule: (#hostile - #neutral topic words) > 0
    def rule(u):
        toks = u.text.split()
        return sum(t in hostile for t in toks) - sum(t in neutral for t in toks) > 0

    assert all(rule(u) for u in implicit)
    assert not any(rule(u) for u in negatives)


def test_markers_exactly_in_explicit_positives(corpus):
    markers = set(corpus.vocab.markers)
    for ds in (corpus.base_train, corpus.new_pool, corpus.new_test):
        for u in ds:
            has = bool(words(u.text) & markers)
            assert has == (u.explicitness == "explicit")
            if u.label == 0:
                assert not has


def test_vocabulary_groups_are_disjoint(corpus):
    v = corpus.vocab
    groups = [v.background, v.markers, v.rude] + [ws for halves in v.topics.values() for ws in halves.values()]
    flat = [w for g in groups for w in g]
    assert len(flat) == len(set(flat))


def test_domain_mix_matches_spec(corpus):
    spec = corpus.spec
    pool = corpus.new_pool
    assert len(pool) == spec.new_pool and len(corpus.base_train) == spec.base_train
    assert abs(pool.class_ratio - spec.new_positive_rate) < 0.04
    pos = [u for u in pool if u.label == 1]
    share = np.mean([u.explicitness == "explicit" for u in pos])
    assert abs(share - spec.new_explicit_share) < 0.06


def test_concepts_do_not_overlap_data(corpus):
    data_texts = {u.text for ds in corpus.datasets().values() for u in ds}
    all_concept = [t for texts in corpus.concepts.values() for t in texts]
    assert len(all_concept) == len(set(all_concept))
    assert not data_texts & set(all_concept)
    assert all(len(texts) == corpus.spec.concept_size for texts in corpus.concepts.values())


def test_noise_flips_labels():
    clean, noisy = generate(tiny_spec()), generate(tiny_spec(noise=0.2))
    assert clean.new_test.ids == noisy.new_test.ids
    flips = np.mean(clean.new_test.labels() != noisy.new_test.labels())
    assert 0.1 < flips < 0.3


def test_spec_validation():
    for bad in (dict(gamma=0.0), dict(gamma=1.2), dict(noise=0.4), dict(length=(3, 5)), dict(legacy_rate=1.5),
                dict(explicit_markers=(0, 2)), dict(n_markers=1)):
        with pytest.raises(CorpusSpecError):
            CorpusSpec(**bad)


def test_regeneration_is_byte_identical(tmp_path):
    spec = tiny_spec()
    a = write_corpus(generate(spec), tmp_path / "a")
    b = write_corpus(generate(spec), tmp_path / "b")
    assert a.keys() == b.keys()
    for key in a:
        assert a[key].read_bytes() == b[key].read_bytes(), key
    other = write_corpus(generate(tiny_spec(seed=8)), tmp_path / "c")
    assert other["base_train"].read_bytes() != a["base_train"].read_bytes()


def test_written_corpus_loads(tmp_path):
    c = generate(tiny_spec())
    paths = write_corpus(c, tmp_path)
    lm = LabelMap.from_file(paths["labelmap"])
    back = load_dataset(paths["new_test"], lm, name="new_test")
    assert [(u.id, u.text, u.label, u.explicitness) for u in back] == [
        (u.id, u.text, u.label, u.explicitness) for u in c.new_test
    ]
    assert load_dataset(paths["random_inputs"]).items[0].label is None
    assert load_concept(paths["concept:explicit"], "explicit").n_c == 20
    hateful = paths["lexicon:hateful"].read_text().split()
    assert set(hateful) == set(c.vocab.markers + c.vocab.rude)
