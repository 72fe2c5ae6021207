import numpy as np
import pytest
from scipy.special import expit
from scipy.stats import spearmanr

from textcav.classifier import confidences
from textcav.data import DataError, Utterance, concept_from_texts
from textcav.doe import (
    DoeScore, DoeScorer, LeakageError, bin_analysis, doe_rank, doe_score, histogram, rank_scores, utterance_rng,
)
from textcav.encoder import EmbeddingStore
from textcav.metrics import welch_t_test
from textcav.tcav import build_cavs, sample_members, tcav_scores


@pytest.fixture(scope="module")
def scorer(base_clf, concepts, inputs):
    return DoeScorer(base_clf, concepts["explicit"], inputs, P=100, n_v=3, seed=0)


@pytest.fixture(scope="module")
def ranked_pool(scorer, corpus):
    pool = list(corpus.new_pool.items)
    return rank_scores(pool, scorer.score_many(pool))


def positives(ds, kind, n):
    return [u for u in ds if u.explicitness == kind][:n]


def test_scores_in_unit_interval_and_repeatable(scorer, corpus):
    items = list(corpus.new_test.items[:30])
    a, b = scorer.score_many(items), scorer.score_many(items)
    assert [s.score for s in a] == [s.score for s in b]
    assert all(0.0 <= s.score <= 1.0 and s.P_used == 100 and s.concept == "explicit" for s in a)
    assert [s.score for s in a] == [scorer.score(u).score for u in items]


def test_concept_members_are_rejected(scorer, concepts):
    member = concepts["explicit"].examples[0]
    with pytest.raises(LeakageError):
        scorer.score(member)
    with pytest.raises(LeakageError):
        scorer.score(Utterance("fresh-id", member.text))
    with pytest.raises(LeakageError):
        scorer.score_many([Utterance("ok", "some other words"), member])


def test_ranking_ignores_pool_order(base_clf, concepts, inputs, corpus):
    pool = list(corpus.new_pool.items[:40])
    shuffled = [pool[i] for i in np.random.default_rng(0).permutation(len(pool))]
    a = doe_rank(base_clf, concepts["explicit"], pool, inputs[:300], P=30)
    b = doe_rank(base_clf, concepts["explicit"], shuffled, inputs[:300], P=30)
    assert [(u.id, s.score) for u, s in a] == [(u.id, s.score) for u, s in b]


def test_pool_of_one(base_clf, concepts, inputs, corpus):
    x = corpus.new_pool.items[0]
    ranked = doe_rank(base_clf, concepts["explicit"], [x], inputs[:100], P=10)
    assert len(ranked) == 1 and ranked[0][0] == x
    with pytest.raises(ValueError):
        doe_rank(base_clf, concepts["explicit"], [], inputs[:100])


def test_ties_break_by_id():
    items = [Utterance("b", "x"), Utterance("a", "y"), Utterance("c", "z")]
    scores = [DoeScore(u.id, 0.5, 1, "e") for u in items]
    assert [u.id for u, _ in rank_scores(items, scores)] == ["a", "b", "c"]


def test_per_utterance_streams_differ():
    a = utterance_rng(0, "x").random(3)
    assert not np.array_equal(a, utterance_rng(0, "y").random(3))
    assert not np.array_equal(a, utterance_rng(1, "x").random(3))
    np.testing.assert_array_equal(a, utterance_rng(0, "x").random(3))


def test_needs_room_for_the_candidate(base_clf, concepts, inputs):
    with pytest.raises(ValueError):
        DoeScorer(base_clf, concepts["explicit"], inputs[:10], n_v=1)
    tiny = concept_from_texts("tiny", ["only one"])
    with pytest.raises(DataError):
        DoeScorer(base_clf, tiny, inputs[:10], n_v=3)


def test_concept_mean_is_a_fixed_point(base_clf, concepts, inputs):
    """Adding the concept mean keeps the CAVs in the concept's own neighbourhood."""
    sc = DoeScorer(base_clf, concepts["explicit"], inputs, P=400, n_v=3, seed=5)
    mean = sc.concept_reps.mean(axis=0)
    cavs = sc.perturbed_cavs(mean, np.random.default_rng(0))
    # the same draws, averaged without the candidate, then shifted by the mean
    members = sample_members(len(sc.concept_reps), 400, 2, np.random.default_rng(0))
    unperturbed = sc.concept_reps[members].mean(axis=1)
    np.testing.assert_allclose(cavs, (2 * unperturbed + mean) / 3, rtol=1e-12)
    doe = sc.score_rep(mean, np.random.default_rng(0))
    reference = tcav_scores(base_clf, build_cavs(base_clf, concepts["explicit"], P=400, n_v=3, seed=5), inputs).mean
    assert abs(doe - reference) <= 0.05


def test_verbatim_copy_matches_leave_one_out(base_clf, concepts, inputs):
    explicit = concepts["explicit"]
    for k in range(3):
        held = explicit.examples[k]
        rest = concept_from_texts("explicit-loo", [u.text for u in explicit.examples if u.id != held.id])
        loo = doe_score(base_clf, rest, held, X=inputs, seed=1).score
        copy = doe_score(base_clf, rest, Utterance(f"copy-{k}", held.text), X=inputs, seed=1).score
        assert abs(copy - loo) <= 0.05


def test_explicit_and_implicit_positives_separate(scorer, base_clf, corpus):
    exp, imp = positives(corpus.new_test, "explicit", 50), positives(corpus.new_test, "implicit", 50)
    assert len(exp) == 50 and len(imp) == 50
    de = [s.score for s in scorer.score_many(exp)]
    di = [s.score for s in scorer.score_many(imp)]
    assert np.mean(de) > np.mean(di)
    assert welch_t_test(de, di).p_value < 0.01
    ce, ci = confidences(base_clf.logits(exp)), confidences(base_clf.logits(imp))
    assert welch_t_test(ce, ci).p_value > 0.05


def test_lowest_doe_are_implicit_positives(ranked_pool):
    top = [u for u, _ in ranked_pool[:10]]
    assert sum(u.label == 1 and u.explicitness == "implicit" for u in top) >= 8


def test_positive_recall_rises_with_doe(base_clf, ranked_pool):
    report = bin_analysis(base_clf, ranked_pool, 100)
    pos, neg = report.recalls(1), report.recalls(0)
    assert spearmanr(np.arange(len(pos)), pos).statistic > 0.5
    assert spearmanr(np.arange(len(neg)), neg).statistic < 0


# --- bins ------------------------------------------------------------------

def toy_ranked(labels, scores):
    items = [Utterance(f"u{i}", f"t{i}", lab) for i, lab in enumerate(labels)]
    return items, [(u, DoeScore(u.id, s, 1, "e")) for u, s in zip(items, scores)]


class _Fixed:
    """Stands in for a classifier: logits looked up from a store."""

    def __init__(self, items, logits):
        self.store = EmbeddingStore(tuple(u.id for u in items), np.array(logits, dtype=np.float32)[:, None])

    def probabilities(self, items, store=None):
        return expit(self.store.lookup([u.id for u in items])[:, 0])


def test_all_correct_bins():
    labels = [1, 0] * 25
    items, ranked = toy_ranked(labels, np.linspace(0, 1, 50))
    clf = _Fixed(items, [5.0 if y else -5.0 for y in labels])
    report = bin_analysis(clf, ranked, 7)
    assert all(b.recall == 1.0 for b in report.bins)
    assert sum(b.n for b in report.for_class(1)) == 25 and len(report.for_class(1)) == 4


def test_single_bin_equals_class_recall():
    rng = np.random.default_rng(0)
    labels = list(rng.integers(0, 2, 60))
    logits = list(rng.normal(size=60))
    items, ranked = toy_ranked(labels, rng.random(60))
    report = bin_analysis(_Fixed(items, logits), ranked, 60)
    y, z = np.array(labels), np.array(logits)
    assert report.recalls(1)[0] == pytest.approx(np.mean(z[y == 1] >= 0))
    assert report.recalls(0)[0] == pytest.approx(np.mean(z[y == 0] < 0))


def test_bins_partition_in_ascending_order():
    rng = np.random.default_rng(1)
    items, ranked = toy_ranked([1] * 35, rng.random(35))
    report = bin_analysis(_Fixed(items, [1.0] * 35), ranked, 10)
    sizes = [b.n for b in report.bins]
    assert sizes == [10, 10, 10, 5]
    highs = [b.doe_high for b in report.bins]
    lows = [b.doe_low for b in report.bins]
    assert all(h <= lo for h, lo in zip(highs, lows[1:]))


def test_unlabeled_bins_rejected():
    items, ranked = toy_ranked([None, None], [0.1, 0.2])
    with pytest.raises(DataError):
        bin_analysis(_Fixed(items, [0.0, 0.0]), ranked, 1)


def test_histogram_counts():
    edges, counts = histogram({"a": [0.0, 0.05, 0.5, 1.0], "b": [0.99]}, bins=4)
    np.testing.assert_allclose(edges, [0, 0.25, 0.5, 0.75, 1.0])
    assert list(counts["a"]) == [2, 0, 1, 1] and list(counts["b"]) == [0, 0, 0, 1]
