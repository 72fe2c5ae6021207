"""Degree of Explicitness (DoE).

Each of ``P`` CAVs averages ``n_v - 1`` explicit-concept representations with
the candidate's representation ``r_new``; the DoE of the candidate is the mean
TCAV score of those perturbed CAVs over a fixed input set ``X``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .classifier import TrainedClassifier, confidences
from .data import NEGATIVE, POSITIVE, ConceptSet, DataError, Utterance
from .encoder import EmbeddingStore
from .tcav import check_head, sample_members, scores_from_sensitivities

DEFAULT_P = 100
DEFAULT_NV = 3


class LeakageError(DataError):
    pass


@dataclass(frozen=True)
class DoeScore:
    utterance_id: str
    score: float
    P_used: int
    concept: str


def utterance_rng(seed: int, utterance_id: str) -> np.random.Generator:
    """Per-utterance stream so scores do not depend on pool order."""
    digest = hashlib.sha256(utterance_id.encode("utf-8")).digest()
    return np.random.default_rng([seed, int.from_bytes(digest[:8], "little")])


class DoeScorer:
    """Holds the explicit-concept representations and input gradients for one run."""

    def __init__(
        self, clf: TrainedClassifier, explicit_concept: ConceptSet, X: Sequence[Utterance] | np.ndarray,
        P: int = DEFAULT_P, n_v: int = DEFAULT_NV, seed: int = 0, allow_degenerate: bool = False,
        store: EmbeddingStore | None = None,
    ):
        if n_v < 2:
            raise ValueError("n_v must be at least 2 (one slot is the candidate)")
        explicit_concept.require(n_v - 1)
        check_head(clf, allow_degenerate)
        self.clf, self.concept, self.P, self.n_v, self.seed, self.store = clf, explicit_concept, P, n_v, seed, store
        self.concept_reps = clf.represent(explicit_concept.examples, store)
        x_reps = X if isinstance(X, np.ndarray) else clf.represent(X, store)
        self.input_grads = clf.head.gradient(x_reps)
        self._texts = {u.text for u in explicit_concept.examples}
        self._ids = {u.id for u in explicit_concept.examples}

    def perturbed_cavs(self, r_new: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        members = sample_members(len(self.concept_reps), self.P, self.n_v - 1, rng)
        return (self.concept_reps[members].sum(axis=1) + r_new) / self.n_v

    def score_rep(self, r_new: np.ndarray, rng: np.random.Generator) -> float:
        s = self.input_grads @ self.perturbed_cavs(r_new, rng).T
        return float(np.mean(scores_from_sensitivities(s)))

    def check_leakage(self, x: Utterance) -> None:
        if x.id in self._ids or x.text in self._texts:
            raise LeakageError(f"utterance {x.id!r} is a member of concept {self.concept.name!r}")

    def score(self, x: Utterance) -> DoeScore:
        self.check_leakage(x)
        r_new = self.clf.represent([x], self.store)[0]
        value = self.score_rep(r_new, utterance_rng(self.seed, x.id))
        return DoeScore(x.id, value, self.P, self.concept.name)

    def score_many(self, items: Sequence[Utterance]) -> list[DoeScore]:
        for x in items:
            self.check_leakage(x)
        reps = self.clf.represent(items, self.store)
        return [
            DoeScore(x.id, self.score_rep(r, utterance_rng(self.seed, x.id)), self.P, self.concept.name)
            for x, r in zip(items, reps)
        ]


def doe_score(
    clf: TrainedClassifier, explicit_concept: ConceptSet, x_new: Utterance, P: int = DEFAULT_P, n_v: int = DEFAULT_NV,
    X: Sequence[Utterance] | np.ndarray = (), seed: int = 0, **kw,
) -> DoeScore:
    return DoeScorer(clf, explicit_concept, X, P, n_v, seed, **kw).score(x_new)


def rank_scores(items: Sequence[Utterance], scores: Sequence[DoeScore]) -> list[tuple[Utterance, DoeScore]]:
    """Ascending by score, ties broken by utterance id."""
    return sorted(zip(items, scores), key=lambda pair: (pair[1].score, pair[0].id))


def doe_rank(
    clf: TrainedClassifier, explicit_concept: ConceptSet, pool: Sequence[Utterance], X, P: int = DEFAULT_P,
    n_v: int = DEFAULT_NV, seed: int = 0, **kw,
) -> list[tuple[Utterance, DoeScore]]:
    if not pool:
        raise ValueError("pool is empty")
    scorer = DoeScorer(clf, explicit_concept, X, P, n_v, seed, **kw)
    return rank_scores(pool, scorer.score_many(pool))


@dataclass(frozen=True)
class Bin:
    label: int
    index: int
    n: int
    doe_low: float
    doe_high: float
    doe_mean: float
    recall: float


@dataclass(frozen=True)
class BinReport:
    bin_n: int
    bins: tuple[Bin, ...]

    def for_class(self, label: int) -> list[Bin]:
        return [b for b in self.bins if b.label == label]

    def recalls(self, label: int) -> np.ndarray:
        return np.array([b.recall for b in self.for_class(label)])


def bin_analysis(
    clf: TrainedClassifier, scored: Sequence[tuple[Utterance, DoeScore]], bin_n: int = 100,
    threshold: float = 0.5, store: EmbeddingStore | None = None,
) -> BinReport:
    """Per class, DoE-ascending bins of ``bin_n`` utterances with the per-bin fraction classified correctly."""
    if bin_n < 1:
        raise ValueError("bin_n must be at least 1")
    if any(u.label is None for u, _ in scored):
        raise DataError("bin analysis needs labeled utterances")
    bins = []
    for label in (POSITIVE, NEGATIVE):
        group = sorted(((u, s) for u, s in scored if u.label == label), key=lambda p: (p[1].score, p[0].id))
        if not group:
            continue
        probs = clf.probabilities([u for u, _ in group], store)
        correct = (probs >= threshold) == (label == POSITIVE)
        for k, start in enumerate(range(0, len(group), bin_n)):
            chunk = slice(start, start + bin_n)
            vals = np.array([s.score for _, s in group[chunk]])
            bins.append(Bin(label, k, len(vals), float(vals[0]), float(vals[-1]), float(vals.mean()), float(correct[chunk].mean())))
    return BinReport(bin_n, tuple(bins))


def histogram(groups: dict[str, Sequence[float]], bins: int = 20, lo: float = 0.0, hi: float = 1.0) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Shared bin edges and per-group counts for redrawing score distributions."""
    edges = np.linspace(lo, hi, bins + 1)
    return edges, {name: np.histogram(np.asarray(v, dtype=np.float64), bins=edges)[0] for name, v in groups.items()}


def confidence_scores(clf: TrainedClassifier, items: Sequence[Utterance], store: EmbeddingStore | None = None) -> np.ndarray:
    return confidences(clf.logits(items, store))
