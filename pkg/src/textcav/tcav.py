"""Concept activation vectors by averaging, conceptual sensitivity and TCAV scores.

A CAV is the mean representation of ``n_v`` concept examples drawn without
replacement.  The sensitivity of input ``x`` to CAV ``v`` is the directional
derivative of the positive-class logit, ``grad h(r_x) . v``.  A TCAV score is
the fraction of inputs with strictly positive sensitivity; ``P`` CAVs give a
distribution of scores per concept.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .classifier import HeadModel, TrainedClassifier
from .data import ConceptSet, DataError, Utterance
from .encoder import EmbeddingStore
from .metrics import TTestResult, welch_t_test

DEFAULT_P = 1000
DEFAULT_NV = 5
DEFAULT_ALPHA = 0.001


class DegenerateHeadError(RuntimeError):
    """Raised when TCAV is requested on a linear head without an explicit override."""


@dataclass(frozen=True)
class Cav:
    vector: np.ndarray
    member_ids: tuple[str, ...]


@dataclass(frozen=True)
class CavSet:
    concept: str
    vectors: np.ndarray  # (P, m)
    members: np.ndarray  # (P, n_v) indices into the concept's examples
    member_ids: tuple[tuple[str, ...], ...]
    seed: int

    @property
    def P(self) -> int:
        return self.vectors.shape[0]

    def __getitem__(self, p: int) -> Cav:
        return Cav(self.vectors[p], self.member_ids[p])

    def scaled(self, factor: float) -> "CavSet":
        return CavSet(self.concept, self.vectors * factor, self.members, self.member_ids, self.seed)


@dataclass(frozen=True)
class ScoreDistribution:
    concept: str
    scores: np.ndarray  # (P,)
    n_inputs: int

    @property
    def mean(self) -> float:
        return float(np.mean(self.scores))

    @property
    def std(self) -> float:
        """Population standard deviation of the P scores."""
        return float(np.std(self.scores))


def sample_members(n_c: int, P: int, n_v: int, rng: np.random.Generator) -> np.ndarray:
    """(P, n_v) indices; without replacement within a row, independent across rows."""
    if n_v > n_c:
        raise DataError(f"cannot average {n_v} examples from a concept of {n_c}")
    return np.argsort(rng.random((P, n_c)), axis=1, kind="stable")[:, :n_v]


def build_cavs_from_reps(name: str, reps: np.ndarray, ids: Sequence[str], P: int, n_v: int, seed: int) -> CavSet:
    if P < 1:
        raise ValueError("P must be at least 1")
    rng = np.random.default_rng(seed)
    members = sample_members(len(reps), P, n_v, rng)
    vectors = reps[members].mean(axis=1)
    member_ids = tuple(tuple(ids[j] for j in row) for row in members)
    return CavSet(name, vectors, members, member_ids, seed)


def build_cavs(
    clf: TrainedClassifier, concept: ConceptSet, P: int = DEFAULT_P, n_v: int = DEFAULT_NV, seed: int = 0,
    store: EmbeddingStore | None = None,
) -> CavSet:
    concept.require(n_v)
    reps = clf.represent(concept.examples, store)
    return build_cavs_from_reps(concept.name, reps, [u.id for u in concept.examples], P, n_v, seed)


def _head(clf) -> HeadModel:
    return clf.head if isinstance(clf, TrainedClassifier) else clf


def check_head(clf, allow_degenerate: bool = False) -> None:
    if _head(clf).is_linear and not allow_degenerate:
        raise DegenerateHeadError(
            "linear head: every sensitivity is independent of the input, so TCAV scores collapse to 0 or 1; "
            "pass allow_degenerate to run anyway"
        )


def sensitivity_at(head: HeadModel, r: np.ndarray, v: np.ndarray, mode: str = "analytic", eps: float = 1e-3) -> float:
    if mode == "analytic":
        return float(head.gradient(r)[0] @ v)
    if mode == "finite_diff":
        if eps <= 0:
            raise ValueError("eps must be positive")
        return float((head.logits(r + eps * v)[0] - head.logits(r)[0]) / eps)
    raise ValueError(f"unknown sensitivity mode {mode!r}")


def sensitivity(
    clf: TrainedClassifier, x: Utterance | str, cav: Cav | np.ndarray, mode: str = "analytic", eps: float = 1e-3,
    store: EmbeddingStore | None = None,
) -> float:
    r = clf.represent([x], store)[0]
    v = cav.vector if isinstance(cav, Cav) else np.asarray(cav, dtype=np.float64)
    return sensitivity_at(clf.head, r, v, mode, eps)


def sensitivity_matrix(head: HeadModel, input_reps: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """S[i, p] = grad h(r_i) . v_p."""
    return head.gradient(input_reps) @ np.atleast_2d(vectors).T


def scores_from_sensitivities(s: np.ndarray) -> np.ndarray:
    return np.count_nonzero(s > 0, axis=0) / s.shape[0]


def tcav_scores(
    clf: TrainedClassifier | HeadModel, cavset: CavSet, X: Sequence[Utterance] | np.ndarray,
    allow_degenerate: bool = False, store: EmbeddingStore | None = None,
) -> ScoreDistribution:
    """Score each CAV as the fraction of ``X`` whose logit increases along it.

    ``X`` may be utterances or an (n, m) array of precomputed representations.
    """
    check_head(clf, allow_degenerate)
    reps = X if isinstance(X, np.ndarray) else clf.represent(X, store)
    if len(reps) < 1:
        raise ValueError("input set X is empty")
    s = sensitivity_matrix(_head(clf), reps, cavset.vectors)
    return ScoreDistribution(cavset.concept, scores_from_sensitivities(s), len(reps))


def concept_significance(
    target: ScoreDistribution, random_baseline: ScoreDistribution, alpha: float = DEFAULT_ALPHA
) -> TTestResult:
    if target.n_inputs != random_baseline.n_inputs:
        raise ValueError("score distributions were computed on different input sets")
    return welch_t_test(target.scores, random_baseline.scores, alpha)
