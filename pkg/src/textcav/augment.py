"""Pool-based training-set augmentation.

The base classifier ranks an unlabeled candidate pool (by DoE, by confidence,
or at random); the ``N`` lowest-ranked candidates are revealed with their
labels, appended to the original training set, and a classifier is retrained
from scratch.  A sweep over ``N`` reports every evaluation set per cell, plus
the baseline (no augmentation) and a merge-all reference (whole pool added).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .classifier import TrainedClassifier, TrainingConfig, TrainingError, evaluate, train
from .data import ConceptSet, DataError, Dataset, Utterance
from .doe import DEFAULT_NV, DEFAULT_P, DoeScorer, confidence_scores, rank_scores
from .encoder import EmbeddingStore
from .metrics import MetricError, MetricReport, fmt

STRATEGIES = ("doe", "confidence", "random")
BASE_DROP_LIMIT = 0.02
REFERENCE_POOL = 2000


class AugmentError(ValueError):
    pass


def default_n_values(pool_size: int, steps: int = 12, step: int = 50) -> tuple[int, ...]:
    """``{50, 100, ..., 600}`` for a pool of 2000, scaled in proportion to the pool size."""
    values = sorted({min(pool_size, max(1, round(step * k * pool_size / REFERENCE_POOL))) for k in range(1, steps + 1)})
    return tuple(values)


@dataclass(frozen=True)
class AugmentationPlan:
    base_train: Dataset
    pool: Dataset
    eval_sets: Mapping[str, Dataset]
    strategies: tuple[str, ...] = STRATEGIES
    N_values: tuple[int, ...] = ()  # empty -> default_n_values(|pool|)
    config: TrainingConfig = TrainingConfig()
    dev: Dataset | None = None
    explicit_concept: ConceptSet | None = None  # required by the doe strategy
    X: Sequence[Utterance] | np.ndarray = ()  # DoE input set
    P: int = DEFAULT_P
    n_v: int = DEFAULT_NV
    seed: int = 0  # drives DoE CAV sampling and the random strategy
    base_eval: str | None = None  # eval set watched for the base-domain drop flag

    def __post_init__(self):
        if not self.N_values:
            object.__setattr__(self, "N_values", default_n_values(len(self.pool)))
        object.__setattr__(self, "N_values", tuple(int(n) for n in self.N_values))
        object.__setattr__(self, "strategies", tuple(self.strategies))
        for s in self.strategies:
            if s not in STRATEGIES:
                raise AugmentError(f"unknown strategy {s!r}; expected one of {STRATEGIES}")
        ns = self.N_values
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise AugmentError(f"N values must be strictly increasing: {ns}")
        if ns[0] < 0:
            raise AugmentError("N values must be non-negative")
        if ns[-1] > len(self.pool):
            raise AugmentError(f"N = {ns[-1]} exceeds the pool size {len(self.pool)}")
        if any(u.label is None for u in self.pool):
            raise DataError("pool labels are needed at training time")
        for name, ds in self.eval_sets.items():
            ds.labels()  # raises on unlabeled
        if "doe" in self.strategies:
            if self.explicit_concept is None:
                raise AugmentError("the doe strategy needs an explicit concept")
            if len(self.X) == 0:
                raise AugmentError("the doe strategy needs a non-empty input set X")
        if self.base_eval is not None and self.base_eval not in self.eval_sets:
            raise AugmentError(f"base_eval {self.base_eval!r} is not an eval set")
        overlap = set(self.pool.ids) & set(self.base_train.ids)
        if overlap:
            raise AugmentError(f"{len(overlap)} pool ids also occur in base_train, e.g. {sorted(overlap)[0]!r}")


def rank_pool(
    strategy: str, clf: TrainedClassifier, pool: Dataset | Sequence[Utterance], *,
    explicit_concept: ConceptSet | None = None, X: Sequence[Utterance] | np.ndarray = (), P: int = DEFAULT_P,
    n_v: int = DEFAULT_NV, seed: int = 0, store: EmbeddingStore | None = None,
) -> list[Utterance]:
    """Whole pool in selection order.  Labels are hidden from the scorers."""
    items = list(pool)
    hidden = [u.unlabeled() for u in items]
    if strategy == "doe":
        if explicit_concept is None:
            raise AugmentError("the doe strategy needs an explicit concept")
        scorer = DoeScorer(clf, explicit_concept, X, P, n_v, seed, store=store)
        order = [u for u, _ in rank_scores(hidden, scorer.score_many(hidden))]
    elif strategy == "confidence":
        conf = confidence_scores(clf, hidden, store)
        order = [hidden[i] for i in sorted(range(len(hidden)), key=lambda i: (conf[i], hidden[i].id))]
    elif strategy == "random":
        order = [hidden[i] for i in np.random.default_rng(seed).permutation(len(hidden))]
    else:
        raise AugmentError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    by_id = {u.id: u for u in items}
    return [by_id[u.id] for u in order]


def select(strategy: str, clf: TrainedClassifier, pool: Dataset | Sequence[Utterance], N: int, **params) -> list[Utterance]:
    """The ``N`` first candidates of :func:`rank_pool`; prefixes nest across ``N``."""
    if N > len(pool):
        raise AugmentError(f"N = {N} exceeds the pool size {len(pool)}")
    if N < 0:
        raise AugmentError("N must be non-negative")
    return rank_pool(strategy, clf, pool, **params)[:N]


def augmented_train_set(base_train: Dataset, pool: Dataset, selected_ids) -> Dataset:
    """base_train unchanged, followed by the selected items in pool order."""
    chosen = set(selected_ids)
    extra = [u for u in pool if u.id in chosen]
    if len(extra) != len(chosen):
        raise AugmentError("selected ids are not all in the pool")
    return base_train.with_items(tuple(base_train.items) + tuple(extra), f"{base_train.name}+{len(extra)}")


@dataclass
class Cell:
    strategy: str
    N: int
    selected_ids: tuple[str, ...]
    metrics: dict[str, MetricReport] | None
    error: str | None = None
    base_drop: float | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def flagged(self) -> bool:
        return self.base_drop is not None and self.base_drop > BASE_DROP_LIMIT


@dataclass
class SweepResult:
    baseline: dict[str, MetricReport]
    merge_all: Cell | None  # None when no N > 0 was requested
    cells: list[Cell] = field(default_factory=list)
    pool_size: int = 0

    def cell(self, strategy: str, N: int) -> Cell:
        for c in self.cells:
            if c.strategy == strategy and c.N == N:
                return c
        raise KeyError((strategy, N))

    def curve(self, strategy: str, eval_set: str, metric: str = "f1") -> list[tuple[int, float]]:
        """(N, metric) points including N = 0 (the baseline); failed cells are skipped."""
        pts = [(0, getattr(self.baseline[eval_set], metric))]
        pts += [(c.N, getattr(c.metrics[eval_set], metric)) for c in self.cells if c.strategy == strategy and c.ok]
        return pts

    def n_to_reach(self, strategy: str, eval_set: str, fraction: float = 0.95, metric: str = "f1") -> int | None:
        """Smallest swept N whose metric reaches ``fraction`` of the merge-all value, else None."""
        if self.merge_all is None or not self.merge_all.ok:
            raise AugmentError("merge-all reference failed; no target to reach")
        target = fraction * getattr(self.merge_all.metrics[eval_set], metric)
        for n, value in self.curve(strategy, eval_set, metric):
            if value >= target:
                return n
        return None

    def manifest(self) -> dict:
        return {
            "pool_size": self.pool_size,
            "cells": [
                {"strategy": c.strategy, "N": c.N, "selected_ids": list(c.selected_ids), "error": c.error,
                 "base_drop_flag": c.flagged}
                for c in self.cells
            ],
        }


def _evaluate_all(clf: TrainedClassifier, eval_sets: Mapping[str, Dataset]) -> dict[str, MetricReport]:
    return {name: evaluate(clf, ds) for name, ds in eval_sets.items()}


def _train_cell(plan: AugmentationPlan, strategy: str, N: int, ids: Sequence[str], baseline) -> Cell:
    try:
        ds = augmented_train_set(plan.base_train, plan.pool, ids)
        clf = train(ds, plan.dev, plan.config)
        metrics = _evaluate_all(clf, plan.eval_sets)
    except (TrainingError, MetricError, DataError) as exc:
        return Cell(strategy, N, tuple(ids), None, f"{type(exc).__name__}: {exc}")
    drop = None
    if plan.base_eval is not None:
        drop = baseline[plan.base_eval].f1 - metrics[plan.base_eval].f1
    return Cell(strategy, N, tuple(ids), metrics, None, drop)


def run_sweep(plan: AugmentationPlan, store: EmbeddingStore | None = None, log=None) -> SweepResult:
    base_clf = train(plan.base_train, plan.dev, plan.config)
    baseline = _evaluate_all(base_clf, plan.eval_sets)
    ns = [n for n in plan.N_values if n > 0]  # N = 0 is the baseline itself
    merge = _train_cell(plan, "merge_all", len(plan.pool), plan.pool.ids, baseline) if ns else None
    result = SweepResult(baseline, merge, pool_size=len(plan.pool))
    for strategy in plan.strategies if ns else ():
        order = rank_pool(
            strategy, base_clf, plan.pool, explicit_concept=plan.explicit_concept, X=plan.X, P=plan.P,
            n_v=plan.n_v, seed=plan.seed, store=store,
        )
        ids = [u.id for u in order]
        for N in ns:
            cell = _train_cell(plan, strategy, N, ids[:N], baseline)
            result.cells.append(cell)
            if log is not None:
                log(f"{strategy} N={N}: " + (cell.error or " ".join(f"{k}.f1={m.f1:.4f}" for k, m in cell.metrics.items())))
    return result


SWEEP_COLUMNS = ["strategy", "N", "eval_set", "auc", "f1", "precision", "recall", "average_precision", "status"]


def _long_rows(strategy: str, N: int, metrics, status: str, eval_names):
    for name in eval_names:
        m = metrics[name] if metrics else None
        vals = [m.auc, m.f1, m.precision, m.recall, m.average_precision] if m else [None] * 5
        yield [strategy, str(N), name, *("" if v is None else fmt(v) for v in vals), status]


def sweep_rows(result: SweepResult) -> list[list[str]]:
    names = list(result.baseline)
    rows = list(_long_rows("baseline", 0, result.baseline, "ok", names))
    m = result.merge_all
    if m is not None:
        rows += _long_rows("merge_all", m.N, m.metrics, "ok" if m.ok else "failed", names)
    for c in result.cells:
        status = "failed" if not c.ok else ("base_drop" if c.flagged else "ok")
        rows += _long_rows(c.strategy, c.N, c.metrics, status, names)
    return rows


def plot_rows(result: SweepResult, metric: str = "f1") -> tuple[list[str], list[list[str]]]:
    """Wide table: one row per N, one column per (strategy, eval set), plus reference columns."""
    names = list(result.baseline)
    strategies = list(dict.fromkeys(c.strategy for c in result.cells))
    header = ["N"] + [f"{s}:{n}" for s in strategies for n in names]
    m = result.merge_all
    header += [f"baseline:{n}" for n in names] + [f"merge_all:{n}" for n in names]
    ns = sorted({0} | {c.N for c in result.cells})
    refs = [fmt(getattr(result.baseline[n], metric)) for n in names]
    refs += [fmt(getattr(m.metrics[n], metric)) if m is not None and m.ok else "" for n in names]
    rows = []
    for N in ns:
        row = [str(N)]
        for s in strategies:
            for n in names:
                if N == 0:
                    row.append(fmt(getattr(result.baseline[n], metric)))
                    continue
                try:
                    c = result.cell(s, N)
                except KeyError:
                    row.append("")
                    continue
                row.append(fmt(getattr(c.metrics[n], metric)) if c.ok else "")
        rows.append(row + refs)
    return header, rows


def write_sweep(result: SweepResult, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"sweep": out / "sweep.csv", "manifest": out / "selected.json", "plot": out / "plot_f1.csv"}
    with open(paths["sweep"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        w.writerows(sweep_rows(result))
    paths["manifest"].write_text(json.dumps(result.manifest(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    header, rows = plot_rows(result)
    with open(paths["plot"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return paths
