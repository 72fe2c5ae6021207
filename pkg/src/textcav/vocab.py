"""Positive-class vocabulary profiles and cross-dataset overlap.

For each dataset, count lowercased alphanumeric tokens over its positive
utterances (stopwords removed) and keep the ``k`` most frequent.  Pairs of
profiles are intersected and the shared words are categorized by the first
matching lexicon, in lexicon order; words matching none fall into ``other``.
"""
from __future__ import annotations

import csv
import hashlib
import io
import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .data import POSITIVE, DataError, Dataset

_SPLIT_RE = re.compile(r"[\W_]+")
OTHER = "other"
DEFAULT_CATEGORIES = ("hateful", "topic")


class VocabError(ValueError):
    pass


def read_word_list(path: str | Path) -> frozenset[str]:
    """One word per line, lowercased; blank lines and ``#`` comments ignored."""
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line.lower())
    return frozenset(words)


def builtin_stopwords() -> frozenset[str]:
    with resources.as_file(resources.files("textcav") / "stopwords_en.txt") as path:
        return read_word_list(path)


def vocab_tokens(text: str, min_length: int = 2) -> list[str]:
    return [t for t in _SPLIT_RE.split(text.lower()) if len(t) >= min_length]


def _fingerprint(words: Iterable[str]) -> str:
    return hashlib.sha1("\n".join(sorted(words)).encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class FrequencyProfile:
    dataset: str
    k: int
    entries: tuple[tuple[str, int], ...]
    stopword_fingerprint: str = ""

    @property
    def words(self) -> list[str]:
        return [w for w, _ in self.entries]


def frequency_profile(
    dataset: Dataset, k: int = 100, stopwords: Iterable[str] | None = None, min_length: int = 2
) -> FrequencyProfile:
    """Top-``k`` words of the positive class; ties broken alphabetically."""
    if k < 1:
        raise VocabError("k must be at least 1")
    stop = builtin_stopwords() if stopwords is None else frozenset(w.lower() for w in stopwords)
    positives = [u for u in dataset if u.label == POSITIVE]
    if not positives:
        raise DataError(f"dataset {dataset.name!r} has no positive class")
    counts = Counter(t for u in positives for t in vocab_tokens(u.text, min_length) if t not in stop)
    ranked = sorted(counts.items(), key=lambda wc: (-wc[1], wc[0]))[:k]
    return FrequencyProfile(dataset.name, k, tuple(ranked), _fingerprint(stop))


@dataclass(frozen=True)
class OverlapReport:
    pair: tuple[str, str]
    shared: tuple[str, ...]
    categories: dict[str, tuple[str, ...]]  # category -> shared words, every category present

    @property
    def n_shared(self) -> int:
        return len(self.shared)

    def percentages(self) -> dict[str, float]:
        n = len(self.shared)
        return {c: (100.0 * len(ws) / n if n else 0.0) for c, ws in self.categories.items()}


def overlap(a: FrequencyProfile, b: FrequencyProfile, lexicons: Mapping[str, Iterable[str]] | None = None) -> OverlapReport:
    """Shared words of two profiles, each assigned to the first lexicon that contains it."""
    if a.k != b.k:
        raise VocabError(f"profiles use different k ({a.k} vs {b.k})")
    if a.stopword_fingerprint != b.stopword_fingerprint:
        raise VocabError("profiles were built with different stopword lists")
    lexicons = {name: frozenset(w.lower() for w in words) for name, words in (lexicons or {}).items()}
    if OTHER in lexicons:
        raise VocabError(f"lexicon name {OTHER!r} is reserved")
    shared = tuple(sorted(set(a.words) & set(b.words)))
    cats: dict[str, list[str]] = {name: [] for name in lexicons}
    cats[OTHER] = []
    for w in shared:
        cats[next((name for name, lex in lexicons.items() if w in lex), OTHER)].append(w)
    return OverlapReport((a.dataset, b.dataset), shared, {c: tuple(ws) for c, ws in cats.items()})


def pairwise_overlaps(profiles: Sequence[FrequencyProfile], lexicons=None) -> list[OverlapReport]:
    return [overlap(a, b, lexicons) for a, b in combinations(profiles, 2)]


def mask(word: str) -> str:
    """Keep the first and last letters, star the rest."""
    return word if len(word) <= 2 else word[0] + "*" * (len(word) - 2) + word[-1]


def markdown_table(reports: Sequence[OverlapReport], mask_category: str | None = None, examples: int = 5) -> str:
    if not reports:
        return "| datasets | shared |\n|---|---|\n"
    cats = list(reports[0].categories)
    head = ["datasets", "shared"] + [f"{c} (%)" for c in cats] + ["examples"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for r in reports:
        pct = r.percentages()
        shown = []
        for c in cats:
            ws = r.categories[c][:examples]
            shown += [mask(w) if c == mask_category else w for w in ws]
        cells = [f"{r.pair[0]} / {r.pair[1]}", str(r.n_shared)] + [f"{pct[c]:.1f}" for c in cats] + [", ".join(shown)]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


OVERLAP_COLUMNS = ["dataset_a", "dataset_b", "n_shared", "category", "n_words", "percent", "words"]
PROFILE_COLUMNS = ["dataset", "rank", "word", "count"]


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def overlap_csv(reports: Sequence[OverlapReport]) -> str:
    rows = []
    for r in reports:
        pct = r.percentages()
        for c, ws in r.categories.items():
            rows.append([r.pair[0], r.pair[1], r.n_shared, c, len(ws), f"{pct[c]:.6f}", " ".join(ws)])
    return _csv_text(OVERLAP_COLUMNS, rows)


def profile_csv(profiles: Sequence[FrequencyProfile]) -> str:
    rows = [[p.dataset, i, w, c] for p in profiles for i, (w, c) in enumerate(p.entries, 1)]
    return _csv_text(PROFILE_COLUMNS, rows)
