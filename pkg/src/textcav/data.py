"""Corpus and concept ingestion.

Corpora are JSONL, one record per line::

    {"id": "...", "text": "...", "label": "<raw>", "explicitness": "explicit|implicit"}

Raw labels are binarized through a :class:`LabelMap` whose targets are
``positive``, ``negative`` or ``drop``.  Concept files are plain UTF-8 with one
example per line; lines starting with ``#`` are comments.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

POSITIVE = 1
NEGATIVE = 0
EXPLICITNESS = ("explicit", "implicit", "unknown")
SPLITS = ("train", "dev", "test", "pool")
LABEL_TARGETS = ("positive", "negative", "drop")


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Utterance:
    id: str
    text: str
    label: int | None = None
    explicitness: str = "unknown"

    def __post_init__(self):
        if not self.text.strip():
            raise DataError(f"utterance {self.id!r} has empty text")
        if self.label not in (None, POSITIVE, NEGATIVE):
            raise DataError(f"utterance {self.id!r}: label must be 0, 1 or None")
        if self.explicitness not in EXPLICITNESS:
            raise DataError(f"utterance {self.id!r}: unknown explicitness {self.explicitness!r}")
        if self.explicitness != "unknown" and self.label != POSITIVE:
            raise DataError(f"utterance {self.id!r}: explicitness is only allowed on positive utterances")

    def unlabeled(self) -> "Utterance":
        return Utterance(self.id, self.text)


@dataclass(frozen=True)
class Dataset:
    name: str
    items: tuple[Utterance, ...]
    split: str = "train"

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        if self.split not in SPLITS:
            raise DataError(f"unknown split {self.split!r}")
        seen = set()
        for u in self.items:
            if u.id in seen:
                raise DataError(f"duplicate id {u.id!r} in dataset {self.name!r}")
            seen.add(u.id)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    @property
    def texts(self) -> list[str]:
        return [u.text for u in self.items]

    @property
    def ids(self) -> list[str]:
        return [u.id for u in self.items]

    def labels(self) -> np.ndarray:
        if any(u.label is None for u in self.items):
            raise DataError(f"dataset {self.name!r} contains unlabeled utterances")
        return np.array([u.label for u in self.items], dtype=np.int64)

    @property
    def class_ratio(self) -> float:
        labeled = [u.label for u in self.items if u.label is not None]
        if not labeled:
            return float("nan")
        return sum(labeled) / len(labeled)

    def subset(self, keep, name: str | None = None) -> "Dataset":
        """Dataset of the items for which ``keep(u)`` is true, order preserved."""
        return Dataset(name or self.name, tuple(u for u in self.items if keep(u)), self.split)

    def with_items(self, items: Iterable[Utterance], name: str | None = None) -> "Dataset":
        return Dataset(name or self.name, tuple(items), self.split)


@dataclass(frozen=True)
class LabelMap:
    mapping: Mapping[str, str]

    def __post_init__(self):
        bad = {k: v for k, v in self.mapping.items() if v not in LABEL_TARGETS}
        if bad:
            raise DataError(f"label map targets must be one of {LABEL_TARGETS}: {bad}")
        targets = set(self.mapping.values())
        if "positive" not in targets:
            raise DataError("label map has no positive class")
        if "negative" not in targets:
            raise DataError("label map has no negative class")

    @classmethod
    def identity(cls) -> "LabelMap":
        return cls({"positive": "positive", "negative": "negative"})

    @classmethod
    def from_file(cls, path: str | Path) -> "LabelMap":
        mapping = {}
        for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"{path}:{n}: expected 'raw_label = positive|negative|drop'")
            raw, target = (s.strip() for s in line.split("=", 1))
            mapping[raw] = target
        return cls(mapping)

    def write(self, path: str | Path) -> None:
        Path(path).write_text("".join(f"{k} = {v}\n" for k, v in self.mapping.items()), encoding="utf-8")

    def apply(self, raw: str) -> int | None:
        """Binary label for ``raw``; None means drop."""
        try:
            target = self.mapping[raw]
        except KeyError:
            raise DataError(f"unmapped raw label {raw!r}") from None
        return None if target == "drop" else (POSITIVE if target == "positive" else NEGATIVE)


def load_dataset(path: str | Path, label_map: LabelMap | None = None, split: str = "train", name: str | None = None) -> Dataset:
    """Load a JSONL corpus.

    Records without a ``label`` field are kept unlabeled (pool files).  Passing
    ``label_map=None`` uses the identity map over ``positive``/``negative``.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    label_map = label_map or LabelMap.identity()
    items = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                id_, text = str(rec["id"]), rec["text"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: malformed record ({exc})") from None
            label = None
            if rec.get("label") is not None:
                label = label_map.apply(str(rec["label"]))
                if label is None:
                    continue
            explicitness = rec.get("explicitness") or "unknown"
            if label != POSITIVE:
                explicitness = "unknown"
            try:
                items.append(Utterance(id_, text.strip(), label, explicitness))
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not items:
        raise DataError(f"{path}: no records after label mapping")
    ds = Dataset(name or path.stem, tuple(items), split)
    labels = [u.label for u in items if u.label is not None]
    if labels and POSITIVE not in labels:
        raise DataError(f"{path}: no positive class")
    if labels and NEGATIVE not in labels:
        raise DataError(f"{path}: no negative class")
    return ds


def write_dataset(ds: Dataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u in ds.items:
            rec = {"id": u.id, "text": u.text}
            if u.label is not None:
                rec["label"] = "positive" if u.label == POSITIVE else "negative"
            if u.explicitness != "unknown":
                rec["explicitness"] = u.explicitness
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def csv_to_jsonl(csv_path: str | Path, jsonl_path: str | Path, text_col: str = "text", label_col: str = "label", id_col: str | None = "id") -> int:
    """Convenience converter; returns the number of records written."""
    n = 0
    with open(csv_path, newline="", encoding="utf-8") as src, open(jsonl_path, "w", encoding="utf-8") as dst:
        for n, row in enumerate(csv.DictReader(src), 1):
            rec = {"id": row[id_col] if id_col and id_col in row else str(n), "text": row[text_col]}
            if row.get(label_col):
                rec["label"] = row[label_col]
            dst.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return n


@dataclass(frozen=True)
class ConceptSet:
    name: str
    examples: tuple[Utterance, ...]

    @property
    def n_c(self) -> int:
        return len(self.examples)

    @property
    def texts(self) -> list[str]:
        return [u.text for u in self.examples]

    def require(self, n_v: int) -> None:
        if self.n_c < n_v:
            raise DataError(f"concept {self.name!r} has {self.n_c} unique examples; at least {n_v} required")

    def contains(self, u: Utterance) -> bool:
        return any(e.id == u.id or e.text == u.text for e in self.examples)

    def without(self, texts: Iterable[str]) -> "ConceptSet":
        drop = set(texts)
        return ConceptSet(self.name, tuple(e for e in self.examples if e.text not in drop))


def text_id(text: str) -> str:
    return hashlib.sha1(text.encode("utf-8")).hexdigest()[:12]


def concept_from_texts(name: str, texts: Iterable[str]) -> ConceptSet:
    """Deduplicate by text, keep first occurrence order."""
    seen: dict[str, None] = {}
    for t in texts:
        t = t.strip()
        if t and t not in seen:
            seen[t] = None
    return ConceptSet(name, tuple(Utterance(f"{name}:{text_id(t)}", t) for t in seen))


def load_concept(path: str | Path | Sequence[str | Path], name: str, min_examples: int = 1) -> ConceptSet:
    """Load one or several concept files (concatenated in order)."""
    paths = [path] if isinstance(path, (str, Path)) else list(path)
    lines: list[str] = []
    for p in paths:
        p = Path(p)
        if not p.exists():
            raise DataError(f"no such file: {p}")
        for line in p.read_text(encoding="utf-8").splitlines():
            if line.strip() and not line.lstrip().startswith("#"):
                lines.append(line)
    concept = concept_from_texts(name, lines)
    concept.require(min_examples)
    return concept


def sample_pool(ds: Dataset | Sequence[Utterance], n: int, seed: int) -> list[Utterance]:
    """``n`` distinct utterances drawn uniformly without replacement."""
    items = list(ds.items if isinstance(ds, Dataset) else ds)
    if n > len(items):
        raise DataError(f"cannot sample {n} utterances from {len(items)}")
    rng = np.random.default_rng(seed)
    return [items[i] for i in rng.permutation(len(items))[:n]]
