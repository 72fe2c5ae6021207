"""Planted-structure corpora: a base domain and an emerging domain.

Vocabulary groups (all disjoint):

* background: neutral filler, Zipf-distributed, present everywhere;
* markers: profanity; every explicit positive carries at least one marker and
  no negative ever does;
* rude: softer insults that accompany markers in base explicit positives and
  show up in a fraction of emerging-domain negatives;
* per-domain topic words, split into a hostile half and a neutral half.

Implicit positives carry no marker; they differ from negatives only in which
half of the domain's topic vocabulary their topic words are drawn from, with
the hostile half chosen with probability ``(1 + gamma) / 2``.  Base negatives
also mention the emerging domain's hostile topic words at ``legacy_rate``
(the word existed before, in neutral use), so a base-trained classifier reads
those words as evidence for the negative class.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import NEGATIVE, POSITIVE, Dataset, LabelMap, Utterance, write_dataset

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr", "sk", "pl", "gr", "st"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]

RAW_POSITIVE = "abusive"
RAW_NEGATIVE = "normal"


class CorpusSpecError(ValueError):
    pass


@dataclass(frozen=True)
class CorpusSpec:
    seed: int = 7
    background_vocab: int = 300
    topic_vocab: int = 24  # per half, per domain
    n_markers: int = 12
    n_rude: int = 16
    gamma: float = 0.83
    noise: float = 0.0
    length: tuple[int, int] = (8, 14)
    # inclusive (min, max) word counts per text type
    explicit_markers: tuple[int, int] = (1, 3)
    explicit_rude: tuple[int, int] = (1, 2)
    explicit_topic: tuple[int, int] = (0, 1)
    implicit_topic: tuple[int, int] = (2, 4)
    negative_topic: tuple[int, int] = (1, 3)
    negative_rude: tuple[int, int] = (1, 2)
    base_positive_rate: float = 0.3
    base_explicit_share: float = 0.7
    new_positive_rate: float = 0.3
    new_explicit_share: float = 0.4
    legacy_rate: float = 0.3
    rude_negative_rate: float = 0.06
    base_train: int = 4000
    base_dev: int = 1000
    base_test: int = 1000
    new_pool: int = 2000
    new_test: int = 1000
    random_inputs: int = 2000
    concept_size: int = 100

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0):
            raise CorpusSpecError("gamma must lie in (0, 1]")
        if not (0.0 <= self.noise <= 0.3):
            raise CorpusSpecError("noise rate must lie in [0, 0.3]")
        lo, hi = self.length
        if lo < 6 or hi < lo:
            raise CorpusSpecError("length range must satisfy 6 <= min <= max")
        for name in ("base_positive_rate", "base_explicit_share", "new_positive_rate", "new_explicit_share",
                     "legacy_rate", "rude_negative_rate"):
            if not (0.0 <= getattr(self, name) <= 1.0):
                raise CorpusSpecError(f"{name} must lie in [0, 1]")
        if self.explicit_markers[0] < 1:
            raise CorpusSpecError("explicit positives need at least one marker")
        if min(self.background_vocab, self.topic_vocab, self.n_markers, self.n_rude) < 2:
            raise CorpusSpecError("every vocabulary group needs at least two words")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Vocabulary:
    background: list[str]
    markers: list[str]
    rude: list[str]
    topics: dict[str, dict[str, list[str]]]  # domain -> {"hostile": [...], "neutral": [...]}

    def to_dict(self) -> dict:
        return asdict(self)


def _make_words(rng: np.random.Generator, n: int, taken: set[str]) -> list[str]:
    words = []
    while len(words) < n:
        k = int(rng.integers(2, 4))
        w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))] for _ in range(k))
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


def build_vocabulary(spec: CorpusSpec, rng: np.random.Generator) -> Vocabulary:
    taken: set[str] = set()
    background = _make_words(rng, spec.background_vocab, taken)
    markers = _make_words(rng, spec.n_markers, taken)
    rude = _make_words(rng, spec.n_rude, taken)
    topics = {
        dom: {"hostile": _make_words(rng, spec.topic_vocab, taken), "neutral": _make_words(rng, spec.topic_vocab, taken)}
        for dom in ("base", "new")
    }
    return Vocabulary(background, markers, rude, topics)


class _Writer:
    def __init__(self, spec: CorpusSpec, vocab: Vocabulary, rng: np.random.Generator):
        self.spec, self.v, self.rng = spec, vocab, rng
        self.noise_rng = np.random.default_rng([spec.seed, 1])  # separate stream: noise only flips labels
        ranks = np.arange(1, len(vocab.background) + 1)
        self.bg_p = (1.0 / ranks) / np.sum(1.0 / ranks)

    def _pick(self, words, k):
        return [words[i] for i in self.rng.integers(len(words), size=k)]

    def _topic(self, domain: str, k: int, hostile_bias: bool) -> list[str]:
        p_hostile = (1.0 + self.spec.gamma) / 2.0
        if not hostile_bias:
            p_hostile = 1.0 - p_hostile
        halves = self.v.topics[domain]
        return [
            self._pick(halves["hostile"] if self.rng.random() < p_hostile else halves["neutral"], 1)[0]
            for _ in range(k)
        ]

    def _compose(self, content: list[str]) -> str:
        lo, hi = self.spec.length
        n = max(int(self.rng.integers(lo, hi + 1)), len(content) + 3)
        bg = [self.v.background[i] for i in self.rng.choice(len(self.v.background), n - len(content), p=self.bg_p)]
        words = bg + content
        self.rng.shuffle(words)
        return " ".join(words)

    def _count(self, bounds: tuple[int, int]) -> int:
        return int(self.rng.integers(bounds[0], bounds[1] + 1))

    def explicit(self, domain: str) -> str:
        spec = self.spec
        content = self._pick(self.v.markers, self._count(spec.explicit_markers))
        content += self._pick(self.v.rude, self._count(spec.explicit_rude))
        content += self._topic(domain, self._count(spec.explicit_topic), True)
        return self._compose(content)

    def implicit(self, domain: str) -> str:
        return self._compose(self._topic(domain, self._count(self.spec.implicit_topic), True))

    def negative(self, domain: str) -> str:
        spec = self.spec
        content = self._topic(domain, self._count(spec.negative_topic), False)
        if domain == "base" and self.rng.random() < spec.legacy_rate:
            content += self._pick(self.v.topics["new"]["hostile"], 1)
        if domain == "new" and self.rng.random() < spec.rude_negative_rate:
            content += self._pick(self.v.rude, self._count(spec.negative_rude))
        return self._compose(content)

    def chatter(self) -> str:
        content = []
        if self.rng.random() < 0.3:
            dom = "base" if self.rng.random() < 0.5 else "new"
            content = self._pick(self.v.topics[dom]["neutral"], 1)
        return self._compose(content)


def _labeled(w: _Writer, domain: str, n: int, pos_rate: float, explicit_share: float, prefix: str, split: str) -> Dataset:
    spec, rng = w.spec, w.rng
    items = []
    for i in range(n):
        if rng.random() < pos_rate:
            kind = "explicit" if rng.random() < explicit_share else "implicit"
            text = w.explicit(domain) if kind == "explicit" else w.implicit(domain)
            label = POSITIVE
        else:
            kind, text, label = "unknown", w.negative(domain), NEGATIVE
        if spec.noise and w.noise_rng.random() < spec.noise:
            label = 1 - label
            kind = "unknown"
        items.append(Utterance(f"{prefix}-{i:05d}", text, label, kind if label == POSITIVE else "unknown"))
    return Dataset(prefix, tuple(items), split)


@dataclass
class SyntheticCorpus:
    spec: CorpusSpec
    vocab: Vocabulary
    base_train: Dataset
    base_dev: Dataset
    base_test: Dataset
    new_pool: Dataset
    new_test: Dataset
    random_inputs: Dataset
    concepts: dict[str, list[str]] = field(default_factory=dict)

    def datasets(self) -> dict[str, Dataset]:
        return {
            "base_train": self.base_train,
            "base_dev": self.base_dev,
            "base_test": self.base_test,
            "new_pool": self.new_pool,
            "new_test": self.new_test,
            "random_inputs": self.random_inputs,
        }


def _unique(w: _Writer, make, n: int, exclude: set[str]) -> list[str]:
    out: list[str] = []
    while len(out) < n:
        t = make()
        if t not in exclude:
            exclude.add(t)
            out.append(t)
    return out


def generate(spec: CorpusSpec = CorpusSpec()) -> SyntheticCorpus:
    rng = np.random.default_rng(spec.seed)
    vocab = build_vocabulary(spec, rng)
    w = _Writer(spec, vocab, rng)
    base_train = _labeled(w, "base", spec.base_train, spec.base_positive_rate, spec.base_explicit_share, "base_train", "train")
    base_dev = _labeled(w, "base", spec.base_dev, spec.base_positive_rate, spec.base_explicit_share, "base_dev", "dev")
    base_test = _labeled(w, "base", spec.base_test, spec.base_positive_rate, spec.base_explicit_share, "base_test", "test")
    new_pool = _labeled(w, "new", spec.new_pool, spec.new_positive_rate, spec.new_explicit_share, "new_pool", "pool")
    new_test = _labeled(w, "new", spec.new_test, spec.new_positive_rate, spec.new_explicit_share, "new_test", "test")
    random_inputs = Dataset(
        "random_inputs",
        tuple(Utterance(f"random-{i:05d}", w.chatter()) for i in range(spec.random_inputs)),
        "pool",
    )
    seen = {u.text for ds in (base_train, base_dev, base_test, new_pool, new_test, random_inputs) for u in ds}
    k = spec.concept_size
    concepts = {
        "non_coherent": _unique(w, w.chatter, k, seen),
        "topic": _unique(w, lambda: w.negative("new"), k, seen),
        "explicit": _unique(w, lambda: w.explicit("new"), k, seen),
        "implicit": _unique(w, lambda: w.implicit("new"), k, seen),
        "generic_hate": _unique(w, lambda: w.explicit("base"), k, seen),
    }
    return SyntheticCorpus(spec, vocab, base_train, base_dev, base_test, new_pool, new_test, random_inputs, concepts)


def write_corpus(corpus: SyntheticCorpus, out_dir: str | Path) -> dict[str, Path]:
    """Emit JSONL corpora, concept files, planted-word lexicons, a label map and the spec; returns written paths."""
    out = Path(out_dir)
    (out / "concepts").mkdir(parents=True, exist_ok=True)
    written = {}
    for name, ds in corpus.datasets().items():
        path = out / f"{name}.jsonl"
        if ds.split == "pool" and name == "random_inputs":
            write_dataset(ds, path)
        else:
            _write_raw(ds, path)
        written[name] = path
    for name, texts in corpus.concepts.items():
        path = out / "concepts" / f"{name}.txt"
        path.write_text(f"# concept: {name}\n" + "".join(t + "\n" for t in texts), encoding="utf-8")
        written[f"concept:{name}"] = path
    (out / "lexicons").mkdir(exist_ok=True)
    v = corpus.vocab
    topic_words = sorted(w for halves in v.topics.values() for ws in halves.values() for w in ws)
    for name, words in (("hateful", sorted(v.markers + v.rude)), ("topic", topic_words)):
        path = out / "lexicons" / f"{name}.txt"
        path.write_text("".join(w + "\n" for w in words), encoding="utf-8")
        written[f"lexicon:{name}"] = path
    LabelMap({RAW_POSITIVE: "positive", RAW_NEGATIVE: "negative"}).write(out / "labelmap.cfg")
    written["labelmap"] = out / "labelmap.cfg"
    (out / "corpus_spec.json").write_text(
        json.dumps({"spec": corpus.spec.to_dict(), "vocabulary": corpus.vocab.to_dict()}, indent=1, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    written["spec"] = out / "corpus_spec.json"
    return written


def _write_raw(ds: Dataset, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u in ds:
            rec = {"id": u.id, "text": u.text, "label": RAW_POSITIVE if u.label == POSITIVE else RAW_NEGATIVE}
            if u.explicitness != "unknown":
                rec["explicitness"] = u.explicitness
            fh.write(json.dumps(rec) + "\n")
