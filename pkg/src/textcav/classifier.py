"""Binary text classifier: hashed n-gram encoder + one-hidden-layer head.

The head ``h`` maps a representation ``r`` to the positive-class logit::

    h(r) = w2 . act(W1^T r + b1) + b2

``act`` is ``tanh`` by default; ``identity`` gives a linear head, which makes
every directional derivative independent of ``r``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .data import Dataset, Utterance
from .encoder import EmbeddingStore, EncoderModel, FeaturizerSpec, compress_columns, featurize_batch, l2_normalize
from .metrics import MetricReport, metric_report

log = logging.getLogger(__name__)

ACTIVATIONS = ("tanh", "identity")


class TrainingError(RuntimeError):
    pass


class NumericError(TrainingError):
    pass


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 12
    batch_size: int = 32
    lr: float = 0.2
    seed: int = 0
    m: int = 64
    d: int = 32
    buckets: int = 2**18
    n_min: int = 1
    n_max: int = 2
    activation: str = "tanh"
    normalize: bool = True
    weight_decay: float = 1e-3
    class_weighting: bool = False
    init_scale: float = 0.03

    def __post_init__(self):
        if self.lr <= 0 or self.epochs < 1 or self.batch_size < 1 or self.d < 1:
            raise TrainingError(f"invalid training config: {self}")
        if self.activation not in ACTIVATIONS:
            raise TrainingError(f"unknown activation {self.activation!r}")

    def featurizer(self) -> FeaturizerSpec:
        return FeaturizerSpec(self.n_min, self.n_max, self.buckets)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class HeadModel:
    hidden_w: np.ndarray  # (m, d)
    hidden_b: np.ndarray  # (d,)
    out_w: np.ndarray  # (d,)
    out_b: float
    activation: str = "tanh"

    def __post_init__(self):
        m, d = self.hidden_w.shape
        if self.hidden_b.shape != (d,) or self.out_w.shape != (d,):
            raise TrainingError("head parameter shapes are inconsistent")
        if self.activation not in ACTIVATIONS:
            raise TrainingError(f"unknown activation {self.activation!r}")

    @property
    def m(self) -> int:
        return self.hidden_w.shape[0]

    @property
    def d(self) -> int:
        return self.hidden_w.shape[1]

    @property
    def is_linear(self) -> bool:
        return self.activation == "identity"

    def _act(self, a):
        return np.tanh(a) if self.activation == "tanh" else a

    def _act_prime(self, a):
        if self.activation == "tanh":
            return 1.0 - np.tanh(a) ** 2
        return np.ones_like(a)

    def logits(self, r: np.ndarray) -> np.ndarray:
        r = np.atleast_2d(r)
        return self._act(r @ self.hidden_w + self.hidden_b) @ self.out_w + self.out_b

    def gradient(self, r: np.ndarray) -> np.ndarray:
        """d logit / d r for each row of ``r``; shape (n, m)."""
        r = np.atleast_2d(r)
        a = r @ self.hidden_w + self.hidden_b
        return (self._act_prime(a) * self.out_w) @ self.hidden_w.T

    def negated(self) -> "HeadModel":
        return HeadModel(self.hidden_w, self.hidden_b, -self.out_w, -self.out_b, self.activation)


@dataclass
class TrainedClassifier:
    head: HeadModel
    encoder: EncoderModel | None
    config: TrainingConfig
    dev_metrics: MetricReport | None = None
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def m(self) -> int:
        return self.head.m

    def represent(self, items: Sequence[Utterance] | Sequence[str], store: EmbeddingStore | None = None) -> np.ndarray:
        """Representations (n, m).  Without an encoder, rows come from ``store`` by id."""
        if self.encoder is None:
            if store is None:
                raise TrainingError("classifier has no encoder; an embedding store is required")
            return store.lookup([u.id for u in items])
        texts = [u.text if isinstance(u, Utterance) else u for u in items]
        return self.encoder.encode_batch(texts)

    def logits(self, items, store: EmbeddingStore | None = None) -> np.ndarray:
        return self.head.logits(self.represent(items, store))

    def probabilities(self, items, store: EmbeddingStore | None = None) -> np.ndarray:
        return expit(self.logits(items, store))


@dataclass(frozen=True)
class Prediction:
    logit: float
    probability: float
    label: int
    confidence: float


def prediction_from_logit(logit: float, threshold: float = 0.5) -> Prediction:
    p = float(expit(logit))
    label = int(p >= threshold)
    return Prediction(float(logit), p, label, p if label else 1.0 - p)


def confidences(logits: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    p = expit(np.asarray(logits, dtype=np.float64))
    return np.where(p >= threshold, p, 1.0 - p)


def predict(clf: TrainedClassifier, text: str | Utterance, threshold: float = 0.5, store: EmbeddingStore | None = None) -> Prediction:
    logit = clf.logits([text], store)[0]
    return prediction_from_logit(logit, threshold)


def head_gradient(clf: TrainedClassifier | HeadModel, r: np.ndarray) -> np.ndarray:
    head = clf.head if isinstance(clf, TrainedClassifier) else clf
    g = head.gradient(r)
    return g[0] if np.ndim(r) == 1 else g


def evaluate(clf: TrainedClassifier, ds: Dataset, threshold: float = 0.5, store: EmbeddingStore | None = None) -> MetricReport:
    return metric_report(ds.labels(), clf.probabilities(ds.items, store), threshold)


def _f32(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=np.float32).astype(np.float64)


def _init_head(cfg: TrainingConfig, rng: np.random.Generator) -> HeadModel:
    d = cfg.d
    hidden_w = rng.normal(0.0, 1.0 / np.sqrt(cfg.m), (cfg.m, d))
    out_w = rng.normal(0.0, 1.0 / np.sqrt(d), d)
    return HeadModel(hidden_w, np.zeros(d), out_w, 0.0, cfg.activation)


def _example_weights(y: np.ndarray, balanced: bool) -> np.ndarray:
    if not balanced:
        return np.ones(len(y))
    pos = y.mean()
    return np.where(y == 1, 0.5 / pos, 0.5 / (1.0 - pos))


def _check_trainable(y: np.ndarray, cfg: TrainingConfig) -> None:
    if len(y) == 0 or y.min() == y.max():
        raise TrainingError("training set must contain both classes")


def _sgd(cfg: TrainingConfig, y: np.ndarray, n: int, rng, head: HeadModel, step_fn) -> list[float]:
    """Shared epoch/batch loop; ``step_fn(idx)`` returns dL/dr-free head update inputs."""
    w = _example_weights(y, cfg.class_weighting)
    history = []
    step = 0
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            step += 1
            r, backward = step_fn(idx)
            a = r @ head.hidden_w + head.hidden_b
            hdn = head._act(a)
            logit = hdn @ head.out_w + head.out_b
            yb, wb = y[idx], w[idx]
            loss = float(np.sum(wb * (np.logaddexp(0.0, logit) - yb * logit)) / len(idx))
            if not np.isfinite(loss):
                raise NumericError(f"loss diverged (non-finite) at step {step}, epoch {epoch + 1}")
            total += loss * len(idx)
            dlogit = wb * (expit(logit) - yb) / len(idx)
            da = np.outer(dlogit, head.out_w) * head._act_prime(a)
            dr = da @ head.hidden_w.T
            grad_out_w = hdn.T @ dlogit + cfg.weight_decay * head.out_w
            grad_hidden_w = r.T @ da + cfg.weight_decay * head.hidden_w
            head.out_b -= cfg.lr * float(dlogit.sum())
            head.out_w -= cfg.lr * grad_out_w
            head.hidden_b -= cfg.lr * da.sum(axis=0)
            head.hidden_w -= cfg.lr * grad_hidden_w
            backward(dr)
        history.append(total / n)
        log.debug("epoch %d loss %.5f", epoch + 1, history[-1])
    return history


def train(train_ds: Dataset, dev_ds: Dataset | None, config: TrainingConfig = TrainingConfig()) -> TrainedClassifier:
    """Jointly train projection and head by mini-batch SGD on the logistic loss."""
    cfg = config
    y = train_ds.labels().astype(np.float64)
    _check_trainable(y, cfg)
    rng = np.random.default_rng(cfg.seed)
    encoder = EncoderModel.initialize(cfg.featurizer(), cfg.m, rng, cfg.init_scale, cfg.normalize)
    head = _init_head(cfg, rng)
    feats = featurize_batch(train_ds.texts, cfg.featurizer())
    proj = encoder.projection

    def step_fn(idx):
        sub, cols = compress_columns(feats[idx])
        z = sub @ proj[cols].astype(np.float64)
        if cfg.normalize:
            r, norms = l2_normalize(z)
        else:
            r, norms = z, None

        def backward(dr):
            if cfg.normalize:
                safe = np.where(norms > 0, norms, 1.0)
                dz = (dr - r * np.sum(r * dr, axis=1, keepdims=True)) / safe[:, None]
            else:
                dz = dr
            proj[cols] -= (cfg.lr * (sub.T @ dz)).astype(np.float32)

        return r, backward

    history = _sgd(cfg, y, len(y), rng, head, step_fn)
    if not np.all(np.isfinite(proj)):
        raise NumericError("projection became non-finite during training")
    head = HeadModel(_f32(head.hidden_w), _f32(head.hidden_b), _f32(head.out_w), float(np.float32(head.out_b)), head.activation)
    clf = TrainedClassifier(head, encoder, cfg, None, history)
    if dev_ds is not None:
        clf.dev_metrics = evaluate(clf, dev_ds)
    return clf


def train_head(
    store: EmbeddingStore, train_ds: Dataset, dev_ds: Dataset | None, config: TrainingConfig = TrainingConfig()
) -> TrainedClassifier:
    """Train only the head on frozen imported representations (looked up by utterance id)."""
    cfg = replace(config, m=store.dim)
    y = train_ds.labels().astype(np.float64)
    _check_trainable(y, cfg)
    rng = np.random.default_rng(cfg.seed)
    head = _init_head(cfg, rng)
    reps = store.lookup(train_ds.ids)
    history = _sgd(cfg, y, len(y), rng, head, lambda idx: (reps[idx], lambda dr: None))
    head = HeadModel(_f32(head.hidden_w), _f32(head.hidden_b), _f32(head.out_w), float(np.float32(head.out_b)), head.activation)
    clf = TrainedClassifier(head, None, cfg, None, history)
    if dev_ds is not None:
        clf.dev_metrics = evaluate(clf, dev_ds, store=store)
    return clf


def linear_head(weights: np.ndarray, bias: float = 0.0) -> HeadModel:
    """Identity-activation head with d=1: h(r) = weights . r + bias."""
    weights = np.asarray(weights, dtype=np.float64)
    return HeadModel(weights[:, None].copy(), np.zeros(1), np.ones(1), float(bias), "identity")


# --- persistence -----------------------------------------------------------

def save_classifier(clf: TrainedClassifier, path: str | Path) -> None:
    """Write ``path`` (CLF v1 binary) and ``path.json`` (config, dev metrics)."""
    path = Path(path)
    h = clf.head
    b = clf.encoder.spec.buckets if clf.encoder is not None else 0
    with open(path, "wb") as fh:
        fh.write(f"CLF v1 {h.m} {h.d} {b}\n".encode("ascii"))
        if clf.encoder is not None:
            fh.write(np.ascontiguousarray(clf.encoder.projection, dtype="<f4").tobytes())
        for arr in (h.hidden_w, h.hidden_b, h.out_w, np.array([h.out_b])):
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    meta = {
        "format": "CLF v1",
        "activation": h.activation,
        "has_encoder": clf.encoder is not None,
        "normalize": clf.encoder.normalize if clf.encoder is not None else None,
        "training_config": clf.config.to_dict(),
        "dev_metrics": clf.dev_metrics.to_dict() if clf.dev_metrics is not None else None,
    }
    sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def sidecar(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def load_classifier(path: str | Path) -> TrainedClassifier:
    path = Path(path)
    raw = path.read_bytes()
    nl = raw.find(b"\n")
    parts = raw[:nl].decode("ascii", errors="replace").split() if nl > 0 else []
    if len(parts) != 5 or parts[:2] != ["CLF", "v1"]:
        raise TrainingError(f"{path}: not a CLF v1 model file")
    m, d, b = (int(x) for x in parts[2:])
    meta = json.loads(sidecar(path).read_text(encoding="utf-8"))
    cfg = TrainingConfig(**meta["training_config"])
    flat = np.frombuffer(raw[nl + 1 :], dtype="<f4").astype(np.float64)
    expected = (b * m if meta["has_encoder"] else 0) + m * d + d + d + 1
    if flat.size != expected:
        raise TrainingError(f"{path}: payload holds {flat.size} floats, expected {expected}")
    off = 0
    encoder = None
    if meta["has_encoder"]:
        proj = flat[: b * m].reshape(b, m).astype(np.float32)
        off = b * m
        encoder = EncoderModel(FeaturizerSpec(cfg.n_min, cfg.n_max, b), proj, bool(meta["normalize"]))
    hidden_w = flat[off : off + m * d].reshape(m, d)
    off += m * d
    hidden_b = flat[off : off + d]
    off += d
    out_w = flat[off : off + d]
    out_b = float(flat[off + d])
    head = HeadModel(hidden_w.copy(), hidden_b.copy(), out_w.copy(), out_b, meta["activation"])
    dev = MetricReport(**meta["dev_metrics"]) if meta.get("dev_metrics") else None
    return TrainedClassifier(head, encoder, cfg, dev)
