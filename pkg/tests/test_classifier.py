import numpy as np
import pytest
from scipy.special import expit

from conftest import SMALL_TRAIN, cluster_data, tiny_spec
from textcav.classifier import (
    HeadModel, NumericError, TrainingConfig, TrainingError, confidences, evaluate, head_gradient, linear_head,
    load_classifier, predict, prediction_from_logit, save_classifier, train, train_head,
)
from textcav.data import Dataset, Utterance
from textcav.metrics import roc_auc
from textcav.synthcorpus import generate

HEAD_CFG = TrainingConfig(epochs=20, lr=0.5)


def random_head(m=8, d=5, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    return HeadModel(rng.normal(0, scale, (m, d)), rng.normal(0, 0.3, d), rng.normal(0, 1, d), 0.1)


# --- training on frozen representations -----------------------------------

def test_separable_clusters():
    ds, store, w = cluster_data(600, seed=0)
    x = store.vectors.astype(np.float64)
    # the generating hyperplane separates the clusters (closed-form check before training)
    assert np.mean((x @ w > 0) == ds.labels().astype(bool)) >= 0.999
    dev, dev_store, _ = cluster_data(200, seed=1, prefix="d")
    clf = train_head(store, ds, None, HEAD_CFG)
    probs = clf.probabilities(dev.items, dev_store)
    assert np.mean((probs >= 0.5) == dev.labels().astype(bool)) >= 0.99


def test_held_out_points_follow_generating_rule():
    ds, store, w = cluster_data(600, seed=2)
    clf = train_head(store, ds, None, HEAD_CFG)
    test, test_store, _ = cluster_data(100, seed=3, prefix="t")
    rule = test_store.vectors @ w > 0
    preds = np.array([predict(clf, u, store=test_store).label for u in test])
    assert np.mean(preds == rule) >= 0.99


def test_flipped_labels_flip_auc():
    ds, store, _ = cluster_data(400, seed=4, sep=0.8)
    flipped = Dataset("f", tuple(Utterance(u.id, u.text, 1 - u.label) for u in ds))
    dev, dev_store, _ = cluster_data(300, seed=5, sep=0.8, prefix="d")
    a = roc_auc(dev.labels(), train_head(store, ds, None, HEAD_CFG).probabilities(dev.items, dev_store))
    b = roc_auc(dev.labels(), train_head(store, flipped, None, HEAD_CFG).probabilities(dev.items, dev_store))
    assert abs(a - (1 - b)) <= 0.02


def test_training_is_bit_reproducible():
    c = generate(tiny_spec())
    a = train(c.base_train, None, SMALL_TRAIN)
    b = train(c.base_train, None, SMALL_TRAIN)
    assert a.encoder.projection.tobytes() == b.encoder.projection.tobytes()
    for name in ("hidden_w", "hidden_b", "out_w"):
        assert getattr(a.head, name).tobytes() == getattr(b.head, name).tobytes()
    assert a.head.out_b == b.head.out_b


def test_single_class_is_an_error():
    ds = Dataset("one", tuple(Utterance(f"u{i}", f"text {i}", 1) for i in range(10)))
    with pytest.raises(TrainingError, match="both classes"):
        train(ds, None, SMALL_TRAIN)


def test_divergence_names_the_step():
    ds, store, _ = cluster_data(64, seed=0)
    with np.errstate(all="ignore"), pytest.raises(NumericError, match="step"):
        train_head(store, ds, None, TrainingConfig(epochs=50, lr=1e6, activation="identity", d=4))


def test_config_validation():
    with pytest.raises(TrainingError):
        TrainingConfig(lr=0)
    with pytest.raises(TrainingError):
        TrainingConfig(epochs=0)
    with pytest.raises(TrainingError):
        TrainingConfig(activation="relu")


# --- predictions -----------------------------------------------------------

def test_zero_logit():
    p = prediction_from_logit(0.0)
    assert p.probability == 0.5 and p.confidence == 0.5 and p.label == 1


def test_probability_is_monotone_and_symmetric():
    logits = np.linspace(-30, 30, 601)
    probs = expit(logits)
    assert np.all(np.diff(probs) >= 0)
    np.testing.assert_allclose(expit(-logits), 1 - probs, atol=1e-15)
    conf = confidences(logits)
    assert conf.min() >= 0.5 and conf.max() <= 1.0


def test_prediction_fields_are_consistent():
    for logit in (-3.0, -0.2, 0.4, 5.0):
        p = prediction_from_logit(logit, threshold=0.5)
        assert p.label == int(p.probability >= 0.5)
        assert p.confidence == (p.probability if p.label else 1 - p.probability)


# --- gradients -------------------------------------------------------------

def test_linear_head_gradient_is_constant():
    w = np.array([0.5, -1.0, 2.0])
    head = linear_head(w, 0.3)
    r = np.random.default_rng(0).normal(size=(20, 3))
    np.testing.assert_array_equal(head.gradient(r), np.tile(w, (20, 1)))


def test_tanh_gradient_at_origin():
    head = random_head()
    head.hidden_b[:] = 0.0
    expected = head.hidden_w @ head.out_w  # tanh'(0) = 1
    np.testing.assert_allclose(head_gradient(head, np.zeros(8)), expected, rtol=1e-12)


def test_gradient_matches_central_differences_on_trained_head(base_clf):
    head = base_clf.head
    rng = np.random.default_rng(0)
    eps = 1e-3
    for _ in range(100):
        r = rng.normal(size=head.m)
        r /= np.linalg.norm(r)
        v = rng.normal(size=head.m)
        v /= np.linalg.norm(v)
        central = (head.logits(r + eps * v)[0] - head.logits(r - eps * v)[0]) / (2 * eps)
        assert abs(central - head.gradient(r)[0] @ v) <= 1e-4


def test_forward_differences_on_untrained_head():
    # at initialization the curvature is small enough for the one-sided quotient
    rng = np.random.default_rng(1)
    m, d = 64, 32
    head = HeadModel(rng.normal(0, 1 / np.sqrt(m), (m, d)), np.zeros(d), rng.normal(0, 1 / np.sqrt(d), d), 0.0)
    eps = 1e-3
    for _ in range(100):
        r, v = rng.normal(size=m), rng.normal(size=m)
        r, v = r / np.linalg.norm(r), v / np.linalg.norm(v)
        forward = (head.logits(r + eps * v)[0] - head.logits(r)[0]) / eps
        assert abs(forward - head.gradient(r)[0] @ v) <= 1e-4


def test_batched_gradient_matches_rows():
    head = random_head(seed=3)
    r = np.random.default_rng(2).normal(size=(5, 8))
    g = head.gradient(r)
    for i in range(5):
        np.testing.assert_allclose(head_gradient(head, r[i]), g[i])


# --- persistence -----------------------------------------------------------

def test_save_load_reproduces_dev_metrics(tmp_path):
    c = generate(tiny_spec())
    clf = train(c.base_train, c.base_dev, SMALL_TRAIN)
    save_classifier(clf, tmp_path / "m.clf")
    raw = (tmp_path / "m.clf").read_bytes()
    assert raw.startswith(f"CLF v1 {clf.m} {clf.head.d} {SMALL_TRAIN.buckets}\n".encode())
    back = load_classifier(tmp_path / "m.clf")
    assert evaluate(back, c.base_dev) == clf.dev_metrics
    assert back.dev_metrics == clf.dev_metrics
    np.testing.assert_array_equal(back.logits(c.base_dev.items), clf.logits(c.base_dev.items))


def test_truncated_model_file(tmp_path):
    ds, store, _ = cluster_data(100)
    clf = train_head(store, ds, None, TrainingConfig(epochs=1))
    path = tmp_path / "h.clf"
    save_classifier(clf, path)
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(TrainingError, match="expected"):
        load_classifier(path)
