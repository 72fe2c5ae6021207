import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from textcav.encoder import (
    EmbeddingStore, EncoderError, EncoderModel, FeaturizerSpec, compress_columns, encode, export_embeddings,
    featurize, featurize_batch, fnv1a_64, ids_path, import_embeddings, tokenize,
)

SPEC = FeaturizerSpec(1, 2, 2**12)
UNI = FeaturizerSpec(1, 1, 2**12)


def model(spec=SPEC, m=16, seed=0, normalize=True):
    return EncoderModel.initialize(spec, m, np.random.default_rng(seed), 1.0, normalize)


def test_fnv1a_reference_vectors():
    # published FNV-1a 64-bit test vectors
    assert fnv1a_64(b"") == 0xCBF29CE484222325
    assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a_64(b"foobar") == 0x85944171F73967E8


def test_repeated_unigram_counts_in_one_bucket():
    h = 14695981039346656037
    for byte in "virus".encode():
        h = ((h ^ byte) * 1099511628211) % 2**64
    feats = featurize("virus virus", UNI).toarray()[0]
    assert feats[h % UNI.buckets] == 2
    assert feats.sum() == 2 and np.count_nonzero(feats) == 1


def test_tokenize_lowercases_word_runs():
    assert tokenize("Hello, WORLD! it's") == ["hello", "world", "it", "s"]


def test_empty_text_gives_zero_vector():
    r = encode(model(), "")
    assert r.shape == (16,)
    assert not r.any()


def test_identical_texts_identical_vectors():
    enc = model()
    a, b = encode(enc, "same words here"), encode(enc, "same words here")
    assert a.tobytes() == b.tobytes()


def test_one_hot_feature_maps_to_normalized_projection_row():
    enc = model(UNI)
    b = featurize("zebra", UNI).indices[0]
    row = enc.projection[b].astype(np.float64)
    np.testing.assert_allclose(encode(enc, "zebra"), row / np.linalg.norm(row), rtol=1e-12)


def test_unnormalized_encoder_returns_projection():
    enc = model(UNI, normalize=False)
    b = featurize("zebra", UNI).indices[0]
    np.testing.assert_allclose(encode(enc, "zebra"), enc.projection[b], rtol=1e-6)


words = st.lists(st.sampled_from(["alpha", "beta", "gamma", "delta", "eps", "zeta"]), min_size=0, max_size=12)


@given(words)
@settings(max_examples=50, deadline=None)
def test_norm_is_zero_or_one(ws):
    n = np.linalg.norm(encode(model(), " ".join(ws)))
    assert n == 0 or abs(n - 1) <= 1e-6


@given(words, st.randoms())
@settings(max_examples=50, deadline=None)
def test_unigram_features_ignore_order(ws, rnd):
    shuffled = list(ws)
    rnd.shuffle(shuffled)
    a = featurize(" ".join(ws), UNI).toarray()
    b = featurize(" ".join(shuffled), UNI).toarray()
    assert np.array_equal(a, b)


def test_compress_columns_preserves_products():
    feats = featurize_batch(["a b c", "c d", "e"], SPEC)
    proj = np.random.default_rng(1).standard_normal((SPEC.buckets, 4))
    sub, cols = compress_columns(feats)
    np.testing.assert_allclose(sub @ proj[cols], feats @ proj)


def test_featurizer_validation():
    with pytest.raises(EncoderError):
        FeaturizerSpec(1, 2, 512)
    with pytest.raises(EncoderError):
        FeaturizerSpec(2, 1)


def test_projection_dimension_checks():
    with pytest.raises(EncoderError, match="dimension mismatch"):
        EncoderModel(SPEC, np.zeros((100, 16), dtype=np.float32))
    with pytest.raises(EncoderError, match="below minimum"):
        EncoderModel(SPEC, np.zeros((SPEC.buckets, 4), dtype=np.float32))
    with pytest.raises(EncoderError, match="dimension mismatch"):
        model().encode_features(featurize("x", FeaturizerSpec(1, 1, 2**11)))


def test_embedding_round_trip_is_byte_identical(tmp_path):
    rng = np.random.default_rng(0)
    store = EmbeddingStore(("a", "b", "c"), rng.standard_normal((3, 8)).astype(np.float32))
    p1, p2 = tmp_path / "one.emb", tmp_path / "two.emb"
    export_embeddings(store, p1)
    back = import_embeddings(p1)
    assert back == store
    export_embeddings(back, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert ids_path(p1).read_text() == ids_path(p2).read_text()


def test_known_little_endian_payload(tmp_path):
    vals = np.arange(12, dtype=np.float32).reshape(3, 4) / 4
    store = EmbeddingStore(("x", "y", "z"), vals)
    path = tmp_path / "s.emb"
    export_embeddings(store, path)
    raw = path.read_bytes()
    assert raw.startswith(b"EMB v1 3 4\n")
    body = raw[len(b"EMB v1 3 4\n"):]
    # 0.25 as IEEE-754 single precision, little-endian: 00 00 80 3e
    assert body[4:8] == bytes.fromhex("0000803e")
    # hand-decode every float: sign/exponent/mantissa from the 4 bytes
    decoded = []
    for i in range(0, len(body), 4):
        bits = int.from_bytes(body[i:i + 4], "little")
        exp, mant = (bits >> 23) & 0xFF, bits & 0x7FFFFF
        decoded.append(0.0 if exp == 0 else (1 + mant / 2**23) * 2.0 ** (exp - 127))
    np.testing.assert_array_equal(np.array(decoded).reshape(3, 4), vals)
    np.testing.assert_array_equal(import_embeddings(path).vectors, vals)


def test_row_count_mismatch(tmp_path):
    path = tmp_path / "bad.emb"
    path.write_bytes(b"EMB v1 10 2\n" + np.zeros((9, 2), dtype="<f4").tobytes())
    ids_path(path).write_text("".join(f"{i}\n" for i in range(10)))
    with pytest.raises(EncoderError, match="row count mismatch"):
        import_embeddings(path)


def test_ids_sidecar_must_match(tmp_path):
    path = tmp_path / "bad.emb"
    path.write_bytes(b"EMB v1 2 2\n" + np.zeros((2, 2), dtype="<f4").tobytes())
    ids_path(path).write_text("only-one\n")
    with pytest.raises(EncoderError, match="row count mismatch"):
        import_embeddings(path)


def test_non_finite_payload_rejected(tmp_path):
    path = tmp_path / "nan.emb"
    path.write_bytes(b"EMB v1 1 2\n" + np.array([[np.nan, 0]], dtype="<f4").tobytes())
    ids_path(path).write_text("a\n")
    with pytest.raises(EncoderError, match="non-finite"):
        import_embeddings(path)


def test_store_rejects_duplicates_and_unknown_ids():
    with pytest.raises(EncoderError, match="duplicate"):
        EmbeddingStore(("a", "a"), np.zeros((2, 2)))
    store = EmbeddingStore(("a",), np.ones((1, 2)))
    with pytest.raises(EncoderError, match="not in embedding store"):
        store.lookup(["b"])
