import numpy as np
import pytest

from content2vec.data import Catalog, ProductRecord, make_soft_cold_start_split
from content2vec.errors import DataError
from content2vec.sgns import sgns_batch_loss_grad
from content2vec.text import (
    PAD_INDEX,
    TextEncoder,
    TextTrainable,
    WordEmbeddings,
    build_token_matrix,
    embed_text,
    text_pair_logit,
    tokenize,
    train_text_encoder,
    train_word2vec,
)
from content2vec.tokens import PAD_TOKEN
from content2vec.training import ModelDims, TrainConfig
from conftest import dense_pairs, gradcheck, model_gradcheck


class TestTokenize:
    def test_title_then_description_padded(self):
        toks = tokenize("Red Shoes", "comfortable running shoes", max_len=10)
        assert toks == ["red", "shoes", "comfortable", "running", "shoes"] + [PAD_TOKEN] * 5

    def test_empty_text_is_all_pad(self):
        assert tokenize("", "", max_len=10) == [PAD_TOKEN] * 10

    def test_truncates_to_first_ten(self):
        text = " ".join(f"w{i}" for i in range(15))
        toks = tokenize(text, "", max_len=10)
        assert toks == [f"w{i}" for i in range(10)]

    def test_punctuation_stripped(self):
        assert tokenize("Hello, world!", "(nice)", max_len=4) == [
            "hello", "world", "nice", PAD_TOKEN,
        ]

    def test_max_len_validation(self):
        with pytest.raises(ValueError):
            tokenize("a", "b", max_len=0)


def word_catalog(docs, dim=3):
    records = []
    for i, tokens in enumerate(docs):
        records.append(
            ProductRecord(
                id=f"d{i:03d}", category="x", tokens=tuple(tokens),
                image_features=np.zeros(dim),
            )
        )
    return Catalog(records)


class TestTrainWord2Vec:
    def test_cooccurring_tokens_more_similar(self):
        # u and v always co-occur; w never appears with them
        docs = [["uu", "vv"]] * 40 + [["ww", "xx"]] * 40
        catalog = word_catalog(docs)
        words = train_word2vec(catalog, d_word=8, window=2, n_negatives=3,
                               min_count=2, epochs=25, seed=4)
        vec = lambda t: words.vectors[words.vocabulary[t]]
        assert float(vec("uu") @ vec("vv")) > float(vec("uu") @ vec("ww"))

    def test_zero_epochs_returns_initialization(self):
        docs = [["aa", "bb", "cc"]] * 10
        catalog = word_catalog(docs)
        words = train_word2vec(catalog, d_word=6, epochs=0, seed=9)
        from content2vec.sgns import init_embeddings

        w_in, w_out = init_embeddings(len(words.vocabulary), 6, seed=9,
                                      zero_rows=(0, 1))
        assert np.array_equal(words.vectors, (w_in + w_out) / 2.0)

    def test_min_count_filters_everything(self):
        docs = [["one", "two"], ["three", "four"]]
        with pytest.raises(DataError, match="vocabulary"):
            train_word2vec(word_catalog(docs), min_count=5)

    def test_pad_and_unk_rows_stay_zero(self):
        docs = [["aa", "bb"]] * 20
        words = train_word2vec(word_catalog(docs), d_word=5, epochs=5, seed=0)
        assert not words.vectors[0].any()
        assert not words.vectors[1].any()

    def test_deterministic(self):
        docs = [["aa", "bb", "cc"], ["bb", "cc", "dd"]] * 10
        a = train_word2vec(word_catalog(docs), d_word=5, epochs=3, seed=2)
        b = train_word2vec(word_catalog(docs), d_word=5, epochs=3, seed=2)
        assert np.array_equal(a.vectors, b.vectors)
        assert a.vocabulary == b.vocabulary


def manual_words(vecs):
    vocab = {PAD_TOKEN: 0, "<unk>": 1}
    rows = [np.zeros(len(vecs[0])), np.zeros(len(vecs[0]))]
    for i, v in enumerate(vecs):
        vocab[f"t{i}"] = len(rows)
        rows.append(np.asarray(v, float))
    return WordEmbeddings(vocabulary=vocab, vectors=np.stack(rows))


class TestEmbedText:
    def test_all_pad_gives_zero_vector(self):
        words = manual_words([[1.0, 2.0], [3.0, 4.0]])
        enc = TextEncoder.init(2, 4, (2,), max_len=5, rng=np.random.default_rng(0))
        out = embed_text(enc, words, [PAD_TOKEN] * 5)
        assert np.array_equal(out, np.zeros(4))

    def test_width_one_selector_takes_max_coordinate(self):
        # a single width-1 filter that reads coordinate 0 of the word vector
        words = manual_words([[0.5, 9.0], [2.0, 9.0], [-3.0, 9.0]])
        enc = TextEncoder(
            filters={1: np.array([[[1.0, 0.0]]])},
            biases={1: np.zeros(1)},
            alpha=1.0, beta=0.0, max_len=3,
        )
        out = embed_text(enc, words, ["t0", "t1", "t2"])
        assert np.array_equal(out, [2.0])

    def test_full_width_constant_filter_is_order_invariant(self):
        words = manual_words([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]])
        slot = np.array([0.3, -0.7])
        enc = TextEncoder(
            filters={3: np.repeat(slot[None, None, :], 3, axis=1)},
            biases={3: np.zeros(1)},
            alpha=1.0, beta=0.0, max_len=3,
        )
        a = embed_text(enc, words, ["t0", "t1", "t2"])
        b = embed_text(enc, words, ["t2", "t0", "t1"])
        assert np.allclose(a, b)

    def test_unknown_token_maps_to_unk(self):
        words = manual_words([[1.0, 1.0]])
        enc = TextEncoder.init(2, 4, (2,), max_len=3, rng=np.random.default_rng(0))
        out = embed_text(enc, words, ["never-seen", "t0", PAD_TOKEN])
        assert out.shape == (4,)

    def test_output_dim_fixed(self):
        words = manual_words([[1.0, 0.0], [0.0, 1.0]])
        enc = TextEncoder.init(2, 6, (2, 3), max_len=4, rng=np.random.default_rng(1))
        for tokens in (["t0"] * 4, ["t1", PAD_TOKEN, PAD_TOKEN, PAD_TOKEN]):
            assert embed_text(enc, words, tokens).shape == (6,)


class TestTextPairLogit:
    def test_identical_sequences_at_least_beta(self):
        words = manual_words([[1.0, 0.5], [0.2, 2.0]])
        enc = TextEncoder.init(2, 4, (2,), max_len=3, rng=np.random.default_rng(2))
        enc.alpha, enc.beta = 0.5, -1.0
        toks = ["t0", "t1", "t0"]
        logit = text_pair_logit(enc, words, toks, toks)
        e = embed_text(enc, words, toks)
        assert logit == pytest.approx(0.5 * float(e @ e) - 1.0)
        assert logit >= enc.beta

    def test_symmetric(self):
        words = manual_words([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        enc = TextEncoder.init(2, 4, (2,), max_len=3, rng=np.random.default_rng(3))
        ta, tb = ["t0", "t1", "t2"], ["t2", "t2", "t0"]
        assert text_pair_logit(enc, words, ta, tb) == text_pair_logit(enc, words, tb, ta)

    def test_orthogonal_encodings_zero(self):
        # one filter reads coordinate 0, texts activate disjoint coordinates
        words = manual_words([[1.0, 0.0], [0.0, 1.0]])
        enc = TextEncoder(
            filters={1: np.array([[[1.0, 0.0]], [[0.0, 1.0]]])},
            biases={1: np.zeros(2)},
            alpha=1.0, beta=0.0, max_len=2,
        )
        logit = text_pair_logit(enc, words, ["t0", "t0"], ["t1", "t1"])
        assert logit == 0.0


def text_setup(seed=0):
    rng = np.random.default_rng(seed)
    docs = []
    for i in range(30):
        block = ["aa", "bb", "cc"] if i % 2 == 0 else ["dd", "ee", "ff"]
        docs.append([block[int(rng.integers(3))] for _ in range(6)])
    catalog = word_catalog(docs)
    pairs = dense_pairs(catalog, seed=seed, per_product=4)
    split = make_soft_cold_start_split(
        pairs, top_k=len(pairs.product_ids()), link_fraction=1.0,
        val_test_fractions=(0.2, 0.2), seed=seed,
    )
    return catalog, split


class TestTrainTextEncoder:
    def test_word_vectors_frozen_bitwise(self):
        catalog, split = text_setup()
        words = train_word2vec(catalog, d_word=6, epochs=3, seed=1)
        snapshot = words.vectors.copy()
        config = TrainConfig(learning_rate=0.05, batch_size=32, max_epochs=3,
                             patience=2, seed=1)
        dims = ModelDims(d_word=6, d_txt=4, filter_widths=(2,), max_len=6)
        train_text_encoder(catalog, words, split, config, dims)
        assert np.array_equal(words.vectors, snapshot)

    def test_zero_learning_rate_keeps_encoder(self):
        catalog, split = text_setup()
        words = train_word2vec(catalog, d_word=6, epochs=3, seed=1)
        dims = ModelDims(d_word=6, d_txt=4, filter_widths=(2,), max_len=6)
        enc_a, _ = train_text_encoder(
            catalog, words, split,
            TrainConfig(learning_rate=0.0, batch_size=32, max_epochs=4, patience=3, seed=2),
            dims,
        )
        enc_b, _ = train_text_encoder(
            catalog, words, split,
            TrainConfig(learning_rate=0.0, batch_size=32, max_epochs=1, patience=1, seed=2),
            dims,
        )
        assert np.array_equal(enc_a.filters[2], enc_b.filters[2])
        assert enc_a.alpha == enc_b.alpha and enc_a.beta == enc_b.beta

    def test_deterministic(self):
        catalog, split = text_setup()
        words = train_word2vec(catalog, d_word=6, epochs=3, seed=1)
        config = TrainConfig(learning_rate=0.05, batch_size=32, max_epochs=3,
                             patience=2, seed=3)
        dims = ModelDims(d_word=6, d_txt=4, filter_widths=(2,), max_len=6)
        enc_a, _ = train_text_encoder(catalog, words, split, config, dims)
        enc_b, _ = train_text_encoder(catalog, words, split, config, dims)
        assert np.array_equal(enc_a.filters[2], enc_b.filters[2])

    def test_d_txt_must_divide_over_widths(self):
        with pytest.raises(DataError, match="divide"):
            TextEncoder.init(4, 5, (2, 3), max_len=6, rng=np.random.default_rng(0))

    def test_width_exceeding_max_len_rejected(self):
        with pytest.raises(DataError, match="width"):
            TextEncoder.init(4, 4, (2, 8), max_len=6, rng=np.random.default_rng(0))


class TestMaxPoolGradient:
    def test_tie_routes_to_first_position(self):
        # two identical tokens create an exact tie; the gradient must use the
        # window at the first (lowest-index) max position
        words_vecs = np.array(
            [[0.0, 0.0], [0.0, 0.0], [2.0, 1.0], [0.5, -1.0]]
        )  # rows: PAD, UNK, t0, t1
        tokens = np.array([[2, 2, 3]])  # t0, t0, t1 -> conv ties at pos 0 and 1
        trainable = TextTrainable(tokens, words_vecs, d_txt=1, filter_widths=(1,),
                                  max_len=3, seed=0)
        trainable.encoder.filters[1] = np.array([[[1.0, 0.0]]])  # reads coord 0
        trainable.encoder.biases[1] = np.zeros(1)
        trainable.encoder.alpha, trainable.encoder.beta = 1.0, 0.0
        ia = np.array([0])
        ib = np.array([0])
        y = np.array([1.0])
        _, grad = trainable.batch_loss_grad(ia, ib, y)
        # flat layout: filter (1*1*2), bias (1), alpha, beta
        d_filter = grad[:2]
        # pooled value 2.0 on both sides; dlogit = sigmoid(4) - 1; each side
        # contributes dlogit * pooled * window(first max) = g * 2 * [2, 1]
        from content2vec.linalg import sigmoid

        g = sigmoid(4.0) - 1.0
        expected = 2 * (g * 2.0 * np.array([2.0, 1.0]))  # both siamese sides
        assert np.allclose(d_filter, expected)

    def test_gradcheck_random_instances(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            vecs = rng.normal(size=(9, 3))
            vecs[0] = 0.0
            tokens = rng.integers(2, 9, size=(12, 5))
            trainable = TextTrainable(tokens, vecs, d_txt=4, filter_widths=(2, 3),
                                      max_len=5, seed=seed)
            x = trainable.params_flat()
            trainable.set_params_flat(x + 0.05 * rng.normal(size=x.shape))
            ia = rng.integers(0, 12, size=6)
            ib = rng.integers(0, 12, size=6)
            y = rng.integers(0, 2, size=6).astype(float)
            model_gradcheck(trainable, ia, ib, y)


class TestSgnsLoss:
    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(0)
        V, d = 7, 4
        centers = rng.integers(0, V, size=10)
        contexts = rng.integers(0, V, size=10)
        negatives = rng.integers(0, V, size=(10, 3))

        def split_params(x):
            return x[: V * d].reshape(V, d), x[V * d :].reshape(V, d)

        def loss_fn(x):
            w_in, w_out = split_params(x)
            loss, _, _ = sgns_batch_loss_grad(w_in, w_out, centers, contexts, negatives)
            return loss

        def grad_fn(x):
            w_in, w_out = split_params(x)
            _, gi, go = sgns_batch_loss_grad(w_in, w_out, centers, contexts, negatives)
            return np.concatenate([gi.ravel(), go.ravel()])

        gradcheck(loss_fn, grad_fn, rng.normal(size=2 * V * d))


def test_build_token_matrix_clips_and_pads():
    docs = [["aa"] * 12, ["bb"]]
    catalog = word_catalog(docs)
    words = train_word2vec(catalog, d_word=4, epochs=0, seed=0, min_count=1)
    tm = build_token_matrix(catalog, words, max_len=10)
    assert tm.shape == (2, 10)
    assert tm[1, 0] != PAD_INDEX and np.all(tm[1, 1:] == PAD_INDEX)
