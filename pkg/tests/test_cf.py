import numpy as np
import pytest

from content2vec.cf import (
    CFEmbeddings,
    cf_pair_logit,
    train_meta_prod2vec,
    train_prod2vec,
)
from content2vec.data import (
    Catalog,
    PairSet,
    ProductRecord,
    generate_synthetic,
    make_hard_cold_start_split,
    SynthConfig,
)
from content2vec.errors import DataError
from content2vec.sgns import sgns_batch_loss_grad
from conftest import gradcheck


def catalog_with_categories(categories):
    records = [
        ProductRecord(id=pid, category=cat, tokens=("t",), image_features=np.zeros(2))
        for pid, cat in categories.items()
    ]
    return Catalog(records)


class TestTrainProd2Vec:
    def test_cooccurring_products_more_similar(self):
        pairs = PairSet([("A", "B", 12), ("C", "D", 12)])
        embs = train_prod2vec(pairs, d_cf=8, n_negatives=3, epochs=40, seed=1,
                              learning_rate=0.05)
        assert cf_pair_logit(embs, "A", "B") > cf_pair_logit(embs, "A", "C")

    def test_zero_epochs_returns_initialization(self):
        pairs = PairSet([("A", "B", 1), ("B", "C", 1)])
        embs = train_prod2vec(pairs, d_cf=6, epochs=0, seed=4)
        from content2vec.sgns import init_embeddings

        w_in, w_out = init_embeddings(3, 6, seed=4)
        assert np.array_equal(embs.product_vectors, (w_in + w_out) / 2.0)

    def test_reference_dims(self):
        pairs = PairSet([("A", "B", 1)])
        embs = train_prod2vec(pairs, d_cf=50, epochs=1, seed=0)
        assert embs.product_vectors.shape == (2, 50)

    def test_deterministic(self):
        pairs = PairSet([("A", "B", 2), ("B", "C", 1), ("C", "D", 3)])
        a = train_prod2vec(pairs, d_cf=6, epochs=5, seed=7)
        b = train_prod2vec(pairs, d_cf=6, epochs=5, seed=7)
        assert np.array_equal(a.product_vectors, b.product_vectors)

    def test_empty_input_error(self):
        with pytest.raises(DataError):
            train_prod2vec(PairSet([]))


class TestTrainMetaProd2Vec:
    def test_lambda_zero_matches_prod2vec_bitwise(self):
        pairs = PairSet([("A", "B", 2), ("B", "C", 1), ("A", "D", 1)])
        catalog = catalog_with_categories({"A": "x", "B": "y", "C": "x", "D": "z"})
        plain = train_prod2vec(pairs, d_cf=6, epochs=6, seed=5)
        meta = train_meta_prod2vec(pairs, catalog, lambda_side=0.0, d_cf=6,
                                   epochs=6, seed=5)
        assert np.array_equal(plain.product_vectors, meta.product_vectors)

    def test_shared_rare_category_pulls_products_together(self):
        # A and B share category "rare" but never co-occur; C and D are the
        # same-frequency control with distinct categories
        pairs = PairSet([("A", "E", 4), ("B", "F", 4), ("C", "E", 4), ("D", "F", 4)])
        catalog = catalog_with_categories(
            {"A": "rare", "B": "rare", "C": "c1", "D": "c2", "E": "e", "F": "f"}
        )
        embs = train_meta_prod2vec(pairs, catalog, lambda_side=2.0, d_cf=8,
                                   n_negatives=3, epochs=60, seed=3,
                                   learning_rate=0.05)
        assert cf_pair_logit(embs, "A", "B") > cf_pair_logit(embs, "C", "D")

    def test_every_category_gets_a_vector(self):
        pairs = PairSet([("A", "B", 1)])
        catalog = catalog_with_categories({"A": "weird-cat!", "B": "x"})
        embs = train_meta_prod2vec(pairs, catalog, lambda_side=1.0, d_cf=4,
                                   epochs=2, seed=0)
        assert set(embs.category_vectors) == {"weird-cat!", "x"}

    def test_negative_lambda_rejected(self):
        pairs = PairSet([("A", "B", 1)])
        catalog = catalog_with_categories({"A": "x", "B": "x"})
        with pytest.raises(DataError):
            train_meta_prod2vec(pairs, catalog, lambda_side=-1.0)


class TestCfPairLogit:
    def test_trained_products_give_finite_logit(self):
        pairs = PairSet([("A", "B", 1)])
        embs = train_prod2vec(pairs, d_cf=4, epochs=2, seed=0)
        logit = cf_pair_logit(embs, "A", "B")
        assert logit is not None and np.isfinite(logit)

    def test_unseen_product_reports_absence(self):
        pairs = PairSet([("A", "B", 1)])
        embs = train_prod2vec(pairs, d_cf=4, epochs=2, seed=0)
        assert cf_pair_logit(embs, "A", "nope") is None
        assert cf_pair_logit(embs, "nope", "other") is None

    def test_hard_split_test_pairs_all_absent(self):
        config = SynthConfig(n_products=200, n_clusters=5, d_img_in=8,
                             vocab_size=40, tokens_per_product=4, seed=2)
        _, pairs = generate_synthetic(config)
        split = make_hard_cold_start_split(pairs, (0.6, 0.2, 0.2), seed=1)
        embs = train_prod2vec(split.train, d_cf=4, epochs=1, seed=0)
        assert all(
            cf_pair_logit(embs, a, b) is None for a, b, _ in split.test
        )

    def test_calibration_scalars_apply(self):
        embs = CFEmbeddings(
            product_index={"A": 0, "B": 1},
            product_vectors=np.array([[1.0, 0.0], [3.0, 0.0]]),
            alpha=2.0,
            beta=-1.0,
        )
        assert cf_pair_logit(embs, "A", "B") == 5.0


class TestWeightedSgnsGradients:
    def test_weighted_loss_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        V, d = 6, 3
        centers = rng.integers(0, V, size=8)
        contexts = rng.integers(0, V, size=8)
        negatives = rng.integers(0, V, size=(8, 2))
        weights = rng.uniform(0.2, 2.0, size=8)

        def split(x):
            return x[: V * d].reshape(V, d), x[V * d :].reshape(V, d)

        def loss_fn(x):
            w_in, w_out = split(x)
            loss, _, _ = sgns_batch_loss_grad(
                w_in, w_out, centers, contexts, negatives, weights
            )
            return loss

        def grad_fn(x):
            w_in, w_out = split(x)
            _, gi, go = sgns_batch_loss_grad(
                w_in, w_out, centers, contexts, negatives, weights
            )
            return np.concatenate([gi.ravel(), go.ravel()])

        gradcheck(loss_fn, grad_fn, rng.normal(size=2 * V * d))
