import json
import time

import numpy as np
import pytest

from content2vec.data import (
    PairSet,
    SynthConfig,
    generate_synthetic,
    load_catalog,
    load_pairs,
    load_synth_config,
    make_hard_cold_start_split,
    make_soft_cold_start_split,
    product_frequency,
    sample_negatives,
    save_catalog,
    save_pairs,
)
from content2vec.errors import DataError, SamplingError
from content2vec.evaluation import roc_auc
from conftest import tiny_catalog


def write_catalog(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def row(pid, dim=3, category="c", text="some words here"):
    return {"id": pid, "category": category, "text": text, "image_features": [0.0] * dim}


class TestLoadCatalog:
    def test_valid_file(self, tmp_path):
        path = tmp_path / "cat.jsonl"
        write_catalog(path, [row("a"), row("b"), row("c")])
        catalog = load_catalog(path)
        assert len(catalog) == 3
        assert catalog["b"].category == "c"
        assert catalog["a"].tokens == ("some", "words", "here")

    def test_duplicate_id_names_id_and_line(self, tmp_path):
        path = tmp_path / "cat.jsonl"
        write_catalog(path, [row("a"), row("b"), row("a")])
        with pytest.raises(DataError, match=r"'a'.*line 1|3.*'a'"):
            load_catalog(path)

    def test_4096_dim_features_accepted(self, tmp_path):
        path = tmp_path / "cat.jsonl"
        write_catalog(path, [row("a", dim=4096), row("b", dim=4096)])
        catalog = load_catalog(path)
        assert catalog.feature_dim == 4096

    def test_parse_error_reports_line(self, tmp_path):
        path = tmp_path / "cat.jsonl"
        with open(path, "w") as fh:
            fh.write(json.dumps(row("a")) + "\n")
            fh.write("{not json\n")
        with pytest.raises(DataError, match=":2:"):
            load_catalog(path)

    def test_inconsistent_feature_dim(self, tmp_path):
        path = tmp_path / "cat.jsonl"
        write_catalog(path, [row("a", dim=3), row("b", dim=4)])
        with pytest.raises(DataError, match="dim"):
            load_catalog(path)

    def test_non_finite_features_rejected(self, tmp_path):
        path = tmp_path / "cat.jsonl"
        bad = row("a")
        bad["image_features"] = [1.0, float("inf"), 0.0]
        write_catalog(path, [bad])
        with pytest.raises(DataError, match="finite"):
            load_catalog(path)

    def test_round_trip(self, tmp_path):
        catalog = tiny_catalog(n=5)
        path = tmp_path / "cat.jsonl"
        save_catalog(path, catalog)
        loaded = load_catalog(path)
        assert loaded.ids == catalog.ids
        assert np.array_equal(loaded.feature_matrix(), catalog.feature_matrix())


class TestLoadPairs:
    def test_duplicate_lines_aggregate(self, tmp_path):
        catalog = tiny_catalog()
        path = tmp_path / "pairs.tsv"
        path.write_text("q000\tq001\t1\nq000\tq001\t1\n")
        pairs = load_pairs(path, catalog)
        assert pairs.pairs == (("q000", "q001", 2),)

    def test_reversed_direction_aggregates_too(self, tmp_path):
        catalog = tiny_catalog()
        path = tmp_path / "pairs.tsv"
        path.write_text("q001\tq000\t1\nq000\tq001\t2\n")
        pairs = load_pairs(path, catalog)
        assert pairs.pairs == (("q000", "q001", 3),)

    def test_self_pair_error(self, tmp_path):
        catalog = tiny_catalog()
        path = tmp_path / "pairs.tsv"
        path.write_text("q000\tq000\t1\n")
        with pytest.raises(DataError, match="self-pair"):
            load_pairs(path, catalog)

    def test_empty_file(self, tmp_path):
        catalog = tiny_catalog()
        path = tmp_path / "pairs.tsv"
        path.write_text("")
        assert len(load_pairs(path, catalog)) == 0

    def test_unknown_id(self, tmp_path):
        catalog = tiny_catalog()
        path = tmp_path / "pairs.tsv"
        path.write_text("q000\tnope\t1\n")
        with pytest.raises(DataError, match="nope"):
            load_pairs(path, catalog)

    def test_round_trip(self, tmp_path):
        pairs = PairSet([("a", "b", 2), ("b", "c", 1)])
        path = tmp_path / "p.tsv"
        save_pairs(path, pairs)
        catalog = None

        class FakeCatalog:
            def __contains__(self, pid):
                return pid in ("a", "b", "c")

        assert load_pairs(path, FakeCatalog()).pairs == pairs.pairs


class TestProductFrequency:
    def test_hand_count(self):
        pairs = PairSet([("A", "B", 2), ("A", "C", 1)])
        assert product_frequency(pairs) == {"A": 3, "B": 2, "C": 1}

    def test_empty(self):
        assert product_frequency(PairSet([])) == {}

    def test_symmetric_directions(self):
        pairs = PairSet([("A", "B", 1), ("B", "A", 1)])
        assert product_frequency(pairs) == {"A": 2, "B": 2}


def random_pairs(n_products=40, n_pairs=200, seed=0):
    rng = np.random.default_rng(seed)
    raw = []
    while len(raw) < n_pairs:
        i, j = rng.integers(n_products, size=2)
        if i != j:
            raw.append((f"p{i:03d}", f"p{j:03d}", int(rng.integers(1, 3))))
    return PairSet(raw)


class TestHardSplit:
    def test_product_disjointness_over_seeds(self):
        pairs = random_pairs()
        for seed in range(50):
            split = make_hard_cold_start_split(pairs, (0.6, 0.2, 0.2), seed=seed)
            train_ids = set(split.train.product_ids())
            held = set(split.validation.product_ids()) | set(split.test.product_ids())
            assert not (train_ids & held)
            assert split.regime == "hard"

    def test_large_train_fraction_keeps_most_pairs(self):
        pairs = random_pairs(n_products=200, n_pairs=2000)
        split = make_hard_cold_start_split(pairs, (0.8, 0.1, 0.1), seed=1)
        assert len(split.train) > len(split.validation) + len(split.test)
        assert len(split.train) > 0.5 * len(pairs)

    def test_deterministic(self):
        pairs = random_pairs()
        a = make_hard_cold_start_split(pairs, seed=3)
        b = make_hard_cold_start_split(pairs, seed=3)
        assert a.train.pairs == b.train.pairs
        assert a.test.pairs == b.test.pairs

    def test_no_pair_in_two_partitions(self):
        pairs = random_pairs()
        split = make_hard_cold_start_split(pairs, (0.6, 0.2, 0.2), seed=2)
        assert not (split.train.pair_keys() & split.validation.pair_keys())
        assert not (split.train.pair_keys() & split.test.pair_keys())

    def test_empty_partition_error(self):
        pairs = PairSet([("a", "b", 1), ("c", "d", 1)])
        with pytest.raises(DataError, match="partition"):
            make_hard_cold_start_split(pairs, (0.34, 0.33, 0.33), seed=0)

    def test_fraction_validation(self):
        pairs = random_pairs()
        with pytest.raises(DataError):
            make_hard_cold_start_split(pairs, (0.5, 0.5, 0.5), seed=0)
        with pytest.raises(DataError):
            make_hard_cold_start_split(pairs, (1.0, 0.0, 0.0), seed=0)


class TestSoftSplit:
    def test_full_links_zero_holdout_is_identity(self):
        pairs = random_pairs()
        split = make_soft_cold_start_split(
            pairs, top_k=len(pairs.product_ids()), link_fraction=1.0,
            val_test_fractions=(0.0, 0.0), seed=0,
        )
        assert split.train.pairs == pairs.pairs
        assert len(split.validation) == 0 and len(split.test) == 0

    def test_products_may_repeat_across_partitions(self):
        pairs = random_pairs(n_pairs=400)
        split = make_soft_cold_start_split(
            pairs, top_k=len(pairs.product_ids()), link_fraction=1.0, seed=0
        )
        train_ids = set(split.train.product_ids())
        test_ids = set(split.test.product_ids())
        assert train_ids & test_ids  # defining property of the soft regime
        assert split.regime == "soft"

    def test_top_k_restricts_products(self):
        pairs = random_pairs()
        split = make_soft_cold_start_split(pairs, top_k=10, link_fraction=1.0, seed=0)
        kept = (
            set(split.train.product_ids())
            | set(split.validation.product_ids())
            | set(split.test.product_ids())
        )
        assert len(kept) <= 10

    def test_link_fraction_samples(self):
        pairs = random_pairs(n_pairs=400)
        split = make_soft_cold_start_split(
            pairs, top_k=len(pairs.product_ids()), link_fraction=0.1,
            val_test_fractions=(0.0, 0.0), seed=0,
        )
        assert abs(len(split.train) - 0.1 * len(pairs)) <= 1

    def test_deterministic(self):
        pairs = random_pairs()
        a = make_soft_cold_start_split(pairs, 30, 0.5, seed=9)
        b = make_soft_cold_start_split(pairs, 30, 0.5, seed=9)
        assert a.train.pairs == b.train.pairs

    def test_top_k_too_large(self):
        pairs = random_pairs()
        with pytest.raises(DataError, match="top_k"):
            make_soft_cold_start_split(pairs, top_k=10_000, link_fraction=1.0, seed=0)


class TestSampleNegatives:
    def test_ratio_and_labels(self, rng):
        pairs = random_pairs()
        batch = sample_negatives(pairs, ratio=2.0, forbidden=pairs.pair_keys(), rng=rng)
        n_pos = pairs.total_count()
        assert batch.n_positive() == n_pos
        assert batch.n_negative() == int(np.ceil(2.0 * n_pos))

    def test_never_emits_forbidden_or_self(self):
        pairs = random_pairs()
        forbidden = pairs.pair_keys()
        for seed in range(10):
            batch = sample_negatives(
                pairs, 2.0, forbidden=forbidden, rng=np.random.default_rng(seed)
            )
            for a, b, label in batch:
                assert a != b
                if not label:
                    key = (a, b) if a < b else (b, a)
                    assert key not in forbidden

    def test_analytic_endpoint_marginal(self):
        # freqs {A:2, B:1, C:1}, power 1 -> endpoint distribution P(A) = 0.5
        # within +-0.01 at 100k draws. Checked at the endpoint-sampler level:
        # the emitted pairs additionally reject self-pairs, which conditions
        # the joint (and visibly shifts marginals on a 3-product catalog).
        from content2vec.data import EndpointSampler

        sampler = EndpointSampler({"A": 2, "B": 1, "C": 1}, freq_power=1.0)
        draws = sampler.draw_indices(np.random.default_rng(7), 100_000)
        p_a = float((draws == sampler.ids.index("A")).mean())
        assert abs(p_a - 0.5) < 0.01

    def test_emitted_marginals_converge_on_larger_catalogs(self):
        # with enough products the self-pair rejection bias is negligible and
        # the emitted endpoint marginal matches freq^power analytically
        rng_freq = np.random.default_rng(0)
        raw = []
        for i in range(60):
            raw.append((f"p{i:02d}", f"p{(i + 1) % 60:02d}", int(rng_freq.integers(1, 6))))
        pairs = PairSet(raw)
        freq = product_frequency(pairs)
        ids = sorted(freq)
        weights = np.array([freq[p] for p in ids], float) ** 0.75
        analytic = weights / weights.sum()
        batch = sample_negatives(pairs, ratio=400.0, freq_power=0.75,
                                 forbidden=frozenset(), rng=np.random.default_rng(5))
        counts = dict.fromkeys(ids, 0)
        total = 0
        for a, b, label in batch:
            if not label:
                counts[a] += 1
                counts[b] += 1
                total += 2
        assert total >= 100_000
        empirical = np.array([counts[p] / total for p in ids])
        assert np.abs(empirical - analytic).sum() < 0.02

    def test_forced_single_outcome(self):
        pairs = PairSet([("A", "B", 1), ("A", "C", 1), ("B", "C", 1)])
        forbidden = frozenset({("A", "B"), ("A", "C")})
        batch = sample_negatives(pairs, 2.0, forbidden=forbidden,
                                 rng=np.random.default_rng(0))
        negatives = [(a, b) for a, b, label in batch if not label]
        assert negatives and all(tuple(sorted(p)) == ("B", "C") for p in negatives)

    def test_rejection_guard(self):
        pairs = PairSet([("A", "B", 1)])
        with pytest.raises(SamplingError):
            sample_negatives(pairs, 2.0, forbidden=frozenset({("A", "B")}),
                             rng=np.random.default_rng(0))


class TestGenerateSynthetic:
    def test_single_modality_oracle_when_gamma_zero(self):
        # with one category per image cluster, the category label is the
        # image cluster; an oracle comparing those labels must be nearly
        # perfect because positives require matching image clusters
        config = SynthConfig(
            n_products=600, n_clusters=20, d_img_in=16, vocab_size=80,
            tokens_per_product=6, gamma=0.0, n_categories=20, seed=5,
        )
        catalog, pairs = generate_synthetic(config)
        test_batch = sample_negatives(
            pairs, 2.0, forbidden=pairs.pair_keys(), rng=np.random.default_rng(3)
        )
        scores = np.array(
            [1.0 if catalog[a].category == catalog[b].category else 0.0
             for a, b, _ in test_batch]
        )
        auc = roc_auc(scores, test_batch.labels)
        assert auc >= 0.95

    def test_deterministic(self):
        config = SynthConfig(n_products=120, n_clusters=4, d_img_in=8,
                             vocab_size=40, tokens_per_product=4, seed=11)
        cat_a, pairs_a = generate_synthetic(config)
        cat_b, pairs_b = generate_synthetic(config)
        assert pairs_a.pairs == pairs_b.pairs
        assert np.array_equal(cat_a.feature_matrix(), cat_b.feature_matrix())
        assert all(x.tokens == y.tokens for x, y in zip(cat_a, cat_b))

    def test_default_config_generates_quickly(self):
        start = time.time()
        catalog, pairs = generate_synthetic(SynthConfig())
        assert time.time() - start < 10.0
        assert len(catalog) == 2000
        assert len(pairs) > 0

    def test_validation_errors(self):
        with pytest.raises(DataError):
            SynthConfig(gamma=1.5).validate()
        with pytest.raises(DataError):
            SynthConfig(vocab_size=5).validate()
        with pytest.raises(DataError):
            SynthConfig(n_categories=99).validate()

    def test_seed_argument_overrides_config(self):
        config = SynthConfig(n_products=100, n_clusters=4, d_img_in=8,
                             vocab_size=40, tokens_per_product=4, seed=1)
        _, pairs_a = generate_synthetic(config, seed=2)
        _, pairs_b = generate_synthetic(config, seed=3)
        assert pairs_a.pairs != pairs_b.pairs


class TestSynthConfigFile:
    def test_exact_keys_round_trip(self, tmp_path):
        path = tmp_path / "synth.toml"
        path.write_text(
            "n_products = 100\nn_clusters = 4\nd_img_in = 8\nvocab_size = 40\n"
            "tokens_per_product = 4\ngamma = 0.25\nn_categories = 2\nseed = 7\n"
        )
        config = load_synth_config(path)
        assert config.n_products == 100 and config.gamma == 0.25

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "synth.toml"
        path.write_text(
            "n_products = 100\nn_clusters = 4\nd_img_in = 8\nvocab_size = 40\n"
            "tokens_per_product = 4\ngamma = 0.0\nn_categories = 2\nseed = 7\n"
            "bogus = 1\n"
        )
        with pytest.raises(DataError, match="bogus"):
            load_synth_config(path)

    def test_missing_key_rejected(self, tmp_path):
        path = tmp_path / "synth.toml"
        path.write_text("n_products = 100\n")
        with pytest.raises(DataError, match="missing"):
            load_synth_config(path)
