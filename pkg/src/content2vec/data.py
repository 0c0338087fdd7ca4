"""Catalog and co-purchase pair ingestion, cold-start splits, negative
sampling, and a synthetic catalog generator with planted multimodal structure.

Catalogs are JSON Lines (one product per line), pairs are 3-column TSV.
Pairs are unordered: (a, b) and (b, a) are canonicalized to lexicographic id
order and their counts aggregated.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import DataError, SamplingError
from .tokens import normalize_text

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

# A rejection sampler that sees this many rejections in a row is stuck.
MAX_CONSECUTIVE_REJECTIONS = 1000


@dataclass(frozen=True)
class ProductRecord:
    """One catalog item; image features arrive precomputed."""

    id: str
    category: str
    tokens: tuple[str, ...]
    image_features: np.ndarray

    def text(self) -> str:
        return " ".join(self.tokens)


class Catalog:
    """Immutable id -> ProductRecord table with a shared feature matrix."""

    def __init__(self, records: Iterable[ProductRecord]):
        self._records: dict[str, ProductRecord] = {}
        dim = None
        for rec in records:
            if not rec.id:
                raise DataError("product id must be non-empty")
            if rec.id in self._records:
                raise DataError(f"duplicate product id {rec.id!r}")
            feats = np.asarray(rec.image_features, dtype=np.float64)
            if feats.ndim != 1:
                raise DataError(
                    f"product {rec.id!r}: image_features must be a flat list"
                )
            if dim is None:
                dim = feats.shape[0]
            elif feats.shape[0] != dim:
                raise DataError(
                    f"product {rec.id!r}: feature dim {feats.shape[0]} != {dim}"
                )
            if not np.all(np.isfinite(feats)):
                raise DataError(f"product {rec.id!r}: non-finite image features")
            feats.setflags(write=False)
            object.__setattr__(rec, "image_features", feats)
            self._records[rec.id] = rec
        if not self._records:
            raise DataError("catalog is empty")
        self.feature_dim: int = int(dim)
        self.ids: list[str] = list(self._records)
        self.id_index: dict[str, int] = {pid: i for i, pid in enumerate(self.ids)}
        self._feature_matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[ProductRecord]:
        return iter(self._records.values())

    def __contains__(self, pid: str) -> bool:
        return pid in self._records

    def __getitem__(self, pid: str) -> ProductRecord:
        try:
            return self._records[pid]
        except KeyError:
            raise DataError(f"unknown product id {pid!r}") from None

    def feature_matrix(self) -> np.ndarray:
        """All image features stacked in catalog order, read-only."""
        if self._feature_matrix is None:
            m = np.stack([self._records[pid].image_features for pid in self.ids])
            m.setflags(write=False)
            self._feature_matrix = m
        return self._feature_matrix

    def categories(self) -> list[str]:
        return sorted({rec.category for rec in self})


def _canonical(id_a: str, id_b: str) -> tuple[str, str]:
    return (id_a, id_b) if id_a < id_b else (id_b, id_a)


class PairSet:
    """Unordered positive pairs with multiplicities, canonicalized and sorted."""

    def __init__(self, pairs: Iterable[tuple[str, str, int]]):
        agg: dict[tuple[str, str], int] = {}
        for id_a, id_b, count in pairs:
            if id_a == id_b:
                raise DataError(f"self-pair {id_a!r} is not allowed")
            if count < 1:
                raise DataError(f"pair ({id_a!r}, {id_b!r}): count must be >= 1")
            key = _canonical(id_a, id_b)
            agg[key] = agg.get(key, 0) + int(count)
        self.pairs: tuple[tuple[str, str, int], ...] = tuple(
            (a, b, c) for (a, b), c in sorted(agg.items())
        )

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[tuple[str, str, int]]:
        return iter(self.pairs)

    def total_count(self) -> int:
        return sum(c for _, _, c in self.pairs)

    def pair_keys(self) -> frozenset[tuple[str, str]]:
        return frozenset((a, b) for a, b, _ in self.pairs)

    def product_ids(self) -> list[str]:
        ids = set()
        for a, b, _ in self.pairs:
            ids.add(a)
            ids.add(b)
        return sorted(ids)

    def expand(self) -> list[tuple[str, str]]:
        """Each pair repeated by its count, in canonical order."""
        out = []
        for a, b, c in self.pairs:
            out.extend([(a, b)] * c)
        return out


@dataclass(frozen=True)
class DatasetSplit:
    train: PairSet
    validation: PairSet
    test: PairSet
    regime: str  # "hard" or "soft"

    def __post_init__(self):
        if self.regime not in ("hard", "soft"):
            raise DataError(f"unknown split regime {self.regime!r}")
        if self.regime == "hard":
            train_ids = set(self.train.product_ids())
            held = set(self.validation.product_ids()) | set(self.test.product_ids())
            overlap = train_ids & held
            if overlap:
                raise DataError(
                    f"hard split: {len(overlap)} products appear in both train "
                    f"and validation/test (e.g. {sorted(overlap)[:3]})"
                )

    def all_pair_keys(self) -> frozenset[tuple[str, str]]:
        return self.train.pair_keys() | self.validation.pair_keys() | self.test.pair_keys()


@dataclass(frozen=True)
class LabeledBatch:
    """Parallel sequences of pair endpoints and binary labels (True=positive)."""

    ids_a: tuple[str, ...]
    ids_b: tuple[str, ...]
    labels: np.ndarray  # bool

    def __len__(self) -> int:
        return len(self.ids_a)

    def __iter__(self) -> Iterator[tuple[str, str, bool]]:
        return zip(self.ids_a, self.ids_b, (bool(x) for x in self.labels))

    def n_positive(self) -> int:
        return int(self.labels.sum())

    def n_negative(self) -> int:
        return len(self.ids_a) - self.n_positive()


def load_catalog(path) -> Catalog:
    """Read a JSON Lines catalog; every record is validated on the way in."""
    records = []
    seen: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            for field in ("id", "category", "text", "image_features"):
                if field not in obj:
                    raise DataError(f"{path}:{lineno}: missing field {field!r}")
            pid = obj["id"]
            if not isinstance(pid, str) or not pid:
                raise DataError(f"{path}:{lineno}: id must be a non-empty string")
            if pid in seen:
                raise DataError(
                    f"{path}:{lineno}: duplicate id {pid!r} (first seen on line {seen[pid]})"
                )
            seen[pid] = lineno
            try:
                feats = np.asarray(obj["image_features"], dtype=np.float64)
            except (TypeError, ValueError):
                raise DataError(
                    f"{path}:{lineno}: image_features must be a list of numbers"
                ) from None
            records.append(
                ProductRecord(
                    id=pid,
                    category=str(obj["category"]),
                    tokens=tuple(normalize_text(obj["text"])),
                    image_features=feats,
                )
            )
    try:
        return Catalog(records)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def save_catalog(path, catalog: Catalog) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in catalog:
            obj = {
                "id": rec.id,
                "category": rec.category,
                "text": rec.text(),
                "image_features": [float(x) for x in rec.image_features],
            }
            fh.write(json.dumps(obj) + "\n")


def load_pairs(path, catalog: Catalog) -> PairSet:
    """Read a TSV of `id_a<TAB>id_b<TAB>count`; duplicate lines aggregate."""
    raw = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(
                    f"{path}:{lineno}: expected 3 tab-separated columns, got {len(parts)}"
                )
            id_a, id_b, count_s = parts
            try:
                count = int(count_s)
            except ValueError:
                raise DataError(
                    f"{path}:{lineno}: count {count_s!r} is not an integer"
                ) from None
            for pid in (id_a, id_b):
                if pid not in catalog:
                    raise DataError(f"{path}:{lineno}: unknown product id {pid!r}")
            if id_a == id_b:
                raise DataError(f"{path}:{lineno}: self-pair {id_a!r}")
            if count < 1:
                raise DataError(f"{path}:{lineno}: count must be >= 1, got {count}")
            raw.append((id_a, id_b, count))
    return PairSet(raw)


def save_pairs(path, pairs: PairSet) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for a, b, c in pairs:
            fh.write(f"{a}\t{b}\t{c}\n")


def product_frequency(pairs: PairSet) -> dict[str, int]:
    """Per-product total multiplicity across every pair it appears in."""
    freq: dict[str, int] = {}
    for a, b, c in pairs:
        freq[a] = freq.get(a, 0) + c
        freq[b] = freq.get(b, 0) + c
    return freq


def _check_fractions(fractions, name: str) -> None:
    if any(f < 0 for f in fractions):
        raise DataError(f"{name} must be non-negative, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"{name} must sum to 1, got {fractions}")


def make_hard_cold_start_split(
    pairs: PairSet,
    product_fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> DatasetSplit:
    """Partition *products* into train/val/test; keep only pairs whose both
    endpoints fall in the same partition, so held-out products are never
    seen during training. Cross-partition pairs are dropped.
    """
    _check_fractions(product_fractions, "product_fractions")
    if any(f <= 0 for f in product_fractions):
        raise DataError(
            f"hard split fractions must all be positive, got {product_fractions}"
        )
    products = pairs.product_ids()
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(products))
    n = len(products)
    n_train = int(round(product_fractions[0] * n))
    n_val = int(round(product_fractions[1] * n))
    assignment: dict[str, int] = {}
    for rank, idx in enumerate(order):
        part = 0 if rank < n_train else (1 if rank < n_train + n_val else 2)
        assignment[products[idx]] = part
    buckets: list[list[tuple[str, str, int]]] = [[], [], []]
    for a, b, c in pairs:
        if assignment[a] == assignment[b]:
            buckets[assignment[a]].append((a, b, c))
    names = ("train", "validation", "test")
    for i, bucket in enumerate(buckets):
        if not bucket:
            raise DataError(f"hard split: {names[i]} partition has no pairs")
    return DatasetSplit(
        train=PairSet(buckets[0]),
        validation=PairSet(buckets[1]),
        test=PairSet(buckets[2]),
        regime="hard",
    )


def make_soft_cold_start_split(
    pairs: PairSet,
    top_k: int,
    link_fraction: float,
    val_test_fractions: tuple[float, float] = (0.1, 0.1),
    seed: int = 0,
) -> DatasetSplit:
    """Keep the top_k most connected products, sample a fraction of the links
    among them, then split the kept *pairs* (products may repeat across
    partitions).
    """
    if not (0.0 < link_fraction <= 1.0):
        raise DataError(f"link_fraction must be in (0, 1], got {link_fraction}")
    f_val, f_test = val_test_fractions
    if f_val < 0 or f_test < 0 or f_val + f_test >= 1.0:
        raise DataError(
            f"val/test fractions must be non-negative with sum < 1, got {val_test_fractions}"
        )
    freq = product_frequency(pairs)
    if top_k > len(freq):
        raise DataError(
            f"top_k={top_k} exceeds the {len(freq)} products present in the pairs"
        )
    ranked = sorted(freq, key=lambda pid: (-freq[pid], pid))
    kept_products = set(ranked[:top_k])
    restricted = [
        (a, b, c) for a, b, c in pairs if a in kept_products and b in kept_products
    ]
    if not restricted:
        raise DataError("soft split: no pairs remain among the top_k products")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(restricted))
    n_keep = max(1, int(round(link_fraction * len(restricted))))
    kept = [restricted[i] for i in order[:n_keep]]

    n_val = int(round(f_val * n_keep))
    n_test = int(round(f_test * n_keep))
    val = kept[:n_val]
    test = kept[n_val : n_val + n_test]
    train = kept[n_val + n_test :]
    if not train:
        raise DataError("soft split: train partition has no pairs")
    if f_val > 0 and not val:
        raise DataError("soft split: validation partition has no pairs")
    if f_test > 0 and not test:
        raise DataError("soft split: test partition has no pairs")
    empty = PairSet([])
    return DatasetSplit(
        train=PairSet(train),
        validation=PairSet(val) if val else empty,
        test=PairSet(test) if test else empty,
        regime="soft",
    )


class EndpointSampler:
    """Draws product ids with probability freq^power / sum(freq^power)."""

    def __init__(self, freq: dict[str, int], freq_power: float):
        if not freq:
            raise DataError("cannot sample endpoints from an empty frequency map")
        self.ids = sorted(freq)
        weights = np.array([freq[pid] for pid in self.ids], dtype=np.float64)
        weights = weights**freq_power
        self.probs = weights / weights.sum()
        self._cum = np.cumsum(self.probs)
        self._cum[-1] = 1.0  # guard against fp drift at the top

    def draw_indices(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.searchsorted(self._cum, rng.random(n), side="right")


def sample_negatives(
    positives: PairSet,
    ratio: float,
    freq_power: float = 0.75,
    forbidden: frozenset[tuple[str, str]] | set | None = None,
    rng: np.random.Generator | None = None,
) -> LabeledBatch:
    """All positives (expanded by count) plus ceil(ratio * n_pos) sampled
    negatives whose endpoints are drawn independently from the
    frequency^freq_power distribution. Self-pairs and pairs in `forbidden`
    are rejected and resampled.
    """
    if ratio <= 0:
        raise DataError(f"negative ratio must be positive, got {ratio}")
    if rng is None:
        raise DataError("sample_negatives requires an explicit rng")
    forbidden = frozenset(forbidden) if forbidden is not None else frozenset()
    pos_entries = positives.expand()
    n_neg = math.ceil(ratio * len(pos_entries))
    sampler = EndpointSampler(product_frequency(positives), freq_power)
    ids = sampler.ids

    neg_a: list[str] = []
    neg_b: list[str] = []
    consecutive_rejections = 0
    while len(neg_a) < n_neg:
        chunk = max(64, 2 * (n_neg - len(neg_a)))
        ia = sampler.draw_indices(rng, chunk)
        ib = sampler.draw_indices(rng, chunk)
        for k in range(chunk):
            if len(neg_a) >= n_neg:
                break
            a, b = ids[ia[k]], ids[ib[k]]
            if a == b or _canonical(a, b) in forbidden:
                consecutive_rejections += 1
                if consecutive_rejections >= MAX_CONSECUTIVE_REJECTIONS:
                    raise SamplingError(
                        f"negative sampler rejected {consecutive_rejections} "
                        "draws in a row; the forbidden set leaves too few pairs"
                    )
                continue
            consecutive_rejections = 0
            neg_a.append(a)
            neg_b.append(b)

    ids_a = tuple(a for a, _ in pos_entries) + tuple(neg_a)
    ids_b = tuple(b for _, b in pos_entries) + tuple(neg_b)
    labels = np.zeros(len(ids_a), dtype=bool)
    labels[: len(pos_entries)] = True
    return LabeledBatch(ids_a=ids_a, ids_b=ids_b, labels=labels)


# --- synthetic data -------------------------------------------------------

SYNTH_CONFIG_KEYS = (
    "n_products",
    "n_clusters",
    "d_img_in",
    "vocab_size",
    "tokens_per_product",
    "gamma",
    "n_categories",
    "seed",
)

# Generator internals that are part of the data contract but not exposed as
# config: average pairs per product, image feature noise, the token mixture,
# and the ratio of text clusters to image clusters. Products carry an image
# cluster and an independent text cluster; ordinary positives require both to
# match. The planted interaction pairs instead satisfy a hidden twin map M
# between the modalities: text-cluster(b) == M(image-cluster(a)) and
# vice versa, with both image clusters and both text clusters distinct.
# Because M is balanced and the text cluster is independent of the image
# cluster, the rule's probability is constant given either modality's view
# alone; only the joint (image-of-one, text-of-other) reveals it.
PAIRS_PER_PRODUCT = 6
IMAGE_NOISE = 1.0
CLUSTER_TOKEN_PROB = 0.75
TEXT_CLUSTER_DIVISOR = 2


@dataclass(frozen=True)
class SynthConfig:
    n_products: int = 2000
    n_clusters: int = 20
    d_img_in: int = 64
    vocab_size: int = 400
    tokens_per_product: int = 12
    gamma: float = 0.0
    n_categories: int = 2
    seed: int = 13

    def n_text_clusters(self) -> int:
        return max(2, self.n_clusters // TEXT_CLUSTER_DIVISOR)

    def validate(self) -> None:
        if self.n_products < 8:
            raise DataError(f"n_products must be >= 8, got {self.n_products}")
        if not (2 <= self.n_clusters <= self.n_products // 2):
            raise DataError(
                f"n_clusters must be in [2, n_products/2], got {self.n_clusters}"
            )
        if self.d_img_in < 1:
            raise DataError(f"d_img_in must be >= 1, got {self.d_img_in}")
        if self.vocab_size < 3 * self.n_text_clusters():
            raise DataError(
                f"vocab_size={self.vocab_size} too small for "
                f"{self.n_text_clusters()} text clusters"
            )
        if self.tokens_per_product < 2:
            raise DataError(
                f"tokens_per_product must be >= 2, got {self.tokens_per_product}"
            )
        if not (0.0 <= self.gamma <= 1.0):
            raise DataError(f"gamma must be in [0, 1], got {self.gamma}")
        if not (1 <= self.n_categories <= self.n_clusters):
            raise DataError(
                f"n_categories must be in [1, n_clusters], got {self.n_categories}"
            )


def load_synth_config(path) -> SynthConfig:
    """Parse a flat TOML file whose keys are exactly SYNTH_CONFIG_KEYS."""
    with open(path, "rb") as fh:
        try:
            raw = _toml.load(fh)
        except _toml.TOMLDecodeError as exc:
            raise DataError(f"{path}: invalid TOML: {exc}") from None
    missing = [k for k in SYNTH_CONFIG_KEYS if k not in raw]
    unknown = [k for k in raw if k not in SYNTH_CONFIG_KEYS]
    if missing or unknown:
        raise DataError(
            f"{path}: synth config must have exactly keys {list(SYNTH_CONFIG_KEYS)}; "
            f"missing {missing}, unknown {unknown}"
        )
    cfg = SynthConfig(
        n_products=int(raw["n_products"]),
        n_clusters=int(raw["n_clusters"]),
        d_img_in=int(raw["d_img_in"]),
        vocab_size=int(raw["vocab_size"]),
        tokens_per_product=int(raw["tokens_per_product"]),
        gamma=float(raw["gamma"]),
        n_categories=int(raw["n_categories"]),
        seed=int(raw["seed"]),
    )
    cfg.validate()
    return cfg


def _synth_vocabulary(config: SynthConfig) -> tuple[list[str], list[list[str]]]:
    """Returns (shared tokens, per-text-cluster token blocks)."""
    k_txt = config.n_text_clusters()
    n_shared = max(4, config.vocab_size // 8)
    n_cluster_words = config.vocab_size - n_shared
    block = n_cluster_words // k_txt
    words = [f"w{i:04d}" for i in range(n_cluster_words)]
    blocks = [words[c * block : (c + 1) * block] for c in range(k_txt)]
    shared = words[k_txt * block :] + [f"sh{i:03d}" for i in range(n_shared)]
    return shared, blocks


def _balanced_map(k_from: int, k_to: int, rng: np.random.Generator) -> np.ndarray:
    """A random map [k_from] -> [k_to] hitting every target equally often, so
    the interaction rule below has constant probability under either
    modality's marginal view."""
    reps = -(-k_from // k_to)  # ceil
    targets = np.tile(np.arange(k_to), reps)[:k_from]
    return rng.permutation(targets)


def generate_synthetic(
    config: SynthConfig, seed: int | None = None
) -> tuple[Catalog, PairSet]:
    """Build a catalog with planted structure in both modalities.

    Every product gets an image cluster (shared Gaussian prototype plus
    noise), an independent text cluster (token block), and a category
    derived from the image cluster. Ordinary positive pairs connect
    products matching on *both* clusters. With gamma > 0, that fraction of
    the positives instead follows the hidden twin map: the text cluster of
    each endpoint equals the image cluster of the other endpoint under M,
    while both image clusters and both text clusters differ. Image features
    alone or tokens alone carry no information about those pairs.
    """
    config.validate()
    rng = np.random.default_rng(config.seed if seed is None else seed)
    n = config.n_products
    k_img = config.n_clusters
    k_txt = config.n_text_clusters()

    img_cluster = np.arange(n) % k_img
    txt_cluster = rng.integers(0, k_txt, size=n)
    categories = [f"cat{c % config.n_categories:02d}" for c in img_cluster]
    twin_map = _balanced_map(k_img, k_txt, rng)

    prototypes = rng.normal(size=(k_img, config.d_img_in))
    features = prototypes[img_cluster] + IMAGE_NOISE * rng.normal(
        size=(n, config.d_img_in)
    )

    shared, blocks = _synth_vocabulary(config)
    records = []
    for i in range(n):
        toks = []
        block = blocks[txt_cluster[i]]
        for _ in range(config.tokens_per_product):
            if rng.random() < CLUSTER_TOKEN_PROB:
                toks.append(block[int(rng.integers(len(block)))])
            else:
                toks.append(shared[int(rng.integers(len(shared)))])
        records.append(
            ProductRecord(
                id=f"p{i:05d}",
                category=categories[i],
                tokens=tuple(toks),
                image_features=features[i],
            )
        )
    catalog = Catalog(records)

    # group products by the (image, text) cluster combination; interaction
    # partners for product i live in the bucket whose text cluster is
    # M(image cluster of i) and whose own image cluster maps to i's text
    combo = img_cluster * k_txt + txt_cluster
    members: dict[int, np.ndarray] = {
        key: np.flatnonzero(combo == key) for key in np.unique(combo)
    }
    twin_bucket: dict[tuple[int, int], np.ndarray] = {}
    twin_key = np.stack([txt_cluster, twin_map[img_cluster]], axis=1)
    for key in {tuple(row) for row in twin_key}:
        mask = (twin_key[:, 0] == key[0]) & (twin_key[:, 1] == key[1])
        twin_bucket[key] = np.flatnonzero(mask)

    n_draws = PAIRS_PER_PRODUCT * n
    n_inter = int(round(config.gamma * n_draws))
    raw_pairs: list[tuple[str, str, int]] = []

    def draw(accept) -> None:
        for _ in range(MAX_CONSECUTIVE_REJECTIONS * 10):
            pair = accept()
            if pair is not None:
                raw_pairs.append(pair)
                return
        raise DataError(
            "synthetic pair sampler stalled; the configuration leaves too few "
            "eligible pairs"
        )

    def base_pair():
        i = int(rng.integers(n))
        group = members[int(combo[i])]
        if len(group) < 2:
            return None
        j = int(group[rng.integers(len(group))])
        if j == i:
            return None
        return (catalog.ids[i], catalog.ids[j], 1)

    def interaction_pair():
        # partner j needs txt_cluster[j] == M(img_cluster[i]) and
        # M(img_cluster[j]) == txt_cluster[i]
        i = int(rng.integers(n))
        candidates = twin_bucket.get(
            (int(twin_map[img_cluster[i]]), int(txt_cluster[i]))
        )
        if candidates is None or len(candidates) == 0:
            return None
        j = int(candidates[rng.integers(len(candidates))])
        if j == i or img_cluster[i] == img_cluster[j] or txt_cluster[i] == txt_cluster[j]:
            return None
        return (catalog.ids[i], catalog.ids[j], 1)

    for _ in range(n_draws - n_inter):
        draw(base_pair)
    for _ in range(n_inter):
        draw(interaction_pair)
    return catalog, PairSet(raw_pairs)
