"""Co-purchase embeddings: skip-gram with negative sampling over positive
pairs (each pair acts as a length-2 sequence, trained in both directions),
optionally regularized by co-embedding product categories.

Products unseen in training have no vector; lookups report absence instead
of fabricating one, which is what makes the hard cold-start contract hold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Catalog, PairSet, product_frequency
from .errors import DataError
from .sgns import init_embeddings, noise_cumulative, train_sgns


@dataclass
class CFEmbeddings:
    product_index: dict[str, int]
    product_vectors: np.ndarray  # (P, d_cf)
    category_vectors: dict[str, np.ndarray] = field(default_factory=dict)
    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        self.product_vectors = np.asarray(self.product_vectors, dtype=np.float64)
        self.product_vectors.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.product_vectors.shape[1]

    def vector(self, product_id: str) -> np.ndarray | None:
        idx = self.product_index.get(product_id)
        return None if idx is None else self.product_vectors[idx]


def cf_pair_logit(embs: CFEmbeddings, id_a: str, id_b: str) -> float | None:
    """alpha * <v_a, v_b> + beta, or None when either product was unseen in
    training (absence is a value here, not an error)."""
    va = embs.vector(id_a)
    vb = embs.vector(id_b)
    if va is None or vb is None:
        return None
    return embs.alpha * float(np.dot(va, vb)) + embs.beta


def _pair_entries(
    train_pairs: PairSet, index: dict[str, int]
) -> tuple[np.ndarray, np.ndarray]:
    """Both directions of every pair, expanded by count, in canonical order."""
    centers, contexts = [], []
    for a, b, count in train_pairs:
        ia, ib = index[a], index[b]
        for _ in range(count):
            centers.append(ia)
            contexts.append(ib)
            centers.append(ib)
            contexts.append(ia)
    return np.array(centers, dtype=np.int64), np.array(contexts, dtype=np.int64)


def _run_cf_sgns(
    n_products: int,
    n_categories: int,
    d_cf: int,
    centers: np.ndarray,
    contexts: np.ndarray,
    cat_target: np.ndarray,
    weights: np.ndarray | None,
    product_noise_cum: np.ndarray,
    category_noise_cum: np.ndarray | None,
    n_negatives: int,
    epochs: int,
    seed: int,
    learning_rate: float,
) -> np.ndarray:
    """Entries whose target is a category draw negatives from the category
    noise table; everything else from the product one. Category rows live
    after the product block in the shared vocabulary."""

    def draw_negatives(erng: np.random.Generator, idx: np.ndarray) -> np.ndarray:
        is_cat = cat_target[idx]
        negs = np.empty((len(idx), n_negatives), dtype=np.int64)
        n_prod_rows = int((~is_cat).sum())
        if n_prod_rows:
            negs[~is_cat] = np.searchsorted(
                product_noise_cum,
                erng.random((n_prod_rows, n_negatives)),
                side="right",
            )
        if n_prod_rows < len(idx):
            negs[is_cat] = n_products + np.searchsorted(
                category_noise_cum,
                erng.random((len(idx) - n_prod_rows, n_negatives)),
                side="right",
            )
        return negs

    w_in, w_out = init_embeddings(n_products + n_categories, d_cf, seed)
    w_in, w_out = train_sgns(
        w_in,
        w_out,
        centers,
        contexts,
        draw_negatives,
        epochs=epochs,
        seed=seed,
        learning_rate=learning_rate,
        weights=weights,
    )
    # average the center and context matrices: the context half carries the
    # direct co-occurrence alignment, which markedly improves pair ranking
    return (w_in + w_out) / 2.0


def train_prod2vec(
    train_pairs: PairSet,
    d_cf: int = 50,
    n_negatives: int = 5,
    epochs: int = 30,
    freq_power: float = 0.75,
    seed: int = 0,
    learning_rate: float = 0.05,
) -> CFEmbeddings:
    """Skip-gram over co-purchase pairs: each (a, b, count) contributes count
    updates in both directions against frequency^freq_power noise products."""
    if len(train_pairs) == 0:
        raise DataError("train_prod2vec needs a non-empty pair set")
    products = train_pairs.product_ids()
    index = {pid: i for i, pid in enumerate(products)}
    freq = product_frequency(train_pairs)
    freqs = np.array([freq[pid] for pid in products], dtype=np.float64)
    centers, contexts = _pair_entries(train_pairs, index)
    w_in = _run_cf_sgns(
        n_products=len(products),
        n_categories=0,
        d_cf=d_cf,
        centers=centers,
        contexts=contexts,
        cat_target=np.zeros(len(centers), dtype=bool),
        weights=None,
        product_noise_cum=noise_cumulative(freqs, freq_power),
        category_noise_cum=None,
        n_negatives=n_negatives,
        epochs=epochs,
        seed=seed,
        learning_rate=learning_rate,
    )
    return CFEmbeddings(product_index=index, product_vectors=w_in)


def train_meta_prod2vec(
    train_pairs: PairSet,
    catalog: Catalog,
    lambda_side: float = 1.0,
    d_cf: int = 50,
    n_negatives: int = 5,
    epochs: int = 30,
    freq_power: float = 0.75,
    seed: int = 0,
    learning_rate: float = 0.05,
) -> CFEmbeddings:
    """Prod2Vec plus category side information: for every pair (a, b), product
    a additionally predicts category(b) and category(a) predicts product b,
    with weight lambda_side. lambda_side=0 reproduces train_prod2vec exactly
    (same product-vector trajectory under the same seed)."""
    if len(train_pairs) == 0:
        raise DataError("train_meta_prod2vec needs a non-empty pair set")
    if lambda_side < 0:
        raise DataError(f"lambda_side must be >= 0, got {lambda_side}")
    products = train_pairs.product_ids()
    index = {pid: i for i, pid in enumerate(products)}
    categories = sorted({catalog[pid].category for pid in products})
    cat_index = {c: len(products) + i for i, c in enumerate(categories)}
    freq = product_frequency(train_pairs)
    freqs = np.array([freq[pid] for pid in products], dtype=np.float64)
    cat_freqs = np.zeros(len(categories))
    for pid in products:
        cat_freqs[cat_index[catalog[pid].category] - len(products)] += freq[pid]

    centers, contexts = _pair_entries(train_pairs, index)
    cat_target = np.zeros(len(centers), dtype=bool)
    weights = None
    if lambda_side > 0.0:
        s_centers, s_contexts, s_is_cat = [], [], []
        for a, b, count in train_pairs:
            ia, ib = index[a], index[b]
            for _ in range(count):
                for src, dst in ((ia, ib), (ib, ia)):
                    s_centers.append(src)
                    s_contexts.append(cat_index[catalog[products[dst]].category])
                    s_is_cat.append(True)
                    s_centers.append(cat_index[catalog[products[src]].category])
                    s_contexts.append(dst)
                    s_is_cat.append(False)
        weights = np.concatenate(
            [np.ones(len(centers)), np.full(len(s_centers), lambda_side)]
        )
        centers = np.concatenate([centers, np.array(s_centers, dtype=np.int64)])
        contexts = np.concatenate([contexts, np.array(s_contexts, dtype=np.int64)])
        cat_target = np.concatenate([cat_target, np.array(s_is_cat, dtype=bool)])

    w_in = _run_cf_sgns(
        n_products=len(products),
        n_categories=len(categories),
        d_cf=d_cf,
        centers=centers,
        contexts=contexts,
        cat_target=cat_target,
        weights=weights,
        product_noise_cum=noise_cumulative(freqs, freq_power),
        category_noise_cum=noise_cumulative(cat_freqs, freq_power),
        n_negatives=n_negatives,
        epochs=epochs,
        seed=seed,
        learning_rate=learning_rate,
    )
    return CFEmbeddings(
        product_index=index,
        product_vectors=w_in[: len(products)],
        category_vectors={c: w_in[cat_index[c]] for c in categories},
    )
