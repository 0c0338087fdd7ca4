"""Text modality: skip-gram word embeddings trained on the catalog text, then
a convolutional sentence encoder (n-gram filters, ReLU, max-over-time
pooling) over the first `max_len` tokens, trained with the pairwise loss
while the word vectors stay frozen.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Catalog, DatasetSplit
from .errors import DataError, DimensionMismatch
from .linalg import sigmoid
from .sgns import init_embeddings, noise_cumulative, train_sgns
from .tokens import PAD_TOKEN, UNK_TOKEN, clip_tokens, tokenize  # noqa: F401 (tokenize is API)
from .training import (
    INIT_TAG,
    ModelDims,
    TrainConfig,
    TrainingLog,
    batch_logistic_loss,
    child_rng,
    train_pairwise,
)

PAD_INDEX = 0
UNK_INDEX = 1


@dataclass
class WordEmbeddings:
    """token -> row of `vectors`. Row 0 is PAD (all zero, never touched),
    row 1 is UNK (all zero); real tokens start at row 2."""

    vocabulary: dict[str, int]
    vectors: np.ndarray  # (V, d_word)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.vectors.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def index(self, token: str) -> int:
        return self.vocabulary.get(token, UNK_INDEX)

    def token_indices(self, tokens, max_len: int) -> np.ndarray:
        clipped = clip_tokens(list(tokens), max_len)
        return np.array([self.index(t) for t in clipped], dtype=np.int64)


def _skipgram_pairs(sequences: list[list[int]], window: int) -> tuple[np.ndarray, np.ndarray]:
    centers, contexts = [], []
    for seq in sequences:
        for i, c in enumerate(seq):
            lo = max(0, i - window)
            hi = min(len(seq), i + window + 1)
            for j in range(lo, hi):
                if j != i:
                    centers.append(c)
                    contexts.append(seq[j])
    return np.array(centers, dtype=np.int64), np.array(contexts, dtype=np.int64)


def train_word2vec(
    catalog: Catalog,
    d_word: int = 50,
    window: int = 4,
    n_negatives: int = 5,
    min_count: int = 2,
    epochs: int = 5,
    seed: int = 0,
    learning_rate: float = 0.05,
) -> WordEmbeddings:
    """Skip-gram with negative sampling over each product's full token
    sequence (fixed symmetric window). Noise distribution is unigram^0.75;
    optimization is the shared chunked Adam loop, deterministic per seed.
    """
    counts: dict[str, int] = {}
    for rec in catalog:
        for tok in rec.tokens:
            counts[tok] = counts.get(tok, 0) + 1
    kept = sorted(
        (t for t, c in counts.items() if c >= min_count),
        key=lambda t: (-counts[t], t),
    )
    if not kept:
        raise DataError(
            f"word2vec vocabulary is empty: no token reaches min_count={min_count}"
        )
    vocabulary = {PAD_TOKEN: PAD_INDEX, UNK_TOKEN: UNK_INDEX}
    for t in kept:
        vocabulary[t] = len(vocabulary)
    V = len(vocabulary)

    w_in, w_out = init_embeddings(V, d_word, seed, zero_rows=(PAD_INDEX, UNK_INDEX))
    sequences = [
        [vocabulary[t] for t in rec.tokens if t in vocabulary] for rec in catalog
    ]
    centers, contexts = _skipgram_pairs(sequences, window)
    if len(centers) == 0 and epochs > 0:
        raise DataError("word2vec has no context pairs to train on")

    noise = np.zeros(V)
    for t in kept:
        noise[vocabulary[t]] = counts[t]
    noise_cum = noise_cumulative(noise, 0.75)

    def draw_negatives(erng: np.random.Generator, idx: np.ndarray) -> np.ndarray:
        return np.searchsorted(
            noise_cum, erng.random((len(idx), n_negatives)), side="right"
        )

    if epochs > 0:
        w_in, w_out = train_sgns(
            w_in,
            w_out,
            centers,
            contexts,
            draw_negatives,
            epochs=epochs,
            seed=seed,
            learning_rate=learning_rate,
        )
    # average the center and context matrices: the context half directly
    # rewards co-occurrence, so tokens that appear together embed nearby
    vectors = (w_in + w_out) / 2.0
    # PAD/UNK never occur in the corpus, so they receive no updates; pin them
    # to zero anyway to make the contract explicit
    vectors[PAD_INDEX] = 0.0
    vectors[UNK_INDEX] = 0.0
    return WordEmbeddings(vocabulary=vocabulary, vectors=vectors)


@dataclass
class TextEncoder:
    """Per-width convolution filter banks plus similarity calibration."""

    filters: dict[int, np.ndarray]  # width -> (n_filters, width, d_word)
    biases: dict[int, np.ndarray]  # width -> (n_filters,)
    alpha: float
    beta: float
    max_len: int

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(sorted(self.filters))

    @property
    def d_out(self) -> int:
        return sum(self.filters[w].shape[0] for w in self.widths)

    @classmethod
    def init(
        cls,
        d_word: int,
        d_txt: int,
        filter_widths: tuple[int, ...],
        max_len: int,
        rng: np.random.Generator,
        seed_vectors: np.ndarray | None = None,
    ) -> "TextEncoder":
        """Random filters, or (when seed_vectors is given) filters warm-started
        as soft detectors of randomly chosen word vectors. The warm start makes
        the initial pair logits informative, which keeps the calibration scale
        from collapsing to zero before the filters differentiate.
        """
        if d_txt % len(filter_widths) != 0:
            raise DataError(
                f"d_txt={d_txt} must divide evenly over {len(filter_widths)} filter widths"
            )
        if max(filter_widths) > max_len:
            raise DataError(
                f"filter width {max(filter_widths)} exceeds max_len={max_len}"
            )
        prototypes = None
        if seed_vectors is not None:
            norms = np.linalg.norm(seed_vectors, axis=1)
            prototypes = seed_vectors[norms > 1e-12]
            if prototypes.shape[0] == 0:
                prototypes = None
        n_per = d_txt // len(filter_widths)
        filters, biases = {}, {}
        for w in sorted(filter_widths):
            jitter = rng.normal(0.0, 0.1 / np.sqrt(w * d_word), size=(n_per, w, d_word))
            if prototypes is None:
                filters[w] = jitter * 10.0
            else:
                picks = rng.integers(prototypes.shape[0], size=n_per)
                rows = prototypes[picks]
                rows = rows / (np.linalg.norm(rows, axis=1, keepdims=True) * np.sqrt(w))
                filters[w] = np.repeat(rows[:, None, :], w, axis=1) + jitter
            biases[w] = np.zeros(n_per)
        # max-pooled outputs are non-negative, so inner products start out
        # uniformly positive; 1/d_txt keeps the initial logits unsaturated
        return cls(
            filters=filters, biases=biases, alpha=1.0 / d_txt, beta=0.0, max_len=max_len
        )


def _conv_forward(emb: np.ndarray, filt: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Valid 1-D convolution over the token axis.

    emb: (B, L, d), filt: (F, w, d) -> (B, P, F) with P = L - w + 1.
    """
    B, L, d = emb.shape
    w = filt.shape[1]
    windows = np.stack([emb[:, p : p + w, :] for p in range(L - w + 1)], axis=1)
    return np.einsum("bpwd,fwd->bpf", windows, filt) + bias


def embed_text(encoder: TextEncoder, words: WordEmbeddings, tokens) -> np.ndarray:
    """Encode one token sequence of length exactly max_len."""
    if len(tokens) != encoder.max_len:
        raise DimensionMismatch(
            f"expected {encoder.max_len} tokens, got {len(tokens)}"
        )
    idx = np.array([words.index(t) for t in tokens], dtype=np.int64)
    emb = words.vectors[idx][None, :, :]
    pooled = []
    for w in encoder.widths:
        conv = _conv_forward(emb, encoder.filters[w], encoder.biases[w])[0]
        pooled.append(np.maximum(conv.max(axis=0), 0.0))
    return np.concatenate(pooled)


def text_pair_logit(
    encoder: TextEncoder, words: WordEmbeddings, tokens_a, tokens_b
) -> float:
    ea = embed_text(encoder, words, tokens_a)
    eb = embed_text(encoder, words, tokens_b)
    return encoder.alpha * float(np.dot(ea, eb)) + encoder.beta


def embed_text_batch(
    encoder: TextEncoder, words: WordEmbeddings, token_matrix: np.ndarray
) -> np.ndarray:
    """Encode many token-index rows at once; rows must be max_len wide."""
    token_matrix = np.asarray(token_matrix, dtype=np.int64)
    if token_matrix.shape[1] != encoder.max_len:
        raise DimensionMismatch(
            f"token rows have length {token_matrix.shape[1]}, "
            f"encoder expects {encoder.max_len}"
        )
    emb = words.vectors[token_matrix]
    pooled = []
    for w in encoder.widths:
        conv = _conv_forward(emb, encoder.filters[w], encoder.biases[w])
        pooled.append(np.maximum(conv.max(axis=1), 0.0))
    return np.concatenate(pooled, axis=1)


def build_token_matrix(catalog: Catalog, words: WordEmbeddings, max_len: int) -> np.ndarray:
    """Token index rows (first max_len tokens, PAD-extended) in catalog order."""
    return np.stack([words.token_indices(rec.tokens, max_len) for rec in catalog])


class TextTrainable:
    """Batched encoder loss/grad on fixed token indices and frozen word vectors.

    Max-pooling routes gradient to the first position achieving the maximum;
    units whose pooled pre-activation is <= 0 pass no gradient.
    """

    def __init__(
        self,
        token_matrix: np.ndarray,
        word_vectors: np.ndarray,
        d_txt: int,
        filter_widths: tuple[int, ...],
        max_len: int,
        seed: int,
        prior_logit: float = 0.0,
    ):
        self.T = np.asarray(token_matrix, dtype=np.int64)
        self.word_vectors = word_vectors
        rng = child_rng(seed, INIT_TAG)
        self.encoder = TextEncoder.init(
            word_vectors.shape[1],
            d_txt,
            filter_widths,
            max_len,
            rng,
            seed_vectors=word_vectors,
        )
        # pooled outputs are non-negative, so raw inner products sit well above
        # zero; calibrate beta so the mean initial logit equals the class-prior
        # logit, otherwise alpha races to zero to absorb the offset and the
        # filters stop receiving gradient
        n = self.T.shape[0]
        probe = min(512, n)
        pa = rng.permutation(n)[:probe]
        pb = np.roll(pa, 1)
        Ea, _ = self._encode(pa)
        Eb, _ = self._encode(pb)
        mean_s = float(np.einsum("ij,ij->i", Ea, Eb).mean())
        self.encoder.beta = prior_logit - self.encoder.alpha * mean_s

    def params_flat(self) -> np.ndarray:
        e = self.encoder
        parts = []
        for w in e.widths:
            parts.append(e.filters[w].ravel())
            parts.append(e.biases[w])
        parts.append(np.array([e.alpha, e.beta]))
        return np.concatenate(parts)

    def set_params_flat(self, flat: np.ndarray) -> None:
        e = self.encoder
        pos = 0
        for w in e.widths:
            n = e.filters[w].size
            e.filters[w] = flat[pos : pos + n].reshape(e.filters[w].shape).copy()
            pos += n
            n = e.biases[w].size
            e.biases[w] = flat[pos : pos + n].copy()
            pos += n
        e.alpha = float(flat[pos])
        e.beta = float(flat[pos + 1])

    def _encode(self, idx: np.ndarray):
        """Returns (E, per-width (windows, conv_max, argmax))."""
        e = self.encoder
        emb = self.word_vectors[self.T[idx]]
        pooled, aux = [], {}
        for w in e.widths:
            B, L, d = emb.shape
            windows = np.stack(
                [emb[:, p : p + w, :] for p in range(L - w + 1)], axis=1
            )
            conv = np.einsum("bpwd,fwd->bpf", windows, e.filters[w]) + e.biases[w]
            pstar = conv.argmax(axis=1)  # first max per (b, f)
            cmax = np.take_along_axis(conv, pstar[:, None, :], axis=1)[:, 0, :]
            pooled.append(np.maximum(cmax, 0.0))
            aux[w] = (windows, cmax, pstar)
        return np.concatenate(pooled, axis=1), aux

    def score_batch(self, ia: np.ndarray, ib: np.ndarray) -> np.ndarray:
        e = self.encoder
        Ea, _ = self._encode(ia)
        Eb, _ = self._encode(ib)
        return e.alpha * np.einsum("ij,ij->i", Ea, Eb) + e.beta

    def batch_loss_grad(self, ia, ib, y):
        e = self.encoder
        Ea, aux_a = self._encode(ia)
        Eb, aux_b = self._encode(ib)
        s = np.einsum("ij,ij->i", Ea, Eb)
        logits = e.alpha * s + e.beta
        n = len(ia)
        loss = float(batch_logistic_loss(logits, y.astype(bool)).mean())
        dlogit = (sigmoid(logits) - y) / n
        d_alpha = float(dlogit @ s)
        d_beta = float(dlogit.sum())
        dEa = (e.alpha * dlogit)[:, None] * Eb
        dEb = (e.alpha * dlogit)[:, None] * Ea

        grads = {w: (np.zeros_like(e.filters[w]), np.zeros_like(e.biases[w])) for w in e.widths}
        for dE, aux in ((dEa, aux_a), (dEb, aux_b)):
            offset = 0
            for w in e.widths:
                n_f = e.filters[w].shape[0]
                dP = dE[:, offset : offset + n_f]
                offset += n_f
                windows, cmax, pstar = aux[w]
                dM = np.where(cmax > 0.0, dP, 0.0)  # (B, F)
                # windows is (B, P, w, d); indexing axis 1 with (B, F, 1, 1)
                # broadcasts to the window under each filter's argmax: (B, F, w, d)
                win_at = np.take_along_axis(windows, pstar[:, :, None, None], axis=1)
                dF, db = grads[w]
                dF += np.einsum("bf,bfwd->fwd", dM, win_at)
                db += dM.sum(axis=0)

        parts = []
        for w in e.widths:
            dF, db = grads[w]
            parts.append(dF.ravel())
            parts.append(db)
        parts.append(np.array([d_alpha, d_beta]))
        return loss, np.concatenate(parts)


def train_text_encoder(
    catalog: Catalog,
    words: WordEmbeddings,
    split: DatasetSplit,
    config: TrainConfig,
    dims: ModelDims,
    seed: int | None = None,
) -> tuple[TextEncoder, TrainingLog]:
    """Train only the filters, biases and calibration scalars; the word
    vectors are read-only and bitwise unchanged afterwards."""
    seed = config.seed if seed is None else seed
    token_matrix = build_token_matrix(catalog, words, dims.max_len)
    trainable = TextTrainable(
        token_matrix,
        words.vectors,
        dims.d_txt,
        dims.filter_widths,
        dims.max_len,
        seed,
        prior_logit=-float(np.log(config.neg_ratio)),
    )
    log = train_pairwise(trainable, split, config, catalog.id_index, seed)
    return trainable.encoder, log
