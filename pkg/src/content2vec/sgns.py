"""Shared skip-gram negative-sampling machinery: the batched loss/gradient
and a chunked Adam loop over the two embedding matrices.

Used by both the word-embedding trainer and the co-purchase embedding
trainers. Chunks accumulate gradients before each update; Adam's
per-coordinate scaling keeps very frequent tokens from blowing up the way a
raw summed-gradient SGD step would.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .linalg import AdamState, adam_step, sigmoid
from .training import INIT_TAG, child_rng

_EPOCH_TAG = 0x3000


def sgns_batch_loss_grad(
    w_in: np.ndarray,
    w_out: np.ndarray,
    centers: np.ndarray,
    contexts: np.ndarray,
    negatives: np.ndarray,
    weights: np.ndarray | None = None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss (summed over the batch, optionally per-sample weighted) of
    predicting each context from its center against the sampled negatives,
    with gradients for both embedding matrices."""
    vc = w_in[centers]  # (B, d)
    uo = w_out[contexts]  # (B, d)
    un = w_out[negatives]  # (B, K, d)
    x_pos = np.einsum("bd,bd->b", vc, uo)
    x_neg = np.einsum("bd,bkd->bk", vc, un)
    if weights is None:
        weights = np.ones(len(centers))
    loss = float(
        (weights * np.logaddexp(0.0, -x_pos)).sum()
        + (weights[:, None] * np.logaddexp(0.0, x_neg)).sum()
    )
    g_pos = weights * (sigmoid(x_pos) - 1.0)
    g_neg = weights[:, None] * sigmoid(x_neg)
    d_vc = g_pos[:, None] * uo + np.einsum("bk,bkd->bd", g_neg, un)
    d_uo = g_pos[:, None] * vc
    d_un = g_neg[:, :, None] * vc[:, None, :]
    grad_in = np.zeros_like(w_in)
    grad_out = np.zeros_like(w_out)
    np.add.at(grad_in, centers, d_vc)
    np.add.at(grad_out, contexts, d_uo)
    np.add.at(grad_out, negatives.ravel(), d_un.reshape(-1, w_out.shape[1]))
    return loss, grad_in, grad_out


def noise_cumulative(freqs: np.ndarray, power: float) -> np.ndarray:
    """Cumulative probabilities of the frequency^power noise distribution."""
    weights = freqs.astype(np.float64) ** power
    cum = np.cumsum(weights / weights.sum())
    cum[-1] = 1.0  # guard against fp drift at the top
    return cum


def init_embeddings(
    n_vocab: int, dim: int, seed: int, zero_rows: tuple[int, ...] = ()
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian input vectors (std 1/sqrt(dim)), zero output vectors."""
    rng = child_rng(seed, INIT_TAG)
    w_in = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(n_vocab, dim))
    for row in zero_rows:
        w_in[row] = 0.0
    return w_in, np.zeros((n_vocab, dim))


DrawNegatives = Callable[[np.random.Generator, np.ndarray], np.ndarray]


def train_sgns(
    w_in: np.ndarray,
    w_out: np.ndarray,
    centers: np.ndarray,
    contexts: np.ndarray,
    draw_negatives: DrawNegatives,
    epochs: int,
    seed: int,
    learning_rate: float,
    weights: np.ndarray | None = None,
    chunk_size: int = 1024,
) -> tuple[np.ndarray, np.ndarray]:
    """Chunked Adam over shuffled (center, context) entries.

    draw_negatives(rng, chunk_row_indices) returns the (B, K) negative index
    matrix for the chunk; callers use it to route different entry types to
    different noise distributions.
    """
    n_in = w_in.size
    params = np.concatenate([w_in.ravel(), w_out.ravel()])
    state = AdamState.zeros(params.size, learning_rate=learning_rate)
    shape_in, shape_out = w_in.shape, w_out.shape
    for epoch in range(epochs):
        erng = child_rng(seed, _EPOCH_TAG + epoch)
        perm = erng.permutation(len(centers))
        for start in range(0, len(perm), chunk_size):
            idx = perm[start : start + chunk_size]
            negs = draw_negatives(erng, idx)
            w_in = params[:n_in].reshape(shape_in)
            w_out = params[n_in:].reshape(shape_out)
            _, grad_in, grad_out = sgns_batch_loss_grad(
                w_in,
                w_out,
                centers[idx],
                contexts[idx],
                negs,
                None if weights is None else weights[idx],
            )
            grad = np.concatenate([grad_in.ravel(), grad_out.ravel()]) / len(idx)
            params, state = adam_step(params, grad, state)
    return params[:n_in].reshape(shape_in).copy(), params[n_in:].reshape(shape_out).copy()
