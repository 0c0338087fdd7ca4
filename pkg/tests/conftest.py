"""Shared helpers: the gradient-check comparator and small data builders."""

import numpy as np
import pytest

from content2vec.data import Catalog, PairSet, ProductRecord
from content2vec.linalg import finite_diff_grad


def gradcheck(loss_fn, grad_fn, x0, eps=1e-5, tol=1e-4, floor=1e-7):
    """Compare an analytic gradient against central differences.

    Coordinates where both gradients are below `floor` sit under the
    finite-difference noise floor and are skipped. Returns the max relative
    error over the checked coordinates.
    """
    analytic = np.asarray(grad_fn(x0.copy()), dtype=np.float64)
    numeric = finite_diff_grad(loss_fn, x0.copy(), eps=eps)
    assert analytic.shape == numeric.shape
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    mask = scale >= floor
    if not mask.any():
        return 0.0
    rel = np.abs(analytic - numeric)[mask] / scale[mask]
    worst = float(rel.max())
    assert worst < tol, f"gradient mismatch: max rel err {worst:.3e}"
    return worst


def model_gradcheck(model, ia, ib, y, tol=1e-4):
    """Gradient-check any PairModel-style trainable at its current params."""
    x0 = model.params_flat()

    def loss_fn(x):
        model.set_params_flat(x)
        loss, _ = model.batch_loss_grad(ia, ib, y)
        return loss

    def grad_fn(x):
        model.set_params_flat(x)
        _, grad = model.batch_loss_grad(ia, ib, y)
        return grad

    worst = gradcheck(loss_fn, grad_fn, x0, tol=tol)
    model.set_params_flat(x0)
    return worst


def tiny_catalog(n=8, dim=4, n_categories=2, seed=0):
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        records.append(
            ProductRecord(
                id=f"q{i:03d}",
                category=f"cat{i % n_categories}",
                tokens=tuple(f"tok{rng.integers(6)}" for _ in range(5)),
                image_features=rng.normal(size=dim),
            )
        )
    return Catalog(records)


def dense_pairs(catalog, seed=0, per_product=3):
    rng = np.random.default_rng(seed)
    ids = catalog.ids
    raw = []
    for _ in range(per_product * len(ids)):
        i, j = rng.integers(len(ids)), rng.integers(len(ids))
        if i != j:
            raw.append((ids[i], ids[j], 1))
    return PairSet(raw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
