"""Image modality encoder: a single trainable ReLU head over fixed,
precomputed image feature vectors.

The convolutional stack that produced the features is out of scope: only the
last fully-connected layer is specialized with the pairwise loss, and the
same head encodes both sides of a pair (siamese weight sharing).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Catalog, DatasetSplit
from .errors import DimensionMismatch
from .linalg import inner_product, relu_layer_forward, sigmoid
from .training import (
    INIT_TAG,
    ModelDims,
    TrainConfig,
    TrainingLog,
    batch_logistic_loss,
    child_rng,
    train_pairwise,
)


@dataclass
class ImageHead:
    W: np.ndarray  # (d_img_out, d_img_in)
    b: np.ndarray  # (d_img_out,)
    alpha: float
    beta: float

    @classmethod
    def init(cls, d_img_in: int, d_img_out: int, rng: np.random.Generator) -> "ImageHead":
        W = rng.normal(0.0, 1.0 / np.sqrt(d_img_in), size=(d_img_out, d_img_in))
        return cls(W=W, b=np.zeros(d_img_out), alpha=1.0, beta=0.0)

    @property
    def d_in(self) -> int:
        return self.W.shape[1]

    @property
    def d_out(self) -> int:
        return self.W.shape[0]


def embed_image(head: ImageHead, features: np.ndarray) -> np.ndarray:
    return relu_layer_forward(head.W, head.b, features)


def image_pair_logit(head: ImageHead, feat_a: np.ndarray, feat_b: np.ndarray) -> float:
    ea = embed_image(head, feat_a)
    eb = embed_image(head, feat_b)
    return head.alpha * inner_product(ea, eb) + head.beta


def embed_image_batch(head: ImageHead, features: np.ndarray) -> np.ndarray:
    """relu(X W^T + b) for a stack of feature rows."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[1] != head.d_in:
        raise DimensionMismatch(
            f"features have dim {features.shape[1]}, head expects {head.d_in}"
        )
    return np.maximum(features @ head.W.T + head.b, 0.0)


class ImageTrainable:
    """Batched loss/gradient for the head on a fixed feature matrix.

    Parameter layout of the flat vector: W (row-major), b, alpha, beta.
    """

    def __init__(self, features: np.ndarray, d_out: int, seed: int):
        self.X = np.asarray(features, dtype=np.float64)
        d_in = self.X.shape[1]
        rng = child_rng(seed, INIT_TAG)
        self.head = ImageHead.init(d_in, d_out, rng)
        self._shapes = ((d_out, d_in), (d_out,), (), ())

    def params_flat(self) -> np.ndarray:
        h = self.head
        return np.concatenate(
            [h.W.ravel(), h.b, np.array([h.alpha]), np.array([h.beta])]
        )

    def set_params_flat(self, flat: np.ndarray) -> None:
        h = self.head
        n_w = h.W.size
        h.W = flat[:n_w].reshape(h.W.shape).copy()
        h.b = flat[n_w : n_w + h.b.size].copy()
        h.alpha = float(flat[-2])
        h.beta = float(flat[-1])

    def _forward(self, ia: np.ndarray, ib: np.ndarray):
        h = self.head
        Xa, Xb = self.X[ia], self.X[ib]
        Za = Xa @ h.W.T + h.b
        Zb = Xb @ h.W.T + h.b
        Ea = np.maximum(Za, 0.0)
        Eb = np.maximum(Zb, 0.0)
        s = np.einsum("ij,ij->i", Ea, Eb)
        logits = h.alpha * s + h.beta
        return Xa, Xb, Za, Zb, Ea, Eb, s, logits

    def score_batch(self, ia: np.ndarray, ib: np.ndarray) -> np.ndarray:
        return self._forward(ia, ib)[-1]

    def batch_loss_grad(self, ia, ib, y):
        h = self.head
        Xa, Xb, Za, Zb, Ea, Eb, s, logits = self._forward(ia, ib)
        n = len(ia)
        loss = float(batch_logistic_loss(logits, y.astype(bool)).mean())
        dlogit = (sigmoid(logits) - y) / n
        d_alpha = float(dlogit @ s)
        d_beta = float(dlogit.sum())
        dEa = (h.alpha * dlogit)[:, None] * Eb
        dEb = (h.alpha * dlogit)[:, None] * Ea
        dZa = np.where(Za > 0.0, dEa, 0.0)
        dZb = np.where(Zb > 0.0, dEb, 0.0)
        dW = dZa.T @ Xa + dZb.T @ Xb
        db = dZa.sum(axis=0) + dZb.sum(axis=0)
        grad = np.concatenate([dW.ravel(), db, [d_alpha], [d_beta]])
        return loss, grad


def train_image_head(
    catalog: Catalog,
    split: DatasetSplit,
    config: TrainConfig,
    dims: ModelDims,
    seed: int | None = None,
) -> tuple[ImageHead, TrainingLog]:
    """Specialize the head with the pairwise loss; input features stay fixed.

    Early-stops on validation ROC-AUC and returns the best epoch's head.
    """
    seed = config.seed if seed is None else seed
    trainable = ImageTrainable(catalog.feature_matrix(), dims.d_img_out, seed)
    log = train_pairwise(trainable, split, config, catalog.id_index, seed)
    return trainable.head, log
