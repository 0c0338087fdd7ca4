"""Joint product embedding strategies: linear combination of per-modality
similarities, the cross interaction unit (a trainable ReLU residual over the
concatenated modality vectors whose inner product captures pair structure the
linear combination cannot), a size-constrained compressed embedding,
bucketized cross-feature logistic regression, and the content+CF ensemble.

Fusion trainers operate on frozen encoders: they receive precomputed
per-product modality embeddings and never touch encoder parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import DatasetSplit, sample_negatives
from .errors import DataError, DimensionMismatch
from .linalg import relu_layer_forward, sigmoid
from .training import (
    INIT_TAG,
    ModelDims,
    TrainConfig,
    TrainingLog,
    batch_logistic_loss,
    child_rng,
    train_pairwise,
)

MODALITY_ORDER = ("image", "text", "cf")

_BOUNDARY_TAG = 0x5000
_ENSEMBLE_TAG = 0x6000


def _ordered(modalities) -> tuple[str, ...]:
    unknown = set(modalities) - set(MODALITY_ORDER)
    if unknown:
        raise DataError(f"unknown modalities {sorted(unknown)}")
    return tuple(m for m in MODALITY_ORDER if m in set(modalities))


@dataclass(frozen=True)
class ModalityVectorSet:
    """Per-modality embeddings of one product; concat order is fixed as
    (image, text, cf) over whichever modalities are present."""

    image: np.ndarray | None = None
    text: np.ndarray | None = None
    cf: np.ndarray | None = None

    def modalities(self) -> tuple[str, ...]:
        return tuple(m for m in MODALITY_ORDER if getattr(self, m) is not None)

    def concat(self) -> np.ndarray:
        parts = [getattr(self, m) for m in self.modalities()]
        if not parts:
            raise DataError("ModalityVectorSet has no modalities")
        return np.concatenate(parts)


@dataclass
class LinearFusion:
    weights: dict[str, float]

    def __post_init__(self):
        self.weights = {m: float(self.weights[m]) for m in _ordered(self.weights)}


@dataclass
class CIUFusion:
    weights: dict[str, float]
    w_res: float
    F_W: np.ndarray  # (d_res, d_concat)
    F_b: np.ndarray  # (d_res,)
    alpha_res: float
    beta_res: float

    def __post_init__(self):
        self.weights = {m: float(self.weights[m]) for m in _ordered(self.weights)}

    def modalities(self) -> tuple[str, ...]:
        return tuple(self.weights)


@dataclass
class CompressedFusion:
    C_W: np.ndarray  # (d_z, d_concat)
    C_b: np.ndarray  # (d_z,)
    alpha_z: float
    beta_z: float
    modalities: tuple[str, ...]

    @property
    def d_z(self) -> int:
        return self.C_W.shape[0]


@dataclass
class CrossfeatFusion:
    """Bucketized similarity scores with all pairwise bucket conjunctions.

    Weight layout: single-bucket indicators for each modality in order,
    then the conjunction grid of the two modalities, row-major, then bias.
    """

    boundaries: dict[str, np.ndarray]
    weights: np.ndarray
    bias: float

    def __post_init__(self):
        if len(self.boundaries) != 2:
            raise DataError(
                f"crossfeat needs exactly two modalities, got {list(self.boundaries)}"
            )
        self.boundaries = {
            m: np.asarray(self.boundaries[m], dtype=np.float64)
            for m in _ordered(self.boundaries)
        }
        for m, bnd in self.boundaries.items():
            if bnd.size and np.any(np.diff(bnd) < 0):
                raise DataError(f"{m} bucket boundaries must be non-decreasing")
        n_b = [len(b) + 1 for b in self.boundaries.values()]
        expected = sum(n_b) + n_b[0] * n_b[1]
        if self.weights.shape != (expected,):
            raise DataError(
                f"crossfeat weights have shape {self.weights.shape}, expected ({expected},)"
            )

    def modalities(self) -> tuple[str, ...]:
        return tuple(self.boundaries)

    def n_buckets(self) -> int:
        return len(next(iter(self.boundaries.values()))) + 1


@dataclass
class EnsembleWeights:
    w_content: float
    w_cf: float
    bias: float


def sim_linear(fusion: LinearFusion, sims: dict[str, float]) -> float:
    if set(sims) != set(fusion.weights):
        raise DataError(
            f"modality mismatch: fusion has {sorted(fusion.weights)}, "
            f"sims has {sorted(sims)}"
        )
    return float(sum(fusion.weights[m] * sims[m] for m in fusion.weights))


def sim_ciu(
    fusion: CIUFusion,
    x1: ModalityVectorSet,
    x2: ModalityVectorSet,
    sims: dict[str, float],
) -> float:
    """Weighted per-modality similarities plus the residual term: the inner
    product of the ReLU-mapped concatenated modality vectors, calibrated and
    weighted by w_res."""
    if set(sims) != set(fusion.weights):
        raise DataError(
            f"modality mismatch: fusion has {sorted(fusion.weights)}, "
            f"sims has {sorted(sims)}"
        )
    if x1.modalities() != fusion.modalities() or x2.modalities() != fusion.modalities():
        raise DataError(
            f"vector sets {x1.modalities()}/{x2.modalities()} do not match "
            f"fusion modalities {fusion.modalities()}"
        )
    c1, c2 = x1.concat(), x2.concat()
    if c1.shape[0] != fusion.F_W.shape[1]:
        raise DimensionMismatch(
            f"concat dim {c1.shape[0]} != residual input dim {fusion.F_W.shape[1]}"
        )
    h1 = relu_layer_forward(fusion.F_W, fusion.F_b, c1)
    h2 = relu_layer_forward(fusion.F_W, fusion.F_b, c2)
    residual = fusion.alpha_res * float(np.dot(h1, h2)) + fusion.beta_res
    linear = sum(fusion.weights[m] * sims[m] for m in fusion.weights)
    return float(linear + fusion.w_res * residual)


def embed_compressed(fusion: CompressedFusion, x: ModalityVectorSet) -> np.ndarray:
    if x.modalities() != fusion.modalities:
        raise DataError(
            f"vector set has {x.modalities()}, fusion expects {fusion.modalities}"
        )
    return relu_layer_forward(fusion.C_W, fusion.C_b, x.concat())


def compressed_pair_logit(
    fusion: CompressedFusion, x1: ModalityVectorSet, x2: ModalityVectorSet
) -> float:
    z1 = embed_compressed(fusion, x1)
    z2 = embed_compressed(fusion, x2)
    return fusion.alpha_z * float(np.dot(z1, z2)) + fusion.beta_z


def crossfeat_score(fusion: CrossfeatFusion, sims: dict[str, float]) -> float:
    if set(sims) != set(fusion.boundaries):
        raise DataError(
            f"modality mismatch: fusion has {sorted(fusion.boundaries)}, "
            f"sims has {sorted(sims)}"
        )
    mods = fusion.modalities()
    n_b = fusion.n_buckets()
    buckets = [
        int(np.searchsorted(fusion.boundaries[m], sims[m], side="right"))
        for m in mods
    ]
    w = fusion.weights
    score = fusion.bias + w[buckets[0]] + w[n_b + buckets[1]]
    score += w[2 * n_b + buckets[0] * n_b + buckets[1]]
    return float(score)


def ensemble_plus(
    content_logit: float,
    cf_logit: float | None,
    weights: EnsembleWeights,
) -> float:
    """Validation-fitted blend of a content fusion logit with the CF logit.
    When CF is absent (cold product) the content logit passes through
    unweighted."""
    if cf_logit is None:
        return float(content_logit)
    return float(
        weights.w_content * content_logit + weights.w_cf * cf_logit + weights.bias
    )


# --- frozen per-product arrays shared by the fusion trainers ---------------


@dataclass
class ModalityArrays:
    """Per-product modality embeddings in catalog order, with the calibration
    scalars each modality's pair logit uses. Everything here is frozen input
    for the fusion stage."""

    embeddings: dict[str, np.ndarray]
    calibration: dict[str, tuple[float, float]]
    id_index: dict[str, int]
    _concat: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        mods = _ordered(self.embeddings)
        self.embeddings = {m: np.asarray(self.embeddings[m], float) for m in mods}
        n = {e.shape[0] for e in self.embeddings.values()}
        if len(n) != 1:
            raise DataError(f"modality matrices disagree on product count: {n}")

    @property
    def modalities(self) -> tuple[str, ...]:
        return tuple(self.embeddings)

    def concat_matrix(self) -> np.ndarray:
        if self._concat is None:
            self._concat = np.concatenate(
                [self.embeddings[m] for m in self.modalities], axis=1
            )
        return self._concat

    def sims(self, ia: np.ndarray, ib: np.ndarray) -> np.ndarray:
        """(B, n_modalities) calibrated per-modality pair logits."""
        cols = []
        for m in self.modalities:
            E = self.embeddings[m]
            alpha, beta = self.calibration[m]
            cols.append(alpha * np.einsum("ij,ij->i", E[ia], E[ib]) + beta)
        return np.stack(cols, axis=1)

    def vector_set(self, idx: int) -> ModalityVectorSet:
        kwargs = {m: self.embeddings[m][idx] for m in self.modalities}
        return ModalityVectorSet(**kwargs)


class LinearTrainable:
    """Logistic regression over the frozen per-modality similarities."""

    def __init__(self, arrays: ModalityArrays):
        self.arrays = arrays
        n_mod = len(arrays.modalities)
        self.w = np.full(n_mod, 1.0 / n_mod)

    def params_flat(self) -> np.ndarray:
        return self.w.copy()

    def set_params_flat(self, flat: np.ndarray) -> None:
        self.w = flat.copy()

    def score_batch(self, ia, ib) -> np.ndarray:
        return self.arrays.sims(ia, ib) @ self.w

    def batch_loss_grad(self, ia, ib, y):
        sims = self.arrays.sims(ia, ib)
        logits = sims @ self.w
        n = len(ia)
        loss = float(batch_logistic_loss(logits, y.astype(bool)).mean())
        dlogit = (sigmoid(logits) - y) / n
        return loss, sims.T @ dlogit

    def fusion(self) -> LinearFusion:
        return LinearFusion(weights=dict(zip(self.arrays.modalities, self.w)))


class CIUTrainable:
    """Linear similarity weights co-trained with the residual ReLU layer.

    Training starts from (almost) the plain linear model: the residual term
    is centered to zero mean at init, and w_res starts small but nonzero.
    Exactly zero would be a saddle: the residual layer only receives gradient
    through w_res, whose sign would flip while it wanders around zero.
    """

    W_RES_INIT = 0.25

    def __init__(self, arrays: ModalityArrays, d_res: int, seed: int):
        self.arrays = arrays
        self.C = arrays.concat_matrix()
        n_mod = len(arrays.modalities)
        rng = child_rng(seed, INIT_TAG)
        d_concat = self.C.shape[1]
        self.w = np.full(n_mod, 1.0 / n_mod)
        self.w_res = self.W_RES_INIT
        self.F_W = rng.normal(0.0, 1.0 / np.sqrt(d_concat), size=(d_res, d_concat))
        self.F_b = np.zeros(d_res)
        # the relu outputs are non-negative, so raw residual inner products
        # have a large positive mean; scale them to O(1) and subtract the
        # probe mean so the residual starts as zero-mean noise on top of the
        # calibrated linear part
        n = self.C.shape[0]
        probe = rng.permutation(n)[: min(512, n)]
        Ha = np.maximum(self.C[probe] @ self.F_W.T + self.F_b, 0.0)
        Hb = np.maximum(self.C[np.roll(probe, 1)] @ self.F_W.T + self.F_b, 0.0)
        r = np.einsum("ij,ij->i", Ha, Hb)
        scale = float(np.abs(r).mean())
        self.alpha_res = 1.0 / scale if scale > 0 else 1.0
        self.beta_res = -self.alpha_res * float(r.mean())

    def params_flat(self) -> np.ndarray:
        return np.concatenate(
            [
                self.w,
                [self.w_res],
                self.F_W.ravel(),
                self.F_b,
                [self.alpha_res, self.beta_res],
            ]
        )

    def set_params_flat(self, flat: np.ndarray) -> None:
        n_mod = len(self.w)
        pos = 0
        self.w = flat[pos : pos + n_mod].copy()
        pos += n_mod
        self.w_res = float(flat[pos])
        pos += 1
        n = self.F_W.size
        self.F_W = flat[pos : pos + n].reshape(self.F_W.shape).copy()
        pos += n
        n = self.F_b.size
        self.F_b = flat[pos : pos + n].copy()
        pos += n
        self.alpha_res = float(flat[pos])
        self.beta_res = float(flat[pos + 1])

    def _forward(self, ia, ib):
        sims = self.arrays.sims(ia, ib)
        Ca, Cb = self.C[ia], self.C[ib]
        Za = Ca @ self.F_W.T + self.F_b
        Zb = Cb @ self.F_W.T + self.F_b
        Ha = np.maximum(Za, 0.0)
        Hb = np.maximum(Zb, 0.0)
        r = np.einsum("ij,ij->i", Ha, Hb)
        res = self.alpha_res * r + self.beta_res
        logits = sims @ self.w + self.w_res * res
        return sims, Ca, Cb, Za, Zb, Ha, Hb, r, res, logits

    def score_batch(self, ia, ib) -> np.ndarray:
        return self._forward(ia, ib)[-1]

    def batch_loss_grad(self, ia, ib, y):
        sims, Ca, Cb, Za, Zb, Ha, Hb, r, res, logits = self._forward(ia, ib)
        n = len(ia)
        loss = float(batch_logistic_loss(logits, y.astype(bool)).mean())
        dlogit = (sigmoid(logits) - y) / n
        dw = sims.T @ dlogit
        dw_res = float(dlogit @ res)
        dres = self.w_res * dlogit
        d_alpha = float(dres @ r)
        d_beta = float(dres.sum())
        dHa = (self.alpha_res * dres)[:, None] * Hb
        dHb = (self.alpha_res * dres)[:, None] * Ha
        dZa = np.where(Za > 0.0, dHa, 0.0)
        dZb = np.where(Zb > 0.0, dHb, 0.0)
        dF_W = dZa.T @ Ca + dZb.T @ Cb
        dF_b = dZa.sum(axis=0) + dZb.sum(axis=0)
        grad = np.concatenate(
            [dw, [dw_res], dF_W.ravel(), dF_b, [d_alpha, d_beta]]
        )
        return loss, grad

    def fusion(self) -> CIUFusion:
        return CIUFusion(
            weights=dict(zip(self.arrays.modalities, self.w)),
            w_res=self.w_res,
            F_W=self.F_W.copy(),
            F_b=self.F_b.copy(),
            alpha_res=self.alpha_res,
            beta_res=self.beta_res,
        )


class CompressedTrainable:
    """Trains the compression layer and its calibration, nothing else."""

    def __init__(self, arrays: ModalityArrays, init: CompressedFusion):
        if init.modalities != arrays.modalities:
            raise DataError(
                f"init fusion modalities {init.modalities} != arrays {arrays.modalities}"
            )
        self.arrays = arrays
        self.C = arrays.concat_matrix()
        self.C_W = init.C_W.copy()
        self.C_b = init.C_b.copy()
        self.alpha_z = float(init.alpha_z)
        self.beta_z = float(init.beta_z)

    def params_flat(self) -> np.ndarray:
        return np.concatenate(
            [self.C_W.ravel(), self.C_b, [self.alpha_z, self.beta_z]]
        )

    def set_params_flat(self, flat: np.ndarray) -> None:
        n = self.C_W.size
        self.C_W = flat[:n].reshape(self.C_W.shape).copy()
        self.C_b = flat[n : n + self.C_b.size].copy()
        self.alpha_z = float(flat[-2])
        self.beta_z = float(flat[-1])

    def _forward(self, ia, ib):
        Ca, Cb = self.C[ia], self.C[ib]
        Za = Ca @ self.C_W.T + self.C_b
        Zb = Cb @ self.C_W.T + self.C_b
        Ea = np.maximum(Za, 0.0)
        Eb = np.maximum(Zb, 0.0)
        s = np.einsum("ij,ij->i", Ea, Eb)
        logits = self.alpha_z * s + self.beta_z
        return Ca, Cb, Za, Zb, Ea, Eb, s, logits

    def score_batch(self, ia, ib) -> np.ndarray:
        return self._forward(ia, ib)[-1]

    def batch_loss_grad(self, ia, ib, y):
        Ca, Cb, Za, Zb, Ea, Eb, s, logits = self._forward(ia, ib)
        n = len(ia)
        loss = float(batch_logistic_loss(logits, y.astype(bool)).mean())
        dlogit = (sigmoid(logits) - y) / n
        d_alpha = float(dlogit @ s)
        d_beta = float(dlogit.sum())
        dEa = (self.alpha_z * dlogit)[:, None] * Eb
        dEb = (self.alpha_z * dlogit)[:, None] * Ea
        dZa = np.where(Za > 0.0, dEa, 0.0)
        dZb = np.where(Zb > 0.0, dEb, 0.0)
        dW = dZa.T @ Ca + dZb.T @ Cb
        db = dZa.sum(axis=0) + dZb.sum(axis=0)
        grad = np.concatenate([dW.ravel(), db, [d_alpha, d_beta]])
        return loss, grad

    def fusion(self) -> CompressedFusion:
        return CompressedFusion(
            C_W=self.C_W.copy(),
            C_b=self.C_b.copy(),
            alpha_z=self.alpha_z,
            beta_z=self.beta_z,
            modalities=self.arrays.modalities,
        )


class CrossfeatTrainable:
    """Logistic regression over bucket indicators and their conjunctions."""

    def __init__(self, arrays: ModalityArrays, boundaries: dict[str, np.ndarray]):
        if len(arrays.modalities) != 2:
            raise DataError(
                f"crossfeat needs exactly two modalities, got {arrays.modalities}"
            )
        self.arrays = arrays
        self.boundaries = {m: boundaries[m] for m in arrays.modalities}
        self.n_b = len(next(iter(self.boundaries.values()))) + 1
        n_features = 2 * self.n_b + self.n_b * self.n_b
        self.w = np.zeros(n_features)
        self.bias = 0.0

    def params_flat(self) -> np.ndarray:
        return np.concatenate([self.w, [self.bias]])

    def set_params_flat(self, flat: np.ndarray) -> None:
        self.w = flat[:-1].copy()
        self.bias = float(flat[-1])

    def _feature_indices(self, ia, ib):
        sims = self.arrays.sims(ia, ib)
        mods = self.arrays.modalities
        b0 = np.searchsorted(self.boundaries[mods[0]], sims[:, 0], side="right")
        b1 = np.searchsorted(self.boundaries[mods[1]], sims[:, 1], side="right")
        f0 = b0
        f1 = self.n_b + b1
        f2 = 2 * self.n_b + b0 * self.n_b + b1
        return f0, f1, f2

    def score_batch(self, ia, ib) -> np.ndarray:
        f0, f1, f2 = self._feature_indices(ia, ib)
        return self.w[f0] + self.w[f1] + self.w[f2] + self.bias

    def batch_loss_grad(self, ia, ib, y):
        f0, f1, f2 = self._feature_indices(ia, ib)
        logits = self.w[f0] + self.w[f1] + self.w[f2] + self.bias
        n = len(ia)
        loss = float(batch_logistic_loss(logits, y.astype(bool)).mean())
        dlogit = (sigmoid(logits) - y) / n
        dw = np.zeros_like(self.w)
        for f in (f0, f1, f2):
            np.add.at(dw, f, dlogit)
        grad = np.concatenate([dw, [float(dlogit.sum())]])
        return loss, grad

    def fusion(self) -> CrossfeatFusion:
        return CrossfeatFusion(
            boundaries={m: b.copy() for m, b in self.boundaries.items()},
            weights=self.w.copy(),
            bias=self.bias,
        )


def train_linear_fusion(
    arrays: ModalityArrays,
    split: DatasetSplit,
    config: TrainConfig,
    seed: int | None = None,
) -> tuple[LinearFusion, TrainingLog]:
    seed = config.seed if seed is None else seed
    trainable = LinearTrainable(arrays)
    log = train_pairwise(trainable, split, config, arrays.id_index, seed)
    return trainable.fusion(), log


def train_ciu(
    arrays: ModalityArrays,
    split: DatasetSplit,
    config: TrainConfig,
    dims: ModelDims,
    seed: int | None = None,
) -> tuple[CIUFusion, TrainingLog]:
    seed = config.seed if seed is None else seed
    trainable = CIUTrainable(arrays, dims.d_res, seed)
    log = train_pairwise(trainable, split, config, arrays.id_index, seed)
    return trainable.fusion(), log


def init_compressed_from_products(
    arrays: ModalityArrays, d_z: int, seed: int
) -> CompressedFusion:
    """Compression layer whose rows are the (unit-normalized) concatenated
    representations of d_z distinct products sampled from the catalog, so the
    initial forward pass scores a product against those source products."""
    C = arrays.concat_matrix()
    if d_z > C.shape[0]:
        raise DataError(
            f"d_z={d_z} exceeds the {C.shape[0]} products available"
        )
    rng = child_rng(seed, INIT_TAG)
    chosen = rng.choice(C.shape[0], size=d_z, replace=False)
    rows = C[chosen].copy()
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0  # all-zero representations stay zero rows
    rows /= norms
    return CompressedFusion(
        C_W=rows,
        C_b=np.zeros(d_z),
        alpha_z=1.0,
        beta_z=0.0,
        modalities=arrays.modalities,
    )


def train_compressed(
    arrays: ModalityArrays,
    init: CompressedFusion,
    split: DatasetSplit,
    config: TrainConfig,
    seed: int | None = None,
) -> tuple[CompressedFusion, TrainingLog]:
    seed = config.seed if seed is None else seed
    trainable = CompressedTrainable(arrays, init)
    log = train_pairwise(trainable, split, config, arrays.id_index, seed)
    return trainable.fusion(), log


def quantile_boundaries(values: np.ndarray, n_buckets: int, name: str) -> np.ndarray:
    if np.ptp(values) == 0.0:
        raise DataError(
            f"cannot bucketize {name}: all {len(values)} logits are identical"
        )
    qs = np.arange(1, n_buckets) / n_buckets
    return np.quantile(values, qs)


def fit_crossfeat(
    arrays: ModalityArrays,
    split: DatasetSplit,
    n_buckets: int,
    config: TrainConfig,
    seed: int | None = None,
) -> tuple[CrossfeatFusion, TrainingLog]:
    """Bucket boundaries come from the quantiles of the training logits (on
    positives plus one fixed negative sample); the indicator weights are then
    fitted with the shared logistic-regression loop."""
    seed = config.seed if seed is None else seed
    if n_buckets < 1:
        raise DataError(f"n_buckets must be >= 1, got {n_buckets}")
    batch = sample_negatives(
        split.train,
        ratio=config.neg_ratio,
        freq_power=config.freq_power,
        forbidden=split.train.pair_keys(),
        rng=child_rng(seed, _BOUNDARY_TAG),
    )
    ia = np.fromiter(
        (arrays.id_index[a] for a in batch.ids_a), dtype=np.int64, count=len(batch)
    )
    ib = np.fromiter(
        (arrays.id_index[b] for b in batch.ids_b), dtype=np.int64, count=len(batch)
    )
    sims = arrays.sims(ia, ib)
    boundaries = {
        m: quantile_boundaries(sims[:, j], n_buckets, m)
        for j, m in enumerate(arrays.modalities)
    }
    trainable = CrossfeatTrainable(arrays, boundaries)
    log = train_pairwise(trainable, split, config, arrays.id_index, seed)
    return trainable.fusion(), log


def fit_ensemble(
    content_logits: np.ndarray,
    cf_logits: np.ndarray,
    labels: np.ndarray,
    learning_rate: float = 0.05,
    epochs: int = 300,
) -> EnsembleWeights:
    """Full-batch logistic regression of the label on (content, cf) logits.
    Fitted on validation data only; test pairs never touch this."""
    from .linalg import AdamState, adam_step

    x = np.stack([np.asarray(content_logits, float), np.asarray(cf_logits, float)], axis=1)
    y = np.asarray(labels, dtype=np.float64)
    if x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise DataError("ensemble fit needs aligned, non-empty logits and labels")
    params = np.array([1.0, 1.0, 0.0])
    state = AdamState.zeros(3, learning_rate=learning_rate)
    n = len(y)
    for _ in range(epochs):
        logits = x @ params[:2] + params[2]
        dlogit = (sigmoid(logits) - y) / n
        grad = np.concatenate([x.T @ dlogit, [float(dlogit.sum())]])
        params, state = adam_step(params, grad, state)
    return EnsembleWeights(
        w_content=float(params[0]), w_cf=float(params[1]), bias=float(params[2])
    )
