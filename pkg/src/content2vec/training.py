"""Pairwise logistic loss, negative-sampling epoch loss, early stopping, and
the shared mini-batch Adam training loop used by every pair model.

All trainers share one engine: a model exposes a flat parameter vector, a
batched loss/gradient over (index_a, index_b, label) triples, and a batched
scorer. Negatives are resampled every epoch from a stream keyed by
(seed, epoch) over the canonically ordered positives, so the result does not
depend on the order the training pairs arrived in.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .data import (
    DatasetSplit,
    LabeledBatch,
    PairSet,
    sample_negatives,
)
from .errors import DataError, NumericError
from .linalg import AdamState, adam_step

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

# Fixed tags so each consumer of randomness inside a trainer gets its own
# deterministic child stream of the one user-supplied seed.
INIT_TAG = 0x101
_VAL_TAG = 0x7A1
_EPOCH_TAG = 0x2000  # plus epoch number


def child_rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, tags)]))


@dataclass
class TrainConfig:
    """Optimization knobs shared by every pairwise trainer."""

    learning_rate: float = 0.05
    batch_size: int = 256
    max_epochs: int = 40
    patience: int = 5
    neg_ratio: float = 2.0
    freq_power: float = 0.75
    seed: int = 0

    def validate(self) -> None:
        # learning_rate 0 is allowed: it freezes parameters, which tests rely on.
        if self.learning_rate < 0:
            raise DataError(f"learning_rate must be >= 0, got {self.learning_rate}")
        for name in ("batch_size", "max_epochs", "patience"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.neg_ratio <= 0:
            raise DataError(f"neg_ratio must be positive, got {self.neg_ratio}")
        if self.freq_power < 0:
            raise DataError(f"freq_power must be >= 0, got {self.freq_power}")


@dataclass
class ModelDims:
    """Architecture sizes for the modality encoders and fusion layers.

    Defaults follow the reference configuration (4096 image units, 256 text
    filters, 50-dim co-purchase vectors, 128-dim residual, 200-dim
    compressed vector); tests shrink everything for speed.
    """

    d_img_out: int = 4096
    d_word: int = 50
    d_txt: int = 256
    filter_widths: tuple[int, ...] = (2, 3)
    max_len: int = 10
    w2v_window: int = 4
    w2v_negatives: int = 5
    w2v_min_count: int = 2
    w2v_epochs: int = 5
    w2v_learning_rate: float = 0.05
    d_cf: int = 50
    cf_negatives: int = 5
    cf_epochs: int = 8
    cf_learning_rate: float = 0.05
    lambda_side: float = 1.0
    d_res: int = 128
    d_z: int = 200
    n_buckets: int = 8


TRAIN_CONFIG_KEYS = tuple(TrainConfig.__dataclass_fields__)
MODEL_DIMS_KEYS = tuple(ModelDims.__dataclass_fields__)


def load_train_config(path) -> tuple[TrainConfig, ModelDims]:
    """Parse a flat TOML file; TrainConfig and ModelDims keys may both appear."""
    with open(path, "rb") as fh:
        try:
            raw = _toml.load(fh)
        except _toml.TOMLDecodeError as exc:
            raise DataError(f"{path}: invalid TOML: {exc}") from None
    unknown = [k for k in raw if k not in TRAIN_CONFIG_KEYS + MODEL_DIMS_KEYS]
    if unknown:
        raise DataError(f"{path}: unknown config keys {unknown}")
    config = TrainConfig(**{k: raw[k] for k in TRAIN_CONFIG_KEYS if k in raw})
    dim_kwargs = {k: raw[k] for k in MODEL_DIMS_KEYS if k in raw}
    if "filter_widths" in dim_kwargs:
        dim_kwargs["filter_widths"] = tuple(int(w) for w in dim_kwargs["filter_widths"])
    dims = ModelDims(**dim_kwargs)
    config.validate()
    return config, dims


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_metric: float


@dataclass
class TrainingLog:
    records: list[EpochRecord] = field(default_factory=list)

    def best_epoch(self) -> int:
        """1-based epoch with the highest validation metric (earliest wins ties)."""
        if not self.records:
            raise DataError("training log is empty")
        best = max(range(len(self.records)), key=lambda i: (self.records[i].val_metric, -i))
        return self.records[best].epoch

    def best_metric(self) -> float:
        return max(r.val_metric for r in self.records)

    def to_tsv(self) -> str:
        lines = [
            f"{r.epoch}\t{r.train_loss!r}\t{r.val_metric!r}" for r in self.records
        ]
        return "\n".join(lines) + ("\n" if lines else "")


def early_stop(log: TrainingLog, patience: int) -> tuple[bool, int]:
    """(should_stop_now, best_epoch): stop once `patience` consecutive epochs
    have passed without a new best validation metric."""
    if not log.records:
        raise DataError("early_stop needs a non-empty log")
    best = log.best_epoch()
    last = log.records[-1].epoch
    return (last - best) >= patience, best


def logistic_pair_loss(logit: float, label: bool, count: int = 1) -> float:
    """count * -log(sigmoid(logit)) for positives, count * -log(sigmoid(-logit))
    for negatives; evaluated in log-sum-exp form so large logits cannot
    overflow."""
    if count < 1:
        raise DataError(f"count must be >= 1, got {count}")
    z = float(logit)
    if label:
        return count * float(np.logaddexp(0.0, -z))
    return count * float(np.logaddexp(0.0, z))


def batch_logistic_loss(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Elementwise stable logistic loss; labels are boolean."""
    signed = np.where(labels, -logits, logits)
    return np.logaddexp(0.0, signed)


class PairModel(Protocol):
    """What the shared training loop needs from a trainable pair model."""

    def params_flat(self) -> np.ndarray: ...

    def set_params_flat(self, flat: np.ndarray) -> None: ...

    def score_batch(self, ia: np.ndarray, ib: np.ndarray) -> np.ndarray: ...

    def batch_loss_grad(
        self, ia: np.ndarray, ib: np.ndarray, y: np.ndarray
    ) -> tuple[float, np.ndarray]: ...


def batch_to_indices(
    batch: LabeledBatch, id_index: dict[str, int]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ia = np.fromiter((id_index[a] for a in batch.ids_a), dtype=np.int64, count=len(batch))
    ib = np.fromiter((id_index[b] for b in batch.ids_b), dtype=np.int64, count=len(batch))
    return ia, ib, batch.labels.astype(np.float64)


def ns_epoch_loss(
    score_pairs: Callable[[Sequence[tuple[str, str]]], np.ndarray],
    positives: PairSet,
    neg_ratio: float = 2.0,
    freq_power: float = 0.75,
    forbidden: frozenset | None = None,
    rng: np.random.Generator | None = None,
    negatives: Sequence[tuple[str, str]] | None = None,
) -> float:
    """Mean logistic loss over all positives (weighted by their counts) plus
    negatives. Negatives are freshly sampled unless an explicit list is
    given, which lets tests substitute a full enumeration of the unobserved
    pairs.
    """
    if len(positives) == 0:
        raise DataError("ns_epoch_loss needs a non-empty positive set")
    if negatives is None:
        batch = sample_negatives(
            positives,
            ratio=neg_ratio,
            freq_power=freq_power,
            forbidden=forbidden if forbidden is not None else positives.pair_keys(),
            rng=rng,
        )
        entries = list(zip(batch.ids_a, batch.ids_b))
        labels = batch.labels
    else:
        pos_entries = positives.expand()
        entries = pos_entries + list(negatives)
        labels = np.zeros(len(entries), dtype=bool)
        labels[: len(pos_entries)] = True
    logits = np.asarray(score_pairs(entries), dtype=np.float64)
    if logits.shape != (len(entries),):
        raise DataError(
            f"scorer returned shape {logits.shape}, expected ({len(entries)},)"
        )
    losses = batch_logistic_loss(logits, labels)
    return float(losses.mean())


def _epoch_entries(
    train_pairs: PairSet,
    config: TrainConfig,
    seed: int,
    epoch: int,
    forbidden: frozenset,
    id_index: dict[str, int],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Positives plus this epoch's fresh negatives, shuffled, as index arrays."""
    rng = child_rng(seed, _EPOCH_TAG + epoch)
    batch = sample_negatives(
        train_pairs,
        ratio=config.neg_ratio,
        freq_power=config.freq_power,
        forbidden=forbidden,
        rng=rng,
    )
    ia, ib, y = batch_to_indices(batch, id_index)
    perm = rng.permutation(len(ia))
    return ia[perm], ib[perm], y[perm]


def validation_batch(
    split: DatasetSplit,
    config: TrainConfig,
    seed: int,
    id_index: dict[str, int],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Validation positives plus negatives fixed once per (split, seed), so the
    early-stopping signal is not resampling noise."""
    forbidden = split.all_pair_keys()
    batch = sample_negatives(
        split.validation,
        ratio=config.neg_ratio,
        freq_power=config.freq_power,
        forbidden=forbidden,
        rng=child_rng(seed, _VAL_TAG),
    )
    return batch_to_indices(batch, id_index)


def train_pairwise(
    model: PairModel,
    split: DatasetSplit,
    config: TrainConfig,
    id_index: dict[str, int],
    seed: int,
) -> TrainingLog:
    """Mini-batch Adam over resampled epochs with ROC-AUC early stopping.

    Restores the best-validation parameters into `model` before returning.
    """
    from .evaluation import roc_auc  # local import: evaluation has no deps on us

    config.validate()
    if len(split.train) == 0:
        raise DataError("train partition is empty")
    if len(split.validation) == 0:
        raise DataError("validation partition is empty (needed for early stopping)")
    forbidden = split.train.pair_keys()
    val_ia, val_ib, val_y = validation_batch(split, config, seed, id_index)
    val_labels = val_y.astype(bool)

    params = model.params_flat()
    state = AdamState.zeros(params.shape[0], learning_rate=config.learning_rate)
    log = TrainingLog()
    best_params = params.copy()
    best_metric = -np.inf

    for epoch in range(1, config.max_epochs + 1):
        ia, ib, y = _epoch_entries(
            split.train, config, seed, epoch, forbidden, id_index
        )
        total_loss = 0.0
        for start in range(0, len(ia), config.batch_size):
            sl = slice(start, start + config.batch_size)
            loss, grad = model.batch_loss_grad(ia[sl], ib[sl], y[sl])
            n_batch = len(ia[sl])
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss {loss} at epoch {epoch}, batch starting {start}; "
                    f"|params|_max={np.abs(model.params_flat()).max():.3e}"
                )
            total_loss += loss * n_batch
            params, state = adam_step(params, grad, state)
            model.set_params_flat(params)
        train_loss = total_loss / len(ia)
        val_metric = roc_auc(model.score_batch(val_ia, val_ib), val_labels)
        log.records.append(EpochRecord(epoch=epoch, train_loss=train_loss, val_metric=val_metric))
        if val_metric > best_metric:
            best_metric = val_metric
            best_params = params.copy()
        stop, _ = early_stop(log, config.patience)
        if stop:
            break
    model.set_params_flat(best_params)
    return log
