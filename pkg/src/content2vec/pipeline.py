"""Three-stage training pipeline and the glue that turns trained models into
pair scorers and embedding stores.

Stage 1 trains each requested modality on its own. Stage 2 trains a fusion
over the frozen modality encoders. Stage 3 fits the content+CF ensemble
calibration on validation data. Stages can be re-run against an existing
bundle; earlier artifacts are reused untouched.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .cf import CFEmbeddings, cf_pair_logit, train_meta_prod2vec, train_prod2vec
from .data import Catalog, DatasetSplit
from .errors import DataError
from .fusion import (
    CIUFusion,
    CompressedFusion,
    CrossfeatFusion,
    EnsembleWeights,
    LinearFusion,
    ModalityArrays,
    ensemble_plus,
    fit_crossfeat,
    fit_ensemble,
    init_compressed_from_products,
    train_ciu,
    train_compressed,
    train_linear_fusion,
)
from .image import ImageHead, embed_image_batch, train_image_head
from .store import (
    EmbeddingStore,
    load_cf_embeddings,
    load_fusion,
    load_image_head,
    load_text_encoder,
    load_word_embeddings,
    model_params_hash,
    save_cf_embeddings,
    save_fusion,
    save_image_head,
    save_text_encoder,
    save_word_embeddings,
)
from .text import (
    TextEncoder,
    WordEmbeddings,
    build_token_matrix,
    embed_text_batch,
    train_text_encoder,
    train_word2vec,
)
from .training import ModelDims, TrainConfig, TrainingLog, validation_batch

STAGES = ("image", "text", "cf", "fusion")
FUSION_KINDS = ("linear", "ciu", "compressed", "crossfeat")


def fusion_modalities(fusion) -> tuple[str, ...]:
    if isinstance(fusion, LinearFusion):
        return tuple(fusion.weights)
    if isinstance(fusion, (CIUFusion, CrossfeatFusion)):
        return fusion.modalities()
    if isinstance(fusion, CompressedFusion):
        return fusion.modalities
    raise DataError(f"not a fusion model: {type(fusion).__name__}")


@dataclass
class ModelBundle:
    """Everything one training run produces, in memory."""

    dims: ModelDims
    image: ImageHead | None = None
    words: WordEmbeddings | None = None
    text: TextEncoder | None = None
    cf: CFEmbeddings | None = None
    fusion_kind: str | None = None
    fusion: object | None = None
    ensemble: EnsembleWeights | None = None
    logs: dict[str, TrainingLog] = field(default_factory=dict)

    def available_scorers(self) -> list[str]:
        kinds = []
        if self.image is not None:
            kinds.append("image")
        if self.text is not None and self.words is not None:
            kinds.append("text")
        if self.cf is not None:
            kinds.append("cf")
        if self.fusion is not None:
            kinds.append(self.fusion_kind)
        if self.ensemble is not None and self.fusion is not None and self.cf is not None:
            kinds.append("ensemble")
        return kinds


class BundleScorers:
    """Precomputes per-product embeddings once, then scores id pairs in batch.

    CF-only scoring falls back to 0.0 for pairs with an unseen product (a tie
    score); the ensemble falls back to the raw content logit instead.
    """

    def __init__(self, catalog: Catalog, bundle: ModelBundle):
        self.catalog = catalog
        self.bundle = bundle
        self.id_index = catalog.id_index
        self._img = None
        self._txt = None
        if bundle.image is not None:
            self._img = embed_image_batch(bundle.image, catalog.feature_matrix())
        if bundle.text is not None and bundle.words is not None:
            tokens = build_token_matrix(catalog, bundle.words, bundle.dims.max_len)
            self._txt = embed_text_batch(bundle.text, bundle.words, tokens)
        self._cf_matrix = None
        self._cf_present = None
        if bundle.cf is not None:
            cf = bundle.cf
            self._cf_matrix = np.zeros((len(catalog), cf.dim))
            self._cf_present = np.zeros(len(catalog), dtype=bool)
            for pid, row in cf.product_index.items():
                idx = self.id_index.get(pid)
                if idx is not None:
                    self._cf_matrix[idx] = cf.product_vectors[row]
                    self._cf_present[idx] = True

    def modality_arrays(self, include_cf: bool = False) -> ModalityArrays:
        embeddings, calibration = {}, {}
        if self._img is not None:
            embeddings["image"] = self._img
            calibration["image"] = (self.bundle.image.alpha, self.bundle.image.beta)
        if self._txt is not None:
            embeddings["text"] = self._txt
            calibration["text"] = (self.bundle.text.alpha, self.bundle.text.beta)
        if include_cf:
            if self._cf_matrix is None:
                raise DataError("bundle has no CF embeddings to include")
            embeddings["cf"] = self._cf_matrix
            calibration["cf"] = (self.bundle.cf.alpha, self.bundle.cf.beta)
        if not embeddings:
            raise DataError("bundle has no trained modality encoders")
        return ModalityArrays(
            embeddings=embeddings, calibration=calibration, id_index=self.id_index
        )

    def _indices(self, entries: Sequence[tuple[str, str]]):
        ia = np.fromiter((self.id_index[a] for a, _ in entries), dtype=np.int64, count=len(entries))
        ib = np.fromiter((self.id_index[b] for _, b in entries), dtype=np.int64, count=len(entries))
        return ia, ib

    def _modality_logits(self, name: str, ia, ib) -> np.ndarray:
        if name == "image":
            E, (alpha, beta) = self._img, (self.bundle.image.alpha, self.bundle.image.beta)
        elif name == "text":
            E, (alpha, beta) = self._txt, (self.bundle.text.alpha, self.bundle.text.beta)
        else:
            raise DataError(f"unknown content modality {name!r}")
        if E is None:
            raise DataError(f"bundle has no trained {name} encoder")
        return alpha * np.einsum("ij,ij->i", E[ia], E[ib]) + beta

    def _cf_logits(self, ia, ib) -> tuple[np.ndarray, np.ndarray]:
        """(logits with 0.0 where absent, presence mask)."""
        if self._cf_matrix is None:
            raise DataError("bundle has no CF embeddings")
        present = self._cf_present[ia] & self._cf_present[ib]
        cf = self.bundle.cf
        raw = cf.alpha * np.einsum(
            "ij,ij->i", self._cf_matrix[ia], self._cf_matrix[ib]
        ) + cf.beta
        return np.where(present, raw, 0.0), present

    def _fusion_logits(self, kind: str, fusion, ia, ib) -> np.ndarray:
        arrays = self.modality_arrays(include_cf="cf" in fusion_modalities(fusion))
        if kind == "linear":
            sims = arrays.sims(ia, ib)
            w = np.array([fusion.weights[m] for m in arrays.modalities])
            return sims @ w
        if kind == "ciu":
            sims = arrays.sims(ia, ib)
            w = np.array([fusion.weights[m] for m in arrays.modalities])
            C = arrays.concat_matrix()
            Ha = np.maximum(C[ia] @ fusion.F_W.T + fusion.F_b, 0.0)
            Hb = np.maximum(C[ib] @ fusion.F_W.T + fusion.F_b, 0.0)
            res = fusion.alpha_res * np.einsum("ij,ij->i", Ha, Hb) + fusion.beta_res
            return sims @ w + fusion.w_res * res
        if kind == "compressed":
            C = arrays.concat_matrix()
            Za = np.maximum(C[ia] @ fusion.C_W.T + fusion.C_b, 0.0)
            Zb = np.maximum(C[ib] @ fusion.C_W.T + fusion.C_b, 0.0)
            return fusion.alpha_z * np.einsum("ij,ij->i", Za, Zb) + fusion.beta_z
        if kind == "crossfeat":
            sims = arrays.sims(ia, ib)
            mods = arrays.modalities
            n_b = fusion.n_buckets()
            b0 = np.searchsorted(fusion.boundaries[mods[0]], sims[:, 0], side="right")
            b1 = np.searchsorted(fusion.boundaries[mods[1]], sims[:, 1], side="right")
            w = fusion.weights
            return w[b0] + w[n_b + b1] + w[2 * n_b + b0 * n_b + b1] + fusion.bias
        raise DataError(f"unknown fusion kind {kind!r}")

    def score_pairs(self, kind: str, entries: Sequence[tuple[str, str]]) -> np.ndarray:
        ia, ib = self._indices(entries)
        if kind in ("image", "text"):
            return self._modality_logits(kind, ia, ib)
        if kind == "cf":
            logits, _ = self._cf_logits(ia, ib)
            return logits
        if kind in FUSION_KINDS:
            if self.bundle.fusion is None or self.bundle.fusion_kind != kind:
                raise DataError(f"bundle has no trained {kind} fusion")
            return self._fusion_logits(kind, self.bundle.fusion, ia, ib)
        if kind == "ensemble":
            if self.bundle.ensemble is None:
                raise DataError("bundle has no fitted ensemble")
            content = self._fusion_logits(
                self.bundle.fusion_kind, self.bundle.fusion, ia, ib
            )
            cf_logits, present = self._cf_logits(ia, ib)
            w = self.bundle.ensemble
            blended = w.w_content * content + w.w_cf * cf_logits + w.bias
            return np.where(present, blended, content)
        raise DataError(f"unknown scorer kind {kind!r}")

    def scorer(self, kind: str):
        return lambda entries: self.score_pairs(kind, entries)


def run_pipeline(
    catalog: Catalog,
    split: DatasetSplit,
    stages: Sequence[str],
    fusion_kind: str = "ciu",
    config: TrainConfig | None = None,
    dims: ModelDims | None = None,
    seed: int | None = None,
    bundle: ModelBundle | None = None,
    cf_variant: str = "prod2vec",
    include_cf_in_concat: bool = False,
) -> ModelBundle:
    """Run the requested stages, reusing anything already in `bundle`.

    The text stage trains word embeddings first if the bundle has none; the
    fusion stage requires its content encoders and refuses to run without
    them. Ensemble calibration runs whenever both a fusion and CF vectors
    are present.
    """
    config = TrainConfig() if config is None else config
    dims = ModelDims() if dims is None else dims
    seed = config.seed if seed is None else seed
    stages = list(stages)
    unknown = [s for s in stages if s not in STAGES]
    if unknown:
        raise DataError(f"unknown stages {unknown}; valid stages are {list(STAGES)}")
    if fusion_kind not in FUSION_KINDS:
        raise DataError(
            f"unknown fusion kind {fusion_kind!r}; valid kinds are {list(FUSION_KINDS)}"
        )
    if bundle is None:
        out = ModelBundle(dims=dims)
    else:
        # shallow copy: reused stage-1 artifacts are shared (and unchanged),
        # but the caller's bundle is never mutated
        out = replace(bundle, logs=dict(bundle.logs))

    if "image" in stages:
        out.image, out.logs["image"] = train_image_head(
            catalog, split, config, dims, seed
        )
    if "text" in stages:
        if out.words is None:
            out.words = train_word2vec(
                catalog,
                d_word=dims.d_word,
                window=dims.w2v_window,
                n_negatives=dims.w2v_negatives,
                min_count=dims.w2v_min_count,
                epochs=dims.w2v_epochs,
                seed=seed,
                learning_rate=dims.w2v_learning_rate,
            )
        out.text, out.logs["text"] = train_text_encoder(
            catalog, out.words, split, config, dims, seed
        )
    if "cf" in stages:
        if cf_variant == "prod2vec":
            out.cf = train_prod2vec(
                split.train,
                d_cf=dims.d_cf,
                n_negatives=dims.cf_negatives,
                epochs=dims.cf_epochs,
                freq_power=config.freq_power,
                seed=seed,
                learning_rate=dims.cf_learning_rate,
            )
        elif cf_variant == "meta":
            out.cf = train_meta_prod2vec(
                split.train,
                catalog,
                lambda_side=dims.lambda_side,
                d_cf=dims.d_cf,
                n_negatives=dims.cf_negatives,
                epochs=dims.cf_epochs,
                freq_power=config.freq_power,
                seed=seed,
                learning_rate=dims.cf_learning_rate,
            )
        else:
            raise DataError(f"unknown cf variant {cf_variant!r}")

    if "fusion" in stages:
        missing = [
            name
            for name, model in (("image", out.image), ("text", out.text))
            if model is None
        ]
        if missing:
            raise DataError(
                f"fusion stage requires trained encoders; missing {missing}"
            )
        if include_cf_in_concat and out.cf is None:
            raise DataError("include_cf_in_concat requires a trained cf stage")
        scorers = BundleScorers(catalog, out)
        arrays = scorers.modality_arrays(include_cf=include_cf_in_concat)
        if fusion_kind == "linear":
            out.fusion, out.logs["fusion"] = train_linear_fusion(
                arrays, split, config, seed
            )
        elif fusion_kind == "ciu":
            out.fusion, out.logs["fusion"] = train_ciu(
                arrays, split, config, dims, seed
            )
        elif fusion_kind == "compressed":
            init = init_compressed_from_products(arrays, dims.d_z, seed)
            out.fusion, out.logs["fusion"] = train_compressed(
                arrays, init, split, config, seed
            )
        else:
            out.fusion, out.logs["fusion"] = fit_crossfeat(
                arrays, split, dims.n_buckets, config, seed
            )
        out.fusion_kind = fusion_kind

    if out.fusion is not None and out.cf is not None:
        out.ensemble = fit_ensemble_on_validation(catalog, split, out, config, seed)
    return out


def fit_ensemble_on_validation(
    catalog: Catalog,
    split: DatasetSplit,
    bundle: ModelBundle,
    config: TrainConfig,
    seed: int,
) -> EnsembleWeights | None:
    """Stage 3: logistic blend of content fusion and CF logits, fitted on the
    validation positives plus their fixed negatives. Pairs without CF vectors
    are left out of the fit (they fall back to the content logit anyway).
    Returns None when no validation pair has CF coverage."""
    scorers = BundleScorers(catalog, bundle)
    val_ia, val_ib, val_y = validation_batch(split, config, seed, catalog.id_index)
    entries_idx = (val_ia, val_ib)
    content = scorers._fusion_logits(bundle.fusion_kind, bundle.fusion, *entries_idx)
    cf_logits, present = scorers._cf_logits(*entries_idx)
    if not present.any():
        return None
    return fit_ensemble(content[present], cf_logits[present], val_y[present])


def export_embeddings(
    bundle: ModelBundle, catalog: Catalog, kind: str, seed: int = 0
) -> EmbeddingStore:
    """One vector per product. Compressed exports its d_z outputs (inner
    products there are rank-equivalent to the model score); linear/ciu export
    the concatenated modality vectors; cf exports the co-purchase vectors.
    Products missing a CF vector get a zero block and are counted in the
    `cold` metadata attribute."""
    scorers = BundleScorers(catalog, bundle)
    metadata = {"kind": kind, "seed": str(seed)}
    if kind == "cf":
        if bundle.cf is None:
            raise DataError("bundle has no CF embeddings to export")
        cf = bundle.cf
        ids = sorted(cf.product_index, key=cf.product_index.get)
        metadata["hash"] = model_params_hash([cf.product_vectors])
        return EmbeddingStore(
            dim=cf.dim, ids=tuple(ids), vectors=cf.product_vectors, metadata=metadata
        )
    if kind == "compressed":
        if not isinstance(bundle.fusion, CompressedFusion):
            raise DataError("bundle has no trained compressed fusion")
        fusion = bundle.fusion
        arrays = scorers.modality_arrays(include_cf="cf" in fusion.modalities)
        C = arrays.concat_matrix()
        vectors = np.maximum(C @ fusion.C_W.T + fusion.C_b, 0.0)
        metadata["hash"] = model_params_hash([fusion.C_W, fusion.C_b])
        if "cf" in fusion.modalities:
            n_cold = int((~scorers._cf_present).sum())
            if n_cold:
                metadata["cold"] = str(n_cold)
        return EmbeddingStore(
            dim=fusion.d_z, ids=tuple(catalog.ids), vectors=vectors, metadata=metadata
        )
    if kind in ("linear", "ciu"):
        include_cf = bundle.cf is not None
        arrays = scorers.modality_arrays(include_cf=include_cf)
        C = arrays.concat_matrix()
        hash_arrays = [arrays.embeddings[m] for m in arrays.modalities]
        metadata["hash"] = model_params_hash(hash_arrays)
        if include_cf:
            n_cold = int((~scorers._cf_present).sum())
            if n_cold:
                metadata["cold"] = str(n_cold)
        return EmbeddingStore(
            dim=C.shape[1], ids=tuple(catalog.ids), vectors=C, metadata=metadata
        )
    raise DataError(f"cannot export embeddings for kind {kind!r}")


# --- bundle persistence ------------------------------------------------------

_BUNDLE_FILES = {
    "image": "image.c2v",
    "words": "words.tsv",
    "text": "text.c2v",
    "cf": "cf.tsv",
    "fusion": "fusion.c2v",
    "ensemble": "ensemble.c2v",
}


def save_bundle(directory, bundle: ModelBundle, seed: int = 0) -> None:
    os.makedirs(directory, exist_ok=True)
    if bundle.image is not None:
        save_image_head(os.path.join(directory, _BUNDLE_FILES["image"]), bundle.image)
    if bundle.words is not None:
        save_word_embeddings(os.path.join(directory, _BUNDLE_FILES["words"]), bundle.words)
    if bundle.text is not None:
        save_text_encoder(os.path.join(directory, _BUNDLE_FILES["text"]), bundle.text)
    if bundle.cf is not None:
        save_cf_embeddings(os.path.join(directory, _BUNDLE_FILES["cf"]), bundle.cf, seed)
    if bundle.fusion is not None:
        save_fusion(os.path.join(directory, _BUNDLE_FILES["fusion"]), bundle.fusion)
    if bundle.ensemble is not None:
        save_fusion(os.path.join(directory, _BUNDLE_FILES["ensemble"]), bundle.ensemble)
    logdir = os.path.join(directory, "logs")
    os.makedirs(logdir, exist_ok=True)
    for name, log in bundle.logs.items():
        with open(os.path.join(logdir, f"{name}.tsv"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(log.to_tsv())


def load_bundle(directory, dims: ModelDims | None = None) -> ModelBundle:
    dims = ModelDims() if dims is None else dims
    bundle = ModelBundle(dims=dims)

    def path(key):
        return os.path.join(directory, _BUNDLE_FILES[key])

    if os.path.exists(path("image")):
        bundle.image = load_image_head(path("image"))
    if os.path.exists(path("words")):
        bundle.words = load_word_embeddings(path("words"))
    if os.path.exists(path("text")):
        bundle.text = load_text_encoder(path("text"))
        bundle.dims = replace(bundle.dims, max_len=bundle.text.max_len)
    if os.path.exists(path("cf")):
        bundle.cf = load_cf_embeddings(path("cf"))
    if os.path.exists(path("fusion")):
        bundle.fusion = load_fusion(path("fusion"))
        for kind, cls in (
            ("linear", LinearFusion),
            ("ciu", CIUFusion),
            ("compressed", CompressedFusion),
            ("crossfeat", CrossfeatFusion),
        ):
            if isinstance(bundle.fusion, cls):
                bundle.fusion_kind = kind
    if os.path.exists(path("ensemble")):
        bundle.ensemble = load_fusion(path("ensemble"))
    return bundle
