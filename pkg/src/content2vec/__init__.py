"""Content2Vec: multimodal product embeddings for co-purchase link prediction.

Modality-specific encoders (image feature head, convolutional text encoder,
co-purchase skip-gram), fusion strategies for a joint product embedding,
pairwise link-prediction training with negative sampling, cold-start
evaluation, and exact top-k retrieval.
"""

__version__ = "0.1.0"

from .cf import CFEmbeddings, cf_pair_logit, train_meta_prod2vec, train_prod2vec
from .data import (
    Catalog,
    DatasetSplit,
    LabeledBatch,
    PairSet,
    ProductRecord,
    SynthConfig,
    generate_synthetic,
    load_catalog,
    load_pairs,
    make_hard_cold_start_split,
    make_soft_cold_start_split,
    product_frequency,
    sample_negatives,
)
from .errors import C2VError, DataError, DimensionMismatch, NumericError, SamplingError
from .evaluation import (
    ResultRow,
    ScoredSet,
    auprc,
    evaluate_cross_category,
    evaluate_link_prediction,
    render_table,
    roc_auc,
    split_pairs_by_category,
)
from .fusion import (
    CIUFusion,
    CompressedFusion,
    CrossfeatFusion,
    EnsembleWeights,
    LinearFusion,
    ModalityVectorSet,
    embed_compressed,
    ensemble_plus,
    fit_crossfeat,
    fit_ensemble,
    init_compressed_from_products,
    sim_ciu,
    sim_linear,
    train_ciu,
    train_compressed,
    train_linear_fusion,
)
from .image import ImageHead, embed_image, image_pair_logit, train_image_head
from .linalg import (
    AdamState,
    adam_step,
    finite_diff_grad,
    inner_product,
    relu_layer_backward,
    relu_layer_forward,
    sigmoid,
)
from .pipeline import (
    BundleScorers,
    ModelBundle,
    export_embeddings,
    load_bundle,
    run_pipeline,
    save_bundle,
)
from .store import EmbeddingStore, load_store, save_store, topk_retrieve
from .text import (
    TextEncoder,
    WordEmbeddings,
    embed_text,
    text_pair_logit,
    tokenize,
    train_text_encoder,
    train_word2vec,
)
from .training import (
    ModelDims,
    TrainConfig,
    TrainingLog,
    early_stop,
    logistic_pair_loss,
    ns_epoch_loss,
)
from .cli import cli_dispatch
