"""Cross-modal any-shot retrieval: embedding trainer and evaluation stack."""

from .errors import AnyshotError
from .features import (
    Episode,
    FeatureSet,
    SplitSpec,
    build_split,
    read_features,
    sample_episode,
    write_features,
)
from .itq import ItqCodec, hamming_rank, itq_encode, itq_fit
from .losses import LossWeights, total_objective
from .model import (
    SemPcycModel,
    TrainHyper,
    build_model,
    encode,
    few_shot_finetune,
    load_model,
    prune_side_info,
    save_model,
    train,
)
from .evaluation import (
    EvalReport,
    GallerySpec,
    average_precision,
    evaluate,
    make_gallery_spec,
    precision_at_k,
    pr_curve,
    rank_gallery,
)
from .sideinfo import (
    ClassEmbeddingTable,
    Taxonomy,
    build_hier_embedding,
    fuse_side_info,
    intrinsic_ic,
    load_taxonomy,
    load_word_vectors,
    taxonomy_similarity,
)

__version__ = "0.1.0"

__all__ = [
    "AnyshotError",
    "ClassEmbeddingTable",
    "EvalReport",
    "Episode",
    "FeatureSet",
    "GallerySpec",
    "ItqCodec",
    "LossWeights",
    "SemPcycModel",
    "SplitSpec",
    "Taxonomy",
    "TrainHyper",
    "average_precision",
    "build_hier_embedding",
    "build_model",
    "build_split",
    "encode",
    "evaluate",
    "few_shot_finetune",
    "fuse_side_info",
    "hamming_rank",
    "intrinsic_ic",
    "itq_encode",
    "itq_fit",
    "load_model",
    "load_taxonomy",
    "load_word_vectors",
    "make_gallery_spec",
    "pr_curve",
    "precision_at_k",
    "prune_side_info",
    "rank_gallery",
    "read_features",
    "sample_episode",
    "save_model",
    "taxonomy_similarity",
    "total_objective",
    "train",
    "write_features",
]
