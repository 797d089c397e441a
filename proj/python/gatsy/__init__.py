"""Graph-attention artist similarity.

Thin Python layer over the C++ core: build or load a dataset, train a
model, evaluate it and serve recommendations.
"""

from ._gatsy import (  # noqa: F401
    ApiService,
    ArtistGraph,
    Checkpoint,
    Dataset,
    DatasetSplit,
    DimensionError,
    GraphStats,
    ModelConfig,
    ModelParams,
    NumericError,
    ParseError,
    QueryError,
    Service,
    TrainConfig,
    TrainResult,
    build_model,
    compute_stats,
    evaluate_embedding,
    forward_embed,
    generate_synthetic,
    load_checkpoint,
    load_dataset,
    load_service,
    model_preset,
    ndcg_at_k,
    project_2d,
    split_dataset,
    supervised_defaults,
    train,
    unsupervised_defaults,
)

__version__ = "0.1.0"
