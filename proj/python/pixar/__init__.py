"""Non-autoregressive generative retrieval."""

from ._pixar import (
    CorruptArtifact,
    DocidTrie,
    Error,
    IncompatibleArtifacts,
    InvalidArgument,
    Model,
    ModelConfig,
    ShortlistIndex,
    TrainingDiverged,
    Vocabulary,
    decode,
    decode_full_softmax,
    generate_candidates,
    hits_at_k,
    load_docids,
    load_pairs,
    mrr_at_k,
    output_len_for,
    precision_at_k,
    recall_at_k,
    train,
)

__all__ = [
    "CorruptArtifact",
    "DocidTrie",
    "Error",
    "IncompatibleArtifacts",
    "InvalidArgument",
    "Model",
    "ModelConfig",
    "ShortlistIndex",
    "TrainingDiverged",
    "Vocabulary",
    "decode",
    "decode_full_softmax",
    "generate_candidates",
    "hits_at_k",
    "load_docids",
    "load_pairs",
    "mrr_at_k",
    "output_len_for",
    "precision_at_k",
    "recall_at_k",
    "train",
]
