"""Medical named-entity recognition and relation extraction at desk scale."""

from ._core import (
    CheckpointError,
    ContractError,
    Corpus,
    EncoderConfig,
    IoError,
    NumericError,
    PretrainConfig,
    Split,
    TagScheme,
    TrainConfig,
    ValidationError,
    build_vocab,
    crf_brute_force,
    crf_log_partition,
    crf_viterbi,
    entity_prf,
    evaluate,
    f1_from_pr,
    generate_synthetic_corpus,
    load_checkpoint,
    load_corpus,
    new_model,
    predict,
    pretrain,
    sample_k_shot,
    spans_to_tags,
    tags_to_spans,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
