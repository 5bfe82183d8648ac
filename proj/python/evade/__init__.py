"""Python bindings for the evade explanation validation toolkit."""

from ._core import (
    DataError,
    TransportError,
    average_precision,
    classify_explanation,
    corpus_stats,
    distribution_from_labels,
    kld,
    lexical_similarity,
    parse_batch_scores,
    parse_generation,
    parse_one_expl_score,
    pos_tags,
    precision_recall,
    run_pipeline,
    semantic_similarity,
    sweep,
    syntactic_similarity,
    weighted_f1,
)
from .soft_labels import LABEL_ORDER, load_soft_labels

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "LABEL_ORDER",
    "TransportError",
    "average_precision",
    "classify_explanation",
    "corpus_stats",
    "distribution_from_labels",
    "kld",
    "lexical_similarity",
    "load_soft_labels",
    "parse_batch_scores",
    "parse_generation",
    "parse_one_expl_score",
    "pos_tags",
    "precision_recall",
    "run_pipeline",
    "semantic_similarity",
    "sweep",
    "syntactic_similarity",
    "weighted_f1",
]
