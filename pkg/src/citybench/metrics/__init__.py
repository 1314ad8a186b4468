from .text import (
    MetricError,
    tokenize,
    bleu_corpus,
    bleu_sentence,
    rouge_l,
    rouge_l_pair,
    meteor,
    meteor_pair,
    cider,
    embedding_similarity,
    HttpEmbeddingProvider,
    LexicalFallbackProvider,
)
from .nav import EpisodeResult, nav_metrics, SHORT_CUTOFF
from .report import (
    score_text,
    render_text_table,
    render_nav_table,
    nav_report,
    save_report,
    load_report,
)

__all__ = [
    "MetricError",
    "tokenize",
    "bleu_corpus",
    "bleu_sentence",
    "rouge_l",
    "rouge_l_pair",
    "meteor",
    "meteor_pair",
    "cider",
    "embedding_similarity",
    "HttpEmbeddingProvider",
    "LexicalFallbackProvider",
    "EpisodeResult",
    "nav_metrics",
    "SHORT_CUTOFF",
    "score_text",
    "render_text_table",
    "render_nav_table",
    "nav_report",
    "save_report",
    "load_report",
]
