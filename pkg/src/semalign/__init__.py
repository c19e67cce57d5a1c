"""Teacher-student utterance embedding alignment toolkit.

Trains a frame-level encoder to emit utterance-level embeddings in a frozen
language-agnostic teacher space, and evaluates it with translation retrieval,
frame-level attention analysis and slot-filling error metrics, all on a
deterministic synthetic corpus.
"""

from .corpus import (
    CorpusSpec,
    FrameSequence,
    Manifest,
    Sentence,
    Span,
    balance_languages,
    gen_corpus,
    load_manifest,
    render_frames,
    teacher_embed,
)
from .model import AttentionRecord, ModelDims, ModelParams, backward, forward, init_params
from .retrieval import EmbeddingStore, embed_manifest, mean_center, recall_at_k, top_k
from .training import TrainConfig, TrainReport, cosine_loss, cosine_similarity, loss_grad, train

__version__ = "0.1.0"

__all__ = [
    "AttentionRecord",
    "CorpusSpec",
    "EmbeddingStore",
    "FrameSequence",
    "Manifest",
    "ModelDims",
    "ModelParams",
    "Sentence",
    "Span",
    "TrainConfig",
    "TrainReport",
    "__version__",
    "backward",
    "balance_languages",
    "cosine_loss",
    "cosine_similarity",
    "embed_manifest",
    "forward",
    "gen_corpus",
    "init_params",
    "load_manifest",
    "loss_grad",
    "mean_center",
    "recall_at_k",
    "render_frames",
    "teacher_embed",
    "top_k",
    "train",
]
