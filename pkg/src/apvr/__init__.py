"""Dual-granularity retrieval engine over precomputed video features.

Two plug-and-play stages: adaptive pivot-frame retrieval (iterative
stride-refined sampling driven by fused similarity/detection confidence)
and pivot-token selection (attention-driven per-layer KV-cache pruning),
plus the query-expansion grammar and binary artifact formats that tie a
real feature extractor to the engine.
"""

from .errors import FormatError, InvalidInput, ParseError
from .formats import (
    ATTENTION_MAGIC,
    BUNDLE_MAGIC,
    read_attention,
    read_bundle,
    validate_attention,
    validate_bundle,
    write_attention,
    write_bundle,
)
from .pfr import (
    FrameScoreBoard,
    PfrConfig,
    PivotSelection,
    high_confidence_set,
    run_pfr,
    sample_candidates,
    stride_at,
    uncertainty_set,
    uniform_stride_sample,
    windowed_entropy,
)
from .pipeline import PipelineResult, RunManifest, run_pipeline
from .ptr import (
    AttentionTensor,
    ChunkStats,
    PtrConfig,
    TokenSelection,
    aggregate_attention,
    chunk_ratios,
    compute_cross_attention,
    head_soft_vote,
    restrict_to_frames,
    run_ptr,
    select_layer_tokens,
)
from .query_model import (
    ExpandedQuery,
    RelationTriplet,
    RelationType,
    normalize_phrase,
    parse_expansion_response,
    render_expansion_prompt,
    serialize_expansion,
)
from .scoring import (
    DetectionRecord,
    FeatureBundle,
    ScoringConfig,
    clip_scores,
    detection_scores,
    fuse_scores,
    temporal_diffusion,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "InvalidInput",
    "ParseError",
    "FormatError",
    "RelationType",
    "RelationTriplet",
    "ExpandedQuery",
    "normalize_phrase",
    "render_expansion_prompt",
    "parse_expansion_response",
    "serialize_expansion",
    "DetectionRecord",
    "FeatureBundle",
    "ScoringConfig",
    "clip_scores",
    "detection_scores",
    "fuse_scores",
    "temporal_diffusion",
    "FrameScoreBoard",
    "PfrConfig",
    "PivotSelection",
    "stride_at",
    "uniform_stride_sample",
    "high_confidence_set",
    "windowed_entropy",
    "uncertainty_set",
    "sample_candidates",
    "run_pfr",
    "AttentionTensor",
    "PtrConfig",
    "ChunkStats",
    "TokenSelection",
    "compute_cross_attention",
    "aggregate_attention",
    "chunk_ratios",
    "head_soft_vote",
    "select_layer_tokens",
    "restrict_to_frames",
    "run_ptr",
    "BUNDLE_MAGIC",
    "ATTENTION_MAGIC",
    "write_bundle",
    "read_bundle",
    "validate_bundle",
    "write_attention",
    "read_attention",
    "validate_attention",
    "RunManifest",
    "PipelineResult",
    "run_pipeline",
]
