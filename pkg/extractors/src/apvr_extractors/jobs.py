"""Extraction jobs: videos in, engine artifact files out.

``extract_bundle`` decodes frames at the target fps, embeds each frame
(unit-norm), sums the unit-norm text embeddings of the question,
descriptions and semantics into the aggregated text embedding, runs the
grounder with the key and cue phrases, and writes the bundle file.

``capture_attention`` runs the host over the same frames and query text
and writes the attention tensor with its token-to-frame map.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoders import make_encoders
from .errors import JobError
from .formats import write_attention_file, write_bundle_file
from .grounding import make_grounder
from .hosts import make_host
from .query_io import QueryInfo
from .video import iter_frames

logger = logging.getLogger(__name__)

__all__ = ["ExtractionJob", "extract_bundle", "capture_attention"]


@dataclass
class ExtractionJob:
    """One extraction run over a video (file or pre-sampled frame directory).

    ``query`` supplies the detection phrase list (key plus cue objects) and
    the texts aggregated into the text embedding. ``phrases`` may override
    the detection list explicitly.
    """

    video: str | Path
    output: str | Path
    query: QueryInfo = field(default_factory=QueryInfo)
    fps: float = 2.0
    phrases: list[str] | None = None
    embed_dim: int = 64
    image_model: str = "hashed"
    text_model: str = "hashed"
    grounder: str = "colorblob"
    host: str = "synthetic"
    host_layers: int = 4
    host_heads: int = 2
    tokens_per_frame: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.fps <= 0:
            raise JobError(f"fps must be positive, got {self.fps}")
        if self.embed_dim < 1:
            raise JobError("embed_dim must be >= 1")

    def detection_phrases(self) -> list[str]:
        return self.phrases if self.phrases is not None else self.query.phrases


def extract_bundle(job: ExtractionJob) -> dict:
    """Run the embedding and detection extraction; returns a summary."""
    phrases = job.detection_phrases()
    if not phrases:
        raise JobError(
            "detection job needs a non-empty phrase list "
            "(key/cue objects in the query, or explicit phrases)"
        )
    image_encoder, text_encoder = make_encoders(
        job.image_model, job.text_model, job.embed_dim
    )
    grounder = make_grounder(job.grounder)

    embeddings: list[np.ndarray] = []
    detections: list[list[dict]] = []
    for frame_index, image in iter_frames(job.video, job.fps):
        vector = image_encoder.encode(image)
        norm = np.linalg.norm(vector)
        if abs(norm - 1.0) > 1e-6:  # encoders normalize; keep the writer honest
            vector = vector / norm
        embeddings.append(vector)
        detections.append(grounder.detect(image, phrases))

    elements = job.query.text_elements()
    if not elements:
        logger.warning("query has no text elements; using the phrase list "
                       "for the aggregated text embedding")
        elements = phrases
    text_agg = np.zeros(image_encoder.dim)
    for element in elements:
        text_agg += text_encoder.encode(element)

    frame_matrix = np.stack(embeddings)
    write_bundle_file(job.output, frame_matrix, text_agg, job.fps, detections)
    return {
        "n_frames": int(frame_matrix.shape[0]),
        "embed_dim": int(frame_matrix.shape[1]),
        "fps": job.fps,
        "total_detections": int(sum(len(d) for d in detections)),
        "text_elements": len(elements),
        "output": str(job.output),
    }


def capture_attention(job: ExtractionJob) -> dict:
    """Run the host's cross-attention capture; returns a summary."""
    host = make_host(
        job.host,
        n_layers=job.host_layers,
        n_heads=job.host_heads,
        tokens_per_frame=job.tokens_per_frame,
        seed=job.seed,
    )
    query_text = job.query.aggregate_text()
    if not query_text.strip():
        raise JobError("query has no text to derive query states from")
    frames = [image for _, image in iter_frames(job.video, job.fps)]
    values, frame_map = host.attention_over_frames(query_text, frames)
    write_attention_file(job.output, values, frame_map)
    return {
        "n_layers": int(values.shape[0]),
        "n_heads": int(values.shape[1]),
        "query_len": int(values.shape[2]),
        "token_len": int(values.shape[3]),
        "n_frames": len(frames),
        "output": str(job.output),
    }
