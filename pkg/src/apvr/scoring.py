"""Frame-confidence scoring kernels over precomputed features.

Two complementary per-frame signals are computed for a set of frame indices:

* ``clip_scores``: dot product of the frame embedding against the
  aggregated text embedding, sharpened by a temperature ``tau`` and
  softmax-normalized across the scored index set.
* ``detection_scores``: softmax of the best detection logit per frame,
  plus weighted bonuses for relation triplets satisfied at that frame.

``fuse_scores`` blends the two with weight ``lambda``, and
``temporal_diffusion`` propagates a frame's confidence to its neighbours
with 1/(1+distance) decay under max-merge, so one good hit lights up its
temporal surroundings.

The softmax in both kernels is taken over exactly the index set passed in
(each retrieval iteration scores one sampled set, and normalizing within it
keeps iterations comparable). Set ``global_softmax=True`` in
:class:`ScoringConfig` to normalize against all frames of the bundle
instead; the returned subset then no longer sums to 1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import InvalidInput
from .query_model import ExpandedQuery, RelationType, normalize_phrase

if TYPE_CHECKING:  # pragma: no cover - typing only, avoids a runtime cycle
    from .pfr import FrameScoreBoard

logger = logging.getLogger(__name__)

__all__ = [
    "NO_DETECTION_LOGIT",
    "DetectionRecord",
    "FeatureBundle",
    "ScoringConfig",
    "clip_scores",
    "detection_scores",
    "fuse_scores",
    "temporal_diffusion",
]

# Frames (or phrases) without any detection enter the softmax with this
# floor logit instead of -inf: arithmetic stays finite and empty frames get
# negligible but nonzero mass.
NO_DETECTION_LOGIT = -20.0

# Minimum box overlap for an attribute triplet to count as satisfied.
ATTRIBUTE_IOU_THRESHOLD = 0.3


@dataclass(frozen=True)
class DetectionRecord:
    """One grounded detection: phrase, normalized xyxy box, raw logit."""

    phrase: str
    box: tuple[float, float, float, float]
    logit: float

    def __post_init__(self):
        x0, y0, x1, y1 = self.box
        if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
            raise InvalidInput(
                f"detection box must satisfy 0 <= x0 < x1 <= 1 and "
                f"0 <= y0 < y1 <= 1, got {self.box}"
            )

    def to_dict(self) -> dict:
        return {"phrase": self.phrase, "box": list(self.box), "logit": self.logit}

    @classmethod
    def from_dict(cls, data: dict) -> "DetectionRecord":
        box = data["box"]
        if len(box) != 4:
            raise InvalidInput(f"detection box must have 4 coordinates, got {box}")
        return cls(phrase=str(data["phrase"]), box=tuple(float(c) for c in box),
                   logit=float(data["logit"]))


@dataclass
class FeatureBundle:
    """The engine's whole view of a video: embeddings plus detections.

    ``frame_embeddings`` is an (n_frames, embed_dim) array of unit-norm
    image embeddings, ``text_embedding_agg`` the pre-aggregated sum of
    unit-norm text embeddings of the question, descriptions and semantics,
    and ``detections`` one record list per frame.
    """

    n_frames: int
    fps: float
    embed_dim: int
    frame_embeddings: np.ndarray
    text_embedding_agg: np.ndarray
    detections: list[list[DetectionRecord]]

    def __post_init__(self):
        if self.n_frames < 1:
            raise InvalidInput("bundle must contain at least one frame")
        if self.embed_dim < 1:
            raise InvalidInput("embedding dimension must be >= 1")
        if self.fps <= 0:
            raise InvalidInput("fps must be positive")
        self.frame_embeddings = np.asarray(self.frame_embeddings, dtype=np.float64)
        self.text_embedding_agg = np.asarray(self.text_embedding_agg, dtype=np.float64)
        if self.frame_embeddings.shape != (self.n_frames, self.embed_dim):
            raise InvalidInput(
                f"frame_embeddings shape {self.frame_embeddings.shape} does not "
                f"match (n_frames={self.n_frames}, embed_dim={self.embed_dim})"
            )
        if self.text_embedding_agg.shape != (self.embed_dim,):
            raise InvalidInput(
                f"text_embedding_agg shape {self.text_embedding_agg.shape} does "
                f"not match embed_dim={self.embed_dim}"
            )
        if len(self.detections) != self.n_frames:
            raise InvalidInput(
                f"detections list length {len(self.detections)} != n_frames "
                f"{self.n_frames}"
            )
        norms = np.linalg.norm(self.frame_embeddings, axis=1)
        worst = np.abs(norms - 1.0).max()
        if worst > 1e-4:
            raise InvalidInput(
                f"frame embeddings must be unit-norm within 1e-4 "
                f"(worst deviation {worst:.2e})"
            )

    @classmethod
    def from_arrays(
        cls,
        frame_embeddings: np.ndarray,
        text_embedding_agg: np.ndarray,
        fps: float = 2.0,
        detections: list[list[DetectionRecord]] | None = None,
    ) -> "FeatureBundle":
        frame_embeddings = np.asarray(frame_embeddings, dtype=np.float64)
        n_frames, embed_dim = frame_embeddings.shape
        if detections is None:
            detections = [[] for _ in range(n_frames)]
        return cls(
            n_frames=n_frames,
            fps=fps,
            embed_dim=embed_dim,
            frame_embeddings=frame_embeddings,
            text_embedding_agg=text_embedding_agg,
            detections=detections,
        )


def _default_relation_weights() -> dict[RelationType, float]:
    return {relation: 0.25 for relation in RelationType}


@dataclass
class ScoringConfig:
    """Knobs for the scoring kernels.

    ``tau`` sharpens the embedding-similarity softmax (default 100),
    ``fusion_lambda`` weighs detection scores against similarity scores in
    the fused confidence (default 0.5), ``relation_weights`` controls each
    triplet type's bonus, ``diffusion_window`` is the neighbourhood half
    width of temporal diffusion, and ``time_relation_horizon`` (seconds)
    bounds how far apart the two endpoints of a time/causal triplet may be.
    """

    tau: float = 100.0
    fusion_lambda: float = 0.5
    relation_weights: dict[RelationType, float] = field(
        default_factory=_default_relation_weights
    )
    diffusion_window: int = 4
    time_relation_horizon: float = 10.0
    global_softmax: bool = False

    def __post_init__(self):
        if self.tau <= 0:
            raise InvalidInput("tau must be positive")
        if not 0.0 <= self.fusion_lambda <= 1.0:
            raise InvalidInput("fusion lambda must lie in [0, 1]")
        for relation in RelationType:
            weight = self.relation_weights.get(relation, 0.25)
            if weight < 0:
                raise InvalidInput(f"relation weight for {relation.value} must be >= 0")
            self.relation_weights[relation] = float(weight)
        if self.diffusion_window < 0:
            raise InvalidInput("diffusion window must be >= 0")
        if self.time_relation_horizon <= 0:
            raise InvalidInput("time relation horizon must be positive")


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


def _check_indices(frame_indices: Sequence[int], n_frames: int) -> np.ndarray:
    idx = np.asarray(frame_indices, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise InvalidInput("frame index set must be a non-empty 1-D sequence")
    if np.unique(idx).size != idx.size:
        raise InvalidInput("frame index set contains duplicates")
    if ((idx < 0) | (idx >= n_frames)).any():
        bad = idx[(idx < 0) | (idx >= n_frames)][0]
        raise IndexError(f"frame index {bad} out of range [0, {n_frames})")
    return idx


def clip_scores(
    bundle: FeatureBundle,
    frame_indices: Sequence[int],
    cfg: ScoringConfig | None = None,
) -> np.ndarray:
    """Temperature-sharpened similarity scores for the given frames.

    Raw logits are ``tau * (frame_embedding . text_embedding_agg)``;
    the returned scores are their softmax across the index set (all
    positive, summing to 1 over the set).
    """
    cfg = cfg or ScoringConfig()
    idx = _check_indices(frame_indices, bundle.n_frames)
    if cfg.global_softmax:
        logits = cfg.tau * (bundle.frame_embeddings @ bundle.text_embedding_agg)
        return _softmax(logits)[idx]
    logits = cfg.tau * (bundle.frame_embeddings[idx] @ bundle.text_embedding_agg)
    return _softmax(logits)


def _iou(a: tuple[float, float, float, float], b: tuple[float, float, float, float]) -> float:
    ix0, iy0 = max(a[0], b[0]), max(a[1], b[1])
    ix1, iy1 = min(a[2], b[2]), min(a[3], b[3])
    if ix0 >= ix1 or iy0 >= iy1:
        return 0.0
    inter = (ix1 - ix0) * (iy1 - iy0)
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


class _PhraseView:
    """Per-phrase detection evidence over a scored index set."""

    def __init__(self, bundle: FeatureBundle, idx: np.ndarray, phrase: str):
        self.logits = np.full(idx.size, NO_DETECTION_LOGIT)
        self.boxes: list[list[tuple[float, float, float, float]]] = []
        for pos, frame in enumerate(idx):
            boxes = []
            for det in bundle.detections[frame]:
                if normalize_phrase(det.phrase) == phrase:
                    boxes.append(det.box)
                    self.logits[pos] = max(self.logits[pos], det.logit)
            self.boxes.append(boxes)
        self.present = np.array([len(b) > 0 for b in self.boxes])
        # Softmax-normalized per-frame confidence of this phrase over the set.
        self.confidence = _softmax(self.logits)


def detection_scores(
    bundle: FeatureBundle,
    frame_indices: Sequence[int],
    query: ExpandedQuery | None = None,
    cfg: ScoringConfig | None = None,
) -> np.ndarray:
    """Detection-driven scores with relation-triplet bonuses.

    The base score is the softmax (over the index set) of each frame's best
    detection logit, with ``NO_DETECTION_LOGIT`` standing in for frames
    without detections. Each satisfied relation triplet then adds
    ``weight * sqrt(c_subject * c_object)`` to the frame completing it,
    where ``c_x`` is the phrase's softmax-normalized per-frame confidence:

    * spatial: both phrases detected in the same frame;
    * attribute: both phrases in the same frame with box IoU >= 0.3;
    * time / causal: subject detected strictly earlier, object later,
      within ``time_relation_horizon`` seconds at the bundle's fps.

    Endpoints that never match any detection contribute no bonus and are
    logged as warnings. The result is clamped to >= 0.
    """
    cfg = cfg or ScoringConfig()
    idx = _check_indices(frame_indices, bundle.n_frames)

    if cfg.global_softmax:
        all_best = np.full(bundle.n_frames, NO_DETECTION_LOGIT)
        for frame in range(bundle.n_frames):
            for det in bundle.detections[frame]:
                all_best[frame] = max(all_best[frame], det.logit)
        base = _softmax(all_best)[idx]
    else:
        best = np.full(idx.size, NO_DETECTION_LOGIT)
        for pos, frame in enumerate(idx):
            for det in bundle.detections[frame]:
                best[pos] = max(best[pos], det.logit)
        base = _softmax(best)

    if query is None or not query.relations:
        return np.maximum(base, 0.0)

    phrases = {normalize_phrase(t.subject) for t in query.relations}
    phrases |= {normalize_phrase(t.object) for t in query.relations}
    views = {phrase: _PhraseView(bundle, idx, phrase) for phrase in phrases}
    for phrase, view in views.items():
        if not view.present.any():
            logger.warning(
                "relation endpoint %r matches no detection in the scored set; "
                "no bonus awarded", phrase,
            )

    bonus = np.zeros(idx.size)
    frame_numbers = idx.astype(np.float64)
    for triplet in query.relations:
        weight = cfg.relation_weights.get(triplet.relation, 0.0)
        if weight == 0.0:
            continue
        subj = views[normalize_phrase(triplet.subject)]
        obj = views[normalize_phrase(triplet.object)]
        if not (subj.present.any() and obj.present.any()):
            continue
        if triplet.relation in (RelationType.SPATIAL, RelationType.ATTRIBUTE):
            both = subj.present & obj.present
            for pos in np.flatnonzero(both):
                if triplet.relation is RelationType.ATTRIBUTE and not _boxes_overlap(
                    subj.boxes[pos], obj.boxes[pos]
                ):
                    continue
                bonus[pos] += weight * np.sqrt(
                    subj.confidence[pos] * obj.confidence[pos]
                )
        else:  # TIME and CAUSAL: subject strictly before object, within horizon
            horizon_frames = cfg.time_relation_horizon * bundle.fps
            for pos in np.flatnonzero(obj.present):
                earlier = (
                    subj.present
                    & (frame_numbers < frame_numbers[pos])
                    & (frame_numbers[pos] - frame_numbers <= horizon_frames)
                )
                if earlier.any():
                    best_subj = subj.confidence[earlier].max()
                    bonus[pos] += weight * np.sqrt(best_subj * obj.confidence[pos])

    return np.maximum(base + bonus, 0.0)


def _boxes_overlap(boxes_a, boxes_b) -> bool:
    return any(
        _iou(a, b) >= ATTRIBUTE_IOU_THRESHOLD for a in boxes_a for b in boxes_b
    )


def fuse_scores(
    clip: np.ndarray, detection: np.ndarray, fusion_lambda: float
) -> np.ndarray:
    """Element-wise blend ``(1 - lambda) * clip + lambda * detection``."""
    clip = np.asarray(clip, dtype=np.float64)
    detection = np.asarray(detection, dtype=np.float64)
    if clip.shape != detection.shape:
        raise InvalidInput(
            f"score lists must have equal length, got {clip.shape} and "
            f"{detection.shape}"
        )
    if not 0.0 <= fusion_lambda <= 1.0:
        raise InvalidInput("fusion lambda must lie in [0, 1]")
    return (1.0 - fusion_lambda) * clip + fusion_lambda * detection


def diffuse_into(scores: np.ndarray, t: int, score: float, window: int) -> None:
    """Max-merge ``score / (1 + |i - t|)`` into ``scores`` for |i - t| <= window."""
    n = scores.shape[0]
    lo = max(0, t - window)
    hi = min(n - 1, t + window)
    neighbourhood = np.arange(lo, hi + 1)
    decayed = score / (1.0 + np.abs(neighbourhood - t))
    np.maximum(scores[lo : hi + 1], decayed, out=scores[lo : hi + 1])


def temporal_diffusion(
    board: "FrameScoreBoard", t: int, score: float, window: int
) -> "FrameScoreBoard":
    """Propagate ``score`` from frame ``t`` to its window under max-merge.

    Every frame i within ``window`` of t (clipped to the board) is updated
    to ``max(current, score / (1 + |i - t|))``; no entry ever decreases, so
    the update is idempotent and order-independent.
    """
    if not 0 <= t < board.n_frames:
        raise IndexError(f"frame index {t} out of range [0, {board.n_frames})")
    if window < 0:
        raise InvalidInput("diffusion window must be >= 0")
    diffuse_into(board.scores, t, score, window)
    return board
