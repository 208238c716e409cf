"""Shared fixture builders for the test suite."""

import numpy as np
import pytest

from apvr import DetectionRecord, ExpandedQuery, FeatureBundle, RelationTriplet, RelationType

PHRASE_POOL = [
    "person",
    "dog",
    "red clothes",
    "leash",
    "fence",
    "grassy area",
    "car",
    "phone",
    "white skirt",
    "door",
]


def unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    rows = rng.normal(size=(n, dim))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def make_random_bundle(
    rng: np.random.Generator,
    n_frames: int,
    dim: int,
    detection_rate: float = 0.35,
    fps: float = 2.0,
) -> FeatureBundle:
    """Random unit embeddings plus sparse random detections."""
    embeddings = unit_rows(rng, n_frames, dim)
    text_agg = rng.normal(size=dim)
    text_agg /= np.linalg.norm(text_agg)
    detections = []
    for _ in range(n_frames):
        frame = []
        if rng.random() < detection_rate:
            for _ in range(int(rng.integers(1, 4))):
                x = np.sort(rng.uniform(0, 1, 2))
                y = np.sort(rng.uniform(0, 1, 2))
                if x[1] - x[0] < 1e-3 or y[1] - y[0] < 1e-3:
                    continue
                frame.append(
                    DetectionRecord(
                        phrase=str(rng.choice(PHRASE_POOL)),
                        box=(float(x[0]), float(y[0]), float(x[1]), float(y[1])),
                        logit=float(rng.uniform(-6.0, 8.0)),
                    )
                )
        detections.append(frame)
    return FeatureBundle.from_arrays(embeddings, text_agg, fps=fps, detections=detections)


def make_random_query(rng: np.random.Generator) -> ExpandedQuery:
    """Random query whose relation endpoints draw from the phrase pool."""
    phrases = list(rng.permutation(PHRASE_POOL))
    n_key = int(rng.integers(3, 6))
    n_cue = int(rng.integers(2, 5))
    key_objects = phrases[:n_key]
    cue_objects = phrases[n_key : n_key + n_cue]
    endpoints = key_objects + cue_objects
    relations = []
    for _ in range(int(rng.integers(0, 5))):
        a, b = rng.choice(endpoints, size=2, replace=True)
        relations.append(
            RelationTriplet(str(a), rng.choice(list(RelationType)), str(b))
        )
    return ExpandedQuery(
        question="what happens in the clip?",
        key_objects=key_objects,
        cue_objects=cue_objects,
        relations=relations,
        descriptions={key_objects[0]: ["a thing that can be seen"]},
        semantics=["objects tend to co-occur with their context"],
    )


def make_needle_bundle(
    seed: int,
    n_frames: int,
    n_needles: int,
    dim: int,
    stride: int = 4,
    plateau: int = 6,
    tail: int = 16,
) -> tuple[FeatureBundle, list[int]]:
    """Bundle with planted high-similarity frames on fading event bumps.

    Each planted frame has cosine 0.75 against the aggregated text
    embedding; its +-plateau neighbourhood sits at 0.45 and then fades
    linearly back to background level over ``tail`` frames, the way a
    filmed event drifts in and out of view. Background noise stays below
    0.15, so the planted frames hold a 0.3 cosine margin over everything
    else. As a real grounding model would, the detection channel fires
    where the sought object is visible: the planted frame and its
    immediate neighbours carry detections, all other frames none.
    Planted positions avoid the initial stride grid (the uniform first
    pass must not hit them for free) and keep enough separation that
    event bumps never overlap.
    """
    rng = np.random.default_rng(seed)
    min_gap = 2 * (plateau + tail) + 12
    positions: list[int] = []
    attempts = 0
    while len(positions) < n_needles:
        attempts += 1
        if attempts > 100_000:
            raise RuntimeError("could not place needles; loosen the constraints")
        candidate = int(rng.integers(plateau + 2, n_frames - plateau - 2))
        if candidate % stride == 0:
            candidate += 1
        if candidate >= n_frames - plateau - 2:
            continue
        if all(abs(candidate - p) >= min_gap for p in positions):
            positions.append(candidate)
    positions.sort()

    cosines = rng.uniform(0.0, 0.15, n_frames)
    detections: list[list[DetectionRecord]] = [[] for _ in range(n_frames)]
    box = (0.3, 0.3, 0.7, 0.7)
    for p in positions:
        for d in range(plateau + tail, plateau, -1):
            level = 0.45 - 0.30 * (d - plateau) / tail
            for frame in (p - d, p + d):
                if 0 <= frame < n_frames:
                    cosines[frame] = level
        lo, hi = max(0, p - plateau), min(n_frames - 1, p + plateau)
        cosines[lo : hi + 1] = 0.45
        cosines[p] = 0.75
        for offset in range(-2, 3):
            frame = p + offset
            if 0 <= frame < n_frames:
                logit = 6.0 if offset == 0 else 4.0
                detections[frame].append(DetectionRecord("person", box, logit))

    axis = rng.normal(size=dim)
    axis /= np.linalg.norm(axis)
    rest = rng.normal(size=(n_frames, dim))
    rest -= np.outer(rest @ axis, axis)
    rest /= np.linalg.norm(rest, axis=1, keepdims=True)
    embeddings = cosines[:, None] * axis + np.sqrt(1.0 - cosines**2)[:, None] * rest
    bundle = FeatureBundle.from_arrays(
        embeddings, axis, fps=2.0, detections=detections
    )
    return bundle, positions


def make_attention(
    rng: np.random.Generator,
    n_layers: int,
    n_heads: int,
    query_len: int,
    token_len: int,
    frame_map: np.ndarray | None = None,
):
    from apvr import AttentionTensor

    raw = rng.random(size=(n_layers, n_heads, query_len, token_len))
    raw /= raw.sum(axis=-1, keepdims=True)
    return AttentionTensor(values=raw, chunk_frame_map=frame_map)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
