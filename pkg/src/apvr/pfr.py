"""Iterative pivot-frame retrieval over a confidence score board.

Round 1 sweeps the video at a fixed stride; each later round halves the
stride schedule (``max(1, stride // p)``) and resamples from a candidate
pool mixing the highest-scoring unvisited frames with frames whose local
score neighbourhood is most uncertain (windowed Shannon entropy above
mean + 0.5 std). Sampled frames are scored with the fused similarity /
detection kernels and their confidence diffused to temporal neighbours, so
a single good hit steers the next round toward its surroundings. After the
final round the top-K frames by board score are returned.

Candidate draws follow a hybrid rule: a fraction ``1 - alpha`` of the draw
budget is multinomial over board scores (with-replacement draws whose
deduplicated support is kept, so high-confidence regions are covered
without wasting budget on repeats), and the rest is uniform over the
not-yet-drawn candidates for exploration. All randomness flows from the
seeded generator passed in, making runs reproducible.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput
from .query_model import ExpandedQuery
from .scoring import (
    FeatureBundle,
    ScoringConfig,
    clip_scores,
    detection_scores,
    diffuse_into,
    fuse_scores,
)

logger = logging.getLogger(__name__)

__all__ = [
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
]

# Probability floor handed to zero-score candidates so the multinomial is
# well-defined on fresh boards.
ZERO_SCORE_FLOOR = 1e-6

ENTROPY_STATS_DOMAINS = ("unvisited", "high_confidence")


class FrameScoreBoard:
    """Per-frame confidence scores plus the visited set.

    Scores start at zero and only ever increase (max-merge diffusion);
    visited flags only ever flip to True.
    """

    def __init__(self, n_frames: int):
        if n_frames < 1:
            raise InvalidInput("score board needs at least one frame")
        self.n_frames = n_frames
        self.scores = np.zeros(n_frames, dtype=np.float64)
        self.visited = np.zeros(n_frames, dtype=bool)

    @property
    def frames_visited(self) -> int:
        return int(self.visited.sum())

    def unvisited_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.visited)

    def mark_visited(self, frame_indices) -> None:
        self.visited[np.asarray(frame_indices, dtype=np.int64)] = True

    def copy(self) -> "FrameScoreBoard":
        out = FrameScoreBoard(self.n_frames)
        out.scores = self.scores.copy()
        out.visited = self.visited.copy()
        return out


@dataclass
class PfrConfig:
    """Retrieval loop knobs.

    ``alpha`` is the uniform-exploration fraction of each resampling draw,
    ``entropy_window`` the half width of the windowed-entropy neighbourhood,
    and ``entropy_stats_domain`` chooses the population whose entropy mean /
    std set the uncertainty threshold ("unvisited" or "high_confidence").
    """

    iterations: int = 3
    initial_stride: int = 4
    top_k: int = 1024
    alpha: float = 0.2
    entropy_window: int = 2
    rng_seed: int = 0
    entropy_stats_domain: str = "unvisited"
    scoring: ScoringConfig = field(default_factory=ScoringConfig)

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidInput("iterations must be >= 1")
        if self.initial_stride < 1:
            raise InvalidInput("initial stride must be >= 1")
        if self.top_k < 1:
            raise InvalidInput("top_k must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidInput("alpha must lie in [0, 1]")
        if self.entropy_window < 1:
            raise InvalidInput("entropy window must be >= 1")
        if self.entropy_stats_domain not in ENTROPY_STATS_DOMAINS:
            raise InvalidInput(
                f"entropy_stats_domain must be one of {ENTROPY_STATS_DOMAINS}"
            )


@dataclass
class PivotSelection:
    """Retrieval output: sorted pivot frame indices and their board scores."""

    frame_indices: list[int]
    final_scores: list[float]
    iterations_run: int
    frames_visited: int

    def to_dict(self) -> dict:
        return {
            "frame_indices": list(self.frame_indices),
            "final_scores": list(self.final_scores),
            "iterations_run": self.iterations_run,
            "frames_visited": self.frames_visited,
        }


def stride_at(p: int, initial_stride: int) -> int:
    """Stride schedule ``max(1, initial_stride // p)`` for iteration p >= 1."""
    if p < 1:
        raise InvalidInput("iteration index must be >= 1")
    if initial_stride < 1:
        raise InvalidInput("initial stride must be >= 1")
    return max(1, initial_stride // p)


def uniform_stride_sample(n_frames: int, stride: int) -> np.ndarray:
    """Indices 0, stride, 2*stride, ... below n_frames."""
    if stride < 1:
        raise InvalidInput("stride must be >= 1")
    if n_frames < 1:
        raise InvalidInput("n_frames must be >= 1")
    return np.arange(0, n_frames, stride, dtype=np.int64)


def high_confidence_set(board: FrameScoreBoard, stride_p: int) -> np.ndarray:
    """Top unvisited frames by score, ceil(N / (2 * stride_p)) of them.

    Capped at the unvisited count; ties broken by lower frame index. Empty
    when every frame has been visited.
    """
    if stride_p < 1:
        raise InvalidInput("stride must be >= 1")
    unvisited = board.unvisited_indices()
    if unvisited.size == 0:
        return unvisited
    k = math.ceil(board.n_frames / (2 * stride_p))
    k = min(k, unvisited.size)
    # Stable argsort on -score keeps ascending-index order among ties.
    order = np.argsort(-board.scores[unvisited], kind="stable")
    return np.sort(unvisited[order[:k]])


def _windowed_entropies(scores: np.ndarray, gamma: int) -> np.ndarray:
    """Windowed Shannon entropy at every position, vectorized.

    For window mass T and per-element masses s_j, the entropy
    ``-sum (s_j/T) ln (s_j/T)`` equals ``ln T - (sum s_j ln s_j) / T``.
    All-zero windows get entropy 0 by convention.
    """
    n = scores.shape[0]
    positions = np.arange(n)
    lo = np.maximum(0, positions - gamma)
    hi = np.minimum(n - 1, positions + gamma)
    cumulative = np.concatenate([[0.0], np.cumsum(scores)])
    slogs = np.where(scores > 0, scores * np.log(np.where(scores > 0, scores, 1.0)), 0.0)
    cumulative_slogs = np.concatenate([[0.0], np.cumsum(slogs)])
    total = cumulative[hi + 1] - cumulative[lo]
    total_slogs = cumulative_slogs[hi + 1] - cumulative_slogs[lo]
    safe_total = np.where(total > 0, total, 1.0)
    return np.where(total > 0, np.log(safe_total) - total_slogs / safe_total, 0.0)


def windowed_entropy(board: FrameScoreBoard, i: int, gamma: int) -> float:
    """Shannon entropy of board scores in the window [i-gamma, i+gamma].

    The window is clipped at the board bounds and normalized to a
    distribution before the entropy is taken (0 * ln 0 = 0); an all-zero
    window has entropy 0 by convention.
    """
    if not 0 <= i < board.n_frames:
        raise IndexError(f"frame index {i} out of range [0, {board.n_frames})")
    if gamma < 0:
        raise InvalidInput("entropy window must be >= 0")
    window = board.scores[max(0, i - gamma) : min(board.n_frames - 1, i + gamma) + 1]
    total = window.sum()
    if total <= 0:
        return 0.0
    positive = window[window > 0]
    return float(np.log(total) - (positive * np.log(positive)).sum() / total)


def uncertainty_set(
    board: FrameScoreBoard, gamma: int, stats_pool: np.ndarray | None = None
) -> np.ndarray:
    """Unvisited frames whose windowed entropy exceeds mean + 0.5 std.

    The mean and std are taken over the unvisited frames' entropies unless
    ``stats_pool`` (an index array) narrows the population. A zero std
    yields the empty set.
    """
    unvisited = board.unvisited_indices()
    if unvisited.size == 0:
        return unvisited
    entropies = _windowed_entropies(board.scores, gamma)
    pool = entropies[unvisited] if stats_pool is None else entropies[stats_pool]
    if pool.size == 0:
        return np.empty(0, dtype=np.int64)
    mu = pool.mean()
    sigma = pool.std()
    if sigma == 0:
        return np.empty(0, dtype=np.int64)
    return unvisited[entropies[unvisited] > mu + 0.5 * sigma]


def _candidate_probs(scores: np.ndarray) -> np.ndarray:
    """Score-proportional draw probabilities with a floor for zeros."""
    positive = scores > 0
    if not positive.any():
        return np.full(scores.size, 1.0 / scores.size)
    n_zero = int(scores.size - positive.sum())
    floor_mass = n_zero * ZERO_SCORE_FLOOR
    if floor_mass >= 1.0:  # enormous all-but-dead pools: fall back to uniform
        return np.full(scores.size, 1.0 / scores.size)
    probs = np.full(scores.size, ZERO_SCORE_FLOOR)
    probs[positive] = scores[positive] / scores[positive].sum() * (1.0 - floor_mass)
    return probs / probs.sum()


def sample_candidates(
    board: FrameScoreBoard,
    stride_p: int,
    alpha: float,
    gamma: int,
    rng: np.random.Generator,
    n_draws: int | None = None,
    entropy_stats_domain: str = "unvisited",
) -> np.ndarray:
    """Hybrid score-proportional / uniform draw from the candidate pool.

    The pool is the union of the high-confidence set and the uncertainty
    set, both over unvisited frames only. Of ``n_draws`` total draws
    (default: pool size), ``round((1 - alpha) * n_draws)`` are multinomial
    over board scores (with replacement; the deduplicated support is kept)
    and the remainder uniform without replacement from the not-yet-drawn
    candidates. Returns sorted unique indices, deterministic per seed.
    """
    if not 0.0 <= alpha <= 1.0:
        raise InvalidInput("alpha must lie in [0, 1]")
    high_conf = high_confidence_set(board, stride_p)
    stats_pool = None if entropy_stats_domain == "unvisited" else high_conf
    uncertain = uncertainty_set(board, gamma, stats_pool=stats_pool)
    candidates = np.union1d(high_conf, uncertain)
    if candidates.size == 0:
        return candidates
    if n_draws is None:
        n_draws = candidates.size
    if n_draws < 1:
        raise InvalidInput("n_draws must be >= 1")

    n_multi = min(n_draws, int(math.floor((1.0 - alpha) * n_draws + 0.5)))
    n_rand = n_draws - n_multi

    chosen_mask = np.zeros(candidates.size, dtype=bool)
    if n_multi > 0:
        probs = _candidate_probs(board.scores[candidates])
        counts = rng.multinomial(n_multi, probs)
        chosen_mask |= counts > 0
    if n_rand > 0:
        remaining = np.flatnonzero(~chosen_mask)
        take = min(n_rand, remaining.size)
        if take > 0:
            extra = rng.choice(remaining, size=take, replace=False)
            chosen_mask[extra] = True
    return candidates[chosen_mask]


def _apply_diffusion(
    board: FrameScoreBoard,
    frames: np.ndarray,
    values: np.ndarray,
    window: int,
    n_workers: int,
) -> None:
    """Diffuse all scored frames into the board, optionally fanned out.

    Workers write into private zero boards merged by element-wise max, so
    the result is identical for any worker count.
    """
    if n_workers <= 1 or frames.size < 2 * n_workers:
        for t, s in zip(frames, values):
            diffuse_into(board.scores, int(t), float(s), window)
        return

    chunks = np.array_split(np.arange(frames.size), n_workers)

    def work(chunk: np.ndarray) -> np.ndarray:
        local = np.zeros(board.n_frames, dtype=np.float64)
        for j in chunk:
            diffuse_into(local, int(frames[j]), float(values[j]), window)
        return local

    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        for local in pool.map(work, chunks):
            np.maximum(board.scores, local, out=board.scores)


def run_pfr(
    bundle: FeatureBundle,
    query: ExpandedQuery | None,
    cfg: PfrConfig | None = None,
    n_workers: int = 1,
) -> PivotSelection:
    """Run the full iterative retrieval loop and return the top-K frames.

    Iteration 1 samples uniformly at the initial stride; later iterations
    draw from the adaptive candidate pool. Every sampled frame is scored
    once (the loop never revisits), its fused score diffused into the
    board, and the frame marked visited. Stops early once every frame has
    been visited. Ties in the final ranking break toward lower indices.
    """
    cfg = cfg or PfrConfig()
    if bundle.n_frames < 1:
        raise InvalidInput("bundle must contain at least one frame")
    n = bundle.n_frames
    top_k = cfg.top_k
    if top_k > n:
        logger.warning("top_k=%d exceeds frame count %d; clamping", top_k, n)
        top_k = n

    board = FrameScoreBoard(n)
    rng = np.random.default_rng(cfg.rng_seed)
    scoring_cfg = cfg.scoring
    iterations_run = 0

    for p in range(1, cfg.iterations + 1):
        if board.frames_visited == n:
            break
        stride_p = stride_at(p, cfg.initial_stride)
        if p == 1:
            sampled = uniform_stride_sample(n, stride_p)
        else:
            sampled = sample_candidates(
                board,
                stride_p,
                cfg.alpha,
                cfg.entropy_window,
                rng,
                entropy_stats_domain=cfg.entropy_stats_domain,
            )
        if sampled.size == 0:
            break
        clip = clip_scores(bundle, sampled, scoring_cfg)
        detection = detection_scores(bundle, sampled, query, scoring_cfg)
        fused = fuse_scores(clip, detection, scoring_cfg.fusion_lambda)
        _apply_diffusion(board, sampled, fused, scoring_cfg.diffusion_window, n_workers)
        board.mark_visited(sampled)
        iterations_run = p

    order = np.argsort(-board.scores, kind="stable")[:top_k]
    chosen = np.sort(order)
    return PivotSelection(
        frame_indices=[int(i) for i in chosen],
        final_scores=[float(s) for s in board.scores[chosen]],
        iterations_run=iterations_run,
        frames_visited=board.frames_visited,
    )
