"""Attention-driven pivot-token selection for per-layer KV-cache pruning.

The input is a cross-attention tensor (layers x heads x query-rows x
visual tokens) captured from a host model; each row is a softmax
distribution over the visual tokens. Per layer, attention is summed over
the query rows to give every token an importance score, the token axis is
cut into W contiguous chunks, and each chunk receives a selection ratio:

* ``eta``: chunk attention mass relative to the heaviest chunk;
* ``rho``: sqrt of the fraction of the chunk's tokens whose score clears
  ``significance_fraction * max_score``, capped at 1;
* ``gamma = rho * eta``: the final keep ratio.

Each chunk then retains its top ``round(gamma * L)`` tokens (never fewer
than ``min_tokens_per_chunk``), ranked either by the head-summed scores or
by head-wise soft voting (per-head softmax within the chunk, summed across
heads, which stops one loud head from dominating). Retained indices are
concatenated in chunk order, so original token order is preserved, and the
same index set applies to a layer's key and value caches.

The module only computes which indices to keep; applying them to a live
cache is the host's job.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput

logger = logging.getLogger(__name__)

__all__ = [
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
]

VOTING_SOFT = "soft"
VOTING_SUM = "sum"
VOTING_MODES = (VOTING_SOFT, VOTING_SUM)

SIGNIFICANCE_SCOPES = ("layer", "chunk")
SOFTVOTE_SCOPES = ("chunk", "layer")

ROW_SUM_TOLERANCE = 1e-4


@dataclass
class AttentionTensor:
    """Cross-attention scores, shape (layers, heads, query_len, token_len).

    Every (layer, head, query-row) slice must be a probability distribution
    over the visual tokens (nonnegative, summing to 1 within 1e-4).
    ``chunk_frame_map`` optionally maps each visual token to its source
    frame index.
    """

    values: np.ndarray
    chunk_frame_map: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 4:
            raise InvalidInput(
                f"attention tensor must be 4-D (layers, heads, query_len, "
                f"token_len), got shape {self.values.shape}"
            )
        if min(self.values.shape) < 1:
            raise InvalidInput("attention tensor axes must all be >= 1")
        if (self.values < 0).any():
            raise InvalidInput("attention scores must be nonnegative")
        row_sums = self.values.sum(axis=-1)
        worst = np.abs(row_sums - 1.0).max()
        if worst > ROW_SUM_TOLERANCE:
            raise InvalidInput(
                f"attention rows must sum to 1 within {ROW_SUM_TOLERANCE} "
                f"(worst deviation {worst:.2e})"
            )
        if self.chunk_frame_map is not None:
            self.chunk_frame_map = np.asarray(self.chunk_frame_map, dtype=np.int64)
            if self.chunk_frame_map.shape != (self.token_len,):
                raise InvalidInput(
                    f"chunk_frame_map length {self.chunk_frame_map.shape} does "
                    f"not match token_len {self.token_len}"
                )

    @property
    def n_layers(self) -> int:
        return self.values.shape[0]

    @property
    def n_heads(self) -> int:
        return self.values.shape[1]

    @property
    def query_len(self) -> int:
        return self.values.shape[2]

    @property
    def token_len(self) -> int:
        return self.values.shape[3]


@dataclass
class PtrConfig:
    """Token-selection knobs.

    ``voting`` is "soft" (per-head within-chunk softmax, summed) or "sum"
    (plain head-summed scores). ``significance_scope`` picks whether the
    significance threshold uses the layer-wide or per-chunk maximum;
    ``softvote_scope`` picks the softmax span for soft voting.
    ``budget_target``, when set, rescales the keep ratios so the expected
    retained fraction of each layer approaches it.
    """

    n_chunks: int = 8
    significance_fraction: float = 0.01
    voting: str = VOTING_SOFT
    min_tokens_per_chunk: int = 1
    significance_scope: str = "layer"
    softvote_scope: str = "chunk"
    budget_target: float | None = None

    def __post_init__(self):
        if self.n_chunks < 1:
            raise InvalidInput("n_chunks must be >= 1")
        if self.significance_fraction < 0:
            raise InvalidInput("significance fraction must be >= 0")
        if self.voting not in VOTING_MODES:
            raise InvalidInput(f"voting must be one of {VOTING_MODES}")
        if self.min_tokens_per_chunk < 0:
            raise InvalidInput("min_tokens_per_chunk must be >= 0")
        if self.significance_scope not in SIGNIFICANCE_SCOPES:
            raise InvalidInput(
                f"significance_scope must be one of {SIGNIFICANCE_SCOPES}"
            )
        if self.softvote_scope not in SOFTVOTE_SCOPES:
            raise InvalidInput(f"softvote_scope must be one of {SOFTVOTE_SCOPES}")
        if self.budget_target is not None and not 0.0 < self.budget_target <= 1.0:
            raise InvalidInput("budget_target must lie in (0, 1]")


@dataclass
class ChunkStats:
    """Per-chunk selection diagnostics for one layer."""

    starts: np.ndarray
    lengths: np.ndarray
    eta: np.ndarray
    rho: np.ndarray
    gamma: np.ndarray
    budgets: np.ndarray | None = None

    def to_dicts(self) -> list[dict]:
        out = []
        for w in range(self.starts.size):
            entry = {
                "start": int(self.starts[w]),
                "length": int(self.lengths[w]),
                "eta": float(self.eta[w]),
                "rho": float(self.rho[w]),
                "gamma": float(self.gamma[w]),
            }
            if self.budgets is not None:
                entry["budget"] = int(self.budgets[w])
            out.append(entry)
        return out


@dataclass
class TokenSelection:
    """Per-layer retained token indices plus chunk diagnostics."""

    per_layer_indices: list[np.ndarray]
    retained_counts: list[int]
    diagnostics: list[ChunkStats]
    n_tokens: int

    @property
    def retained_ratios(self) -> list[float]:
        return [count / self.n_tokens for count in self.retained_counts]

    def to_dict(self) -> dict:
        return {
            "n_tokens": self.n_tokens,
            "layers": [
                {
                    "layer": layer,
                    "retained_indices": [int(i) for i in indices],
                    "retained_count": self.retained_counts[layer],
                    "retained_ratio": self.retained_counts[layer] / self.n_tokens,
                    "chunks": self.diagnostics[layer].to_dicts(),
                }
                for layer, indices in enumerate(self.per_layer_indices)
            ],
        }


def compute_cross_attention(q_text: np.ndarray, k_vis: np.ndarray) -> np.ndarray:
    """Row-softmax of ``q_text @ k_vis.T / sqrt(d)``.

    Provided for synthetic tests and hosts that expose raw query/key states
    instead of attention maps. Returns a (query_len, token_len) matrix
    whose rows sum to 1.
    """
    q = np.asarray(q_text, dtype=np.float64)
    k = np.asarray(k_vis, dtype=np.float64)
    if q.ndim != 2 or k.ndim != 2 or q.shape[1] != k.shape[1] or q.shape[1] < 1:
        raise InvalidInput(
            f"need (query_len, d) and (token_len, d) with matching d >= 1, "
            f"got {q.shape} and {k.shape}"
        )
    logits = q @ k.T / math.sqrt(q.shape[1])
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    return weights / weights.sum(axis=1, keepdims=True)


def aggregate_attention(tensor: AttentionTensor, layer: int) -> np.ndarray:
    """Per-head token scores: attention summed over the query rows.

    Returns an (n_heads, token_len) matrix; each head row sums to the
    query length since every attention row is a distribution.
    """
    if not 0 <= layer < tensor.n_layers:
        raise IndexError(f"layer {layer} out of range [0, {tensor.n_layers})")
    return tensor.values[layer].sum(axis=1)


def _chunk_bounds(n_tokens: int, n_chunks: int) -> tuple[np.ndarray, np.ndarray]:
    """Contiguous chunk starts and lengths; sizes differ by at most one."""
    lengths = np.full(n_chunks, n_tokens // n_chunks, dtype=np.int64)
    lengths[: n_tokens % n_chunks] += 1
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    return starts, lengths


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def chunk_ratios(
    scores: np.ndarray,
    n_chunks: int,
    significance_fraction: float = 0.01,
    significance_scope: str = "layer",
) -> ChunkStats:
    """Selection ratios eta, rho, gamma for W contiguous token chunks.

    ``scores`` is the head-summed token score vector of one layer. When all
    scores are zero, eta falls back to the uniform 1/W with a warning
    instead of dividing by zero.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1:
        raise InvalidInput("token scores must be a 1-D vector")
    if (scores < 0).any():
        raise InvalidInput("token scores must be nonnegative")
    if not 1 <= n_chunks <= scores.size:
        raise InvalidInput(
            f"n_chunks must lie in [1, {scores.size}], got {n_chunks}"
        )
    if significance_scope not in SIGNIFICANCE_SCOPES:
        raise InvalidInput(f"significance_scope must be one of {SIGNIFICANCE_SCOPES}")

    starts, lengths = _chunk_bounds(scores.size, n_chunks)
    sums = np.add.reduceat(scores, starts)
    max_sum = sums.max()
    if max_sum <= 0:
        logger.warning("all token scores are zero; using uniform base ratios")
        eta = np.full(n_chunks, 1.0 / n_chunks)
    else:
        eta = sums / max_sum

    global_max = scores.max()
    counts = np.empty(n_chunks, dtype=np.int64)
    for w in range(n_chunks):
        chunk = scores[starts[w] : starts[w] + lengths[w]]
        reference = global_max if significance_scope == "layer" else chunk.max()
        counts[w] = int(np.count_nonzero(chunk > significance_fraction * reference))
    rho = np.minimum(1.0, np.sqrt(counts / lengths))
    return ChunkStats(starts=starts, lengths=lengths, eta=eta, rho=rho, gamma=rho * eta)


def head_soft_vote(per_head_scores: np.ndarray) -> np.ndarray:
    """Per-head softmax over the given token span, summed across heads.

    Scores enter a softmax head by head, so every head casts one unit of
    vote mass regardless of its raw magnitude; an additive shift of any
    single head leaves its vote unchanged.
    """
    scores = np.asarray(per_head_scores, dtype=np.float64)
    shifted = scores - scores.max(axis=1, keepdims=True)
    weights = np.exp(shifted)
    return (weights / weights.sum(axis=1, keepdims=True)).sum(axis=0)


def select_layer_tokens(
    per_head_scores: np.ndarray, cfg: PtrConfig | None = None
) -> tuple[np.ndarray, ChunkStats]:
    """Retained token indices for one layer, plus chunk diagnostics.

    Chunk budgets always come from the head-summed score vector so they do
    not depend on the voting mode; only the within-chunk ranking changes
    between head-sum and soft voting.
    """
    cfg = cfg or PtrConfig()
    scores = np.asarray(per_head_scores, dtype=np.float64)
    if scores.ndim != 2:
        raise InvalidInput(
            f"per-head scores must be (n_heads, token_len), got {scores.shape}"
        )
    n_tokens = scores.shape[1]
    n_chunks = cfg.n_chunks
    if n_chunks > n_tokens:
        logger.warning(
            "n_chunks=%d exceeds token count %d; clamping", n_chunks, n_tokens
        )
        n_chunks = n_tokens

    head_summed = scores.sum(axis=0)
    stats = chunk_ratios(
        head_summed, n_chunks, cfg.significance_fraction, cfg.significance_scope
    )

    gamma = stats.gamma
    if cfg.budget_target is not None:
        planned = float((gamma * stats.lengths).sum())
        if planned > 0:
            gamma = np.minimum(1.0, gamma * cfg.budget_target * n_tokens / planned)

    if cfg.voting == VOTING_SOFT and cfg.softvote_scope == "layer":
        layer_soft = head_soft_vote(scores)

    budgets = np.empty(n_chunks, dtype=np.int64)
    retained: list[np.ndarray] = []
    for w in range(n_chunks):
        start, length = int(stats.starts[w]), int(stats.lengths[w])
        budget = _round_half_up(gamma[w] * length)
        budget = min(length, max(budget, cfg.min_tokens_per_chunk))
        budgets[w] = budget
        if budget == 0:
            continue
        if cfg.voting == VOTING_SUM:
            merged = head_summed[start : start + length]
        elif cfg.softvote_scope == "layer":
            merged = layer_soft[start : start + length]
        else:
            merged = head_soft_vote(scores[:, start : start + length])
        order = np.argsort(-merged, kind="stable")[:budget]
        retained.append(start + np.sort(order))

    stats.budgets = budgets
    indices = (
        np.concatenate(retained) if retained else np.empty(0, dtype=np.int64)
    )
    return indices, stats


def run_ptr(
    tensor: AttentionTensor, cfg: PtrConfig | None = None, n_workers: int = 1
) -> TokenSelection:
    """Select retained token indices independently for every layer.

    Layers are independent, so they may be processed by a worker pool;
    results are assembled by layer index and identical at any parallelism.
    """
    cfg = cfg or PtrConfig()

    def one_layer(layer: int) -> tuple[np.ndarray, ChunkStats]:
        return select_layer_tokens(aggregate_attention(tensor, layer), cfg)

    layers = range(tensor.n_layers)
    if n_workers <= 1 or tensor.n_layers == 1:
        results = [one_layer(layer) for layer in layers]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(one_layer, layers))

    return TokenSelection(
        per_layer_indices=[indices for indices, _ in results],
        retained_counts=[int(indices.size) for indices, _ in results],
        diagnostics=[stats for _, stats in results],
        n_tokens=tensor.token_len,
    )


def restrict_to_frames(
    tensor: AttentionTensor, frame_indices
) -> tuple[AttentionTensor, np.ndarray]:
    """Keep only the visual tokens whose source frame is in ``frame_indices``.

    Requires a populated ``chunk_frame_map``. Attention rows are
    renormalized over the surviving token span (rows left with zero mass
    become uniform). Returns the restricted tensor and the kept tokens'
    original indices, for mapping selections back.
    """
    if tensor.chunk_frame_map is None:
        raise InvalidInput("attention tensor has no chunk_frame_map to restrict by")
    keep_frames = set(int(f) for f in frame_indices)
    kept = np.flatnonzero(np.isin(tensor.chunk_frame_map, sorted(keep_frames)))
    if kept.size == 0:
        raise InvalidInput("no visual tokens map to the requested frames")
    values = tensor.values[:, :, :, kept]
    sums = values.sum(axis=-1, keepdims=True)
    uniform = 1.0 / kept.size
    values = np.where(sums > 0, values / np.where(sums > 0, sums, 1.0), uniform)
    restricted = AttentionTensor(
        values=values, chunk_frame_map=tensor.chunk_frame_map[kept]
    )
    return restricted, kept
