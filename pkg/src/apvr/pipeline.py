"""End-to-end orchestration: expansion parse -> frame retrieval -> token pruning.

``run_pipeline`` chains the stages over artifact files, collects a run
manifest (effective config, per-stage seeds and timings, input digests,
warnings), and writes deterministic JSON outputs. All randomness flows
from one master seed; each stage derives its own sub-seed as
``seed + stage ordinal`` so stages can be re-run in isolation.

Outputs are written stage by stage with atomic rename, so a token-stage
failure never corrupts the frame-stage artifacts already on disk.
"""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from .config import config_to_mapping
from .errors import InvalidInput
from .formats import read_attention, read_bundle, sha256_file, write_json
from .pfr import PfrConfig, PivotSelection, run_pfr
from .ptr import PtrConfig, TokenSelection, restrict_to_frames, run_ptr
from .query_model import ExpandedQuery, parse_expansion_response
from .scoring import FeatureBundle

logger = logging.getLogger(__name__)

__all__ = ["STAGE_ORDINALS", "RunManifest", "PipelineResult", "run_pipeline"]

# Sub-seed splitting rule: stage seed = master seed + stage ordinal.
STAGE_ORDINALS = {"expand": 0, "pfr": 1, "ptr": 2}


@dataclass
class RunManifest:
    """Reproducibility record for one pipeline run."""

    seed: int
    n_workers: int
    config: dict[str, str]
    stage_seeds: dict[str, int]
    input_digests: dict[str, str]
    timings_s: dict[str, float] = field(default_factory=dict)
    frames_visited: int = 0
    iterations_run: int = 0
    pivot_frame_count: int = 0
    retained_token_ratios: list[float] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_workers": self.n_workers,
            "config": dict(self.config),
            "stage_seeds": dict(self.stage_seeds),
            "input_digests": dict(self.input_digests),
            "timings_s": dict(self.timings_s),
            "frames_visited": self.frames_visited,
            "iterations_run": self.iterations_run,
            "pivot_frame_count": self.pivot_frame_count,
            "retained_token_ratios": list(self.retained_token_ratios),
            "warnings": list(self.warnings),
        }


@dataclass
class PipelineResult:
    manifest: RunManifest
    query: ExpandedQuery
    pivot_selection: PivotSelection
    token_selection: TokenSelection | None


def _pivot_selection_payload(selection: PivotSelection, config: dict[str, str]) -> dict:
    payload = selection.to_dict()
    payload["config_echo"] = dict(config)
    return payload


def _token_selection_payload(
    selection: TokenSelection,
    kept_tokens,
    total_tokens: int,
    config: dict[str, str],
) -> dict:
    payload = selection.to_dict()
    # Selection indices refer to the restricted token list; report original ids.
    for layer_entry in payload["layers"]:
        layer_entry["retained_indices"] = [
            int(kept_tokens[i]) for i in layer_entry["retained_indices"]
        ]
    payload["restricted_token_count"] = int(len(kept_tokens))
    payload["total_token_count"] = int(total_tokens)
    payload["config_echo"] = dict(config)
    return payload


def run_pipeline(
    bundle: FeatureBundle | str | Path,
    expansion_text: str | None = None,
    query: ExpandedQuery | None = None,
    pfr_cfg: PfrConfig | None = None,
    ptr_cfg: PtrConfig | None = None,
    attn_source: str | Path | None = None,
    out_dir: str | Path | None = None,
    seed: int = 0,
    n_workers: int = 1,
    strict_parse: bool = False,
) -> PipelineResult:
    """Run parse -> frame retrieval -> optional token pruning.

    ``bundle`` and ``attn_source`` may be paths to the binary formats or
    in-memory objects. Provide either raw ``expansion_text`` (parsed here)
    or an already-built ``query``. When ``attn_source`` is None the run is
    frame-retrieval only. When ``out_dir`` is given, stage outputs and the
    manifest are written there as deterministic JSON.
    """
    pfr_cfg = pfr_cfg or PfrConfig()
    ptr_cfg = ptr_cfg or PtrConfig()
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    digests: dict[str, str] = {}
    if isinstance(bundle, (str, Path)):
        digests["bundle"] = sha256_file(bundle)
        bundle = read_bundle(bundle)
    if expansion_text is not None:
        digests["expansion_text"] = hashlib.sha256(
            expansion_text.encode("utf-8")
        ).hexdigest()

    pfr_cfg = replace(pfr_cfg, rng_seed=seed + STAGE_ORDINALS["pfr"])
    manifest = RunManifest(
        seed=seed,
        n_workers=n_workers,
        config=config_to_mapping(pfr_cfg.scoring, pfr_cfg, ptr_cfg),
        stage_seeds={stage: seed + ordinal for stage, ordinal in STAGE_ORDINALS.items()},
        input_digests=digests,
    )

    # Stage: expansion parse
    started = time.perf_counter()
    if query is None:
        if expansion_text is None:
            raise InvalidInput("provide either expansion_text or an ExpandedQuery")
        query, parse_warnings = parse_expansion_response(
            expansion_text, strict=strict_parse
        )
        manifest.warnings.extend(f"expand: {w}" for w in parse_warnings)
    manifest.timings_s["expand"] = time.perf_counter() - started
    if out_dir is not None:
        write_json(query.to_dict(), out_dir / "expanded_query.json")

    # Stage: pivot frame retrieval
    started = time.perf_counter()
    pivot_selection = run_pfr(bundle, query, pfr_cfg, n_workers=n_workers)
    manifest.timings_s["pfr"] = time.perf_counter() - started
    manifest.frames_visited = pivot_selection.frames_visited
    manifest.iterations_run = pivot_selection.iterations_run
    manifest.pivot_frame_count = len(pivot_selection.frame_indices)
    if out_dir is not None:
        write_json(
            _pivot_selection_payload(pivot_selection, manifest.config),
            out_dir / "pfr_selection.json",
        )

    # Stage: pivot token retrieval (optional)
    token_selection = None
    if attn_source is not None:
        started = time.perf_counter()
        if isinstance(attn_source, (str, Path)):
            manifest.input_digests["attention"] = sha256_file(attn_source)
            tensor = read_attention(attn_source)
        else:
            tensor = attn_source
        total_tokens = tensor.token_len
        if tensor.chunk_frame_map is not None:
            tensor, kept_tokens = restrict_to_frames(
                tensor, pivot_selection.frame_indices
            )
        else:
            kept_tokens = list(range(tensor.token_len))
            message = (
                "ptr: attention tensor has no chunk_frame_map; "
                "token selection runs over all tokens"
            )
            logger.warning(message)
            manifest.warnings.append(message)
        token_selection = run_ptr(tensor, ptr_cfg, n_workers=n_workers)
        manifest.timings_s["ptr"] = time.perf_counter() - started
        manifest.retained_token_ratios = token_selection.retained_ratios
        if out_dir is not None:
            write_json(
                _token_selection_payload(
                    token_selection, list(kept_tokens), total_tokens, manifest.config
                ),
                out_dir / "ptr_selection.json",
            )

    if out_dir is not None:
        write_json(manifest.to_dict(), out_dir / "manifest.json")

    return PipelineResult(
        manifest=manifest,
        query=query,
        pivot_selection=pivot_selection,
        token_selection=token_selection,
    )
