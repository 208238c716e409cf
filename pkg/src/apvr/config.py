"""Flat key-value configuration for all engine knobs.

Config files are plain text: one ``key = value`` per line, ``#`` starts a
comment, blank lines ignored. Keys are namespaced by module
(``scoring.``, ``pfr.``, ``ptr.``); unknown keys are rejected so typos
fail loudly. ``format_defaults()`` prints the complete round-trippable
default file (also exposed via ``apvr config --defaults``).
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

from .errors import InvalidInput
from .pfr import ENTROPY_STATS_DOMAINS, PfrConfig
from .ptr import SIGNIFICANCE_SCOPES, SOFTVOTE_SCOPES, VOTING_MODES, PtrConfig
from .query_model import RelationType
from .scoring import ScoringConfig

__all__ = [
    "parse_config_file",
    "build_configs",
    "config_to_mapping",
    "format_defaults",
    "KNOWN_KEYS",
]


def _bool_str(value: bool) -> str:
    return "true" if value else "false"


def _parse_bool(key: str, value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise InvalidInput(f"config key {key!r}: expected a boolean, got {value!r}")


def _parse_int(key: str, value: str) -> int:
    try:
        return int(value.strip())
    except ValueError:
        raise InvalidInput(f"config key {key!r}: expected an integer, got {value!r}")


def _parse_float(key: str, value: str) -> float:
    try:
        return float(value.strip())
    except ValueError:
        raise InvalidInput(f"config key {key!r}: expected a number, got {value!r}")


def _parse_choice(key: str, value: str, choices) -> str:
    lowered = value.strip().lower()
    if lowered not in choices:
        raise InvalidInput(
            f"config key {key!r}: expected one of {tuple(choices)}, got {value!r}"
        )
    return lowered


_RELATION_KEYS = {f"scoring.relation_weight.{r.value}": r for r in RelationType}

KNOWN_KEYS = (
    "scoring.tau",
    "scoring.lambda",
    *sorted(_RELATION_KEYS),
    "scoring.diffusion_window",
    "scoring.time_relation_horizon",
    "scoring.global_softmax",
    "pfr.iterations",
    "pfr.initial_stride",
    "pfr.top_k",
    "pfr.alpha",
    "pfr.entropy_window",
    "pfr.rng_seed",
    "pfr.entropy_stats_domain",
    "ptr.n_chunks",
    "ptr.significance_fraction",
    "ptr.voting",
    "ptr.min_tokens_per_chunk",
    "ptr.significance_scope",
    "ptr.softvote_scope",
    "ptr.budget_target",
)


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Read a key-value config file into a raw string mapping."""
    overrides: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise InvalidInput(
                f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}"
            )
        key = key.strip()
        if key not in KNOWN_KEYS:
            raise InvalidInput(f"{path}:{lineno}: unknown config key {key!r}")
        overrides[key] = value.strip()
    return overrides


def build_configs(
    overrides: Mapping[str, str] | None = None,
) -> tuple[ScoringConfig, PfrConfig, PtrConfig]:
    """Materialize the three config objects from string overrides.

    Values not overridden keep their defaults; the dataclasses run their
    own invariant validation on construction.
    """
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(KNOWN_KEYS)
    if unknown:
        raise InvalidInput(f"unknown config keys: {sorted(unknown)}")

    def pop(key: str) -> str | None:
        return overrides.pop(key, None)

    scoring_kwargs = {}
    if (v := pop("scoring.tau")) is not None:
        scoring_kwargs["tau"] = _parse_float("scoring.tau", v)
    if (v := pop("scoring.lambda")) is not None:
        scoring_kwargs["fusion_lambda"] = _parse_float("scoring.lambda", v)
    weights = {r: 0.25 for r in RelationType}
    weights_touched = False
    for key, relation in _RELATION_KEYS.items():
        if (v := pop(key)) is not None:
            weights[relation] = _parse_float(key, v)
            weights_touched = True
    if weights_touched:
        scoring_kwargs["relation_weights"] = weights
    if (v := pop("scoring.diffusion_window")) is not None:
        scoring_kwargs["diffusion_window"] = _parse_int("scoring.diffusion_window", v)
    if (v := pop("scoring.time_relation_horizon")) is not None:
        scoring_kwargs["time_relation_horizon"] = _parse_float(
            "scoring.time_relation_horizon", v
        )
    if (v := pop("scoring.global_softmax")) is not None:
        scoring_kwargs["global_softmax"] = _parse_bool("scoring.global_softmax", v)
    scoring = ScoringConfig(**scoring_kwargs)

    pfr_kwargs = {"scoring": scoring}
    if (v := pop("pfr.iterations")) is not None:
        pfr_kwargs["iterations"] = _parse_int("pfr.iterations", v)
    if (v := pop("pfr.initial_stride")) is not None:
        pfr_kwargs["initial_stride"] = _parse_int("pfr.initial_stride", v)
    if (v := pop("pfr.top_k")) is not None:
        pfr_kwargs["top_k"] = _parse_int("pfr.top_k", v)
    if (v := pop("pfr.alpha")) is not None:
        pfr_kwargs["alpha"] = _parse_float("pfr.alpha", v)
    if (v := pop("pfr.entropy_window")) is not None:
        pfr_kwargs["entropy_window"] = _parse_int("pfr.entropy_window", v)
    if (v := pop("pfr.rng_seed")) is not None:
        pfr_kwargs["rng_seed"] = _parse_int("pfr.rng_seed", v)
    if (v := pop("pfr.entropy_stats_domain")) is not None:
        pfr_kwargs["entropy_stats_domain"] = _parse_choice(
            "pfr.entropy_stats_domain", v, ENTROPY_STATS_DOMAINS
        )
    pfr = PfrConfig(**pfr_kwargs)

    ptr_kwargs = {}
    if (v := pop("ptr.n_chunks")) is not None:
        ptr_kwargs["n_chunks"] = _parse_int("ptr.n_chunks", v)
    if (v := pop("ptr.significance_fraction")) is not None:
        ptr_kwargs["significance_fraction"] = _parse_float(
            "ptr.significance_fraction", v
        )
    if (v := pop("ptr.voting")) is not None:
        ptr_kwargs["voting"] = _parse_choice("ptr.voting", v, VOTING_MODES)
    if (v := pop("ptr.min_tokens_per_chunk")) is not None:
        ptr_kwargs["min_tokens_per_chunk"] = _parse_int("ptr.min_tokens_per_chunk", v)
    if (v := pop("ptr.significance_scope")) is not None:
        ptr_kwargs["significance_scope"] = _parse_choice(
            "ptr.significance_scope", v, SIGNIFICANCE_SCOPES
        )
    if (v := pop("ptr.softvote_scope")) is not None:
        ptr_kwargs["softvote_scope"] = _parse_choice(
            "ptr.softvote_scope", v, SOFTVOTE_SCOPES
        )
    if (v := pop("ptr.budget_target")) is not None:
        ptr_kwargs["budget_target"] = (
            None if v.strip().lower() == "none" else _parse_float("ptr.budget_target", v)
        )
    ptr = PtrConfig(**ptr_kwargs)

    return scoring, pfr, ptr


def config_to_mapping(
    scoring: ScoringConfig, pfr: PfrConfig, ptr: PtrConfig
) -> dict[str, str]:
    """Flatten effective config values; every knob appears exactly once."""
    mapping = {
        "scoring.tau": repr(scoring.tau),
        "scoring.lambda": repr(scoring.fusion_lambda),
        "scoring.diffusion_window": str(scoring.diffusion_window),
        "scoring.time_relation_horizon": repr(scoring.time_relation_horizon),
        "scoring.global_softmax": _bool_str(scoring.global_softmax),
        "pfr.iterations": str(pfr.iterations),
        "pfr.initial_stride": str(pfr.initial_stride),
        "pfr.top_k": str(pfr.top_k),
        "pfr.alpha": repr(pfr.alpha),
        "pfr.entropy_window": str(pfr.entropy_window),
        "pfr.rng_seed": str(pfr.rng_seed),
        "pfr.entropy_stats_domain": pfr.entropy_stats_domain,
        "ptr.n_chunks": str(ptr.n_chunks),
        "ptr.significance_fraction": repr(ptr.significance_fraction),
        "ptr.voting": ptr.voting,
        "ptr.min_tokens_per_chunk": str(ptr.min_tokens_per_chunk),
        "ptr.significance_scope": ptr.significance_scope,
        "ptr.softvote_scope": ptr.softvote_scope,
        "ptr.budget_target": (
            "none" if ptr.budget_target is None else repr(ptr.budget_target)
        ),
    }
    for key, relation in _RELATION_KEYS.items():
        mapping[key] = repr(scoring.relation_weights[relation])
    return {key: mapping[key] for key in KNOWN_KEYS}


def format_defaults() -> str:
    """The complete default configuration as a loadable config file."""
    scoring, pfr, ptr = build_configs({})
    lines = ["# Engine defaults; every knob the engine accepts, one per line."]
    section = None
    for key, value in config_to_mapping(scoring, pfr, ptr).items():
        prefix = key.split(".", 1)[0]
        if prefix != section:
            section = prefix
            lines.append("")
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
