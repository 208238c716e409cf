"""Command-line interface.

Subcommands: expand-render, expand-parse, score, pfr, ptr, pipeline,
validate, config. Exit codes: 0 success, 2 invalid input, 3 format error.
The APVR_LOG environment variable sets log verbosity (DEBUG/INFO/WARNING/
ERROR, default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import build_configs, config_to_mapping, format_defaults, parse_config_file
from .errors import FormatError, InvalidInput, ParseError
from .formats import (
    read_attention,
    read_bundle,
    validate_attention,
    validate_bundle,
    write_json,
)
from .pfr import run_pfr
from .pipeline import run_pipeline
from .ptr import run_ptr
from .query_model import (
    ExpandedQuery,
    parse_expansion_response,
    render_expansion_prompt,
)
from .scoring import clip_scores, detection_scores, fuse_scores

EXIT_OK = 0
EXIT_INVALID_INPUT = 2
EXIT_FORMAT_ERROR = 3


def _setup_logging() -> None:
    level = os.environ.get("APVR_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _load_configs(args):
    overrides = parse_config_file(args.config) if getattr(args, "config", None) else {}
    scoring, pfr, ptr = build_configs(overrides)
    if getattr(args, "seed", None) is not None:
        pfr.rng_seed = args.seed
    return scoring, pfr, ptr


def _load_query(path: str) -> ExpandedQuery:
    return ExpandedQuery.from_json(Path(path).read_text())


def _emit(payload, out: str | None) -> None:
    if out:
        write_json(payload, out)
    else:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")


def _cmd_expand_render(args) -> int:
    prompt = render_expansion_prompt(args.question, args.option)
    if args.out:
        Path(args.out).write_text(prompt)
    else:
        sys.stdout.write(prompt)
    return EXIT_OK


def _cmd_expand_parse(args) -> int:
    text = Path(args.infile).read_text() if args.infile else sys.stdin.read()
    query, warnings = parse_expansion_response(
        text, strict=args.strict, question=args.question or ""
    )
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)
    _emit(query.to_dict(), args.out)
    return EXIT_OK


def _cmd_score(args) -> int:
    scoring, _, _ = _load_configs(args)
    bundle = read_bundle(args.bundle)
    query = _load_query(args.query) if args.query else None
    if args.indices:
        indices = [int(i) for i in args.indices.split(",")]
    else:
        indices = list(range(bundle.n_frames))
    clip = clip_scores(bundle, indices, scoring)
    detection = detection_scores(bundle, indices, query, scoring)
    fused = fuse_scores(clip, detection, scoring.fusion_lambda)
    _emit(
        {
            "frame_indices": indices,
            "clip_scores": [float(s) for s in clip],
            "detection_scores": [float(s) for s in detection],
            "fused_scores": [float(s) for s in fused],
            "lambda": scoring.fusion_lambda,
        },
        args.out,
    )
    return EXIT_OK


def _cmd_pfr(args) -> int:
    scoring, pfr_cfg, ptr_cfg = _load_configs(args)
    bundle = read_bundle(args.bundle)
    query = _load_query(args.query) if args.query else None
    selection = run_pfr(bundle, query, pfr_cfg, n_workers=args.workers)
    payload = selection.to_dict()
    payload["config_echo"] = config_to_mapping(scoring, pfr_cfg, ptr_cfg)
    _emit(payload, args.out)
    return EXIT_OK


def _cmd_ptr(args) -> int:
    scoring, pfr_cfg, ptr_cfg = _load_configs(args)
    tensor = read_attention(args.attn)
    selection = run_ptr(tensor, ptr_cfg, n_workers=args.workers)
    payload = selection.to_dict()
    payload["config_echo"] = config_to_mapping(scoring, pfr_cfg, ptr_cfg)
    _emit(payload, args.out)
    return EXIT_OK


def _cmd_pipeline(args) -> int:
    _, pfr_cfg, ptr_cfg = _load_configs(args)
    expansion_text = None
    query = None
    if args.expansion:
        expansion_text = Path(args.expansion).read_text()
    elif args.query:
        query = _load_query(args.query)
    else:
        raise InvalidInput("pipeline needs --expansion or --query")
    attn = None if not args.attn or args.attn == "none" else args.attn
    result = run_pipeline(
        bundle=args.bundle,
        expansion_text=expansion_text,
        query=query,
        pfr_cfg=pfr_cfg,
        ptr_cfg=ptr_cfg,
        attn_source=attn,
        out_dir=args.out_dir,
        seed=args.seed if args.seed is not None else 0,
        n_workers=args.workers,
    )
    print(
        f"pipeline done: {result.manifest.pivot_frame_count} pivot frames, "
        f"{result.manifest.frames_visited} frames visited"
        + (
            f", token ratios {['%.3f' % r for r in result.manifest.retained_token_ratios]}"
            if result.token_selection
            else ""
        )
    )
    return EXIT_OK


def _cmd_validate(args) -> int:
    if not args.bundle and not args.attn:
        raise InvalidInput("validate needs --bundle and/or --attn")
    if args.bundle:
        summary = validate_bundle(args.bundle)
        print(f"bundle ok: {json.dumps(summary, sort_keys=True)}")
    if args.attn:
        summary = validate_attention(args.attn)
        print(f"attention ok: {json.dumps(summary, sort_keys=True)}")
    return EXIT_OK


def _cmd_config(args) -> int:
    if args.defaults:
        sys.stdout.write(format_defaults())
        return EXIT_OK
    scoring, pfr, ptr = _load_configs(args)
    for key, value in config_to_mapping(scoring, pfr, ptr).items():
        print(f"{key} = {value}")
    return EXIT_OK


def _add_common(parser, config=True, seed=True, workers=False, out=True):
    if config:
        parser.add_argument("--config", help="key-value config file")
    if seed:
        parser.add_argument("--seed", type=int, help="master RNG seed")
    if workers:
        parser.add_argument("--workers", type=int, default=1, help="worker threads")
    if out:
        parser.add_argument("--out", help="output JSON path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="apvr",
        description=(
            "Dual-granularity retrieval: query expansion parsing, adaptive "
            "pivot-frame retrieval, and attention-driven token selection "
            "over precomputed feature artifacts."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("expand-render", help="render the query-expansion prompt")
    p.add_argument("--question", required=True)
    p.add_argument("--option", action="append", default=[],
                   help="answer option, repeatable, in order")
    p.add_argument("--out", help="write prompt here instead of stdout")
    p.set_defaults(func=_cmd_expand_render)

    p = sub.add_parser("expand-parse", help="parse an expansion reply to JSON")
    p.add_argument("--in", dest="infile", help="reply text file (default: stdin)")
    p.add_argument("--question", help="question to attach to the parsed query")
    p.add_argument("--strict", action="store_true",
                   help="reject structural problems instead of warning")
    p.add_argument("--out", help="output JSON path (default: stdout)")
    p.set_defaults(func=_cmd_expand_parse)

    p = sub.add_parser("score", help="score bundle frames against a query")
    p.add_argument("--bundle", required=True)
    p.add_argument("--query", help="expanded-query JSON file")
    p.add_argument("--indices", help="comma-separated frame indices (default: all)")
    _add_common(p, seed=False)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("pfr", help="run pivot-frame retrieval")
    p.add_argument("--bundle", required=True)
    p.add_argument("--query", help="expanded-query JSON file")
    _add_common(p, workers=True)
    p.set_defaults(func=_cmd_pfr)

    p = sub.add_parser("ptr", help="run pivot-token selection")
    p.add_argument("--attn", required=True)
    _add_common(p, seed=False, workers=True)
    p.set_defaults(func=_cmd_ptr)

    p = sub.add_parser("pipeline", help="expansion-parse, then frame and token retrieval")
    p.add_argument("--bundle", required=True)
    p.add_argument("--expansion", help="raw LLM expansion reply text file")
    p.add_argument("--query", help="already-parsed expanded-query JSON file")
    p.add_argument("--attn", help="attention tensor file, or 'none' for a frame-only run")
    p.add_argument("--out-dir", required=True)
    _add_common(p, workers=True, out=False)
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("validate", help="validate binary artifact files")
    p.add_argument("--bundle")
    p.add_argument("--attn")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("config", help="show configuration")
    p.add_argument("--defaults", action="store_true",
                   help="print the complete default config file")
    _add_common(p, seed=False, out=False)
    p.set_defaults(func=_cmd_config)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT_ERROR
    except (InvalidInput, ParseError, IndexError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_INPUT


if __name__ == "__main__":
    sys.exit(main())
