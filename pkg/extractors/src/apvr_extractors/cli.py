"""Command-line interface: `apvr-extract bundle` and `apvr-extract attention`.

Flag names mirror the engine CLI (--query, --out, --seed); exit codes too:
0 success, 2 invalid input or job error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import JobError
from .jobs import ExtractionJob, capture_attention, extract_bundle
from .query_io import QueryInfo, load_query

EXIT_OK = 0
EXIT_ERROR = 2


def _setup_logging() -> None:
    level = os.environ.get("APVR_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _job_from_args(args) -> ExtractionJob:
    query = load_query(args.query) if args.query else QueryInfo()
    phrases = None
    if getattr(args, "phrase", None):
        phrases = list(args.phrase)
    return ExtractionJob(
        video=args.video,
        output=args.out,
        query=query,
        fps=args.fps,
        phrases=phrases,
        embed_dim=getattr(args, "embed_dim", 64),
        image_model=getattr(args, "image_model", "hashed"),
        text_model=getattr(args, "text_model", "hashed"),
        grounder=getattr(args, "grounder", "colorblob"),
        host=getattr(args, "host", "synthetic"),
        host_layers=getattr(args, "layers", 4),
        host_heads=getattr(args, "heads", 2),
        tokens_per_frame=getattr(args, "tokens_per_frame", 4),
        seed=args.seed,
    )


def _cmd_bundle(args) -> int:
    summary = extract_bundle(_job_from_args(args))
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _cmd_attention(args) -> int:
    summary = capture_attention(_job_from_args(args))
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="apvr-extract",
        description=(
            "Turn a video plus an expanded query into the retrieval "
            "engine's feature-bundle and attention-tensor artifact files."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--video", required=True,
                       help="video file or directory of frame images")
        p.add_argument("--query", help="expanded-query JSON file")
        p.add_argument("--out", required=True, help="output artifact path")
        p.add_argument("--fps", type=float, default=2.0,
                       help="frame sampling rate (default 2)")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("bundle", help="embeddings + detections -> APVRFB1 file")
    common(p)
    p.add_argument("--phrase", action="append",
                   help="detection phrase, repeatable (default: query key+cue)")
    p.add_argument("--embed-dim", dest="embed_dim", type=int, default=64)
    p.add_argument("--image-model", dest="image_model", default="hashed",
                   help="'hashed[:salt]' or 'clip:<model-id>'")
    p.add_argument("--text-model", dest="text_model", default="hashed",
                   help="'hashed[:salt]' or 'clip:<model-id>'")
    p.add_argument("--grounder", default="colorblob",
                   help="'colorblob' or 'gdino:<model-id>'")
    p.set_defaults(func=_cmd_bundle)

    p = sub.add_parser("attention", help="cross-attention capture -> APVRAT1 file")
    common(p)
    p.add_argument("--host", default="synthetic")
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--tokens-per-frame", dest="tokens_per_frame", type=int,
                   default=4)
    p.set_defaults(func=_cmd_attention)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (JobError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
