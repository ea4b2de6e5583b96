"""Command-line front end: convert one archive into canonical dataset files.

    pllearn-ingest --source openmic   --input-dir DL/openmic --output-dir data/openmic
    pllearn-ingest --source sonyc-ust --input-dir DL/sonyc   --output-dir data/sonyc

``--threshold`` (OpenMIC only) moves the confidence cut binarizing soft crowd
labels; ``--vote`` (SONYC-UST only) switches annotator aggregation between
``any`` and ``majority``.  The output directory can be fed straight to
``pllearn ingest-validate`` and to experiment configs as ``data_dir``.
"""

from __future__ import annotations

import argparse
import sys

from .manifest import (
    SOURCE_OPENMIC,
    SOURCE_SONYC,
    VALID_SOURCES,
    VALID_VOTES,
    IngestError,
    IngestManifest,
)
from .openmic import convert_openmic
from .sonyc import convert_sonyc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pllearn-ingest",
        description="Convert a published audio-tagging archive into canonical dataset files.",
    )
    parser.add_argument("--source", required=True, choices=VALID_SOURCES,
                        help="archive layout to read")
    parser.add_argument("--input-dir", required=True,
                        help="directory holding the downloaded archive")
    parser.add_argument("--output-dir", required=True,
                        help="directory to write the canonical files into")
    parser.add_argument("--threshold", type=float,
                        help="confidence cut for soft labels (openmic only; default 0.5)")
    parser.add_argument("--vote", choices=VALID_VOTES,
                        help="annotator aggregation rule (sonyc-ust only; default any)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threshold is not None and args.source != SOURCE_OPENMIC:
        print("--threshold applies to --source openmic only", file=sys.stderr)
        return 2
    if args.vote is not None and args.source != SOURCE_SONYC:
        print("--vote applies to --source sonyc-ust only", file=sys.stderr)
        return 2
    try:
        manifest = IngestManifest(
            source_name=args.source,
            input_dir=args.input_dir,
            output_dir=args.output_dir,
            binarization_threshold=0.5 if args.threshold is None else args.threshold,
            vote="any" if args.vote is None else args.vote,
        )
    except ValueError as exc:
        print(f"invalid manifest: {exc}", file=sys.stderr)
        return 2
    convert = convert_openmic if args.source == SOURCE_OPENMIC else convert_sonyc
    try:
        convert(manifest)
    except (IngestError, OSError) as exc:
        print(f"conversion failed: {exc}", file=sys.stderr)
        return 2
    print(f"canonical files written to {manifest.output_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
