"""Command-line entry point: corpus path in, interchange file out."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .exporter import DEFAULT_MODEL, ExportError, ExportJob, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-exporter",
        description="Encode a corpus file with a sentence encoder and write "
        "the embedding interchange JSON.",
    )
    parser.add_argument("corpus", help="corpus JSON file (format_version 1)")
    parser.add_argument("--model", default=DEFAULT_MODEL, help="encoder name, or hash:<dim> for the offline encoder")
    parser.add_argument("--out", default="embeddings.json", help="output path")
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--deterministic", action="store_true", help="pin deterministic inference mode")
    parser.add_argument("--check-pairs", type=int, default=0, help="also write cosines for N consecutive id pairs")
    return parser


def main(argv: list[str] | None = None) -> None:
    args = build_parser().parse_args(argv)
    job = ExportJob(
        corpus_path=Path(args.corpus),
        model_name=args.model,
        output_path=Path(args.out),
        batch_size=args.batch_size,
        deterministic=args.deterministic,
        check_pairs=args.check_pairs,
    )
    try:
        out = export(job)
    except ExportError as e:
        print(f"error: {e}", file=sys.stderr)
        sys.exit(1)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
