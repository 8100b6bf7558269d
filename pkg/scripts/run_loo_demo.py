#!/usr/bin/env python3
"""Leave-one-out demo over the shipped synthetic corpus.

Runs every offline strategy (the four threshold strategies plus the
TF-IDF, LSI, and indicator baselines) with the hash embedding provider and
prints the pooled link-level table. Pass --with-lda to add the LDA
baseline (slower). Outputs land in out/loo-demo/.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from tracelink.cli import dispatch


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--with-lda", action="store_true")
    parser.add_argument("--seed", type=int, default=16)
    parser.add_argument("--dim", type=int, default=256)
    parser.add_argument("--out-dir", default="out/loo-demo")
    args = parser.parse_args()

    strategies = "constant,dynamic,delta,tuned,tfidf,lsi,indicator"
    if args.with_lda:
        strategies += ",lda"
    return dispatch(
        [
            "loo",
            "--corpus",
            str(ROOT / "fixtures" / "corpus.json"),
            "--strategies",
            strategies,
            "--dim",
            str(args.dim),
            "--seed",
            str(args.seed),
            "--out-dir",
            args.out_dir,
        ]
    )


if __name__ == "__main__":
    sys.exit(main())
