#!/usr/bin/env python3
"""Regenerate the checked-in golden files from the fixtures.

Run from the repo root. Goldens are reviewed by hand before being frozen;
tests compare against the committed bytes, so regenerating after an
intentional behavior change is an explicit, reviewable act.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from tracelink import corpus as corpus_mod
from tracelink import embeddings as emb
from tracelink import linker
from tracelink import prompting

GOLDEN = ROOT / "fixtures" / "golden"


def main() -> None:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    corpus = corpus_mod.load_corpus(ROOT / "fixtures" / "corpus.json")
    examples = [
        prompting.FewShotExample(
            requirement_text=e["requirement_text"],
            codes=frozenset(e["codes"]),
            rationale=e["rationale"],
        )
        for e in json.loads((ROOT / "fixtures" / "examples.json").read_text())
    ]
    req = corpus.requirements[0]
    prov = corpus.catalog[0]

    (GOLDEN / "rice_prompt.txt").write_text(
        prompting.build_rice_prompt(corpus.catalog, examples, req), encoding="utf-8"
    )
    braced = corpus_mod.Requirement(
        id="BRACE-R1",
        text="The {system} shall log every access to {personal_data} fields.",
        doc_id="D1",
    )
    (GOLDEN / "rice_prompt_braces.txt").write_text(
        prompting.build_rice_prompt(corpus.catalog, examples, braced), encoding="utf-8"
    )
    (GOLDEN / "p1_prompt.txt").write_text(
        prompting.build_p1_prompt(req, prov), encoding="utf-8"
    )
    (GOLDEN / "p2_prompt.txt").write_text(
        prompting.build_p2_prompt(req, corpus.catalog), encoding="utf-8"
    )
    (GOLDEN / "p3_1_prompt.txt").write_text(
        prompting.build_p3_prompt(prompting.PromptVariant.P3_1, req, prov),
        encoding="utf-8",
    )
    (GOLDEN / "p3_2_prompt.txt").write_text(
        prompting.build_p3_prompt(prompting.PromptVariant.P3_2, req, prov),
        encoding="utf-8",
    )

    vector = emb.hash_embed("The system shall log every access attempt.", 64, 7)
    (GOLDEN / "hash_embed_dim64_seed7.json").write_text(
        json.dumps([float(x) for x in vector]) + "\n", encoding="utf-8"
    )

    sentences = corpus_mod.split_sentences(
        "e.g. the system logs in. Done. Art. 5 applies here! Is it over? Yes."
    )
    (GOLDEN / "sentences.json").write_text(
        json.dumps(sentences, indent=2) + "\n", encoding="utf-8"
    )
    tokens = corpus_mod.tokenize("The user's GDPR-compliant data (v2.1) isn't lost.")
    (GOLDEN / "tokens.json").write_text(
        json.dumps(tokens, indent=2) + "\n", encoding="utf-8"
    )
    stems = {
        w: corpus_mod.normalize([w], corpus_mod.PreprocessConfig(stem=True))[0]
        for w in [
            "processing", "processes", "notifications", "erasure",
            "collected", "portability", "security", "rectify",
        ]
    }
    (GOLDEN / "stems.json").write_text(
        json.dumps(stems, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    # Worked delta example row plus a second generic row.
    matrix = emb.SimilarityMatrix(
        req_ids=("REQ-A", "REQ-B"),
        prov_codes=("C1", "C2", "C3", "C4"),
        scores=[[0.98, 0.1, 0.3, 0.7], [0.2, 0.9, 0.85, 0.1]],
    )
    emb.save_matrix(matrix, ROOT / "fixtures" / "delta_matrix.json")

    # 200-point sweep curve over the fixture corpus (hash provider).
    from tracelink import pipeline

    surfaces, _ = pipeline.hash_similarity_surfaces(corpus, dim=256, seed=16)
    gt = {rid: corpus.ground_truth.codes_for(rid) for rid in surfaces.req_matrix.req_ids}
    curve = linker.sweep_thresholds(surfaces.req_matrix, gt, 200)
    (GOLDEN / "sweep_200.csv").write_text(
        "theta,f2\n" + "".join(f"{t!r},{f!r}\n" for t, f in curve.points),
        encoding="utf-8",
    )
    print(f"wrote goldens to {GOLDEN}")


if __name__ == "__main__":
    main()
