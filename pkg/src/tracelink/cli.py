"""Command-line surface.

Subcommands: validate, embed, similarity, predict, prompt, evaluate,
sweep, loo, rank-models, fisher. Machine outputs are files under
--out-dir; stdout carries a short human summary; every run writes one
manifest. Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import corpus as corpus_mod
from . import embeddings as emb
from . import evaluation as ev
from . import linker
from . import pipeline
from . import prompting
from .manifest import RunManifest

DEFAULT_SEED = 16


class CliError(ValueError):
    pass


def _fmt_pct(value) -> str:
    return "nan" if value is None else f"{100.0 * value:.1f}"


def _load_examples(path: Path) -> list[prompting.FewShotExample]:
    data = json.loads(path.read_text(encoding="utf-8"))
    return [
        prompting.FewShotExample(
            requirement_text=e["requirement_text"],
            codes=frozenset(e["codes"]),
            rationale=e["rationale"],
        )
        for e in data
    ]


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _parse_provider_spec(spec: str):
    parts = spec.split(":")
    if parts[0] == "hash" and len(parts) == 3:
        return ("hash", int(parts[1]), int(parts[2]))
    if parts[0] == "file" and len(parts) >= 3:
        return ("file", parts[1], ":".join(parts[2:]))
    raise CliError(
        f"bad model spec '{spec}' (expected hash:<dim>:<seed> or file:<tag>:<path>)"
    )


def _embeddings_for(args, corpus, units):
    if args.provider == "hash":
        req_set = emb.hash_embed_set(
            [(uid, text) for uid, _, text in units], args.dim, args.seed
        )
        prov_set = emb.hash_embed_set(
            [(p.code, corpus_mod.provision_text(p)) for p in corpus.catalog],
            args.dim,
            args.seed,
        )
        return req_set, prov_set
    if args.provider == "file":
        if not args.embeddings:
            raise CliError("--provider file requires --embeddings")
        loaded = emb.load_embedding_set(args.embeddings)
        req_set = loaded.restrict([uid for uid, _, _ in units])
        prov_set = loaded.restrict([p.code for p in corpus.catalog])
        return req_set, prov_set
    if args.provider == "http":
        if not args.endpoint:
            raise CliError("--provider http requires --endpoint")
        config = emb.HttpProviderConfig(
            endpoint_url=args.endpoint,
            model_name=args.model,
            batch_size=args.batch_size,
        )
        req_set = emb.fetch_embeddings(config, [(uid, text) for uid, _, text in units])
        prov_set = emb.fetch_embeddings(
            config,
            [(p.code, corpus_mod.provision_text(p)) for p in corpus.catalog],
        )
        return req_set, prov_set
    raise CliError(f"unknown provider '{args.provider}'")


def _cmd_validate(args) -> int:
    manifest = RunManifest(command=["validate", str(args.corpus)], config={}).start()
    corpus = corpus_mod.load_corpus(args.corpus)
    manifest.add_input(args.corpus)
    n_req = len(corpus.requirements)
    n_links = sum(len(c) for c in corpus.ground_truth.links.values())
    summary = {
        "documents": len(corpus.documents),
        "requirements": n_req,
        "provisions": len(corpus.catalog),
        "links": n_links,
        "valid": True,
    }
    out_dir = Path(args.out_dir)
    _write_json(out_dir / "validation.json", summary)
    manifest.add_output(out_dir / "validation.json")
    manifest.write(out_dir)
    print(
        f"OK: {summary['documents']} documents, {n_req} requirements, "
        f"{summary['provisions']} provisions, {n_links} links"
    )
    return 0


def _cmd_embed(args) -> int:
    manifest = RunManifest(
        command=["embed"],
        config={
            "corpus": str(args.corpus),
            "provider": args.provider,
            "dim": args.dim,
            "seed": args.seed,
            "split_sentences": not args.no_split,
        },
    ).start()
    corpus = corpus_mod.load_corpus(args.corpus)
    manifest.add_input(args.corpus)
    units = corpus_mod.requirement_units(corpus, split=not args.no_split)
    req_set, prov_set = _embeddings_for(args, corpus, units)
    if req_set.dim != prov_set.dim:
        raise CliError("requirement and provision embeddings disagree on dim")
    overlap = set(req_set.vectors) & set(prov_set.vectors)
    if overlap:
        raise CliError(f"requirement ids collide with provision codes: {sorted(overlap)}")
    merged = emb.EmbeddingSet(
        dim=req_set.dim,
        provider_tag=req_set.provider_tag,
        vectors={**req_set.vectors, **prov_set.vectors},
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "embeddings.json"
    emb.save_embedding_set(merged, out_path)
    manifest.add_output(out_path)
    manifest.write(out_dir)
    print(f"wrote {len(merged.vectors)} vectors (dim {merged.dim}) to {out_path}")
    return 0


def _cmd_similarity(args) -> int:
    manifest = RunManifest(
        command=["similarity"],
        config={
            "corpus": str(args.corpus),
            "provider": args.provider,
            "dim": args.dim,
            "seed": args.seed,
            "split_sentences": not args.no_split,
        },
    ).start()
    corpus = corpus_mod.load_corpus(args.corpus)
    manifest.add_input(args.corpus)
    units = corpus_mod.requirement_units(corpus, split=not args.no_split)
    req_set, prov_set = _embeddings_for(args, corpus, units)
    if args.embeddings:
        manifest.add_input(args.embeddings)
    matrix = emb.build_similarity_matrix(req_set, prov_set)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "matrix.json"
    emb.save_matrix(matrix, out_path)
    manifest.add_output(out_path)
    manifest.write(out_dir)
    print(
        f"wrote {len(matrix.req_ids)}x{len(matrix.prov_codes)} similarity matrix to {out_path}"
    )
    return 0


def _baseline_surfaces(args, corpus, fit_ids, score_ids):
    builders = {
        "tfidf": lambda: pipeline.tfidf_surfaces(corpus, fit_ids, score_ids),
        "lsi": lambda: pipeline.lsi_surfaces(
            corpus, fit_ids, score_ids, k=None if args.k == "auto" else int(args.k)
        ),
        "lda": lambda: pipeline.lda_surfaces(
            corpus, fit_ids, score_ids, topics=args.topics, seed=args.seed
        ),
        "indicator": lambda: pipeline.indicator_surfaces(corpus, fit_ids, score_ids),
    }
    return builders[args.strategy]()


def _cmd_predict(args) -> int:
    manifest = RunManifest(
        command=["predict"],
        config={
            "strategy": args.strategy,
            "theta": args.theta,
            "seed": args.seed,
            "corpus": str(args.corpus) if args.corpus else None,
            "matrix": str(args.matrix) if args.matrix else None,
            "train_docs": args.train_docs,
        },
    ).start()
    out_dir = Path(args.out_dir)

    if args.matrix:
        manifest.add_input(args.matrix)
        matrix = emb.load_matrix(args.matrix)
        if args.strategy == "constant":
            pred = linker.predict_constant(matrix, args.theta)
        elif args.strategy == "delta":
            pred = linker.predict_delta(matrix)
        else:
            raise CliError(
                "--matrix supports only constant and delta strategies "
                "(others need a corpus)"
            )
        pred = linker.union_to_requirements(pred)
    else:
        if not args.corpus:
            raise CliError("predict needs --corpus or --matrix")
        if args.provider != "hash":
            raise CliError(
                "predict computes scores with the hash provider; for other "
                "providers build a matrix first (similarity) and pass --matrix"
            )
        corpus = corpus_mod.load_corpus(args.corpus)
        manifest.add_input(args.corpus)
        doc_ids = [d.id for d in corpus.documents]
        train_ids = args.train_docs.split(",") if args.train_docs else []
        score_ids = [d for d in doc_ids if d not in train_ids] if train_ids else doc_ids
        if args.strategy in ("dynamic", "tuned") and not train_ids:
            raise CliError(f"strategy '{args.strategy}' requires --train-docs")
        if args.strategy in ("constant", "delta", "dynamic", "tuned"):
            surfaces, req_set = pipeline.hash_similarity_surfaces(
                corpus, args.dim, args.seed, doc_ids=score_ids, split=not args.no_split
            )
            if args.strategy == "constant":
                pred = linker.union_to_requirements(
                    linker.predict_constant(surfaces.unit_matrix, args.theta)
                )
            elif args.strategy == "delta":
                pred = linker.union_to_requirements(
                    linker.predict_delta(surfaces.unit_matrix)
                )
            else:
                pred, _ = pipeline.predict_with_strategy(
                    args.strategy, corpus, train_ids, score_ids, args.theta,
                    args.dim, args.seed, args.sample_size,
                    None if args.k == "auto" else int(args.k),
                    args.topics, args.lda_iterations,
                )
        else:
            fit_ids = train_ids if train_ids else doc_ids
            if train_ids:
                pred, _ = pipeline.predict_with_strategy(
                    args.strategy, corpus, train_ids, score_ids, args.theta,
                    args.dim, args.seed, args.sample_size,
                    None if args.k == "auto" else int(args.k),
                    args.topics, args.lda_iterations,
                )
            else:
                surfaces = _baseline_surfaces(args, corpus, fit_ids, score_ids)
                pred = linker.predict_constant(surfaces.req_matrix, args.theta)

    out_dir.mkdir(parents=True, exist_ok=True)
    pred_path = out_dir / "predictions.json"
    _write_json(pred_path, pred.to_dict())
    sidecar = out_dir / "predictions.thresholds.json"
    _write_json(
        sidecar,
        {
            "strategy": pred.strategy_tag,
            "thresholds": {k: v for k, v in sorted(pred.thresholds_used.items())},
        },
    )
    manifest.add_output(pred_path)
    manifest.add_output(sidecar)
    manifest.write(out_dir)
    n_links = sum(len(v) for v in pred.predictions.values())
    print(
        f"{pred.strategy_tag}: {n_links} predicted links over "
        f"{len(pred.predictions)} requirements -> {pred_path}"
    )
    return 0


def _cmd_prompt(args) -> int:
    manifest = RunManifest(
        command=["prompt"],
        config={
            "variant": args.variant,
            "corpus": str(args.corpus),
            "dry_run": args.dry_run,
            "k": args.k,
            "seed": args.seed,
            "model": args.model,
        },
    ).start()
    corpus = corpus_mod.load_corpus(args.corpus)
    manifest.add_input(args.corpus)
    variant = prompting.PromptVariant(args.variant)
    examples = None
    if args.examples:
        examples = _load_examples(Path(args.examples))
        manifest.add_input(args.examples)
    embeddings_pair = None
    if variant is prompting.PromptVariant.P1:
        units = corpus_mod.requirement_units(corpus, split=False)
        req_set = emb.hash_embed_set(
            [(uid, text) for uid, _, text in units], args.dim, args.seed
        )
        prov_set = emb.hash_embed_set(
            [(p.code, corpus_mod.provision_text(p)) for p in corpus.catalog],
            args.dim,
            args.seed,
        )
        embeddings_pair = (req_set, prov_set)
    k = None if args.k == "all" else int(args.k)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.dry_run:
        items = prompting.iter_prompt_items(
            variant, corpus, examples=examples, embeddings=embeddings_pair, k=k
        )
        prompt_dir = out_dir / "prompts"
        prompt_dir.mkdir(parents=True, exist_ok=True)
        for item in items:
            path = prompt_dir / (item.key.replace("::", "__") + ".txt")
            path.write_text(item.prompt, encoding="utf-8")
            manifest.add_output(path)
        manifest.write(out_dir)
        print(f"dry run: wrote {len(items)} prompts to {prompt_dir} (no network)")
        return 0

    if not args.endpoint:
        raise CliError("live prompt runs require --endpoint")
    config = prompting.LlmConfig(
        endpoint_url=args.endpoint,
        model_name=args.model,
        temperature=args.temperature,
        seed=args.seed,
        max_tokens=args.max_tokens,
    )
    transcript = Path(args.transcript) if args.transcript else out_dir / "transcript.jsonl"
    run = prompting.run_prompt_strategy(
        variant,
        corpus,
        config,
        examples=examples,
        embeddings=embeddings_pair,
        k=k,
        transcript_path=transcript,
        parallelism=args.parallelism,
    )
    pred_path = out_dir / "predictions.json"
    _write_json(pred_path, run.prediction_set.to_dict())
    manifest.add_output(pred_path)
    manifest.add_output(transcript)
    manifest.write(out_dir)
    print(
        f"{variant.value}: predictions for {len(run.prediction_set.predictions)} "
        f"requirements, {len(run.failures)} failures -> {pred_path}"
    )
    return 0


def _human_report(report: ev.MetricsReport, req_report) -> str:
    lines = [
        f"{'TP':>6} {'FP':>6} {'FN':>6} {'P':>7} {'R':>7} {'F2':>7}",
        f"{report.counts.tp:>6} {report.counts.fp:>6} {report.counts.fn:>6} "
        f"{_fmt_pct(report.precision):>7} {_fmt_pct(report.recall):>7} "
        f"{_fmt_pct(report.f2):>7}",
        "",
        f"{'EM':>6} {'PM':>6} {'INC':>6} {'SR':>7} {'MR':>7} {'Cost':>7}",
        f"{req_report.exact_match:>6} {req_report.partial_match:>6} "
        f"{req_report.incorrect:>6} {_fmt_pct(req_report.success_rate):>7} "
        f"{_fmt_pct(req_report.macro_recall):>7} {_fmt_pct(req_report.cost):>7}",
    ]
    if report.map is not None:
        lines.append("")
        lines.append(f"MAP: {_fmt_pct(report.map)}")
    if report.auc is not None:
        lines.append(f"AUC: {report.auc:.3f}")
    return "\n".join(lines) + "\n"


def _cmd_evaluate(args) -> int:
    manifest = RunManifest(
        command=["evaluate"],
        config={
            "corpus": str(args.corpus),
            "predictions": str(args.predictions),
            "match_mode": args.match_mode,
        },
    ).start()
    corpus = corpus_mod.load_corpus(args.corpus)
    manifest.add_input(args.corpus)
    raw = json.loads(Path(args.predictions).read_text(encoding="utf-8"))
    manifest.add_input(args.predictions)
    pred = linker.PredictionSet(
        predictions={rid: frozenset(codes) for rid, codes in raw.items()},
        strategy_tag="file",
    )
    matrix = None
    if args.matrix:
        matrix = pipeline.pool_to_requirements(emb.load_matrix(args.matrix))
        manifest.add_input(args.matrix)
    req_ids = list(corpus.requirement_ids)
    report, req_report = pipeline.evaluate_predictions(
        pred, corpus, req_ids, match_mode=args.match_mode, matrix=matrix
    )
    out_dir = Path(args.out_dir)
    machine = {
        "counts": {
            "tp": report.counts.tp,
            "fp": report.counts.fp,
            "fn": report.counts.fn,
            "tn": report.counts.tn,
        },
        "precision": report.precision,
        "recall": report.recall,
        "f2": report.f2,
        "map": report.map,
        "auc": report.auc,
        "per_document": {
            doc_id: {
                "counts": {
                    "tp": row.counts.tp,
                    "fp": row.counts.fp,
                    "fn": row.counts.fn,
                    "tn": row.counts.tn,
                },
                "precision": row.precision,
                "recall": row.recall,
                "f2": row.f2,
            }
            for doc_id, row in sorted(report.per_document.items())
        },
        "requirement_level": {
            "exact_match": req_report.exact_match,
            "partial_match": req_report.partial_match,
            "incorrect": req_report.incorrect,
            "success_rate": req_report.success_rate,
            "macro_recall": req_report.macro_recall,
            "cost": req_report.cost,
        },
        "match_mode": args.match_mode,
    }
    _write_json(out_dir / "report.json", machine)
    human = _human_report(report, req_report)
    (out_dir / "report.txt").write_text(human, encoding="utf-8")
    if matrix is not None:
        gt = {rid: corpus.ground_truth.codes_for(rid) for rid in req_ids}
        scores, labels = ev.pooled_pairs(matrix, gt)
        points = ev.roc_curve_points(scores, labels)
        csv = "fpr,tpr\n" + "".join(f"{x!r},{y!r}\n" for x, y in points)
        (out_dir / "roc.csv").write_text(csv, encoding="utf-8")
        manifest.add_output(out_dir / "roc.csv")
    manifest.add_output(out_dir / "report.json")
    manifest.add_output(out_dir / "report.txt")
    manifest.write(out_dir)
    print(human, end="")
    return 0


def _cmd_sweep(args) -> int:
    manifest = RunManifest(
        command=["sweep"],
        config={
            "corpus": str(args.corpus),
            "n_points": args.n_points,
            "provider": args.provider,
            "dim": args.dim,
            "seed": args.seed,
        },
    ).start()
    corpus = corpus_mod.load_corpus(args.corpus)
    manifest.add_input(args.corpus)
    if args.matrix:
        matrix = pipeline.pool_to_requirements(emb.load_matrix(args.matrix))
        manifest.add_input(args.matrix)
    else:
        surfaces, _ = pipeline.hash_similarity_surfaces(corpus, args.dim, args.seed)
        matrix = surfaces.req_matrix
    gt = {rid: corpus.ground_truth.codes_for(rid) for rid in matrix.req_ids}
    curve = linker.sweep_thresholds(matrix, gt, args.n_points)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "curve.csv"
    csv_path.write_text(
        "theta,f2\n" + "".join(f"{t!r},{f!r}\n" for t, f in curve.points),
        encoding="utf-8",
    )
    _write_json(out_dir / "best.json", {"best_theta": curve.best_theta})
    manifest.add_output(csv_path)
    manifest.add_output(out_dir / "best.json")
    manifest.write(out_dir)
    best_f2 = max(f for _, f in curve.points)
    print(f"{args.n_points} thresholds swept; best F2 {100 * best_f2:.1f} at theta {curve.best_theta:.4f}")
    return 0


def _cmd_loo(args) -> int:
    strategies = args.strategies.split(",")
    manifest = RunManifest(
        command=["loo"],
        config={
            "corpus": str(args.corpus),
            "strategies": strategies,
            "exclude_docs": args.exclude_docs,
            "theta": args.theta,
            "dim": args.dim,
            "seed": args.seed,
            "k": args.k,
            "topics": args.topics,
            "match_mode": args.match_mode,
        },
    ).start()
    corpus = corpus_mod.load_corpus(args.corpus)
    manifest.add_input(args.corpus)
    excluded = args.exclude_docs.split(",") if args.exclude_docs else []
    results = pipeline.run_loo(
        corpus,
        strategies,
        excluded_doc_ids=excluded,
        theta=args.theta,
        dim=args.dim,
        seed=args.seed,
        sample_size=args.sample_size,
        k=None if args.k == "auto" else int(args.k),
        topics=args.topics,
        lda_iterations=args.lda_iterations,
        match_mode=args.match_mode,
    )
    out_dir = Path(args.out_dir)
    _write_json(out_dir / "loo_report.json", results)
    lines = [
        f"{'strategy':<12} {'TP':>5} {'FP':>6} {'FN':>5} {'P':>7} {'R':>7} {'F2':>7} {'meanF2':>7}"
    ]
    for strategy in strategies:
        row = results[strategy]["pooled"]
        lines.append(
            f"{strategy:<12} {row['counts']['tp']:>5} {row['counts']['fp']:>6} "
            f"{row['counts']['fn']:>5} {_fmt_pct(row['precision']):>7} "
            f"{_fmt_pct(row['recall']):>7} {_fmt_pct(row['f2']):>7} "
            f"{_fmt_pct(results[strategy]['mean_f2_undefined_as_zero']):>7}"
        )
    human = "\n".join(lines) + "\n"
    (out_dir / "loo_report.txt").write_text(human, encoding="utf-8")
    manifest.add_output(out_dir / "loo_report.json")
    manifest.add_output(out_dir / "loo_report.txt")
    manifest.write(out_dir)
    print(human, end="")
    return 0


def _cmd_rank_models(args) -> int:
    manifest = RunManifest(
        command=["rank-models"],
        config={"corpus": str(args.corpus), "models": args.models},
    ).start()
    corpus = corpus_mod.load_corpus(args.corpus)
    manifest.add_input(args.corpus)
    entries = []
    for spec in args.models.split(","):
        parsed = _parse_provider_spec(spec.strip())
        if parsed[0] == "hash":
            _, dim, seed = parsed
            req_set = emb.hash_embed_set(
                [(r.id, r.text) for r in corpus.requirements], dim, seed
            )
            prov_set = emb.hash_embed_set(
                [(p.code, corpus_mod.provision_text(p)) for p in corpus.catalog],
                dim,
                seed,
            )
            entries.append((f"hash:{dim}:{seed}", (req_set, prov_set)))
        else:
            _, tag, path = parsed
            loaded = emb.load_embedding_set(path)
            manifest.add_input(path)
            entries.append((tag, (loaded, loaded)))
    ranking = ev.rank_models(entries, corpus)
    out_dir = Path(args.out_dir)
    _write_json(
        out_dir / "ranking.json",
        [{"rank": i + 1, "model": tag, "auc": auc} for i, (tag, auc) in enumerate(ranking)],
    )
    manifest.add_output(out_dir / "ranking.json")
    manifest.write(out_dir)
    for i, (tag, auc) in enumerate(ranking, start=1):
        print(f"{i:>3}  {tag:<24} AUC {auc:.3f}")
    return 0


def _cmd_fisher(args) -> int:
    manifest = RunManifest(
        command=["fisher"], config={"table": args.table}
    ).start()
    try:
        a, b, c, d = (int(x) for x in args.table.split(","))
    except ValueError as e:
        raise CliError(f"--table must be four comma-separated integers: {e}") from e
    p_value = ev.fisher_exact(ev.ContingencyTable2x2(a=a, b=b, c=c, d=d))
    out_dir = Path(args.out_dir)
    _write_json(out_dir / "fisher.json", {"table": [[a, b], [c, d]], "p_value": p_value})
    manifest.add_output(out_dir / "fisher.json")
    manifest.write(out_dir)
    print(f"two-tailed p = {p_value!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tracelink",
        description="Predict and evaluate trace links between requirements and provisions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common_io(p, corpus_required=True):
        p.add_argument("--corpus", required=corpus_required, help="corpus JSON file")
        p.add_argument("--out-dir", default="out", help="output directory")

    def provider_opts(p):
        p.add_argument("--provider", choices=["file", "http", "hash"], default="hash")
        p.add_argument("--embeddings", help="embedding interchange file (provider=file)")
        p.add_argument("--endpoint", help="HTTP embedding endpoint (provider=http)")
        p.add_argument("--model", default="embedding-model", help="provider model name")
        p.add_argument("--batch-size", type=int, default=32)
        p.add_argument("--dim", type=int, default=256, help="hash provider dimensionality")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.add_argument("--no-split", action="store_true", help="do not split requirements into sentences")

    p = sub.add_parser("validate", help="check a corpus file against the format and invariants")
    p.add_argument("corpus", help="corpus JSON file")
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("embed", help="embed a corpus and write the interchange file")
    common_io(p)
    provider_opts(p)
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("similarity", help="build the requirement-by-provision similarity matrix")
    common_io(p)
    provider_opts(p)
    p.set_defaults(func=_cmd_similarity)

    p = sub.add_parser("predict", help="predict trace links with a threshold strategy")
    common_io(p, corpus_required=False)
    provider_opts(p)
    p.add_argument(
        "--strategy",
        required=True,
        choices=["constant", "dynamic", "delta", "tuned", "tfidf", "lsi", "lda", "indicator"],
    )
    p.add_argument("--matrix", help="precomputed similarity matrix JSON")
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--train-docs", help="comma-separated training document ids")
    p.add_argument("--sample-size", type=int, default=10)
    p.add_argument("--k", default="auto", help="LSI latent dimensions (or 'auto')")
    p.add_argument("--topics", type=int, default=50)
    p.add_argument("--lda-iterations", type=int, default=200)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("prompt", help="build or run one of the prompt strategies")
    common_io(p)
    p.add_argument(
        "--variant", required=True, choices=["rice", "p1", "p2", "p3_1", "p3_2"]
    )
    p.add_argument("--examples", help="few-shot examples JSON (required for rice)")
    p.add_argument("--dry-run", action="store_true", help="emit prompts without any network call")
    p.add_argument("--endpoint", help="chat-completion endpoint URL")
    p.add_argument("--model", default="gpt-4o")
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--max-tokens", type=int, default=2000)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--k", default="all", help="P1 retrieval depth (or 'all')")
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--transcript", help="transcript JSONL path (default <out-dir>/transcript.jsonl)")
    p.add_argument("--parallelism", type=int, default=1)
    p.set_defaults(func=_cmd_prompt)

    p = sub.add_parser("evaluate", help="score a prediction file against the ground truth")
    common_io(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--match-mode", choices=["superset", "overlap"], default="superset")
    p.add_argument("--matrix", help="similarity matrix for MAP/AUC and ROC export")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sweep", help="F2 over evenly spaced thresholds")
    common_io(p)
    p.add_argument("--matrix", help="precomputed similarity matrix JSON")
    p.add_argument("--n-points", type=int, default=200)
    p.add_argument("--provider", choices=["hash"], default="hash")
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("loo", help="leave-one-out evaluation over documents")
    common_io(p)
    p.add_argument(
        "--strategies",
        default="constant,dynamic,delta,tuned,tfidf,lsi,indicator",
        help="comma-separated strategy list",
    )
    p.add_argument("--exclude-docs", help="comma-separated document ids to exclude")
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--sample-size", type=int, default=10)
    p.add_argument("--k", default="auto")
    p.add_argument("--topics", type=int, default=50)
    p.add_argument("--lda-iterations", type=int, default=200)
    p.add_argument("--match-mode", choices=["superset", "overlap"], default="superset")
    p.set_defaults(func=_cmd_loo)

    p = sub.add_parser("rank-models", help="rank embedding models by zero-shot sweep AUC")
    common_io(p)
    p.add_argument(
        "--models",
        required=True,
        help="comma-separated specs: hash:<dim>:<seed> or file:<tag>:<path>",
    )
    p.set_defaults(func=_cmd_rank_models)

    p = sub.add_parser("fisher", help="two-tailed Fisher's exact test on a 2x2 table")
    p.add_argument("--table", required=True, help="a,b,c,d counts")
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=_cmd_fisher)

    return parser


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except (
        CliError,
        corpus_mod.CorpusError,
        emb.EmbeddingError,
        linker.LinkerError,
        ev.EvaluationError,
        prompting.PromptError,
        pipeline.PipelineError,
        ValueError,
        OSError,
    ) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
