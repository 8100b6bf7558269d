from __future__ import annotations

import json
import socket

import pytest

from tracelink.cli import dispatch

from conftest import FIXTURES, GOLDEN

CORPUS = str(FIXTURES / "corpus.json")


class TestValidate:
    def test_fixture_corpus_ok(self, tmp_path, capsys):
        assert dispatch(["validate", CORPUS, "--out-dir", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "10 requirements" in out
        assert (tmp_path / "validation.json").exists()
        assert (tmp_path / "manifest.json").exists()

    def test_broken_corpus_domain_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"format_version": 1, "documents": [], "provisions": [], "links": {}}))
        assert dispatch(["validate", str(bad), "--out-dir", str(tmp_path / "o")]) == 1
        assert "catalog is empty" in capsys.readouterr().err

    def test_usage_error_exit_2(self):
        assert dispatch(["validate"]) == 2
        assert dispatch(["frobnicate"]) == 2


class TestPredictDelta:
    def test_worked_example_row(self, tmp_path):
        code = dispatch(
            [
                "predict",
                "--strategy",
                "delta",
                "--matrix",
                str(FIXTURES / "delta_matrix.json"),
                "--out-dir",
                str(tmp_path),
            ]
        )
        assert code == 0
        predictions = json.loads((tmp_path / "predictions.json").read_text())
        assert predictions["REQ-A"] == ["C1", "C4"]
        sidecar = json.loads((tmp_path / "predictions.thresholds.json").read_text())
        assert sidecar["thresholds"]["REQ-A"] == pytest.approx(0.3)

    def test_constant_on_matrix(self, tmp_path):
        code = dispatch(
            [
                "predict",
                "--strategy",
                "constant",
                "--theta",
                "0.5",
                "--matrix",
                str(FIXTURES / "delta_matrix.json"),
                "--out-dir",
                str(tmp_path),
            ]
        )
        assert code == 0
        predictions = json.loads((tmp_path / "predictions.json").read_text())
        assert predictions["REQ-A"] == ["C1", "C4"]
        assert predictions["REQ-B"] == ["C2", "C3"]


class TestPromptDryRun:
    def test_golden_prompt_and_no_network(self, tmp_path, monkeypatch):
        def deny(*args, **kwargs):
            raise AssertionError("network call attempted during --dry-run")

        monkeypatch.setattr(socket.socket, "connect", deny)
        code = dispatch(
            [
                "prompt",
                "--variant",
                "rice",
                "--corpus",
                CORPUS,
                "--examples",
                str(FIXTURES / "examples.json"),
                "--dry-run",
                "--out-dir",
                str(tmp_path),
            ]
        )
        assert code == 0
        written = sorted((tmp_path / "prompts").glob("*.txt"))
        assert len(written) == 10
        first = tmp_path / "prompts" / "rice__D1-R1__-.txt"
        assert first.read_text(encoding="utf-8") == (
            GOLDEN / "rice_prompt.txt"
        ).read_text(encoding="utf-8")

    def test_all_variants_dry_run_offline(self, tmp_path, monkeypatch):
        def deny(*args, **kwargs):
            raise AssertionError("network call attempted during --dry-run")

        monkeypatch.setattr(socket.socket, "connect", deny)
        for variant in ("p1", "p2", "p3_1", "p3_2"):
            out = tmp_path / variant
            code = dispatch(
                [
                    "prompt",
                    "--variant",
                    variant,
                    "--corpus",
                    CORPUS,
                    "--dry-run",
                    "--out-dir",
                    str(out),
                ]
            )
            assert code == 0
            assert list((out / "prompts").glob("*.txt"))

    def test_live_requires_endpoint(self, tmp_path):
        code = dispatch(
            [
                "prompt",
                "--variant",
                "p2",
                "--corpus",
                CORPUS,
                "--out-dir",
                str(tmp_path),
            ]
        )
        assert code == 1


class TestPipelineCommands:
    def test_embed_similarity_sweep_evaluate(self, tmp_path):
        emb_dir = tmp_path / "emb"
        assert dispatch(
            ["embed", "--corpus", CORPUS, "--dim", "64", "--out-dir", str(emb_dir)]
        ) == 0
        payload = json.loads((emb_dir / "embeddings.json").read_text())
        assert payload["format_version"] == 1 and payload["dim"] == 64

        sim_dir = tmp_path / "sim"
        assert dispatch(
            [
                "similarity",
                "--corpus",
                CORPUS,
                "--provider",
                "file",
                "--embeddings",
                str(emb_dir / "embeddings.json"),
                "--out-dir",
                str(sim_dir),
            ]
        ) == 0
        matrix = json.loads((sim_dir / "matrix.json").read_text())
        assert len(matrix["prov_codes"]) == 26

        sweep_dir = tmp_path / "sweep"
        assert dispatch(
            [
                "sweep",
                "--corpus",
                CORPUS,
                "--matrix",
                str(sim_dir / "matrix.json"),
                "--n-points",
                "50",
                "--out-dir",
                str(sweep_dir),
            ]
        ) == 0
        lines = (sweep_dir / "curve.csv").read_text().splitlines()
        assert lines[0] == "theta,f2"
        assert len(lines) == 51

        pred_dir = tmp_path / "pred"
        assert dispatch(
            [
                "predict",
                "--strategy",
                "constant",
                "--matrix",
                str(sim_dir / "matrix.json"),
                "--theta",
                "0.5",
                "--out-dir",
                str(pred_dir),
            ]
        ) == 0

        eval_dir = tmp_path / "eval"
        assert dispatch(
            [
                "evaluate",
                "--corpus",
                CORPUS,
                "--predictions",
                str(pred_dir / "predictions.json"),
                "--matrix",
                str(sim_dir / "matrix.json"),
                "--out-dir",
                str(eval_dir),
            ]
        ) == 0
        report = json.loads((eval_dir / "report.json").read_text())
        assert set(report["counts"]) == {"tp", "fp", "fn", "tn"}
        assert (eval_dir / "report.txt").exists()
        assert (eval_dir / "roc.csv").read_text().startswith("fpr,tpr")

    def test_rank_models(self, tmp_path, capsys):
        assert dispatch(
            [
                "rank-models",
                "--corpus",
                CORPUS,
                "--models",
                "hash:64:1,hash:64:2,hash:32:7",
                "--out-dir",
                str(tmp_path),
            ]
        ) == 0
        ranking = json.loads((tmp_path / "ranking.json").read_text())
        assert len(ranking) == 3
        assert [row["rank"] for row in ranking] == [1, 2, 3]
        aucs = [row["auc"] for row in ranking]
        assert aucs == sorted(aucs, reverse=True)

    def test_fisher(self, tmp_path, capsys):
        assert dispatch(
            ["fisher", "--table", "8,2,1,5", "--out-dir", str(tmp_path)]
        ) == 0
        payload = json.loads((tmp_path / "fisher.json").read_text())
        assert 0.0 <= payload["p_value"] <= 1.0
        assert "p =" in capsys.readouterr().out


class TestLooReplay:
    def test_byte_identical_machine_outputs(self, tmp_path):
        args = [
            "loo",
            "--corpus",
            CORPUS,
            "--strategies",
            "constant,delta,tfidf",
            "--dim",
            "64",
            "--out-dir",
        ]
        assert dispatch(args + [str(tmp_path / "run1")]) == 0
        assert dispatch(args + [str(tmp_path / "run2")]) == 0
        for name in ("loo_report.json", "loo_report.txt"):
            first = (tmp_path / "run1" / name).read_bytes()
            second = (tmp_path / "run2" / name).read_bytes()
            assert first == second

    def test_manifest_records_inputs_and_outputs(self, tmp_path):
        assert dispatch(
            [
                "loo",
                "--corpus",
                CORPUS,
                "--strategies",
                "constant",
                "--dim",
                "64",
                "--out-dir",
                str(tmp_path),
            ]
        ) == 0
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["command"] == ["loo"]
        assert any(key.endswith("corpus.json") for key in manifest["inputs"])
        digest = next(iter(manifest["inputs"].values()))
        assert len(digest) == 64
        assert manifest["tool_version"]
        assert manifest["started_at"] and manifest["finished_at"]


class TestPredictFromCorpus:
    def test_tuned_requires_train_docs(self, tmp_path):
        code = dispatch(
            [
                "predict",
                "--strategy",
                "tuned",
                "--corpus",
                CORPUS,
                "--out-dir",
                str(tmp_path),
            ]
        )
        assert code == 1

    def test_tuned_with_train_docs(self, tmp_path):
        code = dispatch(
            [
                "predict",
                "--strategy",
                "tuned",
                "--corpus",
                CORPUS,
                "--train-docs",
                "D1,D2",
                "--dim",
                "64",
                "--out-dir",
                str(tmp_path),
            ]
        )
        assert code == 0
        predictions = json.loads((tmp_path / "predictions.json").read_text())
        # Tuned predicts only over the held-out document D3.
        assert set(predictions) == {"D3-R1", "D3-R2", "D3-R3"}
        sidecar = json.loads((tmp_path / "predictions.thresholds.json").read_text())
        assert sidecar["strategy"].startswith("constant:theta=")

    def test_dynamic_with_train_docs(self, tmp_path):
        code = dispatch(
            [
                "predict",
                "--strategy",
                "dynamic",
                "--corpus",
                CORPUS,
                "--train-docs",
                "D2,D3",
                "--dim",
                "64",
                "--sample-size",
                "3",
                "--out-dir",
                str(tmp_path),
            ]
        )
        assert code == 0
        predictions = json.loads((tmp_path / "predictions.json").read_text())
        assert set(predictions) == {"D1-R1", "D1-R2", "D1-R3", "D1-R4"}

    def test_baseline_without_train_docs_uses_theta(self, tmp_path):
        code = dispatch(
            [
                "predict",
                "--strategy",
                "indicator",
                "--corpus",
                CORPUS,
                "--theta",
                "0.2",
                "--out-dir",
                str(tmp_path),
            ]
        )
        assert code == 0
        predictions = json.loads((tmp_path / "predictions.json").read_text())
        assert set(predictions) == {r for r in predictions}  # all corpus reqs present
        assert len(predictions) == 10

    def test_nonhash_provider_needs_matrix(self, tmp_path):
        code = dispatch(
            [
                "predict",
                "--strategy",
                "constant",
                "--corpus",
                CORPUS,
                "--provider",
                "http",
                "--out-dir",
                str(tmp_path),
            ]
        )
        assert code == 1


class TestEmbedHttpProvider:
    def test_embed_via_stub_endpoint(self, tmp_path):
        from conftest import stub_server

        def respond(body, count):
            return 200, {
                "data": [
                    {"index": i, "embedding": [1.0, float(i), 0.5, 0.25]}
                    for i in range(len(body["input"]))
                ]
            }

        with stub_server(respond) as (url, requests):
            code = dispatch(
                [
                    "embed",
                    "--corpus",
                    CORPUS,
                    "--provider",
                    "http",
                    "--endpoint",
                    url,
                    "--model",
                    "stub-encoder",
                    "--batch-size",
                    "8",
                    "--out-dir",
                    str(tmp_path),
                ]
            )
        assert code == 0
        payload = json.loads((tmp_path / "embeddings.json").read_text())
        assert payload["dim"] == 4
        assert payload["provider"] == "http:stub-encoder"
        assert len(requests) >= 2  # requirements + provisions, batched


class TestSweepFromProvider:
    def test_sweep_hash_provider(self, tmp_path):
        code = dispatch(
            [
                "sweep",
                "--corpus",
                CORPUS,
                "--n-points",
                "20",
                "--dim",
                "64",
                "--out-dir",
                str(tmp_path),
            ]
        )
        assert code == 0
        lines = (tmp_path / "curve.csv").read_text().splitlines()
        assert len(lines) == 21


class TestEvaluatePerDocument:
    def test_per_document_rows_present(self, tmp_path):
        pred_path = tmp_path / "pred.json"
        pred_path.write_text(json.dumps({"D1-R1": ["ACC"], "D3-R2": ["BRC"]}))
        assert dispatch(
            [
                "evaluate",
                "--corpus",
                CORPUS,
                "--predictions",
                str(pred_path),
                "--out-dir",
                str(tmp_path / "out"),
            ]
        ) == 0
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert set(report["per_document"]) == {"D1", "D2", "D3"}
        d1 = report["per_document"]["D1"]
        assert d1["counts"]["tp"] == 1
        # Per-document counts must sum to the corpus-level counts.
        for key in ("tp", "fp", "fn", "tn"):
            assert sum(
                row["counts"][key] for row in report["per_document"].values()
            ) == report["counts"][key]


class TestEvaluateMatchMode:
    def test_overlap_mode_flag(self, tmp_path):
        pred_path = tmp_path / "pred.json"
        # Overlaps D1-R3's gt {SEC, TEC} without being a superset.
        pred_path.write_text(json.dumps({"D1-R3": ["SEC", "CON"]}))
        for mode, expected_partial in (("superset", 0), ("overlap", 1)):
            out = tmp_path / mode
            assert dispatch(
                [
                    "evaluate",
                    "--corpus",
                    CORPUS,
                    "--predictions",
                    str(pred_path),
                    "--match-mode",
                    mode,
                    "--out-dir",
                    str(out),
                ]
            ) == 0
            report = json.loads((out / "report.json").read_text())
            assert report["requirement_level"]["partial_match"] == expected_partial
            assert report["match_mode"] == mode
