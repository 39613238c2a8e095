"""End-to-end command pipeline, manifests, reproducibility, exit codes."""

import json
from pathlib import Path

import pytest

from termset_retrieval.cli import main, parse_config_file, rerun_from_manifest

DATA = Path(__file__).resolve().parent.parent / "src" / "termset_retrieval" / "data"


def invoke(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def pipeline(tmp_path):
    """Full build-terms -> build-index -> train -> search -> evaluate chain."""
    out = tmp_path
    rc = invoke(
        "build-terms",
        "--corpus", DATA / "toy_corpus.jsonl",
        "--queries", DATA / "toy_queries.jsonl",
        "--qrels", DATA / "toy_qrels.tsv",
        "--output-dir", out / "terms",
        "--n-min", "2", "--n-max", "8", "--seed", "7",
    )
    assert rc == 0
    rc = invoke("build-index", "--identifiers", out / "terms/identifiers.tsv",
                "--output", out / "index.txt")
    assert rc == 0
    rc = invoke(
        "train",
        "--corpus", DATA / "toy_corpus.jsonl",
        "--queries", DATA / "toy_queries.jsonl",
        "--qrels", DATA / "toy_qrels.tsv",
        "--index", out / "index.txt",
        "--model", out / "terms/importance.model",
        "--output-dir", out / "train",
        "--seed", "7", "--val-fraction", "0.25",
    )
    assert rc == 0
    rc = invoke("search", "--index", out / "index.txt", "--scorer", out / "train/scorer.txt",
                "--queries", DATA / "toy_queries.jsonl", "--output", out / "run.txt",
                "--beam", "10")
    assert rc == 0
    rc = invoke("evaluate", "--run", out / "run.txt", "--qrels", DATA / "toy_qrels.tsv",
                "--cutoffs", "1,10", "--output-dir", out / "eval")
    assert rc == 0
    return out


class TestPipeline:
    def test_composes_end_to_end(self, pipeline):
        run_lines = (pipeline / "run.txt").read_text(encoding="utf-8").splitlines()
        assert run_lines
        doc_ids = {line.split()[2] for line in run_lines}
        corpus_ids = {
            json.loads(line)["doc_id"]
            for line in (DATA / "toy_corpus.jsonl").read_text(encoding="utf-8").splitlines()
        }
        assert doc_ids <= corpus_ids
        report = (pipeline / "eval" / "report.jsonl").read_text(encoding="utf-8")
        summary = json.loads(report.splitlines()[0])
        assert summary["record"] == "summary"
        assert 0.0 <= summary["MRR@10"] <= 1.0

    def test_manifests_written_for_every_command(self, pipeline):
        manifests = [
            pipeline / "terms" / "build-terms.manifest.json",
            pipeline / "index.txt.manifest.json",
            pipeline / "train" / "train.manifest.json",
            pipeline / "run.txt.manifest.json",
            pipeline / "eval" / "evaluate.manifest.json",
        ]
        for path in manifests:
            assert path.exists(), path
            manifest = json.loads(path.read_text(encoding="utf-8"))
            assert manifest["format"] == "termset-manifest/1"
            assert manifest["inputs"] and manifest["outputs"]
            assert "wall_time_s" in manifest

    def test_rerun_reproduces_artifacts_byte_identically(self, pipeline):
        checks = [
            (pipeline / "terms" / "build-terms.manifest.json",),
            (pipeline / "index.txt.manifest.json",),
            (pipeline / "train" / "train.manifest.json",),
            (pipeline / "run.txt.manifest.json",),
        ]
        for (manifest_path,) in checks:
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
            before = {p: Path(p).read_bytes() for p in manifest["outputs"]}
            assert rerun_from_manifest(manifest_path) == 0
            after = {p: Path(p).read_bytes() for p in manifest["outputs"]}
            assert before == after, f"{manifest_path} outputs changed on rerun"
            refreshed = json.loads(manifest_path.read_text(encoding="utf-8"))
            assert refreshed["outputs"] == manifest["outputs"]

    def test_k1_emits_one_line_per_query(self, pipeline, tmp_path):
        out = tmp_path / "run_k1.txt"
        rc = invoke("search", "--index", pipeline / "index.txt",
                    "--scorer", pipeline / "train/scorer.txt",
                    "--queries", DATA / "toy_queries.jsonl", "--output", out, "--beam", "1")
        assert rc == 0
        lines = out.read_text(encoding="utf-8").splitlines()
        n_queries = len((DATA / "toy_queries.jsonl").read_text(encoding="utf-8").splitlines())
        assert len(lines) == n_queries

    def test_threaded_search_matches_serial(self, pipeline, tmp_path):
        serial = tmp_path / "serial.txt"
        threaded = tmp_path / "threaded.txt"
        for out, threads in ((serial, "1"), (threaded, "4")):
            rc = invoke("search", "--index", pipeline / "index.txt",
                        "--scorer", pipeline / "train/scorer.txt",
                        "--queries", DATA / "toy_queries.jsonl",
                        "--output", out, "--beam", "5", "--threads", threads)
            assert rc == 0
        assert serial.read_bytes() == threaded.read_bytes()


class TestErrors:
    def test_usage_error_exit_code(self, capsys):
        with pytest.raises(SystemExit) as exc:
            invoke("search", "--index")  # missing value and required flags
        assert exc.value.code == 1

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as exc:
            invoke("frobnicate")
        assert exc.value.code == 1

    def test_data_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"doc_id": "D1", "title": "t"}\n', encoding="utf-8")
        rc = invoke("build-terms", "--corpus", bad, "--queries", bad, "--qrels", bad,
                    "--output-dir", tmp_path / "out")
        assert rc == 2

    def test_corrupt_index_is_data_error(self, tmp_path):
        fake = tmp_path / "fake_index.txt"
        fake.write_text("wrong-format/0\n", encoding="utf-8")
        rc = invoke("search", "--index", fake, "--scorer", fake,
                    "--queries", DATA / "toy_queries.jsonl", "--output", tmp_path / "r.txt")
        assert rc == 2

    def test_vocabulary_mismatch_is_data_error(self, pipeline, tmp_path):
        # rebuild an index from different identifiers and pair the old scorer with it
        other = tmp_path / "ids.tsv"
        other.write_text("termset-identifiers/1\t2\nzz\talpha,omega\n", encoding="utf-8")
        rc = invoke("build-index", "--identifiers", other, "--output", tmp_path / "other.txt")
        assert rc == 0
        rc = invoke("search", "--index", tmp_path / "other.txt",
                    "--scorer", pipeline / "train/scorer.txt",
                    "--queries", DATA / "toy_queries.jsonl", "--output", tmp_path / "r.txt")
        assert rc == 2

    def test_duplicate_docs_warning_and_placeholder(self, tmp_path, capsys):
        corpus = tmp_path / "c.jsonl"
        corpus.write_text(
            '{"doc_id": "A", "title": "", "body": "same"}\n'
            '{"doc_id": "B", "title": "", "body": "same"}\n',
            encoding="utf-8",
        )
        queries = tmp_path / "q.jsonl"
        queries.write_text('{"query_id": "q1", "text": "same"}\n', encoding="utf-8")
        qrels = tmp_path / "qr.tsv"
        qrels.write_text("q1\tA\t1\n", encoding="utf-8")
        rc = invoke("build-terms", "--corpus", corpus, "--queries", queries, "--qrels", qrels,
                    "--output-dir", tmp_path / "out", "--negatives", "1")
        assert rc == 0
        captured = capsys.readouterr()
        assert "placeholder" in captured.err
        idents = (tmp_path / "out" / "identifiers.tsv").read_text(encoding="utf-8")
        assert idents.count("⟂") == 1

    def test_empty_run_warning(self, tmp_path, capsys):
        run = tmp_path / "empty_run.txt"
        run.write_text("", encoding="utf-8")
        rc = invoke("evaluate", "--run", run, "--qrels", DATA / "toy_qrels.tsv",
                    "--output-dir", tmp_path / "out")
        assert rc == 0
        captured = capsys.readouterr()
        assert "no lines for any judged query" in captured.err
        summary = json.loads(
            (tmp_path / "out" / "report.jsonl").read_text(encoding="utf-8").splitlines()[0]
        )
        assert summary["MRR@10"] == 0.0


class TestConfigFile:
    def test_parse_and_precedence(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "# comment line\n"
            "iterations = 1\n"
            "epochs = 3\n"
            "lr = 0.25\n"
            "seed = 11\n",
            encoding="utf-8",
        )
        parsed = parse_config_file(cfg)
        assert parsed == {"iterations": "1", "epochs": "3", "lr": "0.25", "seed": "11"}

    def test_flags_override_config(self, tmp_path, pipeline):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("iterations = 1\nepochs = 2\nseed = 3\n", encoding="utf-8")
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        for out, extra in ((out_a, []), (out_b, ["--seed", "3"])):
            rc = invoke(
                "train",
                "--corpus", DATA / "toy_corpus.jsonl",
                "--queries", DATA / "toy_queries.jsonl",
                "--qrels", DATA / "toy_qrels.tsv",
                "--index", pipeline / "index.txt",
                "--config", cfg,
                "--output-dir", out,
                *extra,
            )
            assert rc == 0
        # same effective settings either way: identical artifacts
        assert (out_a / "scorer.txt").read_bytes() == (out_b / "scorer.txt").read_bytes()
        manifest = json.loads((out_b / "train.manifest.json").read_text(encoding="utf-8"))
        assert manifest["config"]["seed"] == 3
        assert manifest["config"]["iterations"] == 1

    def test_malformed_config(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("this has no equals sign\n", encoding="utf-8")
        rc = invoke("build-terms", "--corpus", DATA / "toy_corpus.jsonl",
                    "--queries", DATA / "toy_queries.jsonl",
                    "--qrels", DATA / "toy_qrels.tsv",
                    "--config", cfg, "--output-dir", tmp_path / "out")
        assert rc == 2


class TestPseudoPairs:
    def test_pseudo_pairs_accepted(self, pipeline, tmp_path):
        pseudo = tmp_path / "pseudo.jsonl"
        pseudo.write_text(
            '{"query_id": "pq1", "text": "granite lighthouse harbor", "doc_id": "lighthouse"}\n',
            encoding="utf-8",
        )
        rc = invoke(
            "train",
            "--corpus", DATA / "toy_corpus.jsonl",
            "--queries", DATA / "toy_queries.jsonl",
            "--qrels", DATA / "toy_qrels.tsv",
            "--index", pipeline / "index.txt",
            "--pseudo-pairs", pseudo,
            "--output-dir", tmp_path / "out",
            "--iterations", "1", "--epochs", "2",
        )
        assert rc == 0
        stats = [
            json.loads(line)
            for line in (tmp_path / "out" / "training-stats.jsonl").read_text().splitlines()
        ]
        assert stats[0]["num_pseudo"] == 1


class TestAblateAndBench:
    def test_ablate_command(self, pipeline, tmp_path):
        rc = invoke("ablate", "--index", pipeline / "index.txt",
                    "--scorer", pipeline / "train/scorer.txt",
                    "--queries", DATA / "toy_queries.jsonl",
                    "--qrels", DATA / "toy_qrels.tsv",
                    "--output-dir", tmp_path / "ab", "--beam", "5")
        assert rc == 0
        records = [
            json.loads(line)
            for line in (tmp_path / "ab" / "ablation.jsonl").read_text().splitlines()
        ]
        assert {r["identifier"] for r in records} == {"term_set", "sequence"}

    def test_bench_command(self, pipeline, tmp_path):
        rc = invoke("bench", "--index", pipeline / "index.txt",
                    "--scorer", pipeline / "train/scorer.txt",
                    "--queries", DATA / "toy_queries.jsonl",
                    "--beams", "2,5", "--output-dir", tmp_path / "bench")
        assert rc == 0
        records = [
            json.loads(line)
            for line in (tmp_path / "bench" / "efficiency.jsonl").read_text().splitlines()
        ]
        assert [r["beam_size"] for r in records] == [2, 5]
        assert all(r["memory_mb"] > 0 for r in records)

    def test_ablate_and_bench_write_manifests(self, pipeline, tmp_path):
        for cmd, out in (("ablate", tmp_path / "ab"), ("bench", tmp_path / "be")):
            args = ["--index", pipeline / "index.txt",
                    "--scorer", pipeline / "train/scorer.txt",
                    "--queries", DATA / "toy_queries.jsonl",
                    "--output-dir", out]
            if cmd == "ablate":
                args += ["--qrels", DATA / "toy_qrels.tsv", "--beam", "3"]
            else:
                args += ["--beams", "2"]
            assert invoke(cmd, *args) == 0
            manifest = json.loads((out / f"{cmd}.manifest.json").read_text(encoding="utf-8"))
            assert manifest["command"] == cmd
            assert manifest["outputs"]
