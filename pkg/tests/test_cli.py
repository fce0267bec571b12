"""End-to-end command line behavior, run in process through main()."""

from __future__ import annotations

import json

import numpy as np
import pytest

from bpv.cli import main
from bpv.codes import read_codes, read_vectors
from bpv.corpus import Vocabulary, write_jsonl
from bpv.models import BINARY_PVDBOW, init_params, save_model


@pytest.fixture(scope="module")
def workdir(tmp_path_factory, raw_docs):
    """One ingested, trained, inferred pipeline shared by the read-only tests."""
    root = tmp_path_factory.mktemp("cli")
    write_jsonl(str(root / "corpus.jsonl"), raw_docs)
    assert main([
        "ingest", "--format", "jsonl",
        "--source", str(root / "corpus.jsonl"),
        "--out", str(root / "corp"),
        "--test-fraction", "0.4", "--seed", "1",
    ]) == 0
    assert main([
        "train",
        "--corpus", str(root / "corp.train.jsonl"),
        "--vocab", str(root / "corp.vocab"),
        "--bits", "16", "--epochs", "2", "--neg", "8", "--seed", "7",
        "--deterministic",
        "--model-out", str(root / "model.bpv1"),
        "--report", str(root / "train_report.jsonl"),
    ]) == 0
    assert main([
        "infer",
        "--model", str(root / "model.bpv1"),
        "--corpus", str(root / "corp.test.jsonl"),
        "--codes-out", str(root / "test.codes"),
        "--vectors-out", str(root / "test.vecs"),
        "--epochs", "2", "--neg", "8", "--seed", "7", "--deterministic",
    ]) == 0
    return root


def test_pipeline_writes_artifacts(workdir):
    vocab = Vocabulary.load(str(workdir / "corp.vocab"))
    assert vocab.size > 0
    ids, words, width = read_codes(str(workdir / "test.codes"))
    assert width == 16
    assert words.shape == (len(ids), 1)
    vec_ids, vectors = read_vectors(str(workdir / "test.vecs"))
    assert vec_ids == ids
    assert vectors.shape == (len(ids), 16)
    report = [
        json.loads(line)
        for line in (workdir / "train_report.jsonl").read_text().splitlines()
    ]
    assert [r["epoch"] for r in report] == [1, 2]
    assert all(r["seconds"] == 0.0 for r in report)  # deterministic mode
    assert report[1]["mean_loss"] < report[0]["mean_loss"]


def test_eval_hamming_report_and_csv(workdir, tmp_path, capsys):
    report = tmp_path / "eval.txt"
    csv = tmp_path / "pr.csv"
    rc = main([
        "eval",
        "--codes", str(workdir / "test.codes"),
        "--labels", str(workdir / "corp.test.jsonl"),
        "--report", str(report), "--pr-csv", str(csv),
    ])
    assert rc == 0
    out = capsys.readouterr().out
    assert "mode hamming" in out and "map " in out
    assert report.read_text() == out[out.index("mode hamming"):]
    lines = csv.read_text().splitlines()
    assert lines[0] == "recall,precision" and len(lines) == 12


def test_eval_cosine_and_filter_rerank(workdir, capsys):
    rc = main([
        "eval", "--mode", "cosine",
        "--vectors", str(workdir / "test.vecs"),
        "--labels", str(workdir / "corp.test.jsonl"),
    ])
    assert rc == 0
    assert "mode cosine" in capsys.readouterr().out
    rc = main([
        "eval", "--mode", "filter-rerank", "--radius", "4",
        "--codes", str(workdir / "test.codes"),
        "--vectors", str(workdir / "test.vecs"),
        "--labels", str(workdir / "corp.test.jsonl"),
    ])
    assert rc == 0
    out = capsys.readouterr().out
    assert "mode filter-rerank" in out and "radius 4" in out


def test_eval_max_queries(workdir, capsys):
    rc = main([
        "eval",
        "--codes", str(workdir / "test.codes"),
        "--labels", str(workdir / "corp.test.jsonl"),
        "--max-queries", "3",
    ])
    assert rc == 0
    out = capsys.readouterr().out
    fields = dict(line.split(" ", 1) for line in out.strip().splitlines())
    assert int(fields["queries"]) + int(fields["skipped_no_relevant"]) == 3


def test_eval_usage_and_data_errors(workdir, tmp_path, capsys):
    # filter-rerank without a radius is a usage error
    rc = main([
        "eval", "--mode", "filter-rerank",
        "--codes", str(workdir / "test.codes"),
        "--vectors", str(workdir / "test.vecs"),
        "--labels", str(workdir / "corp.test.jsonl"),
    ])
    assert rc == 1
    # labels file that misses the indexed ids is a data error
    write_jsonl(str(tmp_path / "other.jsonl"), [])
    rc = main([
        "eval",
        "--codes", str(workdir / "test.codes"),
        "--labels", str(tmp_path / "other.jsonl"),
    ])
    assert rc == 2
    capsys.readouterr()


def test_export_vectors(workdir, tmp_path):
    out = tmp_path / "train.vecs"
    rc = main([
        "export-vectors",
        "--model", str(workdir / "model.bpv1"),
        "--corpus", str(workdir / "corp.train.jsonl"),
        "--vectors-out", str(out),
        "--epochs", "1", "--neg", "8", "--deterministic",
    ])
    assert rc == 0
    ids, vectors = read_vectors(str(out))
    assert vectors.shape[1] == 16 and len(ids) == vectors.shape[0]


def test_baseline_rhp_and_itq(workdir, tmp_path):
    rc = main([
        "baseline", "--method", "rhp",
        "--vectors", str(workdir / "test.vecs"),
        "--bits", "8", "--seed", "3",
        "--codes-out", str(tmp_path / "rhp.codes"),
        "--model-out", str(tmp_path / "rhp.bpv1"),
    ])
    assert rc == 0
    ids, words, width = read_codes(str(tmp_path / "rhp.codes"))
    assert width == 8 and len(ids) == words.shape[0]
    rc = main([
        "baseline", "--method", "itq",
        "--vectors", str(workdir / "test.vecs"),
        "--fit-vectors", str(workdir / "test.vecs"),
        "--bits", "4", "--itq-iterations", "10",
        "--codes-out", str(tmp_path / "itq.codes"),
    ])
    assert rc == 0
    _, _, width = read_codes(str(tmp_path / "itq.codes"))
    assert width == 4


def test_infer_runs_are_byte_identical(workdir, tmp_path):
    outs = []
    for run in ("one", "two"):
        codes = tmp_path / f"{run}.codes"
        vecs = tmp_path / f"{run}.vecs"
        rc = main([
            "infer",
            "--model", str(workdir / "model.bpv1"),
            "--corpus", str(workdir / "corp.test.jsonl"),
            "--codes-out", str(codes), "--vectors-out", str(vecs),
            "--epochs", "2", "--neg", "8", "--seed", "7", "--deterministic",
        ])
        assert rc == 0
        outs.append((codes.read_bytes(), vecs.read_bytes()))
    assert outs[0] == outs[1]
    # and they reproduce the fixture's own artifacts
    assert outs[0][0] == (workdir / "test.codes").read_bytes()


def test_config_file_values_and_cli_precedence(workdir, tmp_path):
    cfg = tmp_path / "train.cfg"
    cfg.write_text(
        "# comment line\n"
        "epochs = 3\n"
        "neg = 8\n"
        "seed = 7\n"
        "bits = 16\n"
        "deterministic = yes\n"
    )
    model_a = tmp_path / "a.bpv1"
    rc = main([
        "train", "--config", str(cfg),
        "--corpus", str(workdir / "corp.train.jsonl"),
        "--vocab", str(workdir / "corp.vocab"),
        "--model-out", str(model_a),
        "--epochs", "2",  # flag beats the config's 3
        "--report", str(tmp_path / "a.jsonl"),
    ])
    assert rc == 0
    report = (tmp_path / "a.jsonl").read_text().splitlines()
    assert len(report) == 2
    # same settings spelled fully as flags give the identical artifact
    assert model_a.read_bytes() == (workdir / "model.bpv1").read_bytes()


def test_config_file_errors(workdir, tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("no_such_key = 5\n")
    args = [
        "train", "--config", str(bad),
        "--corpus", str(workdir / "corp.train.jsonl"),
        "--vocab", str(workdir / "corp.vocab"),
        "--model-out", str(tmp_path / "x.bpv1"),
    ]
    assert main(args) == 1
    assert "unknown config key" in capsys.readouterr().err
    args[2] = str(tmp_path / "absent.cfg")
    assert main(args) == 1
    malformed = tmp_path / "malformed.cfg"
    malformed.write_text("just some words\n")
    args[2] = str(malformed)
    assert main(args) == 1


def test_usage_errors_exit_1(workdir, tmp_path, capsys):
    assert main([]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["train", "--model", "bogus-kind"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 1
    # missing required option, reported by the resolver
    assert main(["train", "--corpus", str(workdir / "corp.train.jsonl")]) == 1
    # infer without any output selected
    assert main([
        "infer",
        "--model", str(workdir / "model.bpv1"),
        "--corpus", str(workdir / "corp.test.jsonl"),
    ]) == 1
    capsys.readouterr()


def test_missing_data_files_exit_2(workdir, tmp_path, capsys):
    assert main([
        "train",
        "--corpus", str(tmp_path / "absent.jsonl"),
        "--vocab", str(workdir / "corp.vocab"),
        "--model-out", str(tmp_path / "x.bpv1"),
    ]) == 2
    assert main([
        "eval",
        "--codes", str(tmp_path / "absent.codes"),
        "--labels", str(workdir / "corp.test.jsonl"),
    ]) == 2
    capsys.readouterr()


def test_numeric_failure_exits_3(workdir, tmp_path, capsys):
    vocab = Vocabulary.load(str(workdir / "corp.vocab"))
    params = init_params(BINARY_PVDBOW, vocab, 8, doc_count=1, seed=0)
    params.softmax_weights[0, 0] = np.inf
    broken = tmp_path / "broken.bpv1"
    save_model(str(broken), params)
    rc = main([
        "infer",
        "--model", str(broken),
        "--corpus", str(workdir / "corp.test.jsonl"),
        "--codes-out", str(tmp_path / "x.codes"),
        "--epochs", "1", "--neg", "0",
    ])
    assert rc == 3
    assert "numeric failure" in capsys.readouterr().err


def test_deterministic_forces_single_worker(workdir, tmp_path, capsys):
    rc = main([
        "infer",
        "--model", str(workdir / "model.bpv1"),
        "--corpus", str(workdir / "corp.test.jsonl"),
        "--codes-out", str(tmp_path / "w.codes"),
        "--epochs", "1", "--neg", "8",
        "--workers", "4", "--deterministic",
    ])
    assert rc == 0
    assert "forces --workers 1" in capsys.readouterr().err


def test_ingest_without_split_source_needs_fraction(tmp_path, raw_docs, capsys):
    src = tmp_path / "docs.jsonl"
    write_jsonl(str(src), raw_docs)
    rc = main([
        "ingest", "--format", "jsonl",
        "--source", str(src),
        "--out", str(tmp_path / "c"),
    ])
    assert rc == 1
    assert "test-fraction" in capsys.readouterr().err


def test_ingest_empty_vocabulary_is_data_error(tmp_path, raw_docs, capsys):
    src = tmp_path / "docs.jsonl"
    write_jsonl(str(src), raw_docs)
    rc = main([
        "ingest", "--format", "jsonl",
        "--source", str(src),
        "--out", str(tmp_path / "c"),
        "--test-fraction", "0.3",
        "--min-count", "100000",
    ])
    assert rc == 2
    capsys.readouterr()


def test_train_pvdm_cli_and_bigram_rejection(workdir, tmp_path, raw_docs, capsys):
    model = tmp_path / "pvdm.bpv1"
    rc = main([
        "train", "--model", "binary-pvdm",
        "--corpus", str(workdir / "corp.train.jsonl"),
        "--vocab", str(workdir / "corp.vocab"),
        "--bits", "8", "--window", "1", "--epochs", "1", "--neg", "4",
        "--deterministic",
        "--model-out", str(model),
    ])
    assert rc == 0
    codes = tmp_path / "pvdm.codes"
    rc = main([
        "infer",
        "--model", str(model),
        "--corpus", str(workdir / "corp.test.jsonl"),
        "--codes-out", str(codes),
        "--epochs", "1", "--neg", "4", "--deterministic",
    ])
    assert rc == 0
    assert read_codes(str(codes))[2] == 8

    src = tmp_path / "docs.jsonl"
    write_jsonl(str(src), raw_docs)
    assert main([
        "ingest", "--format", "jsonl", "--source", str(src),
        "--out", str(tmp_path / "bi"), "--test-fraction", "0.3", "--bigrams",
    ]) == 0
    rc = main([
        "train", "--model", "binary-pvdm",
        "--corpus", str(tmp_path / "bi.train.jsonl"),
        "--vocab", str(tmp_path / "bi.vocab"),
        "--bits", "8", "--epochs", "1",
        "--model-out", str(tmp_path / "nope.bpv1"),
    ])
    assert rc == 2  # bigram vocabularies cannot drive the context model
    capsys.readouterr()


def test_train_checkpoints_per_epoch(workdir, tmp_path):
    ckpt = tmp_path / "ckpts"
    rc = main([
        "train",
        "--corpus", str(workdir / "corp.train.jsonl"),
        "--vocab", str(workdir / "corp.vocab"),
        "--bits", "8", "--epochs", "2", "--neg", "4", "--deterministic",
        "--model-out", str(tmp_path / "m.bpv1"),
        "--checkpoint-dir", str(ckpt),
    ])
    assert rc == 0
    assert sorted(p.name for p in ckpt.iterdir()) == [
        "epoch001.bpv1", "epoch002.bpv1",
    ]


def test_infer_plain_model_has_no_codes(workdir, tmp_path, capsys):
    model = tmp_path / "plain.bpv1"
    rc = main([
        "train", "--model", "plain-pvdbow", "--dim", "8",
        "--corpus", str(workdir / "corp.train.jsonl"),
        "--vocab", str(workdir / "corp.vocab"),
        "--epochs", "1", "--neg", "4", "--deterministic",
        "--model-out", str(model),
    ])
    assert rc == 0
    rc = main([
        "infer",
        "--model", str(model),
        "--corpus", str(workdir / "corp.test.jsonl"),
        "--codes-out", str(tmp_path / "x.codes"),
        "--epochs", "1", "--neg", "4",
    ])
    assert rc == 2
    assert "produces no binary codes" in capsys.readouterr().err
