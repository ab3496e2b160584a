import json
from pathlib import Path

import numpy as np
import pytest

from conftest import FIXTURES
from mpisentinel import cli
from mpisentinel import embed as em
from mpisentinel import gnn
from mpisentinel import tabular
from mpisentinel.graph import build_graph
from mpisentinel.ircore import parse_ir


def run_cli(*argv, capsys=None):
    code = cli.main(list(argv))
    if capsys is None:
        return code, "", ""
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def manifest_path(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "manifest.json"
    code = cli.main(["ingest", "--suite", "mbi",
                     "--dir", str(FIXTURES / "corpus_mbi"),
                     "--compiler-cmd", "none", "--out", str(out)])
    assert code == 0
    return out


class TestIngest:
    def test_fixture_corpus_all_ok(self, tmp_path, capsys):
        out = tmp_path / "m.json"
        code, stdout, _ = run_cli(
            "ingest", "--suite", "corrbench",
            "--dir", str(FIXTURES / "corpus_corrbench"),
            "--compiler-cmd", "none", "--out", str(out), capsys=capsys)
        assert code == 0
        summary = json.loads(stdout)
        assert summary["samples"] == 30
        assert summary["quarantined"] == 0
        assert summary["compile_errors"] == 0
        doc = json.loads(out.read_text())
        assert all(s["status"] == "ok" for s in doc["samples"])

    def test_empty_directory_warns_exit_zero(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        out = tmp_path / "m.json"
        code, stdout, stderr = run_cli(
            "ingest", "--suite", "mbi", "--dir", str(empty),
            "--compiler-cmd", "none", "--out", str(out), capsys=capsys)
        assert code == 0
        assert json.loads(stdout)["samples"] == 0
        assert json.loads(stderr.splitlines()[-1])["warning"] == "EmptyCorpus"

    def test_unreadable_directory_exit_2(self, tmp_path, capsys):
        code, _, stderr = run_cli(
            "ingest", "--suite", "mbi", "--dir", str(tmp_path / "missing"),
            "--compiler-cmd", "none", "--out", str(tmp_path / "m.json"),
            capsys=capsys)
        assert code == 2
        assert json.loads(stderr.splitlines()[-1])["error"] == "UnreadableDirectory"


class TestEvaluate:
    def test_cross_with_error_type_rejected(self, manifest_path, tmp_path, capsys):
        code, _, stderr = run_cli(
            "evaluate", "--manifest", str(manifest_path),
            "--scenario", "cross", "--backend", "ir2vec-dt",
            "--labels", "error-type", "--train-suite", "MBI",
            "--validate-suite", "CorrBench",
            "--report", str(tmp_path / "r.json"), capsys=capsys)
        assert code == 2
        err = json.loads(stderr.splitlines()[-1])
        assert err["error"] == "InvalidScenario"
        assert "binary" in err["message"]

    def test_intra_dt_perfect_on_fixture_corpus(self, manifest_path, tmp_path,
                                                capsys):
        report_path = tmp_path / "r.json"
        code, stdout, _ = run_cli(
            "evaluate", "--manifest", str(manifest_path),
            "--scenario", "intra", "--suite", "MBI",
            "--backend", "ir2vec-dt", "--labels", "error-type",
            "--ga", "off", "--folds", "10", "--seed", "0",
            "--report", str(report_path), capsys=capsys)
        assert code == 0
        assert json.loads(stdout)["accuracy"] == 1.0
        report = json.loads(report_path.read_text())
        assert report["aggregate"]["metrics"]["accuracy"] == 1.0

    def test_byte_identical_reports(self, manifest_path, tmp_path, capsys):
        args = ["evaluate", "--manifest", str(manifest_path),
                "--scenario", "intra", "--suite", "MBI",
                "--backend", "ir2vec-dt", "--labels", "binary",
                "--folds", "5", "--seed", "7"]
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        assert cli.main(args + ["--report", str(a)]) == 0
        assert cli.main(args + ["--report", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_bad_manifest_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{}")
        code, _, stderr = run_cli(
            "evaluate", "--manifest", str(bad), "--scenario", "intra",
            "--suite", "MBI", "--report", str(tmp_path / "r.json"),
            capsys=capsys)
        assert code == 2


class TestAblate:
    def test_single_exclusion(self, manifest_path, tmp_path, capsys):
        report_path = tmp_path / "ab.json"
        code, stdout, _ = run_cli(
            "ablate", "--manifest", str(manifest_path),
            "--exclude", "MessageRace", "--folds", "5",
            "--report", str(report_path), capsys=capsys)
        assert code == 0
        report = json.loads(report_path.read_text())
        assert list(report["accuracy"]) == ["MessageRace"]

    def test_pair_exclusion(self, manifest_path, tmp_path, capsys):
        report_path = tmp_path / "ab2.json"
        code, stdout, _ = run_cli(
            "ablate", "--manifest", str(manifest_path),
            "--exclude", "MessageRace", "--exclude", "ResourceLeak",
            "--folds", "5", "--report", str(report_path), capsys=capsys)
        assert code == 0
        report = json.loads(report_path.read_text())
        assert sorted(report["accuracy"]) == ["MessageRace", "ResourceLeak"]

    def test_absent_label_exit_2(self, manifest_path, tmp_path, capsys):
        code, _, stderr = run_cli(
            "ablate", "--manifest", str(manifest_path),
            "--exclude", "ArgError", "--folds", "5",
            "--report", str(tmp_path / "x.json"), capsys=capsys)
        assert code == 2
        err = json.loads(stderr.splitlines()[-1])
        assert err["error"] == "LabelAbsent"
        assert "ArgError" in err["message"]

    def test_exclude_correct_exit_2(self, manifest_path, tmp_path, capsys):
        code, _, stderr = run_cli(
            "ablate", "--manifest", str(manifest_path),
            "--exclude", "Correct", "--folds", "5",
            "--report", str(tmp_path / "x.json"), capsys=capsys)
        assert code == 2


def train_dt_model_file(path):
    """Fit the DT backend on the bundled corpus and save a model file."""
    vocab = em.SeedVocab(0, 256)
    rows, labels = [], []
    for ll in sorted((FIXTURES / "corpus_mbi").glob("*.ll")):
        module = parse_ir(ll.read_text(), ll.stem)
        rows.append(em.embed(module, vocab).values)
        labels.append(ll.stem.rsplit("_", 1)[0])
    x = em.normalize(np.vstack(rows), "vector")
    space = sorted(set(labels))
    tree = tabular.train_tree(tabular.LabeledVectors(x, labels, space))
    tabular.save_model(path, tree, None, space,
                       {"strategy": "vector", "dim": 256,
                        "weights": [1.0, 0.5, 0.2]}, seed=0)
    return space


def train_gnn_model_file(path):
    samples = []
    for ll in sorted((FIXTURES / "corpus_mbi").glob("*.ll"))[:20]:
        module = parse_ir(ll.read_text(), ll.stem)
        samples.append((build_graph(module), ll.stem.rsplit("_", 1)[0]))
    space = sorted({lab for _, lab in samples})
    cfg = gnn.GnnConfig(num_classes=len(space), layer_sizes=(16, 12, 8),
                        node_embed_dim=8, fc_hidden=8, lr=1e-2, epochs=10,
                        batch_size=4, rng_seed=0)
    model = gnn.init_model(cfg, gnn.build_vocab([g for g, _ in samples]), space)
    model, _ = gnn.train(model, samples, cfg)
    gnn.save_checkpoint(path, model)


class TestPredict:
    def test_dt_model_predicts_fixture_label(self, tmp_path, capsys):
        model_path = tmp_path / "dt.json"
        train_dt_model_file(model_path)
        code, stdout, _ = run_cli(
            "predict", "--model", str(model_path),
            "--ir", str(FIXTURES / "corpus_mbi" / "messagerace_3.ll"),
            capsys=capsys)
        assert code == 0
        out = json.loads(stdout)
        assert out["label"] == "messagerace"
        assert out["leaf_class_counts"] == {"messagerace": 7}

    def test_dt_on_empty_ir_is_deterministic_zero_vector(self, tmp_path, capsys):
        model_path = tmp_path / "dt.json"
        train_dt_model_file(model_path)
        empty = tmp_path / "empty.ll"
        empty.write_text("")
        results = set()
        for _ in range(2):
            code, stdout, _ = run_cli("predict", "--model", str(model_path),
                                      "--ir", str(empty), capsys=capsys)
            assert code == 0
            results.add(json.loads(stdout)["label"])
        assert len(results) == 1

    def test_gnn_model_predicts(self, tmp_path, capsys):
        model_path = tmp_path / "gnn.json"
        train_gnn_model_file(model_path)
        code, stdout, _ = run_cli(
            "predict", "--model", str(model_path),
            "--ir", str(FIXTURES / "corpus_mbi" / "callordering_0.ll"),
            capsys=capsys)
        assert code == 0
        out = json.loads(stdout)
        assert set(out) == {"label", "probabilities"}
        assert abs(sum(out["probabilities"].values()) - 1.0) < 1e-9

    def test_gnn_on_empty_ir_exit_2(self, tmp_path, capsys):
        model_path = tmp_path / "gnn.json"
        train_gnn_model_file(model_path)
        empty = tmp_path / "empty.ll"
        empty.write_text("")
        code, _, stderr = run_cli("predict", "--model", str(model_path),
                                  "--ir", str(empty), capsys=capsys)
        assert code == 2
        assert json.loads(stderr.splitlines()[-1])["error"] == "EmptyGraph"

    def test_malformed_ir_exit_2(self, tmp_path, capsys):
        model_path = tmp_path / "dt.json"
        train_dt_model_file(model_path)
        broken = tmp_path / "broken.ll"
        broken.write_text("define void @f() {\n  ret void\n")
        code, _, stderr = run_cli("predict", "--model", str(model_path),
                                  "--ir", str(broken), capsys=capsys)
        assert code == 2

    def test_unknown_model_kind_exit_2(self, tmp_path, capsys):
        weird = tmp_path / "weird.json"
        weird.write_text(json.dumps({"kind": "bayes"}))
        ir = FIXTURES / "corpus_mbi" / "correct_0.ll"
        code, _, stderr = run_cli("predict", "--model", str(weird),
                                  "--ir", str(ir), capsys=capsys)
        assert code == 2


class TestConfigPrecedence:
    def test_env_compiler_cmd_used_when_flag_missing(self, tmp_path, capsys,
                                                     monkeypatch):
        monkeypatch.setenv(cli.ENV_COMPILER, "none")
        out = tmp_path / "m.json"
        code, _, _ = run_cli(
            "ingest", "--suite", "mbi", "--dir", str(FIXTURES / "corpus_mbi"),
            "--out", str(out), capsys=capsys)
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["provenance"]["compiler_cmd"] == "none"

    def test_flag_beats_env(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv(cli.ENV_COMPILER, "/bogus {source} {output} {opt}")
        out = tmp_path / "m.json"
        code, _, _ = run_cli(
            "ingest", "--suite", "mbi", "--dir", str(FIXTURES / "corpus_mbi"),
            "--compiler-cmd", "none", "--out", str(out), capsys=capsys)
        assert code == 0

    def test_config_file_overlay(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"compiler_cmd": "none", "jobs": 2}))
        out = tmp_path / "m.json"
        code, _, _ = run_cli(
            "--config", str(cfg), "ingest", "--suite", "mbi",
            "--dir", str(FIXTURES / "corpus_mbi"), "--out", str(out),
            capsys=capsys)
        assert code == 0

    def test_usage_error_exit_2(self, capsys):
        assert cli.main(["evaluate", "--scenario", "bogus"]) == 2


class TestInternalsAndCsv:
    def test_internal_error_exit_3(self, manifest_path, tmp_path, capsys,
                                   monkeypatch):
        from mpisentinel import evaluate as ev

        def boom(*a, **k):
            raise RuntimeError("scenario exploded")
        monkeypatch.setattr(ev, "run_scenario", boom)
        code, _, stderr = run_cli(
            "evaluate", "--manifest", str(manifest_path),
            "--scenario", "intra", "--suite", "MBI",
            "--report", str(tmp_path / "r.json"), capsys=capsys)
        assert code == 3
        assert json.loads(stderr.splitlines()[-1])["error"] == "InternalError"

    def test_report_csv_flag(self, manifest_path, tmp_path, capsys):
        csv_path = tmp_path / "r.csv"
        code, _, _ = run_cli(
            "evaluate", "--manifest", str(manifest_path),
            "--scenario", "intra", "--suite", "MBI", "--folds", "5",
            "--report", str(tmp_path / "r.json"),
            "--report-csv", str(csv_path), capsys=capsys)
        assert code == 0
        assert csv_path.read_text().startswith("row,tp,tn,")

    def test_runtime_errors_exit_1(self, tmp_path, capsys):
        import shutil
        corpus_dir = tmp_path / "corpus"
        shutil.copytree(FIXTURES / "corpus_mbi", corpus_dir)
        (corpus_dir / "correct_0.ll").write_text("define void @f() {\n ret void\n")
        manifest = tmp_path / "m.json"
        assert cli.main(["ingest", "--suite", "mbi", "--dir", str(corpus_dir),
                         "--compiler-cmd", "none", "--out", str(manifest)]) == 0
        capsys.readouterr()
        code, stdout, _ = run_cli(
            "evaluate", "--manifest", str(manifest), "--scenario", "intra",
            "--suite", "MBI", "--folds", "5",
            "--report", str(tmp_path / "r.json"), capsys=capsys)
        assert code == 1
        assert json.loads(stdout.splitlines()[-1])["runtime_errors"] == 1
