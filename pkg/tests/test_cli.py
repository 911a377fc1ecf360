import json

import numpy as np
import pytest

from pxnet.cli import build_parser, main


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--model", "px", "--n", "40", "--rho", "0.25", "--seed", "7", "--out", str(out)]) == 0
    return out


def test_help_documents_every_flag(capsys):
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    for name, p in sub.choices.items():
        text = p.format_help()
        for act in p._actions:
            for opt in act.option_strings:
                assert opt in text, (name, opt)
            if act.option_strings and act.dest != "help":
                assert act.help, (name, act.dest)
    with pytest.raises(SystemExit) as e:
        parser.parse_args(["--help"])
    assert e.value.code == 0
    assert main(["--help"]) == 0


def test_simulate_outputs(sim_dir):
    for f in ("edges.csv", "nodes.csv", "columns.json", "manifest.json"):
        assert (sim_dir / f).exists()
    meta = json.loads((sim_dir / "columns.json").read_text())
    assert meta["formula"] == "sim"
    man = json.loads((sim_dir / "manifest.json").read_text())
    assert man["seed"] == 7 and "numpy" in man["versions"] and man["command"] == "simulate"


def test_simulate_then_fit(sim_dir, tmp_path):
    assert main(["fit", "--data", str(sim_dir), "--seed", "1", "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "fit.json").read_text())
    assert len(res["beta"]) == 4 and 0.05 < res["rho"] < 0.45
    assert res["columns"] == ["intercept", "both_x1", "abs_diff_x2", "x3"]


def test_fit_byte_identical(sim_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["fit", "--data", str(sim_dir), "--seed", "3", "--out", str(d)]) == 0
    assert (a / "fit.json").read_bytes() == (b / "fit.json").read_bytes()


def test_fit_custom_formula_and_overrides(sim_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"tol": 1e-3}))
    rc = main(["fit", "--edges", str(sim_dir / "edges.csv"), "--formula", "custom", "--columns", "x3",
               "--config", str(cfg), "--set", "max_outer=5", "--seed", "1", "--out", str(tmp_path)])
    assert rc == 0
    res = json.loads((tmp_path / "fit.json").read_text())
    assert res["columns"] == ["intercept", "x3"]
    assert res["config"]["tol"] == 1e-3 and res["config"]["max_outer"] == 5


def test_polbooks_formula(tmp_path):
    rng = np.random.default_rng(0)
    n = 30
    labels = rng.choice(["l", "c", "n"], n)
    (tmp_path / "nodes.csv").write_text("id,value\n" + "".join(f"{k},{labels[k]}\n" for k in range(n)))
    rows = []
    for j in range(n):
        for i in range(j):
            p = 0.5 if labels[i] == labels[j] else 0.1
            if rng.random() < p:
                rows.append(f"{i},{j}\n")
    (tmp_path / "edges.csv").write_text("i,j\n" + "".join(rows))
    rc = main(["fit", "--edges", str(tmp_path / "edges.csv"), "--nodes", str(tmp_path / "nodes.csv"),
               "--formula", "polbooks", "--seed", "1", "--out", str(tmp_path / "o")])
    assert rc == 0
    res = json.loads((tmp_path / "o" / "fit.json").read_text())
    assert len(res["beta"]) == 3 and 0 <= res["rho"] < 0.5


def test_predict(sim_dir, tmp_path):
    main(["fit", "--data", str(sim_dir), "--seed", "1", "--out", str(tmp_path)])
    (tmp_path / "t.csv").write_text("i,j\n0,1\n5,2\n")
    rc = main(["predict", "--data", str(sim_dir), "--fit", str(tmp_path / "fit.json"),
               "--targets", str(tmp_path / "t.csv"), "--out", str(tmp_path / "p")])
    assert rc == 0
    lines = (tmp_path / "p" / "scores.csv").read_text().splitlines()
    assert lines[0] == "i,j,p_hat" and lines[2].startswith("2,5,")


def test_cv_schema_and_determinism(sim_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("PXNET_THREADS", "1")
    for d in ("a", "b"):
        assert main(["cv", "--data", str(sim_dir), "--k", "10", "--estimators", "bcem,probit0",
                     "--seed", "3", "--out", str(tmp_path / d)]) == 0
    rep = json.loads((tmp_path / "a" / "cv_report.json").read_text())
    for e in ("bcem", "probit0"):
        assert set(rep["metrics"][e]) >= {"prauc", "roc_auc"}
    assert (tmp_path / "a" / "cv_report.json").read_bytes() == (tmp_path / "b" / "cv_report.json").read_bytes()
    assert (tmp_path / "a" / "cv_scores.csv").read_bytes() == (tmp_path / "b" / "cv_scores.csv").read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert set(man["mean_fold_seconds"]) == {"bcem", "probit0"}


def test_oracle_subcommand(tmp_path):
    rc = main(["oracle", "--n", "6", "--rhos", "0.2", "--reps", "1", "--draws", "100", "--seed", "2", "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "mle_summary.csv").read_text().startswith("rho,reps")


def test_study_subcommand(tmp_path):
    rc = main(["study", "--ns", "12", "--designs", "1", "--reps", "1", "--seed", "1", "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "study_summary.csv").exists()


@pytest.mark.parametrize("argv", [
    ["fit", "--edges", "/no/such.csv", "--seed", "1"],
    ["fit", "--data", "/no/such/dir", "--seed", "1"],
    ["simulate", "--n", "40"],
    ["simulate", "--n", "40", "--rho", "0.7", "--seed", "1"],
    ["cv", "--estimators", "ols", "--seed", "1", "--edges", "x"],
    ["bogus"],
])
def test_validation_errors_exit_2(argv, tmp_path, capsys):
    if argv[0] != "bogus":
        argv = argv + ["--out", str(tmp_path)]
    assert main(argv) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("pxnet") and "error" in err[0]


def test_unknown_bcem_option(sim_dir, tmp_path, capsys):
    assert main(["fit", "--data", str(sim_dir), "--set", "nope=1", "--seed", "1", "--out", str(tmp_path)]) == 2
    assert "unknown" in capsys.readouterr().err


def test_numeric_failure_exit_3(tmp_path, capsys):
    (tmp_path / "e.csv").write_text("i,j,y\n0,1,1\n0,2,1\n1,2,1\n0,3,1\n1,3,1\n2,3,1\n")
    assert main(["fit", "--edges", str(tmp_path / "e.csv"), "--seed", "1", "--out", str(tmp_path)]) == 3
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and "numerical" in err[0]


def test_bad_threads_env(sim_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("PXNET_THREADS", "zero")
    assert main(["cv", "--data", str(sim_dir), "--k", "2", "--estimators", "probit0", "--seed", "1", "--out", str(tmp_path)]) == 2
