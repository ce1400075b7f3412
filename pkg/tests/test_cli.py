import csv

import pytest

from prodcat import cli
from prodcat.metrics import read_comparison


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "c.toml").write_text('[knn]\nmetric = "manhattan"\nn_neighbors = 1\n[gbt]\nn_rounds = 5\nmax_depth = 3\n')
    assert cli.run(["synth", "--rows", "300", "--seed", "7", "--out", str(d / "d.csv")]) == 0
    assert cli.run(["train", "--data", str(d / "d.csv"), "--config", str(d / "c.toml"), "--out", str(d / "m.model")]) == 0
    return d


def test_unknown_subcommand(capsys):
    assert cli.run(["bogus"]) == 2
    err = capsys.readouterr().err
    assert "usage:" in err


def test_no_subcommand_and_help(capsys):
    assert cli.run([]) == 2
    assert cli.run(["--help"]) == 0
    assert "synth" in capsys.readouterr().out


def test_synth_and_train_outputs(workdir):
    assert (workdir / "d.csv").stat().st_size > 0
    assert (workdir / "d.csv.schema.toml").is_file()
    assert (workdir / "m.model").stat().st_size > 0


def test_evaluate_saved_model(workdir, capsys):
    report = workdir / "r.csv"
    rc = cli.run(["evaluate", "--data", str(workdir / "d.csv"), "--model", str(workdir / "m.model"), "--report", str(report)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "evaluation mode: saved model" in out and "hierarchy consistency" in out
    rows = read_comparison(report)
    assert [(r["target"], r["model"]) for r in rows] == [
        ("top_category", "gbt"), ("bottom_category", "knn"), ("color", "knn"),
    ]


def test_evaluate_training_set_matches_saved_model(workdir, capsys):
    a, b = workdir / "a.csv", workdir / "b.csv"
    cli.run(["evaluate", "--data", str(workdir / "d.csv"), "--model", str(workdir / "m.model"), "--report", str(a)])
    cli.run(["evaluate", "--data", str(workdir / "d.csv"), "--config", str(workdir / "c.toml"), "--report", str(b)])
    assert "training set" in capsys.readouterr().out
    assert a.read_text() == b.read_text()


def test_evaluate_holdout_never_trains_on_scored_rows(workdir, capsys, monkeypatch):
    seen = {}
    real = cli.train_ensemble

    def spy(data, config, threads=1):
        seen["titles"] = list(data.column("title"))
        return real(data, config, threads)

    monkeypatch.setattr(cli, "train_ensemble", spy)
    rc = cli.run(["evaluate", "--data", str(workdir / "d.csv"), "--config", str(workdir / "c.toml"), "--holdout", "0.25"])
    assert rc == 0
    assert "holdout (75 scored rows, 225 training rows)" in capsys.readouterr().out
    assert len(seen["titles"]) == 225


def test_compare_writes_nine_rows(workdir):
    report = workdir / "cmp.csv"
    args = ["evaluate", "--data", str(workdir / "d.csv"), "--config", str(workdir / "c.toml"), "--compare", "--report", str(report)]
    assert cli.run(args) == 0
    assert len(read_comparison(report)) == 9


def test_predict_and_reproducibility(workdir, capsys):
    out1, out2 = workdir / "p1.csv", workdir / "p2.csv"
    assert cli.run(["predict", "--data", str(workdir / "d.csv"), "--model", str(workdir / "m.model"), "--out", str(out1)]) == 0
    assert cli.run(["predict", "--data", str(workdir / "d.csv"), "--model", str(workdir / "m.model"), "--out", str(out2), "--threads", "3"]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    with open(out1, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["row_id", "top_category", "bottom_category", "color"] and len(rows) == 301
    assert cli.run(["predict", "--data", str(workdir / "d.csv"), "--model", str(workdir / "m.model")]) == 0
    assert capsys.readouterr().out == out1.read_text()


def test_retrain_byte_identical(workdir):
    again = workdir / "m2.model"
    assert cli.run(["train", "--data", str(workdir / "d.csv"), "--config", str(workdir / "c.toml"), "--out", str(again)]) == 0
    assert again.read_bytes() == (workdir / "m.model").read_bytes()


def test_inspect(workdir, capsys):
    assert cli.run(["inspect", "--model", str(workdir / "m.model")]) == 0
    out = capsys.readouterr().out
    assert "top_category: gbt" in out and "bottom_category: knn" in out and "format_version: 1" in out


def test_domain_errors_exit_one(workdir, tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[gbt]\nmin_split_loss = -1\n")
    assert cli.run(["train", "--data", str(workdir / "d.csv"), "--config", str(bad), "--out", str(tmp_path / "x")]) == 1
    assert cli.run(["train", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "x")]) == 1
    (tmp_path / "junk.model").write_text("{")
    assert cli.run(["inspect", "--model", str(tmp_path / "junk.model")]) == 1
    err = capsys.readouterr().err
    assert err.count("prodcat: error:") == 3


def test_usage_errors_exit_two(workdir):
    assert cli.run(["evaluate", "--data", "x.csv", "--holdout", "1.5"]) == 2
    assert cli.run(["train", "--data", "x.csv"]) == 2
    assert cli.run(["predict", "--data", "x", "--model", "m", "--threads", "0"]) == 2


def test_thread_env_default(monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "4")
    assert cli._default_threads() == 4
    monkeypatch.setenv(cli.THREADS_ENV, "lots")
    assert cli._default_threads() == 1
