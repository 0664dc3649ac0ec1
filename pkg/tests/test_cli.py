import csv
import io
import json

import pytest

from reconform.cli import CSV_HEADER, _table_spec, ConfigError, main

BASE = ["simulate", "--design", "unsup", "--method", "subsample", "--k", "10",
        "--n", "20", "--trials", "5", "--seed", "1"]


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_simulate_csv(capsys):
    code, out, _ = run(BASE, capsys)
    assert code == 0
    assert out.splitlines()[0] == ",".join(CSV_HEADER)
    (row,) = rows(out)
    assert row["method"] == "subsample" and row["k"] == "10" and row["N"] == "1"
    assert row["trials"] == "5" and row["seed"] == "1"
    assert 0.0 <= float(row["coverage"]) <= 1.0


def test_output_is_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(BASE + ["--out", str(a)]) == 0
    assert main(BASE + ["--out", str(b), "--threads", "3"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_grid_expands(capsys):
    code, out, _ = run(BASE[:-4] + ["--N", "1,2", "--alpha", "0.1,0.05",
                                    "--trials", "2", "--seed", "3"], capsys)
    assert code == 0
    assert len(rows(out)) == 4


def test_json_fields(capsys):
    code, out, _ = run(BASE + ["--format", "json"], capsys)
    assert code == 0
    (rec,) = json.loads(out)
    for key in ("design_id", "method_id", "params", "n_trials", "coverage",
                "mean_size", "full_coverage_flag", "failures", "seed", "mc_se"):
        assert key in rec
    assert rec["full_coverage_flag"] is False


def test_full_cell_writes_inf(capsys):
    code, out, _ = run(["simulate", "--k", "5", "--n", "10", "--method", "subsample",
                        "--trials", "3", "--seed", "2"], capsys)
    (row,) = rows(out)
    assert row["mean_size"] == "inf" and row["full_coverage_flag"] == "true"
    assert row["coverage"] == "1.0"


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# demo\nmethod = naive\nk = 12\nn = 10\ntrials = 2\nseed = 5\n")
    code, out, _ = run(["simulate", "--config", str(cfg)], capsys)
    assert code == 0 and rows(out)[0]["k"] == "12"
    code, out, _ = run(["simulate", "--config", str(cfg), "--k", "7"], capsys)
    assert code == 0 and rows(out)[0]["k"] == "7"


@pytest.mark.parametrize("extra", [["--alpha", "1.5"], ["--trials", "0"],
                                   ["--format", "xml"], ["--method", "bogus"],
                                   ["--k", "abc"]])
def test_config_errors(extra, capsys):
    code, _, err = run(BASE + extra, capsys)
    assert code == 2
    assert "configuration error" in err


def test_seed_required(capsys):
    code, _, err = run(["simulate", "--k", "10"], capsys)
    assert code == 2 and "seed" in err


def test_within_needs_shrinkage(capsys):
    code, _, _ = run(["simulate", "--k", "10", "--seed", "1", "--method", "within"], capsys)
    assert code == 2


def test_bad_config_file_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    assert run(["simulate", "--config", str(cfg)], capsys)[0] == 2


def test_io_error(tmp_path, capsys):
    code, _, err = run(BASE + ["--out", str(tmp_path / "missing" / "x.csv")], capsys)
    assert code == 3 and "i/o error" in err
    assert run(["simulate", "--config", str(tmp_path / "nope.cfg")], capsys)[0] == 3


def test_shrinkage_rows(capsys):
    code, out, _ = run(["simulate", "--design", "shrinkage", "--method", "within",
                        "--setup", "1", "--k", "5", "--n", "10", "--trials", "3",
                        "--seed", "4"], capsys)
    assert code == 0
    got = rows(out)
    assert [r["variant"] for r in got] == ["mean", "james-stein"]


def test_supervised_reports_incorrect(capsys):
    code, out, _ = run(["simulate", "--design", "sup", "--k", "5", "--n", "20",
                        "--trials", "2", "--seed", "6"], capsys)
    assert code == 0 and rows(out)[0]["incorrect_coverage"] != ""


def test_table_ids():
    assert _table_spec("1") == ("unsup-naive", 0.1)
    assert _table_spec("3") == ("unsup-naive", 0.025)
    assert _table_spec("7") == ("alpha-over-N", None)
    assert _table_spec("37") == ("sup-randomset-kde-mu1", 0.025)
    with pytest.raises(ConfigError):
        _table_spec("38")
    with pytest.raises(ConfigError):
        _table_spec("nope")


def test_alpha_over_n_grid(capsys):
    code, out, _ = run(["reproduce-table", "7", "--seed", "0"], capsys)
    assert code == 0
    got = rows(out)
    assert len(got) == 18
    assert float(got[1]["level"]) == pytest.approx(1 - 0.1 / 2)


def test_reproduce_small(capsys):
    code, out, _ = run(["reproduce-table", "unsup-naive", "--k", "5,10",
                        "--n", "20", "--trials", "2", "--seed", "0"], capsys)
    assert code == 0 and [r["k"] for r in rows(out)] == ["5", "10"]


def test_check_list_and_unknown(capsys):
    code, out, _ = run(["check", "--list"], capsys)
    assert code == 0 and "exchangeable-sandwich" in out.split()
    assert run(["check", "--criterion", "nope"], capsys)[0] == 2


def test_check_single_criterion(capsys):
    code, out, _ = run(["check", "--criterion", "guaranteed-full-coverage",
                        "--trials", "20"], capsys)
    assert code == 0
    assert "[PASS] guaranteed-full-coverage" in out
    assert "1/1 criteria passed" in out
