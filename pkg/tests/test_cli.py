"""CLI surface: exit codes, output files, determinism, formats."""

import numpy as np
import pytest

from modelkit import DataSet, cli


def _read(path):
    return path.read_bytes()


def test_unknown_example_exits_64(capsys, tmp_path):
    assert cli.run_example("no-such-thing", out=tmp_path) == 64
    assert "unknown example" in capsys.readouterr().err


def test_roundtrip_example_passes_checks(tmp_path, capsys):
    code = cli.run_example("roundtrip", seed=0, out=tmp_path, check=True)
    assert code == 0
    out = capsys.readouterr().out
    assert out.count("check [ok]") == 8
    assert (tmp_path / "roundtrip.csv").exists()
    assert (tmp_path / "roundtrip.dat").exists()


def test_roundtrip_reruns_bit_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert cli.run_example("roundtrip", seed=3, draws=4000, out=d) == 0
    assert _read(a / "roundtrip.csv") == _read(b / "roundtrip.csv")
    assert _read(a / "roundtrip.dat") == _read(b / "roundtrip.dat")


def test_check_failure_exits_2(tmp_path, capsys):
    # 60 draws is far too few for the 0.05 tolerance on mu and sigma
    code = cli.run_example("roundtrip", seed=1, draws=60, out=tmp_path,
                           check=True)
    assert code == 2
    assert "FAILED" in capsys.readouterr().out


def test_csv_format_mirrors_table(tmp_path, capsys):
    assert cli.run_example("roundtrip", draws=4000, out=tmp_path,
                           fmt="csv") == 0
    out = capsys.readouterr().out
    header = out.splitlines()[0]
    assert header == "model,param,truth,estimate,abs_err,tol"


def test_six_significant_digits():
    assert cli._fmt(0.0533123456) == "0.0533123"
    assert cli._fmt(1234567.89) == "1.23457e+06"
    assert cli._fmt(-1.0) == "-1"


def test_eval_prints_canonical_expression(capsys):
    code = cli.run_eval("fix( normal , sigma = 1 )")
    assert code == 0
    out = capsys.readouterr().out
    assert "fix(normal, sigma=1)" in out
    assert "mu" in out and "fixed" in out and "free" in out


def test_eval_parse_error_exits_64(capsys):
    code = cli.main(["eval", "cross(normal, normal"])
    assert code == 64
    assert "offset 20" in capsys.readouterr().err


def test_eval_with_data_estimates(tmp_path, capsys):
    path = tmp_path / "d.csv"
    DataSet(np.array([[0.4], [0.9], [1.7], [2.0], [1.0]])).to_csv(path)
    code = cli.run_eval("fix(normal, sigma=1)", data_path=str(path))
    assert code == 0
    out = capsys.readouterr().out
    assert "estimate" in out
    assert "1.2" in out  # sample mean


def test_eval_draw_output(tmp_path):
    code = cli.run_eval("normal", seed=7, draws=50, out=tmp_path)
    assert code == 0
    d = DataSet.from_csv(tmp_path / "eval.csv")
    assert len(d) == 50
    assert (tmp_path / "eval.dat").exists()


def test_main_usage_error_exits_64(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["frobnicate"])
    assert e.value.code == 64
    with pytest.raises(SystemExit) as e:
        cli.main([])
    assert e.value.code == 64


def test_main_run_with_flags(tmp_path, capsys):
    code = cli.main(["run", "roundtrip", "--seed", "2", "--draws", "4000",
                     "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "roundtrip.csv").exists()


def test_gnuplot_blocks_blank_separated(tmp_path):
    cli.run_example("roundtrip", draws=4000, out=tmp_path)
    text = (tmp_path / "roundtrip.dat").read_text()
    blocks = text.split("\n\n")
    assert len(blocks) == 4  # one ecdf per round-trip case
    first = blocks[0].splitlines()[0].split()
    assert len(first) == 2
    float(first[0]), float(first[1])
