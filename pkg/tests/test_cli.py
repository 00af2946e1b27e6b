import json
import subprocess
import sys

import pytest

from pottslab.cli import main


def run(capsys, *argv):
    rc = main(list(argv))
    out = capsys.readouterr()
    return rc, out.out, out.err


def test_oracle_check_passes(capsys):
    rc, out, _ = run(capsys, "oracle-check", "--d", "2", "--q", "3", "--p", "0.3", "--n", "2")
    assert rc == 0 and out.strip().endswith("PASS")


def test_json_output(capsys):
    rc, out, _ = run(capsys, "exponent", "--d", "3", "--q", "3", "--critical", "--N", "1e4",
                     "--rtol", "0.5", "--json")
    doc = json.loads(out)
    assert rc == 0 and doc["command"] == "exponent" and "version" in doc


def test_failure_exit_code(capsys):
    # a tolerance no estimator can meet
    rc, out, _ = run(capsys, "exponent", "--d", "3", "--q", "3", "--critical", "--N", "1e4",
                     "--rtol", "1e-9")
    assert rc == 1 and out.strip().endswith("FAIL")


@pytest.mark.parametrize("argv", [
    ["exponent", "--d", "3", "--q", "3", "--p", "1.5"],
    ["exponent", "--d", "3", "--q", "3", "--p", "0.25", "--critical"],
    ["exponent", "--d", "2", "--q", "3", "--critical"],
    ["exponent", "--d", "3", "--q", "3", "--critical", "--N", "10"],
    ["no-such-command"],
    ["oracle-check", "--d", "2", "--q", "3", "--p", "0.5", "--n", "3",
     "--budget-configs", "1e3"],
])
def test_usage_errors(capsys, argv):
    rc, _, err = run(capsys, *argv)
    assert rc == 2 and "error" in err


def test_zero_temperature_message(capsys):
    rc, _, err = run(capsys, "exponent", "--d", "2", "--q", "3", "--critical")
    assert rc == 2 and "zero-temperature" in err


def test_out_is_deterministic_across_workers(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    base = ["h-max", "--d", "3", "--q", "3", "--p", "0.5", "--r", "2.0"]
    assert run(capsys, *base, "--workers", "1", "--out", str(a))[0] == 0
    assert run(capsys, *base, "--workers", "4", "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_iterate_csv(tmp_path, capsys):
    path = tmp_path / "seq.csv"
    rc, _, _ = run(capsys, "iterate", "--d", "3", "--q", "3", "--critical", "--N", "100",
                   "--csv", str(path))
    assert rc == 0 and len(path.read_text().splitlines()) == 101


def test_frozen_search_require(tmp_path, capsys):
    path = tmp_path / "xi.txt"
    rc, _, _ = run(capsys, "frozen-search", "--d", "3", "--q", "3", "--p", "0.01", "--n", "2",
                   "--require", "--save-boundary", str(path))
    assert rc == 0 and len(path.read_text().split()) == 9


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "pottslab", "taylor", "--d", "3", "--q", "3",
                          "--critical"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip().endswith("PASS")
