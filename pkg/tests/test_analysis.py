import json
import math

import numpy as np
import pytest

from pottslab.analysis import (CONVENTIONS, emit_report, exponential_rate, power_law_constant,
                               probability_constant, ratio_constant, read_sequence_csv,
                               regression_exponent, successive_rate, telescoping_series,
                               write_sequence_csv)
from pottslab.model import ParameterError, critical_params, new_params
from pottslab.recursion import pure_deviation_sequence


def test_targets():
    assert ratio_constant(3) == pytest.approx(8 / 54, rel=1e-15)
    assert probability_constant(3, 3) == pytest.approx(3.0, rel=1e-15)
    assert probability_constant(5, 4) == pytest.approx(4.5511, abs=1e-4)
    assert math.log(new_params(3, 3, 0.5).contraction) == pytest.approx(-0.5108256, abs=1e-7)
    assert math.log(new_params(4, 3, 0.5).contraction) == pytest.approx(-0.2231436, abs=1e-7)


def test_regime_and_size_checks():
    with pytest.raises(ParameterError):
        power_law_constant(new_params(3, 3, 0.5), 10 ** 4)
    with pytest.raises(ParameterError):
        exponential_rate(critical_params(3, 3), 400)
    with pytest.raises(ParameterError):
        telescoping_series(new_params(3, 3, 0.5), 100)
    with pytest.raises(ValueError):
        power_law_constant(critical_params(3, 3), 999)
    with pytest.raises(ValueError):
        exponential_rate(new_params(3, 3, 0.5), 49)


def test_power_law_uses_even_index():
    P = critical_params(3, 3)
    res = power_law_constant(P, 10001)
    assert res.ratio.n_used == 10000 and res.ratio_odd.n_used == 10001
    res = power_law_constant(P, 10000)
    assert res.ratio.n_used == 10000 and res.ratio_odd.n_used == 9999


@pytest.mark.parametrize("d,q", [(3, 3), (5, 4)])
def test_power_law_estimator_settles(d, q):
    P = critical_params(d, q)
    eps = pure_deviation_sequence(P, 400_000)
    a = power_law_constant(P, 200_000, eps[:200_000]).probability.estimator_value
    b = power_law_constant(P, 400_000, eps).probability.estimator_value
    assert abs(a - b) / b <= 0.02


@pytest.mark.parametrize("d,q", [(3, 3), (5, 4)])
def test_odd_even_agree(d, q):
    res = power_law_constant(critical_params(d, q), 10 ** 6)
    assert res.odd_even_gap <= 0.02


@pytest.mark.parametrize("d,q", [(3, 3), (4, 3)])
def test_exponential_error_decays(d, q):
    P = new_params(d, q, 0.5)
    for N in (100, 200, 400, 1600):
        assert exponential_rate(P, 2 * N).abs_error < exponential_rate(P, N).abs_error


def test_exponential_rate_large_n_no_underflow():
    est = exponential_rate(new_params(3, 3, 0.5), 5000)
    assert math.isfinite(est.estimator_value) and est.relative_error < 1e-3


@pytest.mark.parametrize("d,q", [(3, 3), (4, 3)])
def test_successive_rate_diagnostic(d, q):
    P = new_params(d, q, 0.5)
    assert successive_rate(P, 400).relative_error < 1e-12


@pytest.mark.parametrize("d,q", [(3, 3), (5, 4)])
def test_telescoping_cesaro(d, q):
    res = telescoping_series(critical_params(d, q), 10 ** 6)
    assert res.increments.size == 500_000
    assert res.relative_error <= 0.01


def test_regression_exponent_near_half():
    eps = pure_deviation_sequence(critical_params(3, 3), 10 ** 5)
    assert regression_exponent(eps) == pytest.approx(-0.5, abs=0.01)


def test_csv_round_trip(tmp_path):
    eps = pure_deviation_sequence(critical_params(3, 3), 500)
    path = tmp_path / "seq.csv"
    write_sequence_csv(path, 3, eps)
    n, back, dev = read_sequence_csv(path)
    assert n.tolist() == list(range(1, 501))
    assert np.array_equal(back, eps)
    assert np.array_equal(dev, (2 * eps) / (3 * (3 + eps)))
    assert path.read_text().splitlines()[0] == "n,eps,marginal_dev"


def test_csv_unwritable(tmp_path):
    with pytest.raises(OSError, match="cannot write"):
        write_sequence_csv(tmp_path / "missing" / "x.csv", 3, np.zeros(3))


def test_empty_report(tmp_path):
    path = tmp_path / "r.json"
    emit_report({}, path)
    assert path.read_text() == "{}\n"


def test_report_fields(tmp_path):
    P = critical_params(3, 3)
    path = tmp_path / "r.json"
    res = power_law_constant(P, 2000)
    emit_report({"power_law": res, "nan": float("nan")}, path, P)
    doc = json.loads(path.read_text())
    assert doc["conventions"] == CONVENTIONS
    assert doc["params"]["regime"] == "Critical"
    assert doc["version"].startswith("0.1.0")
    assert doc["results"]["nan"] is None
    assert doc["results"]["power_law"]["ratio"]["n_used"] == 2000
    emit_report({"power_law": res}, tmp_path / "s.json", P)
    emit_report({"power_law": res}, tmp_path / "t.json", P)
    assert (tmp_path / "s.json").read_bytes() == (tmp_path / "t.json").read_bytes()
