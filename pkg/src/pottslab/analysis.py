"""Limits extracted from the pure-boundary sequence, and report files.

Estimators are evaluated on the deviations ``eps_n = r_n - 1`` directly.
Indices are the tree heights n (``eps_1 = p**d - 1``).  The sequence
alternates in sign, so the primary estimators use even n.
"""
from __future__ import annotations

import csv
import enum
import json
import math
import os
import subprocess
from dataclasses import asdict, dataclass, is_dataclass
from pathlib import Path

import numpy as np

from .model import ModelParams, ParameterError, Regime
from .recursion import marginal_deviation, pure_deviation_sequence, pure_log_deviation

CONVENTIONS = {
    "index": "n is the tree height; n = 1 is a root with d leaf children",
    "seed": "r_1 = p**d (pure boundary of colour 2, ratio mu[2]/mu[1])",
    "eps": "eps_n = r_n - 1",
    "marginal_dev": "mu_n[boundary colour] - 1/q = (q-1) eps_n / (q (q + eps_n))",
}


@dataclass(frozen=True)
class RateEstimate:
    estimator_value: float
    target: float
    n_used: int
    relative_error: float

    @classmethod
    def make(cls, value: float, target: float, n: int) -> "RateEstimate":
        return cls(float(value), float(target), int(n), abs(value - target) / abs(target))

    @property
    def abs_error(self) -> float:
        return abs(self.estimator_value - self.target)


@dataclass(frozen=True)
class PowerLawResult:
    ratio: RateEstimate
    probability: RateEstimate
    ratio_odd: RateEstimate
    odd_even_gap: float


def _last_even(N: int) -> int:
    return N if N % 2 == 0 else N - 1


def ratio_constant(d: int) -> float:
    return (d * d - 1) / (6.0 * d * d)


def probability_constant(d: int, q: int) -> float:
    return ratio_constant(d) * (q * q / (q - 1.0)) ** 2


def _require(params: ModelParams, want: Regime):
    if params.regime is not want:
        raise ParameterError("p", f"needs {want.value} parameters, got {params.regime.value}")


def power_law_constant(params: ModelParams, N: int, eps: np.ndarray | None = None,
                       ) -> PowerLawResult:
    """``(1/n)|eps_n|^-2`` and ``(1/n)|mu_n - 1/q|^-2`` at the last even n <= N.

    The odd-index ratio estimate is taken at the last odd n <= N and compared
    with the even one.
    """
    _require(params, Regime.CRITICAL)
    if N < 1000:
        raise ValueError(f"N must be >= 1000, got {N}")
    if params.d < 2:
        raise ParameterError("d", "the power law needs d >= 2")
    eps = pure_deviation_sequence(params, N) if eps is None else eps
    d, q = params.d, params.q
    ne = _last_even(N)
    no = ne - 1 if ne == N else N
    e_even, e_odd = float(eps[ne - 1]), float(eps[no - 1])
    ratio = RateEstimate.make(e_even ** -2 / ne, ratio_constant(d), ne)
    odd = RateEstimate.make(e_odd ** -2 / no, ratio_constant(d), no)
    prob = RateEstimate.make(float(marginal_deviation(q, e_even)) ** -2 / ne,
                             probability_constant(d, q), ne)
    gap = abs(odd.estimator_value - ratio.estimator_value) / ratio.estimator_value
    return PowerLawResult(ratio, prob, odd, gap)


def exponential_rate(params: ModelParams, N: int) -> RateEstimate:
    """``(1/n) log|mu_n - 1/q|`` at the last even n <= N, against ``log(A/B)``.

    ``log|eps_n|`` is accumulated in log form, so large N does not underflow.
    """
    _require(params, Regime.SUBCRITICAL)
    if N < 50:
        raise ValueError(f"N must be >= 50, got {N}")
    n = _last_even(N)
    q = params.q
    _, log_eps = pure_log_deviation(params, n)
    eps = float(pure_deviation_sequence(params, n)[-1])  # only enters through q + eps
    log_dev = log_eps + math.log((q - 1) / (q * (q + eps)))
    return RateEstimate.make(log_dev / n, math.log(params.A / params.B), n)


def successive_rate(params: ModelParams, N: int) -> RateEstimate:
    """Diagnostic only: ``(1/2) log|dev_n / dev_{n-2}|`` at the last even n <= N.

    Removes the O(1/n) prefactor bias of the direct estimator.
    """
    _require(params, Regime.SUBCRITICAL)
    n = _last_even(N)
    eps = pure_deviation_sequence(params, n)
    dev = marginal_deviation(params.q, eps[[n - 3, n - 1]])
    return RateEstimate.make(0.5 * math.log(abs(dev[1] / dev[0])),
                             math.log(params.A / params.B), n)


@dataclass(frozen=True)
class TelescopingResult:
    increments: np.ndarray
    cesaro_mean: float
    target: float

    @property
    def relative_error(self) -> float:
        return abs(self.cesaro_mean - self.target) / self.target


def telescoping_series(params: ModelParams, N: int, eps: np.ndarray | None = None,
                       ) -> TelescopingResult:
    """Increments ``eps_{2k+2}^-2 - eps_{2k}^-2`` for k = 1..N/2 and their mean.

    Needs the sequence up to n = 2 (N/2) + 2.
    """
    _require(params, Regime.CRITICAL)
    K = N // 2
    if K < 1:
        raise ValueError(f"N must be >= 2, got {N}")
    need = 2 * K + 2
    if eps is None or eps.size < need:
        eps = pure_deviation_sequence(params, need)
    even = eps[1:need:2]  # eps_2, eps_4, ..., eps_{2K+2}
    inv = even ** -2.0
    inc = np.diff(inv)
    d = params.d
    return TelescopingResult(inc, float(inc.mean()), (d * d - 1) / (3.0 * d * d))


def regression_exponent(eps: np.ndarray, n_min: int | None = None) -> float:
    """Diagnostic only: least-squares slope of log|eps_n| on log n over even n."""
    N = eps.size
    n_min = max(2, N // 10) if n_min is None else n_min
    n = np.arange(1, N + 1)
    sel = (n >= n_min) & (n % 2 == 0)
    slope, _ = np.polyfit(np.log(n[sel]), np.log(np.abs(eps[sel])), 1)
    return float(slope)


# -- reports ----------------------------------------------------------------

def tool_version() -> str:
    from . import __version__

    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--tags", "--dirty"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def to_jsonable(obj):
    """Dataclasses, numpy values and non-finite floats to plain JSON types."""
    if is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "as_dict"):
            return to_jsonable(obj.as_dict())
        return to_jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return to_jsonable(obj.item())
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dumps(doc) -> str:
    return json.dumps(to_jsonable(doc), indent=2, sort_keys=True) + "\n"


def emit_report(results: dict, path: str | os.PathLike, params: ModelParams | None = None,
                ) -> None:
    """JSON report.  No results gives ``{}``; otherwise provenance fields are added."""
    doc = {}
    if results:
        doc = {"results": results, "version": tool_version(), "conventions": CONVENTIONS}
        if params is not None:
            doc["params"] = params.as_dict()
    try:
        Path(path).write_text(dumps(doc))
    except OSError as exc:
        raise OSError(f"{path}: cannot write report: {exc.strerror or exc}") from exc


def write_sequence_csv(path: str | os.PathLike, q: int, eps: np.ndarray) -> None:
    """Columns ``n,eps,marginal_dev`` with 17 significant digits (exact round trip)."""
    dev = marginal_deviation(q, eps)
    try:
        with open(path, "w", newline="") as fh:
            fh.write("n,eps,marginal_dev\n")
            for n, (e, m) in enumerate(zip(eps.tolist(), dev.tolist()), 1):
                fh.write(f"{n},{e:.17g},{m:.17g}\n")
    except OSError as exc:
        raise OSError(f"{path}: cannot write sequence: {exc.strerror or exc}") from exc


def read_sequence_csv(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    n = np.array([int(r["n"]) for r in rows], dtype=np.int64)
    eps = np.array([float(r["eps"]) for r in rows])
    dev = np.array([float(r["marginal_dev"]) for r in rows])
    return n, eps, dev
