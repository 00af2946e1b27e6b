"""The reduced two-step maximisation over the admissible domain A(r).

A point of A(r) is a d x (q-1) matrix of bits theta; child ``u`` carries the
ratio vector ``x^u = (1, 1 + (r-1) theta^u_2, ..., 1 + (r-1) theta^u_q)``.
For such x::

    V^u_j = (S_u + (p-1) x^u_j) / (S_u + (p-1) x^u_1),   S_u = sum_k x^u_k
    V_j   = prod_u V^u_j
    U     = (sum_j V_j + (p-1) V_2) / (sum_j V_j + (p-1) V_1)
    h     = U^d

Points are enumerated as an integer counter whose bits fill theta row by row
(u-major, k-minor), first entry in the most significant bit.  That fixes the
order of reported ties.

Close to r = 1 every quantity is carried as a deviation from 1:
``V^u_j - 1 = (p-1) t^u_j / (B + T_u)`` with ``t = (r-1) theta`` and
``T_u = sum_k t^u_k``, and ``U - 1 = (p-1) W_2 / (B + sum_j W_j)`` with
``W_j = V_j - 1``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .boundary import BoundarySpec
from .exact_oracle import max_ratio_exact
from .maps import DEVIATION_BAND, two_step_deviation, two_step_eval
from .model import ModelParams
from .recursion import level_messages

ENUM_CAP_BITS = 24
TIE_RTOL = 1e-12
PROBE_EPS = 1e-3
_CHUNK = 1 << 14


class EnumerationCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class AdmissiblePoint:
    theta: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(int(b) for b in row) for row in self.theta)
        if not rows or any(len(row) != len(rows[0]) for row in rows):
            raise ValueError("theta must be a non-empty rectangular matrix")
        if any(b not in (0, 1) for row in rows for b in row):
            raise ValueError("theta entries must be 0 or 1")
        object.__setattr__(self, "theta", rows)

    @classmethod
    def from_index(cls, index: int, d: int, q: int) -> "AdmissiblePoint":
        bits = _index_bits(np.array([index]), d, q)[0]
        return cls(tuple(map(tuple, bits)))

    @classmethod
    def pattern(cls, d: int, q: int, k: int = 2) -> "AdmissiblePoint":
        """``theta^u_j = 1`` iff ``j == k``, for every child u."""
        row = tuple(int(j == k) for j in range(2, q + 1))
        return cls((row,) * d)

    @property
    def d(self) -> int:
        return len(self.theta)

    @property
    def q(self) -> int:
        return len(self.theta[0]) + 1

    def index(self) -> int:
        i = 0
        for row in self.theta:
            for b in row:
                i = (i << 1) | b
        return i

    def array(self) -> np.ndarray:
        return np.array(self.theta, dtype=np.int8)

    def x(self, r: float) -> np.ndarray:
        """The d x q ratio vectors; column 0 is ``x^u_1 = 1``."""
        out = np.ones((self.d, self.q))
        out[:, 1:] += (r - 1.0) * self.array()
        return out

    def to_list(self) -> list[list[int]]:
        return [list(row) for row in self.theta]


@dataclass(frozen=True)
class HValue:
    U: float
    V: tuple[float, ...]
    value: float


def _index_bits(idx: np.ndarray, d: int, q: int) -> np.ndarray:
    nbits = d * (q - 1)
    shifts = np.arange(nbits - 1, -1, -1, dtype=np.int64)
    bits = (idx[:, None].astype(np.int64) >> shifts[None, :]) & 1
    return bits.reshape(-1, d, q - 1)


def _h_direct(params: ModelParams, theta: np.ndarray, r: float):
    """theta: (N, d, q-1).  Returns U, V (N, q), h."""
    p = params.p
    N, d, _ = theta.shape
    x = np.ones((N, d, params.q))
    x[:, :, 1:] += (r - 1.0) * theta
    S = x.sum(axis=-1, keepdims=True)
    Vu = (S + (p - 1.0) * x) / (S + (p - 1.0))
    V = Vu.prod(axis=1)
    tot = V.sum(axis=-1)
    U = (tot + (p - 1.0) * V[:, 1]) / (tot + (p - 1.0) * V[:, 0])
    return U, V, U ** params.d


def _h_deviation(params: ModelParams, theta: np.ndarray, r: float):
    p, B = params.p, params.B
    N, d, _ = theta.shape
    t = (r - 1.0) * theta
    T = t.sum(axis=-1, keepdims=True)
    v = (p - 1.0) * t / (B + T)  # (N, d, q-1) deviations of V^u_j, j >= 2
    W = np.zeros((N, params.q - 1))
    for u in range(d):
        W = W + v[:, u] + W * v[:, u]
    u_dev = (p - 1.0) * W[:, 0] / (B + W.sum(axis=-1))
    h_dev = np.expm1(params.d * np.log1p(u_dev))
    V = np.concatenate([np.ones((N, 1)), 1.0 + W], axis=1)
    return 1.0 + u_dev, V, h_dev


def _h_batch(params: ModelParams, theta: np.ndarray, r: float):
    """Returns ``(U, V, h - 1)``; the deviation is exact in either branch."""
    if r - 1.0 < DEVIATION_BAND:
        return _h_deviation(params, theta, r)
    U, V, h = _h_direct(params, theta, r)
    return U, V, h - 1.0


def _check_point(params: ModelParams, point: AdmissiblePoint):
    if point.d != params.d or point.q != params.q:
        raise ValueError(f"point is {point.d}x{point.q - 1}, params need {params.d}x{params.q - 1}")


def h_eval(params: ModelParams, point: AdmissiblePoint, r: float) -> HValue:
    if r < 1.0:
        raise ValueError(f"r must be >= 1, got {r}")
    _check_point(params, point)
    U, V, hdev = _h_batch(params, point.array()[None].astype(float), float(r))
    return HValue(U=float(U[0]), V=tuple(float(v) for v in V[0]), value=float(1.0 + hdev[0]))


def _argmax_indices(params: ModelParams, r: float, workers: int = 1):
    d, q = params.d, params.q
    nbits = d * (q - 1)
    if nbits > ENUM_CAP_BITS:
        raise EnumerationCapExceeded(
            f"A(r) has 2^{nbits} points, cap is 2^{ENUM_CAP_BITS}")
    total = 1 << nbits
    blocks = [(s, min(s + _CHUNK, total)) for s in range(0, total, _CHUNK)]

    def run(block):
        idx = np.arange(*block, dtype=np.int64)
        _, _, hdev = _h_batch(params, _index_bits(idx, d, q).astype(float), r)
        best = hdev.max()
        # keep everything that could still tie with the global maximum
        keep = hdev >= best - TIE_RTOL * (1.0 + best)
        return best, idx[keep], hdev[keep]

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    best = max(b for b, _, _ in parts)
    thresh = best - TIE_RTOL * (1.0 + best)
    hits = np.concatenate([i[v >= thresh] for _, i, v in parts])
    return best, hits


def h_max_admissible(params: ModelParams, r: float, workers: int = 1,
                     ) -> tuple[float, list[AdmissiblePoint]]:
    """Exhaustive maximum of h over A(r) and every point tying within 1e-12 relative."""
    if r < 1.0:
        raise ValueError(f"r must be >= 1, got {r}")
    best, hits = _argmax_indices(params, float(r), workers)
    return 1.0 + best, [AdmissiblePoint.from_index(int(i), params.d, params.q) for i in hits]


def _ff_deviation(params: ModelParams, r: float) -> float:
    if r - 1.0 < DEVIATION_BAND:
        return float(two_step_deviation(params, r - 1.0))
    return float(two_step_eval(params, r)) - 1.0


def verify_expansion(params: ModelParams, r: float, workers: int = 1) -> bool:
    """Is the maximum over A(r) equal to (f o f)(r), attained only at theta^u_2 = 1?"""
    if r <= 1.0:
        raise ValueError(f"r must exceed 1, got {r}")
    best, hits = _argmax_indices(params, float(r), workers)
    ff = _ff_deviation(params, r)
    target = AdmissiblePoint.pattern(params.d, params.q).index()
    agree = abs(best - ff) <= TIE_RTOL * (1.0 + ff)
    return bool(agree and hits.size == 1 and int(hits[0]) == target)


@dataclass
class ProbeReport:
    params: dict
    radii: list
    holds: list
    first_failure: float | None
    last_success: float | None

    def as_dict(self) -> dict:
        return {"params": self.params, "radii": self.radii, "holds": self.holds,
                "first_failure": self.first_failure, "last_success": self.last_success}


def expansion_probe(params: ModelParams, radii=None, workers: int = 1) -> ProbeReport:
    """Sweep ``r = 1 + s`` upward and record where verify_expansion first fails.

    Default radii are 1e-4 .. 1e3, ten per decade; below 1e-4 the competing
    points differ from the maximum by less than the 1e-12 tie tolerance, so
    uniqueness cannot be resolved there.  ``last_success`` is the largest
    radius passing before the first failure.
    """
    radii = np.logspace(-4, 3, 71) if radii is None else np.asarray(radii, dtype=float)
    holds = [verify_expansion(params, 1.0 + float(s), workers) for s in radii]
    first = next((float(s) for s, ok in zip(radii, holds) if not ok), None)
    last = None
    for s, ok in zip(radii, holds):
        if not ok:
            break
        last = float(s)
    return ProbeReport(params.as_dict(), [float(s) for s in radii], holds, first, last)


def hhat_eval(params: ModelParams, vectors) -> float:
    """General two-step function on d^2 ratio vectors ``xhat^{vu}`` (row ``v*d + u``)."""
    d, q, p = params.d, params.q, params.p
    x = np.asarray(vectors, dtype=float).reshape(d, d, q)
    if np.any(x <= 0.0):
        raise ValueError("ratio vectors must be positive")
    if not np.allclose(x[..., 0], 1.0, rtol=0.0, atol=1e-12):
        raise ValueError("ratio vectors must have first entry 1")
    S = x.sum(axis=-1, keepdims=True)
    Vvu = (S + (p - 1.0) * x) / (S + (p - 1.0) * x[..., :1])
    Vv = Vvu.prod(axis=1)
    tot = Vv.sum(axis=-1)
    Uv = (tot + (p - 1.0) * Vv[:, 1]) / (tot + (p - 1.0) * Vv[:, 0])
    return float(Uv.prod())


def subtree_ratio_vectors(params: ModelParams, n: int, xi: BoundarySpec) -> np.ndarray:
    """``xhat^{vu}_k``: weights of the height-n subtrees two levels below the root
    of a height-(n+2) tree, divided by their colour-1 entry.  Shape ``(d*d, q)``."""
    msgs = level_messages(params, n + 2, xi)[2]
    return msgs / msgs[:, :1]


@dataclass
class TwoStepReport:
    params: dict
    n: int
    r: float
    r_star_next: float
    max_value: float
    ff_value: float
    argmax_patterns: list
    ff_bound_holds: bool
    h_bound_holds: bool
    witnesses_n: list = field(default_factory=list)
    witnesses_next: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"params": self.params, "n": self.n, "r": self.r,
                "r_star_next": self.r_star_next, "max_value": self.max_value,
                "ff_value": self.ff_value, "argmax_patterns": self.argmax_patterns,
                "ff_bound_holds": self.ff_bound_holds, "h_bound_holds": self.h_bound_holds,
                "witnesses_n": self.witnesses_n, "witnesses_next": self.witnesses_next}


def two_step_bound_check(params: ModelParams, n: int = 1, budget: int | None = None,
                         workers: int = 1, config_budget: int | None = None) -> TwoStepReport:
    """Compare the brute-force ``r*_{n+2}`` with both two-step bounds built from ``r*_n``.

    ``h_bound_holds``: r*_{n+2} <= max over A(r*_n) of h (allowing 1e-12 relative,
    since the bound can be attained).  ``ff_bound_holds``: r*_{n+2} <= (f o f)(r*_n),
    which is only expected for r*_n close to 1; it is reported, not enforced.
    """
    d, q = params.d, params.q
    r_n, wit_n = max_ratio_exact(params, n, budget, workers, config_budget=config_budget)
    r_next, wit_next = max_ratio_exact(params, n + 2, budget, workers,
                                       config_budget=config_budget)
    best, pts = h_max_admissible(params, r_n, workers)
    ff = 1.0 + _ff_deviation(params, r_n)
    leaves = lambda w, m: [b.to_list(q, d, m) for b in w]
    return TwoStepReport(
        params=params.as_dict(), n=n, r=r_n, r_star_next=r_next, max_value=best,
        ff_value=ff, argmax_patterns=[pt.to_list() for pt in pts],
        ff_bound_holds=bool(r_next <= ff * (1.0 + TIE_RTOL)),
        h_bound_holds=bool(r_next <= best * (1.0 + TIE_RTOL)),
        witnesses_n=leaves(wit_n, n), witnesses_next=leaves(wit_next, n + 2))
