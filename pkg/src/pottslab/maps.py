"""The iteration maps f_m, their two-step compositions and the auxiliary H, K, G.

With ``y = x - 1`` and ``a = m - 1 + p``::

    g_m(x) = (B + a y) / (B + m y),      f_m = g_m ** d

``f = f_1`` is the pure-boundary ratio map.  Each evaluation has a direct form
and a deviation form returning ``f_m(1 + y) - 1`` via the telescoped
difference of d-th powers; inside ``|y| < DEVIATION_BAND`` the deviation form
is used.  Everything here accepts floats or numpy arrays.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .model import ModelParams, ParameterError, Regime

DEVIATION_BAND = 1e-2
FD_STEP_FIRST = 1e-6
FD_STEP_SECOND = 5e-3


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class MapParams:
    base: ModelParams
    m: int = 1

    def __post_init__(self):
        if not 1 <= self.m <= self.base.q - 1:
            raise ParameterError("m", f"multiplicity must lie in 1..{self.base.q - 1}, got {self.m}")

    @property
    def C_m(self) -> float:
        return 2 * self.m - 1 + self.base.p

    @property
    def slope(self) -> float:
        """Numerator slope ``m - 1 + p`` of g_m."""
        return self.m - 1 + self.base.p


def _unpack(mp):
    if isinstance(mp, ModelParams):
        mp = MapParams(mp, 1)
    b = mp.base
    return mp, b.d, b.p, b.B, mp.m, mp.slope


def _check_den(den):
    if np.any(np.asarray(den) <= 0):
        raise DomainError("B + m (x - 1) must be positive")


def _power_diff_sum(a, b, d):
    """``sum_{i<d} a^i b^(d-1-i)``; all terms positive for a, b > 0."""
    s = np.ones_like(np.asarray(a, dtype=float)) if np.ndim(a) else 1.0
    ak = s * 1.0
    for _ in range(d - 1):
        ak = ak * a
        s = s * b + ak
    return s


def f_m_deviation(mp, eps):
    """``f_m(1 + eps) - 1`` without cancellation."""
    mp, d, p, B, m, a = _unpack(mp)
    num = B + a * eps
    den = B + m * eps
    _check_den(den)
    return (p - 1.0) * eps * _power_diff_sum(num, den, d) / den ** d


def _f_direct(mp, x):
    mp, d, p, B, m, a = _unpack(mp)
    y = x - 1.0
    den = B + m * y
    _check_den(den)
    return ((B + a * y) / den) ** d


def f_m_eval(mp, x):
    y = np.asarray(x, dtype=float) - 1.0
    near = np.abs(y) < DEVIATION_BAND
    if np.ndim(y) == 0:
        return float(1.0 + f_m_deviation(mp, float(y))) if near else float(_f_direct(mp, float(x)))
    out = np.empty_like(y)
    out[near] = 1.0 + f_m_deviation(mp, y[near])
    out[~near] = _f_direct(mp, y[~near] + 1.0)
    return out


def _deviation(mp, y):
    """``f_m(1 + y) - 1`` using the band dispatch."""
    y = np.asarray(y, dtype=float)
    near = np.abs(y) < DEVIATION_BAND
    if np.ndim(y) == 0:
        return float(f_m_deviation(mp, float(y))) if near else float(_f_direct(mp, 1.0 + float(y)) - 1.0)
    out = np.empty_like(y)
    out[near] = f_m_deviation(mp, y[near])
    out[~near] = _f_direct(mp, 1.0 + y[~near]) - 1.0
    return out


def g_m_eval(mp, x):
    mp, d, p, B, m, a = _unpack(mp)
    y = np.asarray(x, dtype=float) - 1.0
    return (B + a * y) / (B + m * y)


def f_m_prime(mp, x):
    """``d g^(d-1) g'`` with ``g' = B (p - 1) / (B + m y)^2``."""
    mp, d, p, B, m, a = _unpack(mp)
    y = np.asarray(x, dtype=float) - 1.0
    den = B + m * y
    _check_den(den)
    g = (B + a * y) / den
    return d * g ** (d - 1) * B * (p - 1.0) / den ** 2


def two_step_deviation(mp, eps):
    """``(f_m o f_m)(1 + eps) - 1``."""
    return _deviation(mp, _deviation(mp, eps))


def two_step_eval(mp, x):
    return f_m_eval(mp, f_m_eval(mp, x))


def two_step_prime(mp, x):
    return f_m_prime(mp, f_m_eval(mp, x)) * f_m_prime(mp, x)


def _products(mp, x):
    """``P = (B + m y)(B + m e)`` and ``Q = (B + a y)(B + a e)``, e = f_m(x) - 1."""
    mp, d, p, B, m, a = _unpack(mp)
    y = np.asarray(x, dtype=float) - 1.0
    e = _deviation(mp, y)
    return y, e, (B + m * y) * (B + m * e), (B + a * y) * (B + a * e)


def H_m_eval(mp, x):
    """``(B + m y)(B + m e) - B^2`` expanded as ``B m (y + e) + m^2 y e``."""
    mp, d, p, B, m, a = _unpack(mp)
    y = np.asarray(x, dtype=float) - 1.0
    e = _deviation(mp, y)
    return B * m * (y + e) + m * m * y * e


def K_m_eval(mp, x):
    """``(B+my)(B+me) - (B+ay)(B+ae)`` expanded as ``(1-p)(B (y+e) + C_m y e)``."""
    mp, d, p, B, m, a = _unpack(mp)
    y = np.asarray(x, dtype=float) - 1.0
    e = _deviation(mp, y)
    return (1.0 - p) * (B * (y + e) + mp.C_m * y * e)


def H_m_prime(mp, x):
    mp, d, p, B, m, a = _unpack(mp)
    y = np.asarray(x, dtype=float) - 1.0
    e = _deviation(mp, y)
    fp = f_m_prime(mp, x)
    return m * ((B + m * e) + fp * (B + m * y))


def K_m_prime(mp, x):
    mp, d, p, B, m, a = _unpack(mp)
    y = np.asarray(x, dtype=float) - 1.0
    e = _deviation(mp, y)
    fp = f_m_prime(mp, x)
    C = mp.C_m
    return (1.0 - p) * (fp * (B + C * y) + (B + C * e))


def second_derivative_coeffs(mp):
    """Closed-form ``(beta_H, gamma_H, beta_K, gamma_K)``."""
    mp, d, p, B, m, a = _unpack(mp)
    A = mp.base.A
    C = mp.C_m
    k = 1.0 - 1.0 / d
    beta_H = k * m * A ** 2 * B ** 2
    gamma_H = k * A ** 2 * B ** 3
    beta_K = A * B ** 2 * (-2.0 * (C - m) ** 2 + k * A * C)
    gamma_K = A * B ** 3 * (A - C)
    return beta_H, gamma_H, beta_K, gamma_K


def H_m_second(mp, x):
    mp, d, p, B, m, a = _unpack(mp)
    y = np.asarray(x, dtype=float) - 1.0
    beta_H, gamma_H, _, _ = second_derivative_coeffs(mp)
    g = g_m_eval(mp, x)
    return m * g ** (d - 2) * (B + m * y) ** -4 * (gamma_H + beta_H * y)


def K_m_second(mp, x):
    mp, d, p, B, m, a = _unpack(mp)
    y = np.asarray(x, dtype=float) - 1.0
    _, _, beta_K, gamma_K = second_derivative_coeffs(mp)
    g = g_m_eval(mp, x)
    return (1.0 - p) * g ** (d - 2) * (B + m * y) ** -4 * (gamma_K + beta_K * y)


def G_m_eval(mp, x):
    """``(1 - H/(B^2+H))^2 (1 - K/(B^2+H))^(d-1)``.

    Evaluated as ``(B^2/P)^2 (Q/P)^(d-1)``; ``P = B^2 + H`` and ``Q = B^2 + H - K``
    are products of positive factors, so no subtraction is involved.
    """
    mp, d, p, B, m, a = _unpack(mp)
    _, _, P, Q = _products(mp, x)
    return (B * B / P) ** 2 * (Q / P) ** (d - 1)


# -- finite differences ---------------------------------------------------

def richardson_first(fn, x, h=None):
    """Central difference with one Richardson level (error O(h^4))."""
    x = float(x)
    h = FD_STEP_FIRST * max(1.0, abs(x)) if h is None else h

    def D(s):
        return (fn(x + s) - fn(x - s)) / (2.0 * s)

    return (4.0 * D(h / 2) - D(h)) / 3.0


def richardson_second(fn, x, h=None):
    x = float(x)
    h = FD_STEP_SECOND * max(1.0, abs(x)) if h is None else h

    def D(s):
        return (fn(x + s) - 2.0 * fn(x) + fn(x - s)) / (s * s)

    return (4.0 * D(h / 2) - D(h)) / 3.0


# -- Taylor coefficients of f o f at 1 ------------------------------------

@dataclass(frozen=True)
class TaylorCoeffs:
    c1: float
    c2: float
    c3: float
    c1_fd: float = float("nan")
    c2_fd: float = float("nan")

    def as_dict(self) -> dict:
        return asdict(self)


def f_derivatives_at_one(mp) -> tuple[float, float, float]:
    """``f_m'(1), f_m''(1), f_m'''(1)`` from those of g_m (g_m(1) = 1)."""
    mp, d, p, B, m, a = _unpack(mp)
    g1 = (p - 1.0) / B
    g2 = -2.0 * m * (p - 1.0) / B ** 2
    g3 = 6.0 * m * m * (p - 1.0) / B ** 3
    f1 = d * g1
    f2 = d * (d - 1) * g1 ** 2 + d * g2
    f3 = d * (d - 1) * (d - 2) * g1 ** 3 + 3 * d * (d - 1) * g1 * g2 + d * g3
    return f1, f2, f3


def taylor_c123(params: ModelParams) -> TaylorCoeffs:
    """Derivatives of ``f o f`` at its fixed point 1 (critical parameters only)."""
    if params.regime is not Regime.CRITICAL:
        raise ParameterError("p", f"Taylor coefficients need critical p, got {params.regime.value}")
    if params.d < 2:
        raise ParameterError("d", "the cubic coefficient vanishes for d = 1")
    f1, f2, f3 = f_derivatives_at_one(params)
    # Faa di Bruno for (f o f) with f(1) = 1
    c1 = f1 * f1
    c2 = f2 * f1 * f1 + f1 * f2
    c3 = f3 * f1 ** 3 + 3.0 * f2 * f1 * f2 + f1 * f3
    dev = lambda x: two_step_deviation(params, x - 1.0)
    c1_fd = richardson_first(dev, 1.0)
    c2_fd = richardson_second(dev, 1.0)
    return TaylorCoeffs(c1, c2, c3, float(c1_fd), float(c2_fd))


def telescoping_increment(params: ModelParams, x: float) -> float:
    """``((f o f)(x) - 1)^-2 - (x - 1)^-2`` for x > 1.

    Written as ``(y - e)(y + e) / (y e)^2`` with ``e = (f o f)(x) - 1`` taken
    from the deviation form, so the two O(y^-2) terms never get subtracted.
    """
    y = float(x) - 1.0
    if y <= 0.0:
        raise DomainError("telescoping increment needs x > 1")
    e = float(two_step_deviation(params, y))
    return (y - e) * (y + e) / (y * e) ** 2


# -- grid audit -----------------------------------------------------------

def log_grid(x_max: float = 1e4, points: int = 10_000) -> np.ndarray:
    return np.logspace(0.0, np.log10(x_max), points)


@dataclass
class MAudit:
    m: int
    sup_derivative: float
    argsup: float
    bound: float
    max_G: float
    min_hk_observation: float
    hk_argmin: float
    second_derivative_max_relerr: float
    violations: list = field(default_factory=list)
    violation_count: int = 0


@dataclass
class AuditReport:
    params: dict
    points: int
    x_max: float
    per_m: list

    @property
    def ok(self) -> bool:
        return all(a.violation_count == 0 for a in self.per_m)

    def as_dict(self) -> dict:
        return {"params": self.params, "points": self.points, "x_max": self.x_max,
                "ok": self.ok, "per_m": [asdict(a) for a in self.per_m]}


FD_CANDIDATE_OFFSETS = (0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0)


def fd_check_points(mp, count: int = 5) -> list[float]:
    """Probe points for the H'', K'' difference check.

    Taken from ``1 + FD_CANDIDATE_OFFSETS``, skipping points where the linear
    factor of K'' is below a quarter of its value at x = 1 (a relative check
    is meaningless next to a root).
    """
    _, _, beta_K, gamma_K = second_derivative_coeffs(mp)
    pts = [1.0 + y for y in FD_CANDIDATE_OFFSETS
           if abs(gamma_K + beta_K * y) >= 0.25 * abs(gamma_K)]
    return pts[:count]


def second_derivative_relerr(mp, xs=None) -> float:
    """Max relative gap between closed-form H'', K'' and Richardson differences."""
    xs = fd_check_points(mp) if xs is None else xs
    worst = 0.0
    for x in xs:
        for closed, fn in ((H_m_second, H_m_eval), (K_m_second, K_m_eval)):
            exact = float(closed(mp, x))
            fd = richardson_second(lambda t: float(fn(mp, t)), x)
            worst = max(worst, abs(fd - exact) / abs(exact))
    return worst


def audit_two_step(params: ModelParams, grid: np.ndarray | None = None, ms=None,
                   tol: float = 1e-12, fd_rtol: float = 1e-5, max_listed: int = 50,
                   ) -> AuditReport:
    """Grid audit of ``0 < (f_m o f_m)' <= (A/B)^2``, ``G_m <= 1``, and
    ``(d-1) K_m' + 2 H_m' > 0`` for x > 1, for every requested m.

    Violations are recorded, never raised.
    """
    grid = log_grid() if grid is None else np.asarray(grid, dtype=float)
    ms = range(1, params.q) if ms is None else ms
    bound = (params.A / params.B) ** 2
    per_m = []
    for m in ms:
        mp = MapParams(params, m)
        tsp = two_step_prime(mp, grid)
        G = G_m_eval(mp, grid)
        obs = (params.d - 1) * K_m_prime(mp, grid) + 2.0 * H_m_prime(mp, grid)
        above = grid > 1.0
        viol = []

        def record(name, mask, values):
            for i in np.flatnonzero(mask):
                viol.append({"check": name, "x": float(grid[i]), "value": float(values[i])})

        record("derivative_nonpositive", tsp <= 0.0, tsp)
        record("derivative_above_bound", tsp > bound + tol, tsp)
        record("G_above_one", G > 1.0 + tol, G)
        record("hk_observation_nonpositive", above & (obs <= 0.0), obs)
        relerr = float("nan")
        if params.d >= 2:
            relerr = second_derivative_relerr(mp)
            if not relerr <= fd_rtol:
                viol.append({"check": "second_derivative_fd", "x": float("nan"), "value": relerr})
        i_sup = int(np.argmax(tsp))
        obs_above = np.where(above, obs, np.inf)
        i_min = int(np.argmin(obs_above))
        per_m.append(MAudit(
            m=m, sup_derivative=float(tsp[i_sup]), argsup=float(grid[i_sup]), bound=bound,
            max_G=float(G.max()), min_hk_observation=float(obs_above[i_min]),
            hk_argmin=float(grid[i_min]), second_derivative_max_relerr=relerr,
            violations=viol[:max_listed], violation_count=len(viol)))
    return AuditReport(params=params.as_dict(), points=int(grid.size),
                       x_max=float(grid.max()), per_m=per_m)
