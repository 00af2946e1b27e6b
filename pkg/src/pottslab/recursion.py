"""Bottom-up root marginals and the pure-boundary ratio iteration.

Arbitrary boundaries are handled by a level sweep: every vertex carries a
length-q message proportional to its subtree marginal, rescaled so its largest
entry is 1 (keeps deep trees clear of underflow).  A parent combines its
children through ``prod_u ((p - 1) mu_u[i] + 1)``.

For a pure boundary the ratio ``r_n = mu[2] / mu[1]`` (boundary colour 2)
closes into ``r_{n+1} = f(r_n)``.  Near the fixed point 1 we never form
``r``; we iterate ``eps = r - 1`` through the factored difference

    f(1 + eps) - 1 = (p - 1) eps  sum_i a^i b^(d-1-i) / b^d,
    a = B + p eps,  b = B + eps,

whose terms are all positive, so no digits are lost as ``eps -> 0``.
The sequence is seeded at n = 1 with ``r_1 = p**d`` (a single level of leaves).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .boundary import BoundarySpec, num_leaves
from .model import ModelParams

MAX_WORK = 10 ** 8


class SizeCapExceeded(RuntimeError):
    pass


def _check_size(d: int, n: int):
    if n < 1:
        raise ValueError("tree height n must be >= 1")
    work = n * d ** n
    if work > MAX_WORK:
        raise SizeCapExceeded(f"n * d**n = {work} exceeds cap {MAX_WORK}")


def _combine(children: np.ndarray, p: float) -> np.ndarray:
    """Parent messages from a (parents, d, q) block of child messages."""
    mu = children / children.sum(axis=-1, keepdims=True)
    w = np.prod((p - 1.0) * mu + 1.0, axis=1)
    return w / w.max(axis=-1, keepdims=True)


def level_messages(params: ModelParams, n: int, xi: BoundarySpec, workers: int = 1,
                   ) -> list[np.ndarray]:
    """Max-normalised messages per level; ``out[k]`` has shape ``(d**k, q)``.

    ``out[n]`` holds the leaves (one-hot boundary colours), ``out[0]`` the root.
    """
    d, q, p = params.d, params.q, params.p
    _check_size(d, n)
    leaves = xi.array(q, d, n)
    msg = np.zeros((num_leaves(d, n), q))
    msg[np.arange(msg.shape[0]), leaves] = 1.0
    out = [msg]
    for level in range(n - 1, -1, -1):
        block = msg.reshape(d ** level, d, q)
        if workers > 1 and d ** level >= 4096:
            parts = np.array_split(np.arange(d ** level), workers)
            with ThreadPoolExecutor(workers) as ex:
                pieces = list(ex.map(lambda ix: _combine(block[ix], p), parts))
            msg = np.concatenate(pieces)
        else:
            msg = _combine(block, p)
        out.append(msg)
    return out[::-1]


def root_marginals_recursive(params: ModelParams, n: int, xi: BoundarySpec,
                             workers: int = 1) -> np.ndarray:
    root = level_messages(params, n, xi, workers)[0][0]
    return root / root.sum()


def ratio_of(params: ModelParams, n: int, xi: BoundarySpec, workers: int = 1) -> float:
    mu = root_marginals_recursive(params, n, xi, workers)
    return float(mu[1] / mu[0])


def f_deviation(d: int, p: float, B: float, eps: float) -> float:
    """``f(1 + eps) - 1`` for the pure-boundary map, cancellation free."""
    a = B + p * eps
    b = B + eps
    s = 1.0
    ak = 1.0
    for _ in range(d - 1):
        ak *= a
        s = s * b + ak
    return (p - 1.0) * eps * s / b ** d


def pure_deviation_sequence(params: ModelParams, N: int) -> np.ndarray:
    """``eps_n = r_n - 1`` for n = 1..N (index 0 holds n = 1)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    d, p, B = params.d, params.p, params.B
    out = np.empty(N)
    eps = p ** d - 1.0
    out[0] = eps
    # inlined f_deviation: this loop is the hot path for N ~ 1e6
    pm1 = p - 1.0
    for k in range(1, N):
        a = B + p * eps
        b = B + eps
        s = 1.0
        ak = 1.0
        for _ in range(d - 1):
            ak *= a
            s = s * b + ak
        eps = pm1 * eps * s / b ** d
        out[k] = eps
    return out


def marginal_deviation(q: int, eps):
    """``mu[boundary colour] - 1/q`` from ``eps = r - 1``, without cancellation."""
    return eps * (q - 1) / (q * (q + eps))


def pure_marginal(params: ModelParams, n: int, color: int,
                  eps: float | None = None) -> np.ndarray:
    """Root marginal under the pure boundary ``color``.

    ``r/(r+q-1)`` at the boundary colour and ``1/(r+q-1)`` elsewhere, written
    in terms of ``eps`` as ``(1+eps)/(q+eps)`` and ``1/(q+eps)``.
    """
    q = params.q
    if not 1 <= color <= q:
        raise ValueError(f"colour {color} outside 1..{q}")
    if eps is None:
        eps = float(pure_deviation_sequence(params, n)[-1])
    mu = np.full(q, 1.0 / (q + eps))
    mu[color - 1] = (1.0 + eps) / (q + eps)
    return mu


def pure_log_deviation(params: ModelParams, N: int) -> tuple[int, float]:
    """``(sign(eps_N), log|eps_N|)`` accumulated factor by factor.

    ``eps_{n+1} = eps_n * phi(eps_n)``, so the logarithm never underflows even
    when eps_N itself is far below the smallest double (subcritical decay).
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    d, p, B = params.d, params.p, params.B
    eps = p ** d - 1.0
    sign = -1
    log_abs = math.log(-eps)
    for _ in range(1, N):
        a = B + p * eps
        b = B + eps
        s = 1.0
        ak = 1.0
        for _ in range(d - 1):
            ak *= a
            s = s * b + ak
        phi = (p - 1.0) * s / b ** d
        if phi < 0:
            sign = -sign
        log_abs += math.log(abs(phi))
        eps *= phi
    return sign, log_abs
