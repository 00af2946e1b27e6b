"""Exhaustive Gibbs computations on small trees.

Every interior spin configuration is enumerated.  Instead of summing floating
point weights we count, per root colour, how many configurations have exactly
``k`` monochromatic edges.  Those integer histograms combine exactly in any
order, so the result is bit-identical regardless of chunking or worker count,
and the weight sum is evaluated once as ``sum_k N_k p**k``.

Interior vertices are numbered breadth first (root = 0, then level by level in
lexicographic order).  Configuration index ``c`` assigns vertex ``v`` the
digit ``(c // q**(I-1-v)) % q``, so the root colour is the leading digit and
all configurations with a given root colour are contiguous.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .boundary import BoundarySpec, num_interior, num_leaves
from .model import ModelParams

DEFAULT_BUDGET_CONFIGS = 10 ** 8
DEFAULT_BUDGET_BOUNDARIES = 10 ** 7

# rows of the (chunk x interior) digit table; bounds memory, not results
_CHUNK_ELEMS = 1 << 20


class BudgetExceeded(RuntimeError):
    def __init__(self, what: str, required: int, budget: int):
        super().__init__(f"{what}: enumeration needs {required} evaluations, budget is {budget}")
        self.required = required
        self.budget = budget


def budget_configs() -> int:
    return int(float(os.environ.get("POTTSLAB_BUDGET_CONFIGS", DEFAULT_BUDGET_CONFIGS)))


def budget_boundaries() -> int:
    return int(float(os.environ.get("POTTSLAB_BUDGET_BOUNDARIES", DEFAULT_BUDGET_BOUNDARIES)))


def default_workers() -> int:
    return os.cpu_count() or 1


@dataclass(frozen=True)
class RootWeights:
    w: np.ndarray
    Z: float

    def marginals(self) -> np.ndarray:
        return self.w / self.Z


@dataclass(frozen=True)
class _Layout:
    d: int
    n: int
    interior: int
    edge_parent: np.ndarray  # interior-interior edges
    edge_child: np.ndarray
    leaf_parent: np.ndarray  # interior index of each leaf's parent
    num_edges: int


@lru_cache(maxsize=64)
def _layout(d: int, n: int) -> _Layout:
    if n < 1:
        raise ValueError("tree height n must be >= 1")
    offsets = [0]
    for level in range(n):
        offsets.append(offsets[-1] + d ** level)
    parents, children = [], []
    for level in range(1, n):
        for t in range(d ** level):
            parents.append(offsets[level - 1] + t // d)
            children.append(offsets[level] + t)
    leaf_parent = np.array([offsets[n - 1] + t // d for t in range(d ** n)], dtype=np.int64)
    interior = num_interior(d, n)
    return _Layout(d, n, interior, np.array(parents, dtype=np.int64),
                   np.array(children, dtype=np.int64), leaf_parent,
                   interior - 1 + d ** n)


def _digits(start: int, stop: int, base: int, width: int) -> np.ndarray:
    idx = np.arange(start, stop, dtype=np.int64)
    powers = base ** np.arange(width - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] // powers[None, :]) % base


def _chunks(total: int, size: int):
    return [(s, min(s + size, total)) for s in range(0, total, size)]


def _leaf_color_counts(layout: _Layout, xi: np.ndarray, q: int) -> np.ndarray:
    """(..., interior, q) count of leaves of each colour under each vertex."""
    xi = np.atleast_2d(xi)
    out = np.zeros((xi.shape[0], layout.interior, q), dtype=np.int64)
    rows = np.arange(xi.shape[0])[:, None]
    np.add.at(out, (rows, layout.leaf_parent[None, :], xi), 1)
    return out


def _config_block(layout: _Layout, q: int, start: int, stop: int):
    digits = _digits(start, stop, q, layout.interior)
    inner = (digits[:, layout.edge_parent] == digits[:, layout.edge_child]).sum(axis=1)
    return digits, inner


def _histograms(layout: _Layout, q: int, xi_batch: np.ndarray, workers: int) -> np.ndarray:
    """Integer histograms ``H[b, i, k]`` for a batch of 0-based boundaries."""
    nb = xi_batch.shape[0]
    K = layout.num_edges + 1
    total = q ** layout.interior
    counts = _leaf_color_counts(layout, xi_batch, q)
    # one (configs x boundaries) block stays under _CHUNK_ELEMS entries
    step = max(1, _CHUNK_ELEMS // max(nb * layout.interior, 1))
    blocks = _chunks(total, step)
    vidx = np.arange(layout.interior)

    def run(block):
        start, stop = block
        digits, inner = _config_block(layout, q, start, stop)
        # leaf edges: sum over vertices of counts[b, v, digit_v]
        leaf = counts[:, vidx[None, :], digits].sum(axis=2)  # (nb, nc)
        expo = inner[None, :] + leaf
        root = digits[:, 0]
        flat = (np.arange(nb)[:, None] * q + root[None, :]) * K + expo
        return np.bincount(flat.ravel(), minlength=nb * q * K)

    hist = np.zeros(nb * q * K, dtype=np.int64)
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(workers) as ex:
            for part in ex.map(run, blocks):
                hist += part
    else:
        for block in blocks:
            hist += run(block)
    return hist.reshape(nb, q, K)


def _weights(hist: np.ndarray, p: float) -> np.ndarray:
    ptable = p ** np.arange(hist.shape[-1], dtype=np.float64)
    return (hist * ptable).sum(axis=-1)


def root_weights_exact(params: ModelParams, n: int, xi: BoundarySpec,
                       budget: int | None = None, workers: int = 1) -> RootWeights:
    d, q = params.d, params.q
    layout = _layout(d, n)
    budget = budget_configs() if budget is None else budget
    required = q ** layout.interior
    if required > budget:
        raise BudgetExceeded("root_weights_exact", required, budget)
    arr = xi.array(q, d, n)
    hist = _histograms(layout, q, arr[None, :], workers)[0]
    w = _weights(hist, params.p)
    return RootWeights(w=w, Z=float(w.sum()))


def root_marginals_exact(params: ModelParams, n: int, xi: BoundarySpec,
                         budget: int | None = None, workers: int = 1) -> np.ndarray:
    return root_weights_exact(params, n, xi, budget, workers).marginals()


def all_boundary_weights(params: ModelParams, n: int, budget: int | None = None,
                         workers: int = 1, config_budget: int | None = None) -> np.ndarray:
    """Root weights ``W[b, i]`` for every boundary, ``b`` in lexicographic order.

    Boundary ``b`` colours leaf ``l`` with the l-th base-q digit of ``b``
    (leaf 0 most significant).
    """
    d, q = params.d, params.q
    layout = _layout(d, n)
    L = num_leaves(d, n)
    budget = budget_boundaries() if budget is None else budget
    nbound = q ** L
    if nbound > budget:
        raise BudgetExceeded("boundary enumeration", nbound, budget)
    cfg_budget = budget_configs() if config_budget is None else config_budget
    if nbound * q ** layout.interior > cfg_budget:
        raise BudgetExceeded("boundary enumeration (weights)", nbound * q ** layout.interior,
                             cfg_budget)
    bstep = max(1, _CHUNK_ELEMS // max(q ** layout.interior, 1))
    out = np.empty((nbound, q), dtype=np.float64)
    blocks = _chunks(nbound, bstep)

    def run(block):
        start, stop = block
        xi = _digits(start, stop, q, L)
        return start, stop, _weights(_histograms(layout, q, xi, 1), params.p)

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(run, blocks))
    else:
        results = [run(b) for b in blocks]
    for start, stop, w in results:
        out[start:stop] = w
    return out


def boundary_from_index(b: int, q: int, L: int) -> BoundarySpec:
    colors = []
    for _ in range(L):
        b, c = divmod(b, q)
        colors.append(c + 1)
    return BoundarySpec.explicit(reversed(colors))


def max_ratio_exact(params: ModelParams, n: int, budget: int | None = None,
                    workers: int = 1, rtol: float = 1e-12, config_budget: int | None = None):
    """Maximum over all boundaries of ``mu[sigma_root=2] / mu[sigma_root=1]``.

    Returns ``(r_star, witnesses)`` where ``witnesses`` lists every boundary
    whose ratio is within ``rtol * r_star`` of the maximum, in enumeration
    order.
    """
    W = all_boundary_weights(params, n, budget, workers, config_budget)
    ratios = W[:, 1] / W[:, 0]
    r_star = float(ratios.max())
    L = num_leaves(params.d, n)
    hits = np.flatnonzero(ratios >= r_star - rtol * r_star)
    return r_star, [boundary_from_index(int(b), params.q, L) for b in hits]


def find_dominating_boundary(params: ModelParams, n: int, budget: int | None = None,
                             workers: int = 1, config_budget: int | None = None):
    """Boundary maximising ``mu[sigma_root=1]`` if it beats the pure colour-1 boundary.

    Returns ``(boundary, margin)`` with ``margin > 0``, or ``None`` when no
    boundary strictly exceeds the pure one.
    """
    W = all_boundary_weights(params, n, budget, workers, config_budget)
    mu1 = W[:, 0] / W.sum(axis=1)
    pure = mu1[0]  # boundary index 0 is the pure colour-1 boundary
    best = int(np.argmax(mu1))
    margin = float(mu1[best] - pure)
    if margin <= 0.0:
        return None
    return boundary_from_index(best, params.q, num_leaves(params.d, n)), margin
