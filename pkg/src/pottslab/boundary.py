"""Leaf boundary conditions on the d-ary tree of height n.

Leaves are addressed by words in ``{1..d}^n`` and stored in lexicographic
order of those words, so the leaves below any vertex occupy a contiguous
slice.  Colours are 1-based at every public surface (files, ``BoundarySpec``)
and 0-based inside numpy arrays.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def num_leaves(d: int, n: int) -> int:
    return d ** n


def num_interior(d: int, n: int) -> int:
    """Number of non-leaf vertices (root included)."""
    if d == 1:
        return n
    return (d ** n - 1) // (d - 1)


def leaf_index(address: Sequence[int], d: int) -> int:
    """Position of the leaf with 1-based address word ``address``."""
    idx = 0
    for a in address:
        if not 1 <= a <= d:
            raise ValueError(f"address letter {a} outside 1..{d}")
        idx = idx * d + (a - 1)
    return idx


@dataclass(frozen=True)
class BoundarySpec:
    """Pure colour or explicit per-leaf colouring (1-based colours)."""

    color: int | None = None
    leaf_colors: tuple[int, ...] | None = None

    def __post_init__(self):
        if (self.color is None) == (self.leaf_colors is None):
            raise ValueError("BoundarySpec needs exactly one of color / leaf_colors")
        if self.leaf_colors is not None:
            object.__setattr__(self, "leaf_colors", tuple(int(c) for c in self.leaf_colors))

    @classmethod
    def pure(cls, color: int) -> "BoundarySpec":
        return cls(color=int(color))

    @classmethod
    def explicit(cls, leaf_colors: Iterable[int]) -> "BoundarySpec":
        return cls(leaf_colors=tuple(leaf_colors))

    @property
    def is_pure(self) -> bool:
        return self.color is not None

    def validate(self, q: int, d: int, n: int) -> None:
        if self.is_pure:
            if not 1 <= self.color <= q:
                raise ValueError(f"boundary colour {self.color} outside 1..{q}")
            return
        L = num_leaves(d, n)
        if len(self.leaf_colors) != L:
            raise ValueError(
                f"explicit boundary has {len(self.leaf_colors)} leaves, tree of height {n} "
                f"with d={d} has {L}")
        bad = [c for c in self.leaf_colors if not 1 <= c <= q]
        if bad:
            raise ValueError(f"boundary colours {sorted(set(bad))} outside 1..{q}")

    def array(self, q: int, d: int, n: int) -> np.ndarray:
        """0-based leaf colour array in lexicographic leaf order."""
        self.validate(q, d, n)
        if self.is_pure:
            return np.full(num_leaves(d, n), self.color - 1, dtype=np.int64)
        return np.asarray(self.leaf_colors, dtype=np.int64) - 1

    def permuted(self, perm: Sequence[int]) -> "BoundarySpec":
        """Apply the colour bijection ``c -> perm[c-1]`` (1-based image)."""
        if self.is_pure:
            return BoundarySpec.pure(perm[self.color - 1])
        return BoundarySpec.explicit(perm[c - 1] for c in self.leaf_colors)

    def to_list(self, q: int, d: int, n: int) -> list[int]:
        return [int(c) + 1 for c in self.array(q, d, n)]


def write_boundary(path: str | os.PathLike, colors: Iterable[int]) -> None:
    """One leaf per line, 1-based colour, lexicographic leaf order."""
    text = "".join(f"{int(c)}\n" for c in colors)
    Path(path).write_text(text)


def read_boundary(path: str | os.PathLike, q: int | None = None) -> BoundarySpec:
    colors = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        s = line.strip()
        if not s:
            continue
        try:
            c = int(s)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: not an integer colour: {s!r}") from None
        if c < 1 or (q is not None and c > q):
            raise ValueError(f"{path}:{lineno}: colour {c} outside 1..{q if q else 'q'}")
        colors.append(c)
    return BoundarySpec.explicit(colors)


def infer_height(num: int, d: int) -> int:
    """Height n with ``d**n == num``; raises if ``num`` is not a power of d."""
    if d == 1:
        raise ValueError("height cannot be inferred from leaf count when d = 1")
    n, m = 0, 1
    while m < num:
        m *= d
        n += 1
    if m != num:
        raise ValueError(f"{num} leaves is not a power of d={d}")
    return n
