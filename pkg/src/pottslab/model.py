"""Model parameters for the antiferromagnetic Potts model on d-ary trees.

All modules work with the interaction weight ``p = exp(beta)`` in (0, 1).
Two derived constants appear everywhere::

    A = d (1 - p)        B = p + q - 1

and the linearised contraction rate of the ratio iteration at its fixed point
is ``A / B``.  Criticality is ``A == B``, i.e. ``p == 1 - q / (d + 1)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

CRITICAL_ATOL = 1e-12


class ParameterError(ValueError):
    """Invalid model parameter.  ``field`` names the offending argument."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class Regime(enum.Enum):
    SUPERCRITICAL = "Supercritical"
    CRITICAL = "Critical"
    SUBCRITICAL = "Subcritical"


@dataclass(frozen=True)
class ModelParams:
    d: int
    q: int
    p: float
    A: float = field(init=False)
    B: float = field(init=False)

    def __post_init__(self):
        if isinstance(self.d, bool) or int(self.d) != self.d or self.d < 1:
            raise ParameterError("d", f"branching factor must be an integer >= 1, got {self.d!r}")
        if isinstance(self.q, bool) or int(self.q) != self.q or self.q < 2:
            raise ParameterError("q", f"colour count must be an integer >= 2, got {self.q!r}")
        p = float(self.p)
        if not (0.0 < p < 1.0):
            raise ParameterError("p", f"interaction weight must lie in (0, 1), got {self.p!r}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "q", int(self.q))
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "A", self.d * (1.0 - p))
        object.__setattr__(self, "B", p + self.q - 1.0)

    @property
    def contraction(self) -> float:
        """Linearised rate ``A / B`` of the ratio map at 1."""
        return self.A / self.B

    @property
    def regime(self) -> Regime:
        return regime(self)

    def as_dict(self) -> dict:
        return {"d": self.d, "q": self.q, "p": self.p, "A": self.A, "B": self.B,
                "regime": self.regime.value}


def new_params(d: int, q: int, p: float) -> ModelParams:
    return ModelParams(d, q, p)


def critical_p(d: int, q: int) -> float:
    """Critical weight ``1 - q/(d+1)``.

    The result may be <= 0 (e.g. ``q = d + 1`` gives the zero-temperature
    colouring case); then every ``p`` in (0, 1) is at or above criticality.
    """
    return 1.0 - q / (d + 1.0)


def regime(params: ModelParams) -> Regime:
    pc = critical_p(params.d, params.q)
    if abs(params.p - pc) <= CRITICAL_ATOL:
        return Regime.CRITICAL
    if params.p > pc:
        return Regime.SUBCRITICAL
    return Regime.SUPERCRITICAL


def critical_params(d: int, q: int) -> ModelParams:
    """Parameters at exactly ``p = critical_p(d, q)``; needs ``p_c > 0``."""
    pc = critical_p(d, q)
    if pc <= 0.0:
        raise ParameterError(
            "p", f"critical weight 1 - q/(d+1) = {pc:g} is not positive for d={d}, q={q}; "
            "q = d + 1 is the zero-temperature (proper colouring) case")
    return ModelParams(d, q, pc)
