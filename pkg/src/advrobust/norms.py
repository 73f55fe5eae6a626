"""Norm orders for the l_p attack budget."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidParameterError


@dataclass(frozen=True)
class NormOrder:
    """An l_p order p >= 1, with p = 1 and p = inf kept as distinct cases.

    The special cases use their own closed forms instead of limits of the
    finite-p expressions (exponents 1/(p-1) blow up near p = 1).
    """

    value: float

    def __post_init__(self):
        if not (self.value >= 1.0):
            raise InvalidParameterError(f"norm order must satisfy p >= 1, got {self.value!r}")

    @classmethod
    def of(cls, p) -> "NormOrder":
        if isinstance(p, NormOrder):
            return p
        if isinstance(p, str):
            s = p.strip().lower()
            if s in ("inf", "infinity", "oo", "max"):
                return cls(math.inf)
            try:
                p = float(s)
            except ValueError:
                raise InvalidParameterError(f"cannot parse norm order {p!r}") from None
        return cls(float(p))

    @property
    def is_one(self) -> bool:
        return self.value == 1.0

    @property
    def is_inf(self) -> bool:
        return math.isinf(self.value)

    @property
    def conjugate(self) -> float:
        """Hoelder conjugate q = p/(p-1); inf for p = 1 and 1 for p = inf."""
        if self.is_one:
            return math.inf
        if self.is_inf:
            return 1.0
        return self.value / (self.value - 1.0)

    def __str__(self):
        return "inf" if self.is_inf else f"{self.value:g}"
