"""L-estimators: weight construction, estimation and fixed-sample AIF."""
from __future__ import annotations

import csv
import math
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from scipy import integrate as _integrate

from .attack import AifReport
from .errors import DegenerateWeightsError, InvalidParameterError, ParseError, ShapeError
from .norms import NormOrder

__all__ = [
    "LWeights",
    "weights_from_h",
    "mean_weights",
    "median_weights",
    "alpha_trimmed_weights",
    "l_estimate",
    "l_aif",
    "ordering_safety_threshold",
    "SafetyThreshold",
    "read_weights_csv",
    "write_weights_csv",
]

SOURCES = ("explicit", "from-h", "alpha-trimmed", "median")

SafetyThreshold = namedtuple("SafetyThreshold", ["eta", "all_equal"])


@dataclass(frozen=True, eq=False)
class LWeights:
    """Coefficients a_n applied to the ascending order statistics."""

    a: np.ndarray
    source: str = "explicit"
    alpha: float | None = None

    def __post_init__(self):
        a = np.ascontiguousarray(self.a, dtype=float).ravel()
        if a.size == 0:
            raise ShapeError("weights must be nonempty")
        if not np.all(np.isfinite(a)):
            raise InvalidParameterError("weights must be finite")
        if self.source not in SOURCES:
            raise InvalidParameterError(f"weight source must be one of {SOURCES}")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def n(self) -> int:
        return int(self.a.size)


def weights_from_h(h, n: int, *, epsabs: float = 1e-13, epsrel: float = 1e-12) -> LWeights:
    """a_n = int_{(n-1)/N}^{n/N} h / int_0^1 h by per-panel quadrature.

    Point masses in ``h`` are invisible to quadrature; use
    :func:`median_weights` for the median.
    """
    n = int(n)
    if n < 1:
        raise InvalidParameterError(f"N must be >= 1, got {n}")
    edges = np.linspace(0.0, 1.0, n + 1)
    panels = np.array([_integrate.quad(h, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=200)[0]
                       for lo, hi in zip(edges[:-1], edges[1:])])
    total = float(panels.sum())
    scale = float(np.abs(panels).sum())
    if scale == 0.0 or abs(total) <= 1e-12 * scale:
        raise DegenerateWeightsError(f"int_0^1 h = {total:.3g}; weights cannot be normalized")
    return LWeights(panels / total, source="from-h")


def mean_weights(n: int) -> LWeights:
    return LWeights(np.full(int(n), 1.0 / int(n)), source="from-h")


def median_weights(n: int) -> LWeights:
    """Unit weight on the middle order statistic; the two middle ones share it for even N."""
    n = int(n)
    if n < 1:
        raise InvalidParameterError(f"N must be >= 1, got {n}")
    a = np.zeros(n)
    if n % 2:
        a[n // 2] = 1.0
    else:
        a[n // 2 - 1] = a[n // 2] = 0.5
    return LWeights(a, source="median")


def alpha_trimmed_weights(alpha: float, n: int) -> LWeights:
    """1/(N - 2 floor(alpha N)) on the kept middle block."""
    n = int(n)
    alpha = float(alpha)
    if not 0.0 <= alpha < 0.5:
        raise InvalidParameterError(f"alpha must lie in [0, 1/2), got {alpha}")
    k = int(math.floor(alpha * n))
    kept = n - 2 * k
    if kept < 1:
        raise DegenerateWeightsError(f"alpha={alpha} trims all {n} points")
    a = np.zeros(n)
    a[k:n - k] = 1.0 / kept
    return LWeights(a, source="alpha-trimmed", alpha=alpha)


def l_estimate(w: LWeights, data) -> float:
    """sum_n a_n x_(n) with a stable ascending sort."""
    x = np.asarray(data, dtype=float).ravel()
    if x.size != w.n:
        raise ShapeError(f"data has {x.size} values but the weights have {w.n}")
    return float(w.a @ np.sort(x, kind="stable"))


def l_aif(w: LWeights, p) -> AifReport:
    """Fixed-sample AIF of an L-estimator; depends on the weights only.

    p = 1 gives N max|a_n|, p = inf gives sum|a_n|, and otherwise
    sum|a_n|^q / ((1/N) sum|a_n|^q)^(1/p) with q = p/(p-1).
    """
    p = NormOrder.of(p)
    a = np.abs(w.a)
    n = w.n
    amax = float(a.max())
    if amax == 0.0:
        raise DegenerateWeightsError("all weights are zero")
    diag = {"N": n}
    if p.is_one:
        k = int(np.argmax(a))
        diag["n_star"] = k
        value = n * amax
    elif p.is_inf:
        value = float(a.sum())
    else:
        q = p.conjugate
        # scale out max|a| so the powers stay in range; the ratio is 1-homogeneous
        r = a / amax
        s = float(np.sum(r ** q))
        value = amax * s / (s / n) ** (1.0 / p.value)
    return AifReport(value=float(value), method="closed-form", diagnostics=diag)


def ordering_safety_threshold(data, p) -> SafetyThreshold:
    """Largest eta with N^(1/p) eta <= min gap / 2, so any feasible attack keeps the order."""
    p = NormOrder.of(p)
    x = np.sort(np.asarray(data, dtype=float).ravel())
    if x.size < 1:
        raise ShapeError("data must be nonempty")
    gaps = np.diff(x)
    gaps = gaps[gaps > 0]
    if gaps.size == 0:
        return SafetyThreshold(0.0, True)
    radius = 1.0 if p.is_inf else x.size ** (1.0 / p.value)
    return SafetyThreshold(float(gaps.min()) / (2.0 * radius), False)


def read_weights_csv(path) -> LWeights:
    """Single-column weights; an optional header on the first line."""
    values = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not row[0].strip():
                continue
            try:
                values.append(float(row[0]))
            except ValueError:
                if lineno == 1:
                    continue
                raise ParseError(f"{path}: line {lineno}: not a number: {row[0]!r}", line=lineno) from None
    return LWeights(np.array(values))


def write_weights_csv(w: LWeights, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["a"])
        for v in w.a:
            out.writerow([repr(float(v))])
