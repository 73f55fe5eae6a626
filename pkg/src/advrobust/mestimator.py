"""M-estimators: psi specifications, the estimating-equation solver and the
per-sample sensitivity dT_N/dx_n."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from . import kernels
from .errors import (
    AmbiguousRootError,
    BreakpointAmbiguityError,
    DegenerateEstimatorError,
    InvalidParameterError,
    NoRootError,
)

__all__ = ["PsiSpec", "MEstimate", "Sensitivity", "builtin_psi", "solve", "sensitivity"]

KINDS = ("location", "scale", "general")


@dataclass(frozen=True)
class PsiSpec:
    """Defining function of an M-estimator.

    For ``location`` and ``scale`` kinds, ``func``/``deriv`` are the
    one-argument psi(u) and psi'(u), evaluated at u = x - theta or
    u = x / theta. For ``general`` they are psi(x, theta) and its x-partial,
    and ``dtheta`` is required. ``breakpoints`` are u-values where psi' jumps.
    ``sup_abs`` is sup|psi| when known to be finite.
    """

    kind: str
    func: Callable
    deriv: Callable
    dtheta: Callable | None = None
    breakpoints: tuple[float, ...] = ()
    label: str = "custom"
    sup_abs: float | None = None
    kernel: tuple[int, float] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"psi kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "general" and self.dtheta is None:
            raise InvalidParameterError("general psi needs an explicit theta-partial")

    def standardize(self, x, theta):
        if self.kind == "location":
            return np.subtract(x, theta)
        if self.kind == "scale":
            return np.divide(x, theta)
        return np.asarray(x, dtype=float)

    def psi(self, x, theta):
        if self.kind == "general":
            return self.func(x, theta)
        return self.func(self.standardize(x, theta))

    def psi_dx(self, x, theta):
        if self.kind == "location":
            return self.deriv(np.subtract(x, theta))
        if self.kind == "scale":
            return self.deriv(np.divide(x, theta)) / theta
        return self.deriv(x, theta)

    def psi_dtheta(self, x, theta):
        if self.kind == "location":
            return -self.deriv(np.subtract(x, theta))
        if self.kind == "scale":
            return -np.multiply(x, self.deriv(np.divide(x, theta))) / (theta * theta)
        return self.dtheta(x, theta)

    def breakpoints_at(self, theta) -> list[float]:
        """Breakpoints of x -> psi'(x, theta) in data coordinates."""
        if self.kind == "location":
            return [theta + b for b in self.breakpoints]
        if self.kind == "scale":
            return [theta * b for b in self.breakpoints]
        return list(self.breakpoints)

    def scaled(self, c: float) -> "PsiSpec":
        """The same estimator written with c * psi (c > 0)."""
        f, d, t = self.func, self.deriv, self.dtheta
        return replace(
            self,
            func=lambda *a: c * f(*a),
            deriv=lambda *a: c * d(*a),
            dtheta=None if t is None else (lambda *a: c * t(*a)),
            sup_abs=None if self.sup_abs is None else c * self.sup_abs,
            label=f"{c:g}*{self.label}",
            kernel=None,
        )


@dataclass(frozen=True)
class MEstimate:
    value: float
    residual: float
    iterations: int
    bracket: tuple[float, float]


@dataclass(frozen=True)
class Sensitivity:
    c: np.ndarray
    denom: float


def _mean_psi():
    return PsiSpec(
        "location",
        func=lambda u: np.asarray(u, dtype=float) * 1.0,
        deriv=lambda u: np.ones_like(np.asarray(u, dtype=float))[()],
        label="mean",
        kernel=(kernels.MEAN, 0.0),
    )


def _huber_psi(b):
    if not (0.0 < b < math.inf):
        raise InvalidParameterError(f"huber requires 0 < b < inf, got b={b!r}")
    return PsiSpec(
        "location",
        func=lambda u: np.clip(u, -b, b),
        deriv=lambda u: (np.abs(np.asarray(u, dtype=float)) < b).astype(float)[()],
        breakpoints=(-b, b),
        label=f"huber({b:g})",
        sup_abs=b,
        kernel=(kernels.HUBER, b),
    )


def _gaussian_scale_psi():
    return PsiSpec(
        "scale",
        func=lambda u: np.square(u) - 1.0,
        deriv=lambda u: 2.0 * np.asarray(u, dtype=float),
        label="gaussian-scale-mle",
        kernel=(kernels.GAUSS_SCALE, 0.0),
    )


def builtin_psi(name: str, b: float | None = None) -> PsiSpec:
    """``mean``, ``huber`` (needs ``b``) or ``gaussian-scale-mle``."""
    key = name.strip().lower()
    if key == "mean":
        return _mean_psi()
    if key == "huber":
        if b is None:
            raise InvalidParameterError("huber requires the corner parameter b")
        return _huber_psi(float(b))
    if key in ("gaussian-scale-mle", "gaussian-scale", "scale-mle"):
        return _gaussian_scale_psi()
    raise InvalidParameterError(f"unknown builtin psi {name!r}")


# -- solving ------------------------------------------------------------------

SCAN_POINTS = 512
MAX_DOUBLINGS = 64


def _as_data(data) -> np.ndarray:
    x = np.ascontiguousarray(data, dtype=float).ravel()
    if x.size == 0:
        raise InvalidParameterError("data must be nonempty")
    if not np.all(np.isfinite(x)):
        raise InvalidParameterError("data must be finite")
    return x


def _initial_bracket(psi: PsiSpec, x: np.ndarray) -> tuple[float, float]:
    if psi.kind == "scale":
        m = float(np.max(np.abs(x)))
        if m == 0.0:
            m = 1.0
        return 1e-8 * m, 2.0 * max(m * m, m)
    med = float(np.median(x))
    s = 1.4826 * float(np.median(np.abs(x - med)))
    spread = float(np.ptp(x))
    if spread == 0.0:
        s = max(1.0, abs(med)) * 1e-3
    elif s < 1e-6 * spread:
        # a MAD far below the range would need more doublings than allowed
        s = spread
    return med - s, med + s


def _sums(psi: PsiSpec, x: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    if psi.kernel is not None:
        code, param = psi.kernel
        return kernels.estimating_sums(code, param, x, np.ascontiguousarray(thetas))
    out = np.empty(len(thetas))
    step = max(1, 2_000_000 // x.size)
    for i in range(0, len(thetas), step):
        t = thetas[i:i + step, None]
        out[i:i + step] = np.sum(psi.psi(x[None, :], t), axis=1)
    return out


def _sign_change_cells(grid, vals):
    """Bracketing cells of sign changes, treating exact zeros as roots."""
    cells = []
    s = np.sign(vals)
    i, n = 0, len(grid)
    while i < n:
        if s[i] == 0:
            j = i
            while j + 1 < n and s[j + 1] == 0:
                j += 1
            cells.append((grid[i], grid[j], True))
            i = j + 1
            continue
        if i + 1 < n and s[i + 1] != 0 and s[i] != s[i + 1]:
            cells.append((grid[i], grid[i + 1], False))
        i += 1
    return cells


def solve(psi: PsiSpec, data, *, xtol: float = 1e-12) -> MEstimate:
    """Root T_N of sum_n psi(x_n, T_N) = 0.

    Scans 512 points over a bracket that doubles until a sign change shows
    up, refuses to choose between several roots, then bisects the single
    bracketing cell down to ``xtol`` and finishes with a secant step.
    """
    x = _as_data(data)
    lo, hi = _initial_bracket(psi, x)
    cells = []
    for expansions in range(MAX_DOUBLINGS + 1):
        if psi.kind == "scale":
            grid = np.geomspace(lo, hi, SCAN_POINTS)
        else:
            grid = np.linspace(lo, hi, SCAN_POINTS)
        with np.errstate(all="ignore"):
            vals = _sums(psi, x, grid)
        finite = np.isfinite(vals)
        cells = _sign_change_cells(grid[finite], vals[finite])
        if cells:
            break
        if psi.kind == "scale":
            lo, hi = lo / 2.0, hi * 2.0
        else:
            mid, half = 0.5 * (lo + hi), (hi - lo)
            lo, hi = mid - half, mid + half
    else:
        raise NoRootError(
            f"estimating equation for {psi.label} has no sign change after {MAX_DOUBLINGS} bracket doublings"
        )

    roots = []
    flat = False
    for a, b, exact in cells:
        if exact:
            flat = flat or a != b
            roots.append(a if a == b else (a, b))
        else:
            roots.append(brentq(lambda t: float(_sums(psi, x, np.array([t]))[0]), a, b, xtol=1e-10))
    if len(cells) > 1 or flat:
        raise AmbiguousRootError(
            f"estimating equation for {psi.label} has {len(cells)} bracketed roots"
            + (" (including a flat zero interval)" if flat else "")
            + f": {roots}",
            roots,
        )

    a, b, exact = cells[0]
    if exact:
        value, iterations = float(a), 0
    else:
        value, iterations = _refine(psi, x, a, b, xtol)
    residual = float(_sums(psi, x, np.array([value]))[0])
    if abs(residual) > x.size * 1e-10:
        raise NoRootError(
            f"root refinement for {psi.label} left residual {residual:.3g} > N*1e-10 at T={value!r}"
        )
    return MEstimate(value=value, residual=residual, iterations=iterations, bracket=(float(lo), float(hi)))


def _refine(psi, x, a, b, xtol):
    width = b - a
    iterations = max(1, int(math.ceil(math.log2(max(width / xtol, 2.0)))))
    if psi.kernel is not None:
        code, param = psi.kernel
        root = kernels.batch_roots(code, param, x[None, :], np.array([a]), np.array([b]), xtol)[0]
        return float(root), iterations
    f = lambda t: float(np.sum(psi.psi(x, t)))
    root, info = brentq(f, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps, full_output=True)
    return float(root), int(info.iterations)


def sensitivity(psi: PsiSpec, data, est: MEstimate, *, breakpoint_tol: float = 1e-9) -> Sensitivity:
    """c_n = -psi_x(x_n, T) / sum_m psi_theta(x_m, T)."""
    x = _as_data(data)
    t = est.value
    if psi.breakpoints and psi.kind != "general":
        u = psi.standardize(x, t)
        for bp in psi.breakpoints:
            hit = np.flatnonzero(np.abs(u - bp) <= breakpoint_tol)
            if hit.size:
                n = int(hit[0])
                raise BreakpointAmbiguityError(
                    f"sample {n} (x={x[n]!r}) sits on the psi' breakpoint {bp!r}; dither it",
                    n,
                )
    denom = float(np.sum(psi.psi_dtheta(x, t)))
    if denom == 0.0 or not math.isfinite(denom):
        raise DegenerateEstimatorError(
            f"sum of d(psi)/d(theta) at T={t!r} is {denom}; the estimator is locally flat"
        )
    c = -np.asarray(psi.psi_dx(x, t), dtype=float) / denom
    return Sensitivity(c=np.broadcast_to(c, x.shape).copy(), denom=denom)
