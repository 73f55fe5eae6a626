"""Optimal l_p-budget attacks on M-estimators and the empirical AIF."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .errors import InvalidParameterError, NullGradientError, OracleSizeError
from .mestimator import PsiSpec, _as_data, sensitivity, solve
from .norms import NormOrder

__all__ = [
    "AttackPlan",
    "AifReport",
    "lp_optimal_delta",
    "optimal_attack",
    "aif_empirical",
    "aif_finite_eta",
    "brute_force_attack",
    "default_eta_grid",
]

BUDGET_SLACK = 1e-12


@dataclass(frozen=True)
class AttackPlan:
    delta: np.ndarray
    eta: float
    p: NormOrder
    predicted_shift: float
    realized_shift: float
    diagnostics: dict = field(default_factory=dict)

    def budget_used(self) -> float:
        """(1/N)||delta||_p^p, or ||delta||_inf for p = inf."""
        d = np.abs(self.delta)
        if self.p.is_inf:
            return float(d.max(initial=0.0))
        return float(np.mean(d ** self.p.value))


@dataclass(frozen=True)
class AifReport:
    value: float
    method: str
    diagnostics: dict = field(default_factory=dict)


def lp_optimal_delta(c, eta: float, p) -> tuple[np.ndarray, int | None]:
    """Maximizer of sum c_n d_n subject to (1/N)||d||_p^p <= eta^p.

    Returns the perturbation and, for p = 1, the index receiving the whole
    budget (lowest index on ties).
    """
    p = NormOrder.of(p)
    c = np.asarray(c, dtype=float)
    n = c.size
    eta = float(eta)
    if not eta > 0:
        raise InvalidParameterError(f"eta must be positive, got {eta!r}")
    absc = np.abs(c)
    cmax = absc.max(initial=0.0)
    if cmax == 0.0:
        raise NullGradientError("all sensitivities are zero; the estimator is locally insensitive")
    sgn = np.sign(c)
    if p.is_one:
        k = int(np.argmax(absc))
        delta = np.zeros(n)
        delta[k] = sgn[k] * n * eta
        return delta, k
    if p.is_inf:
        return sgn * eta, None
    pv = p.value
    # homogeneous of degree 0 in c, so normalize first to keep powers bounded
    r = absc / cmax
    num = r ** (1.0 / (pv - 1.0))
    den = np.sum(r ** (pv / (pv - 1.0))) ** (1.0 / pv)
    return sgn * num * n ** (1.0 / pv) * eta / den, None


def optimal_attack(psi: PsiSpec, data, eta: float, p) -> AttackPlan:
    """First-order optimal perturbation with its predicted and realized shift."""
    p = NormOrder.of(p)
    x = _as_data(data)
    est = solve(psi, x)
    sens = sensitivity(psi, x, est)
    delta, nstar = lp_optimal_delta(sens.c, eta, p)
    predicted = float(sens.c @ delta)
    moved = solve(psi, x + delta)
    diag = {"T_N": est.value, "T_N_attacked": moved.value}
    if nstar is not None:
        ties = np.flatnonzero(np.abs(sens.c) == np.abs(sens.c[nstar]))
        diag["n_star"] = nstar
        diag["n_star_ties"] = ties.tolist()
    return AttackPlan(
        delta=delta,
        eta=float(eta),
        p=p,
        predicted_shift=predicted,
        realized_shift=abs(moved.value - est.value),
        diagnostics=diag,
    )


def aif_empirical(psi: PsiSpec, data, p) -> AifReport:
    """Closed-form fixed-sample AIF from psi_x and psi_theta at (x_n, T_N)."""
    p = NormOrder.of(p)
    x = _as_data(data)
    est = solve(psi, x)
    sensitivity(psi, x, est)  # raises on breakpoint collisions / degenerate denominators
    t = est.value
    gx = np.abs(np.broadcast_to(np.asarray(psi.psi_dx(x, t), dtype=float), x.shape))
    gt = np.broadcast_to(np.asarray(psi.psi_dtheta(x, t), dtype=float), x.shape)
    diag = {"T_N": t, "N": int(x.size)}
    if p.is_inf:
        numerator = float(np.sum(gx))
        denominator = abs(float(np.sum(gt)))
    else:
        denominator = abs(float(np.mean(gt)))
        if p.is_one:
            k = int(np.argmax(gx))
            numerator = float(gx[k])
            diag["n_star"] = k
        else:
            q = p.conjugate
            m = gx.max(initial=0.0)
            numerator = 0.0 if m == 0 else m * float(np.mean((gx / m) ** q)) ** (1.0 / q)
    diag["numerator"] = numerator
    diag["denominator"] = denominator
    return AifReport(value=numerator / denominator, method="closed-form", diagnostics=diag)


def default_eta_grid(data, points: int = 4) -> np.ndarray:
    x = np.asarray(data, dtype=float)
    spread = float(np.ptp(x)) or max(1.0, float(np.max(np.abs(x))))
    return spread * 1e-3 * 0.5 ** np.arange(points)


def aif_finite_eta(psi: PsiSpec, data, p, eta_grid=None, *, monotone_tol: float = 1e-9) -> AifReport:
    """AIF from realized shifts: fit shift/eta = AIF + k*eta, report the intercept."""
    p = NormOrder.of(p)
    x = _as_data(data)
    grid = default_eta_grid(x) if eta_grid is None else np.asarray(eta_grid, dtype=float)
    if grid.size < 3 or np.any(grid <= 0) or np.any(np.diff(grid) >= 0):
        raise InvalidParameterError("eta_grid must hold >= 3 positive, strictly decreasing values")
    ratios = np.array([optimal_attack(psi, x, e, p).realized_shift / e for e in grid])
    design = np.column_stack([np.ones_like(grid), grid])
    (intercept, slope), *_ = np.linalg.lstsq(design, ratios, rcond=None)
    steps = np.diff(ratios)
    scale = max(1.0, float(np.max(np.abs(ratios))))
    big = steps[np.abs(steps) > monotone_tol * scale]
    warn = bool(big.size > 1 and not (np.all(big > 0) or np.all(big < 0)))
    diag = {
        "eta_grid": grid.tolist(),
        "ratios": ratios.tolist(),
        "slope": float(slope),
        "convergence_warning": warn,
    }
    if warn:
        warnings.warn("shift/eta sequence is not monotone over the eta grid", RuntimeWarning, stacklevel=2)
    return AifReport(value=float(intercept), method="finite-eta-extrapolation", diagnostics=diag)


# -- brute-force oracle -------------------------------------------------------

MAX_ORACLE_N = 4


def _feasible_grid(n, eta, p: NormOrder, grid_per_dim):
    radius = eta if p.is_inf else n ** (1.0 / p.value) * eta
    axis = np.linspace(-radius, radius, grid_per_dim)
    cells = np.array(list(itertools.product(axis, repeat=n)))
    if p.is_inf:
        return cells
    used = np.mean(np.abs(cells) ** p.value, axis=1)
    return cells[used <= eta ** p.value * (1 + 1e-12) + BUDGET_SLACK]


def _builtin_batch(psi: PsiSpec, rows: np.ndarray) -> np.ndarray:
    code, param = psi.kernel
    if psi.kind == "scale":
        m = np.max(np.abs(rows), axis=1)
        lo, hi = 1e-8 * m, m
    else:
        lo, hi = rows.min(axis=1), rows.max(axis=1)
        same = lo == hi
        lo, hi = np.where(same, lo - 1.0, lo), np.where(same, hi + 1.0, hi)
    return kernels.batch_roots(code, param, np.ascontiguousarray(rows), lo, hi, 1e-13)


def brute_force_attack(estimator, data, eta: float, p, grid_per_dim: int = 21) -> AttackPlan:
    """Exhaustive search for the feasible grid perturbation with the largest shift.

    ``estimator`` is a :class:`PsiSpec` or any callable mapping a data vector
    to a scalar estimate (e.g. an L-estimator). Used as a test oracle only.
    """
    p = NormOrder.of(p)
    x = _as_data(data)
    if x.size > MAX_ORACLE_N:
        raise OracleSizeError(f"brute-force oracle is limited to N <= {MAX_ORACLE_N}, got N={x.size}")
    if grid_per_dim < 11:
        raise InvalidParameterError("grid_per_dim must be >= 11")
    if not eta > 0:
        raise InvalidParameterError(f"eta must be positive, got {eta!r}")
    cells = _feasible_grid(x.size, float(eta), p, int(grid_per_dim))
    rows = x[None, :] + cells

    if isinstance(estimator, PsiSpec):
        base = solve(estimator, x).value
        if estimator.kernel is not None:
            values = _builtin_batch(estimator, rows)
        else:
            values = np.array([solve(estimator, r).value for r in rows])
    else:
        f: Callable = estimator
        base = float(f(x))
        values = np.array([float(f(r)) for r in rows])

    shifts = np.abs(values - base)
    k = int(np.argmax(shifts))
    return AttackPlan(
        delta=cells[k].copy(),
        eta=float(eta),
        p=p,
        predicted_shift=math.nan,
        realized_shift=float(shifts[k]),
        diagnostics={"cells_searched": int(len(cells)), "T_N": base},
    )
