"""Optimal psi design: minimum-AIF estimators and AIF-vs-IF tradeoff designs.

A tradeoff design has, on its active region,

    psi'(x) = nu * w(x) - (theta2 + (theta1 - theta2) F(x)) / f(x)

with w(x) = 1 for location and w(x) = x for scale, and psi' = 0 elsewhere.
Writing theta_i = nu * t_i, the region and the shape of psi' depend on
(t1, t2) only and nu is fixed by the normalization, so the multiplier
search runs over log t1, log t2. Logs keep designs with huge IF budgets
representable: for the normal with xi = 50 the multipliers sit near
exp(-1250).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .distributions import DistributionModel, expect, exponential, integrate
from .errors import (
    DegenerateEstimatorError,
    InfeasibleBudgetError,
    InvalidParameterError,
    OutOfRegimeError,
)
from .mestimator import PsiSpec

__all__ = [
    "KktMultipliers",
    "DesignedPsi",
    "min_aif_location",
    "min_aif_scale",
    "tradeoff_location",
    "tradeoff_scale",
    "exponential_tradeoff",
    "tradeoff_curve",
    "kkt_residuals",
    "write_curve_csv",
    "write_psi_csv",
]

NEG_INF = -math.inf
KKT_TOL = 1e-6


@dataclass(frozen=True)
class KktMultipliers:
    nu: float
    theta1: float = 0.0
    theta2: float = 0.0

    def __post_init__(self):
        if self.theta1 < 0 or self.theta2 < 0:
            raise InvalidParameterError("IF-constraint multipliers must be nonnegative")


# -- active region ----------------------------------------------------------------


def _log_ratio(model, x, log_t1, log_t2):
    """log((t2 S(x) + t1 F(x)) / f(x)) with either term possibly absent."""
    shape = np.shape(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = log_t1 + np.asarray(model.log_cdf_ratio(x)) if log_t1 > NEG_INF else np.full(shape, NEG_INF)
        b = log_t2 + np.asarray(model.log_sf_ratio(x)) if log_t2 > NEG_INF else np.full(shape, NEG_INF)
        return np.logaddexp(a, b)


def _log_base(kind, x):
    x = np.asarray(x, dtype=float)
    if kind == "location":
        return np.zeros_like(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, np.log(np.where(x > 0, x, 1.0)), NEG_INF)


def _phi(model, kind, x, log_t1, log_t2):
    """log w(x) - log((t2 S + t1 F) / f); positive exactly on the active region."""
    with np.errstate(invalid="ignore"):
        return _log_base(kind, x) - _log_ratio(model, x, log_t1, log_t2)


def _scan_grid(model):
    lo, hi = model.support
    a, b = model.core_interval(1e-12)
    width = max(b - a, 1.0)
    pts = [np.asarray(model.ppf(np.linspace(0.0, 1.0, 4098)[1:-1]), dtype=float), np.linspace(a, b, 1025)]
    probes = width * 2.0 ** np.arange(0, 50)
    if math.isinf(hi):
        pts.append(b + probes)
    else:
        pts.append(np.array([hi - 1e-12 * max(1.0, abs(hi))]))
    if math.isinf(lo):
        pts.append(a - probes)
    else:
        pts.append(np.array([lo + 1e-12 * max(1.0, abs(lo))]))
    pts.append(np.array([0.0, 1e-300, 1e-12, 1e-6]))
    g = np.unique(np.concatenate(pts))
    return g[(g > lo) & (g < hi)] if True else g


def active_region(model, kind, log_t1, log_t2):
    """Intervals where the case condition holds; endpoints may be +-inf."""
    lo, hi = model.support
    if log_t1 == NEG_INF and log_t2 == NEG_INF:
        if kind == "location":
            return [(lo, hi)]
        return [(max(lo, 0.0), hi)] if hi > 0 else []
    grid = _scan_grid(model)
    vals = _phi(model, kind, grid, log_t1, log_t2)
    pos = np.nan_to_num(vals, nan=-1.0) > 0

    def root(x0, x1):
        f = lambda x: float(np.clip(np.nan_to_num(_phi(model, kind, x, log_t1, log_t2), nan=-1e300), -1e300, 1e300))
        return brentq(f, x0, x1, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)

    intervals = []
    n = len(grid)
    i = 0
    while i < n:
        if not pos[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and pos[j + 1]:
            j += 1
        if i == 0:
            start = lo if math.isfinite(lo) else NEG_INF
        else:
            start = root(grid[i - 1], grid[i])
        if j == n - 1:
            end = hi if math.isfinite(hi) else math.inf
        else:
            end = root(grid[j], grid[j + 1])
        intervals.append((float(start), float(end)))
        i = j + 1
    return intervals


# -- reduced KKT system --------------------------------------------------------------


def _split_points(model, a, b):
    pts = list(np.asarray(model.ppf([1e-6, 1e-3, 0.1, 0.5, 0.9, 0.999, 1 - 1e-6]), dtype=float))
    if math.isfinite(a) and math.isfinite(b):
        w = b - a
        for r in (1e-4, 1e-3, 1e-2):
            pts += [a + r * w, b - r * w]
    if model.family == "tabulated":
        pts += list(model._x[1:-1])
    return [p for p in pts if a < p < b]


_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _model_knots(model, a, b):
    """Interior grid nodes of a tabulated density, where it is only piecewise smooth."""
    if model.family != "tabulated":
        return np.empty(0)
    x = np.asarray(model._x, dtype=float)
    return x[(x > a) & (x < b)]


def _gl_nodes(a, b, core, knots=()):
    """Composite 16-point Gauss-Legendre nodes and weights on a finite interval.

    Panels are ~1/256 of the model's core width and also break at ``knots``;
    the integrands are otherwise smooth inside an active interval (they
    vanish continuously at its ends).
    """
    h0 = (core[1] - core[0]) / 256.0
    n = int(min(20000, max(64, math.ceil((b - a) / h0))))
    edges = np.linspace(a, b, n + 1)
    if len(knots):
        edges = np.union1d(edges, knots)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    xs = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    ws = (half[:, None] * _GL_W[None, :]).ravel()
    return xs, ws


class _Reduced:
    """Normalization, constraint and objective integrals for given (log t1, log t2)."""

    def __init__(self, model: DistributionModel, kind: str):
        self.model = model
        self.kind = kind
        self._cache = {}

    def shape(self, x, log_t1, log_t2):
        x = np.asarray(x, dtype=float)
        base = np.ones_like(x) if self.kind == "location" else x
        with np.errstate(over="ignore", invalid="ignore"):
            r = np.exp(_log_ratio(self.model, x, log_t1, log_t2))
        return np.maximum(base - r, 0.0)

    def evaluate(self, log_t1, log_t2):
        key = (log_t1, log_t2)
        if key in self._cache:
            return self._cache[key]
        m = self.model
        region = active_region(m, self.kind, log_t1, log_t2)
        out = {"region": region, "log_t1": log_t1, "log_t2": log_t2}
        if not region:
            out.update(N=0.0, ok=False)
            self._cache[key] = out
            return out
        core = m.core_interval()
        tot = dict(N=0.0, E2=0.0, C1=0.0, C2=0.0)
        right_unbounded = any(math.isinf(b) for _, b in region)
        left_unbounded = any(math.isinf(a) for a, _ in region)
        for a, b in region:
            if math.isfinite(a) and math.isfinite(b):
                xs, wq = _gl_nodes(a, b, core, _model_knots(m, a, b))
                sh = self.shape(xs, log_t1, log_t2)
                dens = np.asarray(m.pdf(xs))
                base = 1.0 if self.kind == "location" else xs
                tot["N"] += float(wq @ (sh * base * dens))
                tot["E2"] += float(wq @ (sh * sh * dens))
                tot["C1"] += float(wq @ (sh * np.asarray(m.cdf(xs))))
                tot["C2"] += float(wq @ (sh * np.asarray(m.sf(xs))))
                continue
            sh1 = lambda x: float(self.shape(x, log_t1, log_t2))
            w = (lambda x: 1.0) if self.kind == "location" else (lambda x: x)
            pts = _split_points(m, a, b)
            tot["N"] += integrate(lambda x: sh1(x) * w(x) * float(m.pdf(x)), a, b, pts, core=core)
            tot["E2"] += integrate(lambda x: sh1(x) ** 2 * float(m.pdf(x)), a, b, pts, core=core)
            if not right_unbounded:
                tot["C1"] += integrate(lambda x: sh1(x) * float(m.cdf(x)), a, b, pts, core=core)
            if not left_unbounded:
                tot["C2"] += integrate(lambda x: sh1(x) * float(m.sf(x)), a, b, pts, core=core)
        if right_unbounded:
            tot["C1"] = math.inf
        if left_unbounded:
            tot["C2"] = math.inf
        out.update(tot)
        n = tot["N"]
        if n > 0:
            out.update(
                ok=True,
                nu=1.0 / n,
                R1=tot["C1"] / n,
                R2=tot["C2"] / n,
                aif=math.sqrt(tot["E2"]) / n,
            )
        else:
            out["ok"] = False
        self._cache[key] = out
        return out


_BIG = 1e300


def _residual(ev, which, xi):
    if not ev["ok"]:
        return -_BIG  # region collapsed: the constraint value is below any budget
    r = ev["R1"] if which == 1 else ev["R2"]
    return min(r - xi, _BIG)


def _solve_1d(h, s0=0.0, s_min=-6000.0, s_max=200.0, xtol=1e-12):
    """Root of a decreasing function of s, bracketed by doubling steps from s0."""
    f0 = h(s0)
    if f0 == 0:
        return s0
    step = 2.0
    a = b = s0
    if f0 > 0:
        fb = f0
        while fb > 0:
            a, b = b, b + step
            step *= 2
            if b > s_max:
                return None
            fb = h(b)
    else:
        fa = f0
        while fa < 0:
            b, a = a, a - step
            step *= 2
            if a < s_min:
                return None
            fa = h(a)
    return brentq(h, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=300)


def _damped_newton(F, s, tol=1e-10, maxiter=200):
    s = np.asarray(s, dtype=float)
    fs = F(s)
    norm = float(np.linalg.norm(fs))
    for it in range(maxiter):
        if norm <= tol:
            return s, it, norm
        jac = np.empty((2, 2))
        for j in range(2):
            h = 1e-6 * max(1.0, abs(s[j]))
            sp = s.copy()
            sp[j] += h
            jac[:, j] = (F(sp) - fs) / h
        if not np.all(np.isfinite(jac)):
            return s, it, norm
        step = np.linalg.lstsq(jac, -fs, rcond=None)[0]
        lam = 1.0
        while lam > 1e-10:
            trial = s + lam * step
            ft = F(trial)
            nt = float(np.linalg.norm(ft))
            if np.all(np.isfinite(ft)) and nt < norm:
                s, fs, norm = trial, ft, nt
                break
            lam *= 0.5
        else:
            return s, it, norm
    return s, maxiter, norm


def _solve_cases(model, kind, xi, tol=1e-10):
    red = _Reduced(model, kind)
    scale = max(1.0, xi)
    feas_tol = 1e-9 * scale
    candidates = []

    ev = red.evaluate(NEG_INF, NEG_INF)
    if ev["ok"] and ev["R1"] <= xi + feas_tol and ev["R2"] <= xi + feas_tol:
        candidates.append(("none", ev, 0))

    for which in (1, 2):
        if which == 1:
            h = lambda s: _residual(red.evaluate(s, NEG_INF), 1, xi)
        else:
            h = lambda s: _residual(red.evaluate(NEG_INF, s), 2, xi)
        s = _solve_1d(h)
        if s is None:
            continue
        ev = red.evaluate(s, NEG_INF) if which == 1 else red.evaluate(NEG_INF, s)
        if not ev["ok"]:
            continue
        own, other = (ev["R1"], ev["R2"]) if which == 1 else (ev["R2"], ev["R1"])
        if abs(own - xi) <= 1e3 * tol * scale and other <= xi + feas_tol:
            candidates.append((f"theta{which}", ev, 0))

    # both constraints binding: start on the diagonal t1 = t2, then Newton
    hd = lambda s: -_BIG if not red.evaluate(s, s)["ok"] else min(
        0.5 * (red.evaluate(s, s)["R1"] + red.evaluate(s, s)["R2"]) - xi, _BIG
    )
    s_diag = _solve_1d(hd)
    if s_diag is not None:

        def F(v):
            e = red.evaluate(float(v[0]), float(v[1]))
            if not e["ok"]:
                return np.array([np.nan, np.nan])
            return np.array([min(e["R1"], _BIG) - xi, min(e["R2"], _BIG) - xi]) / scale

        sol, its, norm = _damped_newton(F, [s_diag, s_diag], tol=tol)
        if norm <= 1e3 * tol:
            ev = red.evaluate(float(sol[0]), float(sol[1]))
            if ev["ok"]:
                candidates.append(("both", ev, its))
    return candidates


def _design_from(model, kind, xi, ev, case, iterations):
    nu = ev["nu"]
    lt1, lt2 = ev["log_t1"], ev["log_t2"]
    mult = KktMultipliers(
        nu=nu,
        theta1=nu * math.exp(lt1) if lt1 > NEG_INF else 0.0,
        theta2=nu * math.exp(lt2) if lt2 > NEG_INF else 0.0,
    )
    region = tuple(ev["region"])
    diag = {
        "case": case,
        "iterations": iterations,
        "aif": ev["aif"],
        "gamma_star": max(ev["R1"], ev["R2"]),
        "if_right": ev["R1"],
        "if_left": ev["R2"],
    }
    if lt1 > NEG_INF and lt2 > NEG_INF and region:
        a, b = region[0][0], region[-1][1]
        eps = min(float(model.cdf(a)), float(model.sf(b)))
        diag["tail_epsilon"] = eps
    return DesignedPsi(
        kind=kind,
        form="tradeoff",
        model=model,
        multipliers=mult,
        active_region=region,
        psi_neg_inf=-ev["R2"],
        xi=float(xi),
        log_t1=lt1,
        log_t2=lt2,
        diagnostics=diag,
    )


def _tradeoff(model, kind, xi, tol=1e-10):
    xi = float(xi)
    if not xi > 0:
        raise InvalidParameterError(f"IF budget xi must be positive, got {xi!r}")
    cands = _solve_cases(model, kind, xi, tol)
    if not cands:
        smallest = _smallest_feasible_xi(model, kind, xi, tol)
        raise InfeasibleBudgetError(
            f"no multipliers satisfy the KKT system for xi={xi:g} under {model.describe()} ({kind}); "
            f"smallest feasible xi found: {smallest:.6g}",
            min_feasible_xi=smallest,
        )
    case, ev, its = min(cands, key=lambda c: c[1]["aif"])
    d = _design_from(model, kind, xi, ev, case, its)
    d.diagnostics["cases_feasible"] = [c[0] for c in cands]
    return d


def _smallest_feasible_xi(model, kind, xi, tol, rel=1e-4):
    lo, hi = xi, 2.0 * xi
    for _ in range(30):
        if _solve_cases(model, kind, hi, tol):
            break
        lo, hi = hi, 2.0 * hi
    else:
        return math.inf
    while hi - lo > rel * hi:
        mid = 0.5 * (lo + hi)
        if _solve_cases(model, kind, mid, tol):
            hi = mid
        else:
            lo = mid
    return hi


# -- designed psi ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DesignedPsi:
    """A designed psi with its derivative, anchor and KKT data.

    ``form`` is ``"min-location"``, ``"min-scale"`` or ``"tradeoff"``.
    ``psi_neg_inf`` is the Fisher-consistency anchor psi(-inf) (a limit, so
    it can be infinite for the unconstrained designs).
    """

    kind: str
    form: str
    model: DistributionModel | None
    multipliers: KktMultipliers
    active_region: tuple
    psi_neg_inf: float
    xi: float | None = None
    log_t1: float = NEG_INF
    log_t2: float = NEG_INF
    anchor: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    # -- psi' ---------------------------------------------------------------

    def gprime(self, x):
        x = np.asarray(x, dtype=float)
        if self.form == "min-location":
            return np.ones_like(x)[()]
        lo, hi = self.model.support
        if self.form == "min-scale":
            return np.where((x >= lo) & (x <= hi), self.multipliers.nu * x, 0.0)[()]
        inside = np.zeros(x.shape, dtype=bool)
        for a, b in self.active_region:
            inside |= (x > a) & (x < b)
        out = np.zeros(x.shape)
        if np.any(inside):
            xi = x[inside]
            base = np.ones_like(xi) if self.kind == "location" else xi
            with np.errstate(over="ignore", invalid="ignore"):
                r = np.exp(_log_ratio(self.model, xi, self.log_t1, self.log_t2))
            out[inside] = self.multipliers.nu * np.maximum(base - r, 0.0)
        return out[()]

    # -- psi ------------------------------------------------------------------

    @cached_property
    def _pieces(self):
        """Per-interval Hermite splines of the running integral of psi'."""
        pieces = []
        acc = 0.0
        gl_x, gl_w = np.polynomial.legendre.leggauss(10)
        for a, b in self.active_region:
            if not (math.isfinite(a) and math.isfinite(b)):
                raise DegenerateEstimatorError("psi is unbounded on an infinite active interval")
            m = int(min(200_000, max(512, math.ceil((b - a) / 0.005))))
            nodes = np.union1d(np.linspace(a, b, m + 1), _model_knots(self.model, a, b))
            h = np.diff(nodes)
            mids = 0.5 * (nodes[:-1] + nodes[1:])
            xs = mids[:, None] + 0.5 * h[:, None] * gl_x[None, :]
            panel = 0.5 * h * (self.gprime(xs.ravel()).reshape(xs.shape) @ gl_w)
            cum = np.concatenate([[0.0], np.cumsum(panel)])
            spline = CubicHermiteSpline(nodes, cum, self.gprime(nodes))
            pieces.append((a, b, acc, spline, float(cum[-1])))
            acc += float(cum[-1])
        return pieces

    def psi(self, x):
        x = np.asarray(x, dtype=float)
        if self.form == "min-location":
            return (x + self.anchor)[()]
        if self.form == "min-scale":
            lo, hi = self.model.support
            c = np.clip(x, lo, hi)
            return (0.5 * self.multipliers.nu * c * c + self.anchor)[()]
        out = np.full(x.shape, self.psi_neg_inf, dtype=float)
        for a, b, acc, spline, total in self._pieces:
            inside = (x > a) & (x < b)
            out = np.where(x >= b, self.psi_neg_inf + acc + total, out)
            if np.any(inside):
                out[inside] = self.psi_neg_inf + acc + spline(x[inside])
        return out[()]

    @property
    def psi_pos_inf(self) -> float:
        if self.form == "tradeoff":
            return self.psi_neg_inf + sum(p[4] for p in self._pieces)
        if self.form == "min-scale" and math.isfinite(self.model.support[1]):
            return float(self.psi(self.model.support[1]))
        return math.inf

    @property
    def breakpoints(self) -> tuple[float, ...]:
        pts = []
        for a, b in self.active_region:
            pts += [v for v in (a, b) if math.isfinite(v)]
        return tuple(sorted(set(pts)))

    def to_psispec(self) -> PsiSpec:
        sup = None
        if self.form == "tradeoff":
            sup = max(abs(self.psi_neg_inf), abs(self.psi_pos_inf))
        label = f"designed-{self.form}-{self.kind}" + (f"(xi={self.xi:g})" if self.xi is not None else "")
        return PsiSpec(
            self.kind,
            func=self.psi,
            deriv=self.gprime,
            breakpoints=self.breakpoints,
            label=label,
            sup_abs=sup,
        )

    # -- constraint values ----------------------------------------------------------

    def _region_integral(self, fn):
        total = 0.0
        core = self.model.core_interval()
        for a, b in self.active_region:
            total += integrate(fn, a, b, _split_points(self.model, a, b), core=core)
        return total

    def normalization(self) -> float:
        """E[psi'] (location) or E[X psi'(X)] (scale)."""
        m = self.model
        if self.kind == "location":
            return expect(m, lambda x: float(self.gprime(x)), self.breakpoints)
        return expect(m, lambda x: x * float(self.gprime(x)), self.breakpoints)

    def if_constraints(self) -> tuple[float, float]:
        """(int psi' F dx, int psi' (1 - F) dx), equal to psi(+inf) and -psi(-inf)."""
        m = self.model
        c1 = self._region_integral(lambda x: float(self.gprime(x)) * float(m.cdf(x)))
        c2 = self._region_integral(lambda x: float(self.gprime(x)) * float(m.sf(x)))
        return c1, c2

    def fisher_residual(self) -> tuple[float, float]:
        """E[psi(X)] computed directly and via psi(-inf) + int psi' (1-F)."""
        direct = expect(self.model, lambda x: float(self.psi(x)), self.breakpoints)
        if self.form == "tradeoff":
            swapped = self.psi_neg_inf + self.if_constraints()[1]
        else:
            swapped = direct
        return direct, swapped

    # -- export -----------------------------------------------------------------------

    def to_dict(self) -> dict:
        base = "1" if self.kind == "location" else "x"
        return {
            "kind": self.kind,
            "form": self.form,
            "model": None if self.model is None else self.model.to_dict(),
            "multipliers": {
                "nu": self.multipliers.nu,
                "theta1": self.multipliers.theta1,
                "theta2": self.multipliers.theta2,
            },
            "log_t1": _enc(self.log_t1),
            "log_t2": _enc(self.log_t2),
            "active_intervals": [[_enc(a), _enc(b)] for a, b in self.active_region],
            "pieces": [
                {
                    "interval": [_enc(a), _enc(b)],
                    "gprime": f"nu*{base} - nu*(exp(log_t2)*(1-F(x)) + exp(log_t1)*F(x))/f(x)"
                    if self.form == "tradeoff"
                    else ("1" if self.form == "min-location" else "nu*x"),
                }
                for a, b in self.active_region
            ],
            "psi_neg_inf": _enc(self.psi_neg_inf),
            "anchor": self.anchor,
            "xi": self.xi,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DesignedPsi":
        model = None if d.get("model") is None else DistributionModel.from_dict(d["model"])
        m = d["multipliers"]
        return cls(
            kind=d["kind"],
            form=d["form"],
            model=model,
            multipliers=KktMultipliers(m["nu"], m["theta1"], m["theta2"]),
            active_region=tuple((_dec(a), _dec(b)) for a, b in d["active_intervals"]),
            psi_neg_inf=_dec(d["psi_neg_inf"]),
            xi=d.get("xi"),
            log_t1=_dec(d["log_t1"]),
            log_t2=_dec(d["log_t2"]),
            anchor=d.get("anchor", 0.0),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DesignedPsi":
        return cls.from_dict(json.loads(text))

    def sample_curve(self, n: int = 401):
        """(x, psi(x)) on a grid covering the core of the model and the region."""
        a, b = self.model.core_interval(1e-4) if self.model is not None else (-5.0, 5.0)
        ends = [v for iv in self.active_region for v in iv if math.isfinite(v)]
        if ends:
            a, b = min(a, min(ends)), max(b, max(ends))
        pad = 0.1 * (b - a)
        lo, hi = (self.model.support if self.model is not None else (-math.inf, math.inf))
        xs = np.linspace(max(a - pad, lo) if math.isfinite(lo) else a - pad, b + pad, n)
        return xs, np.asarray(self.psi(xs), dtype=float)


def _enc(v):
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


def _dec(v):
    return float(v)


# -- public designers --------------------------------------------------------------


def min_aif_location(f0: DistributionModel | None = None) -> DesignedPsi:
    """psi' = 1: the sample mean. With ``f0`` given, psi is centred so that E[psi] = 0."""
    anchor = 0.0
    if f0 is not None:
        anchor = -expect(f0, lambda x: x)
    return DesignedPsi(
        kind="location",
        form="min-location",
        model=f0,
        multipliers=KktMultipliers(nu=1.0),
        active_region=((-math.inf, math.inf),),
        psi_neg_inf=-math.inf,
        anchor=anchor,
        diagnostics={"aif": 1.0},
    )


def min_aif_scale(f1: DistributionModel) -> DesignedPsi:
    """psi'(x) = x / E[X^2] on the support; minimum AIF 1/sqrt(E[X^2])."""
    m2 = expect(f1, lambda x: x * x)
    if not m2 > 0:
        raise DegenerateEstimatorError(f"E[X^2] = {m2} under {f1.describe()}; no scale design exists")
    nu = 1.0 / m2
    lo, hi = f1.support
    # psi = nu x^2 / 2 + C on the support, C fixed by E[psi] = 0
    anchor = -0.5
    neg = 0.5 * nu * lo * lo + anchor if math.isfinite(lo) else math.inf
    return DesignedPsi(
        kind="scale",
        form="min-scale",
        model=f1,
        multipliers=KktMultipliers(nu=nu),
        active_region=((lo, hi),),
        psi_neg_inf=neg,
        anchor=anchor,
        diagnostics={"aif": 1.0 / math.sqrt(m2), "second_moment": m2},
    )


def tradeoff_location(f0: DistributionModel, xi: float, *, tol: float = 1e-10) -> DesignedPsi:
    """Minimum p=2 AIF location psi subject to gross-error sensitivity <= xi."""
    return _tradeoff(f0, "location", xi, tol)


def tradeoff_scale(f1: DistributionModel, xi: float, *, tol: float = 1e-10) -> DesignedPsi:
    """Minimum p=2 AIF scale psi (theta = 1) subject to gross-error sensitivity <= xi."""
    return _tradeoff(f1, "scale", xi, tol)


def _exp_root(xi):
    """Positive root a of exp(-a) = (xi+2-a)/((xi+1)a+xi+2), returned as (a, xi+2-a).

    Solved for log(xi + 2 - a) so that the tiny gap at large xi keeps full
    precision.
    """
    c = xi + 2.0

    def phi(s):
        d = math.exp(s)
        a = c - d
        return s + a - math.log((xi + 1.0) * a + c)

    a_lo = min(1e-3, 0.01 * c)
    s_hi = math.log(c - a_lo)
    s_lo = -c + 2.0 * math.log(c) - 5.0
    s = brentq(phi, s_lo, s_hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    d = math.exp(s)
    return c - d, d


def _exp_root_count(xi, n=4000):
    c = xi + 2.0
    a = np.linspace(c * 1e-3, c * (1 - 1e-9), n)
    f = np.exp(-a) * ((xi + 1.0) * a + c) - (c - a)
    return int(np.count_nonzero(np.sign(f[1:]) != np.sign(f[:-1])))


def exponential_tradeoff(xi: float) -> DesignedPsi:
    """Closed-form tradeoff design for the shifted exponential (xi > 1)."""
    xi = float(xi)
    if not xi > 1.0:
        raise OutOfRegimeError(
            f"closed form needs xi > 1 (theta2 = 0 regime), got xi={xi:g}; use tradeoff_location instead"
        )
    a, d = _exp_root(xi)
    nu = (xi + 2.0) / a
    theta1 = d / (a * a)
    model = exponential()
    log_t1 = math.log(d) - math.log(a) - math.log(xi + 2.0)
    design = DesignedPsi(
        kind="location",
        form="tradeoff",
        model=model,
        multipliers=KktMultipliers(nu=nu, theta1=theta1, theta2=0.0),
        active_region=((0.0, a),),
        psi_neg_inf=0.0,
        xi=xi,
        log_t1=log_t1,
        log_t2=NEG_INF,
        diagnostics={"a": a, "case": "theta1", "unique_root": _exp_root_count(xi) == 1},
    )
    c1, c2 = design.if_constraints()
    norm = design.normalization()
    e2 = expect(model, lambda x: float(design.gprime(x)) ** 2, design.breakpoints)
    final = DesignedPsi(
        kind="location",
        form="tradeoff",
        model=model,
        multipliers=design.multipliers,
        active_region=design.active_region,
        psi_neg_inf=-c2,
        xi=xi,
        log_t1=log_t1,
        log_t2=NEG_INF,
        diagnostics=dict(design.diagnostics, aif=math.sqrt(e2) / norm, gamma_star=max(c1, c2), if_right=c1, if_left=c2),
    )
    return final


def tradeoff_curve(f0: DistributionModel, xi_grid, kind: str = "location", *, tol: float = 1e-10) -> list[dict]:
    """Rows of (xi, aif, gamma_star); infeasible budgets become skipped rows."""
    from .population import PopulationContext, aif_population, gross_error_sensitivity

    grid = [float(v) for v in xi_grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidParameterError("xi grid must be strictly increasing")
    designer = tradeoff_location if kind == "location" else tradeoff_scale
    rows = []
    for xi in grid:
        try:
            d = designer(f0, xi, tol=tol)
        except InfeasibleBudgetError as exc:
            rows.append({"xi": xi, "aif": math.nan, "gamma_star": math.nan, "skipped": str(exc)})
            continue
        ctx = PopulationContext(f0, d.to_psispec())
        rows.append(
            {
                "xi": xi,
                "aif": aif_population(ctx, 2).value,
                "gamma_star": gross_error_sensitivity(ctx),
                "skipped": None,
                "design": d,
            }
        )
    return rows


def kkt_residuals(design: DesignedPsi) -> dict:
    """Residuals of the design's optimality conditions.

    Keys: ``normalization`` (|E[w psi'] - 1|), ``slackness1``/``slackness2``
    (|theta_i (C_i - xi)|), ``feasibility`` (max(C_i - xi, 0)),
    ``min_gprime`` (most negative psi' on a probe grid; None when psi' >= 0
    is not imposed), ``outside_max`` (max |psi'| off the active region) and
    ``fisher`` / ``fisher_orders`` (|E[psi]| and the gap between the two
    evaluation orders).
    """
    if design.model is None:
        # psi' = 1 satisfies the normalization under every model; nothing to anchor
        return dict(normalization=0.0, fisher=0.0, fisher_orders=0.0, slackness1=0.0,
                    slackness2=0.0, feasibility=0.0, min_gprime=None, outside_max=0.0)
    res = {"normalization": abs(design.normalization() - 1.0)}
    direct, swapped = design.fisher_residual()
    res["fisher"] = abs(direct)
    res["fisher_orders"] = abs(direct - swapped)
    if design.form != "tradeoff":
        res.update(slackness1=0.0, slackness2=0.0, feasibility=0.0, min_gprime=None, outside_max=0.0)
        return res
    c1, c2 = design.if_constraints()
    mu = design.multipliers
    res["slackness1"] = abs(mu.theta1 * (c1 - design.xi))
    res["slackness2"] = abs(mu.theta2 * (c2 - design.xi))
    res["feasibility"] = max(c1 - design.xi, c2 - design.xi, 0.0)
    m = design.model
    lo, hi = m.core_interval(1e-9)
    ends = [v for iv in design.active_region for v in iv if math.isfinite(v)]
    probe = np.unique(np.concatenate([np.linspace(min([lo] + ends), max([hi] + ends), 20001), ends]))
    probe = probe[(probe >= m.support[0]) & (probe <= m.support[1])]
    g = np.asarray(design.gprime(probe))
    res["min_gprime"] = float(g.min())
    inside = np.zeros(probe.shape, dtype=bool)
    for a, b in design.active_region:
        inside |= (probe > a) & (probe < b)
    res["outside_max"] = float(np.max(np.abs(g[~inside]), initial=0.0))
    return res


def kkt_ok(res: dict, tol: float = KKT_TOL) -> bool:
    checks = [
        res["normalization"] <= tol,
        res["slackness1"] <= tol,
        res["slackness2"] <= tol,
        res["feasibility"] <= tol,
        res["outside_max"] == 0.0,
        res["fisher"] <= tol,
    ]
    if res["min_gprime"] is not None:
        checks.append(res["min_gprime"] >= -1e-12)
    return all(checks)


def write_curve_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["xi", "aif", "gamma_star"])
        for r in rows:
            if r.get("skipped"):
                continue
            w.writerow([repr(r["xi"]), repr(r["aif"]), repr(r["gamma_star"])])


def write_psi_csv(design: DesignedPsi, path, n: int = 401) -> None:
    xs, ys = design.sample_curve(n)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "psi"])
        for x, y in zip(xs, ys):
            w.writerow([repr(float(x)), repr(float(y))])
