"""Distribution primitives and quadrature.

Built-in families evaluate through closed forms (``scipy.special`` for the
normal) so that scalar calls from inside ``quad`` stay cheap. A tabulated
family accepts a user density on a grid and interpolates its cdf with a
monotone cubic.
"""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as _integrate
from scipy import special
from scipy.interpolate import PchipInterpolator

from .errors import InvalidParameterError, ParseError, QuadratureError, UnsupportedSamplingError

__all__ = [
    "DistributionModel",
    "standard_normal",
    "exponential",
    "uniform",
    "tabulated",
    "load_tabulated_csv",
    "parse_model",
    "expect",
    "integrate",
    "sample",
]

FAMILIES = ("standard-normal", "exponential-rate-1", "uniform", "tabulated")

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# Accepted failure level for flagged quadrature results.
QUAD_TOL = 1e-9


def _log_mills(x):
    """log of the normal Mills ratio (1 - Phi(x)) / phi(x)."""
    x = np.asarray(x, dtype=float)
    safe = np.maximum(x, -5.0)
    right = np.log(special.erfcx(safe / math.sqrt(2.0))) + 0.5 * math.log(0.5 * math.pi)
    left = special.log_ndtr(-x) + 0.5 * x * x + _LOG_SQRT_2PI
    return np.where(x > -5.0, right, left)


@dataclass(frozen=True, eq=False)
class DistributionModel:
    """A univariate continuous distribution.

    Use the module-level constructors (:func:`standard_normal`,
    :func:`exponential`, :func:`uniform`, :func:`tabulated`) rather than
    instantiating directly.
    """

    family: str
    params: tuple = ()
    support: tuple[float, float] = (-math.inf, math.inf)
    _x: np.ndarray | None = field(default=None, repr=False)
    _cdf_nodes: np.ndarray | None = field(default=None, repr=False)
    _interp: PchipInterpolator | None = field(default=None, repr=False)

    # -- density, cdf, quantile ---------------------------------------------

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        fam = self.family
        if fam == "standard-normal":
            out = np.exp(-0.5 * x * x - _LOG_SQRT_2PI)
        elif fam == "exponential-rate-1":
            out = np.where(x >= 0.0, np.exp(-np.maximum(x, 0.0)), 0.0)
        elif fam == "uniform":
            a, b = self.params
            out = np.where((x >= a) & (x <= b), 1.0 / (b - a), 0.0)
        else:
            lo, hi = self.support
            inside = (x >= lo) & (x <= hi)
            out = np.where(inside, np.maximum(self._interp(np.clip(x, lo, hi), 1), 0.0), 0.0)
        return out[()]

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        fam = self.family
        if fam == "standard-normal":
            return (-0.5 * x * x - _LOG_SQRT_2PI)[()]
        if fam == "exponential-rate-1":
            return np.where(x >= 0.0, -x, -np.inf)[()]
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(x))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        fam = self.family
        if fam == "standard-normal":
            out = special.ndtr(x)
        elif fam == "exponential-rate-1":
            out = -np.expm1(-np.maximum(x, 0.0))
        elif fam == "uniform":
            a, b = self.params
            out = np.clip((x - a) / (b - a), 0.0, 1.0)
        else:
            lo, hi = self.support
            out = np.clip(self._interp(np.clip(x, lo, hi)), 0.0, 1.0)
        return out[()]

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        fam = self.family
        if fam == "standard-normal":
            return special.ndtr(-x)[()]
        if fam == "exponential-rate-1":
            return np.exp(-np.maximum(x, 0.0))[()]
        if fam == "uniform":
            a, b = self.params
            return np.clip((b - x) / (b - a), 0.0, 1.0)[()]
        return (1.0 - np.asarray(self.cdf(x)))[()]

    def logcdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "standard-normal":
            return special.log_ndtr(x)[()]
        with np.errstate(divide="ignore"):
            if self.family == "exponential-rate-1":
                return np.log(-np.expm1(-np.maximum(x, 0.0)))[()]
            return np.log(self.cdf(x))

    def logsf(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "standard-normal":
            return special.log_ndtr(-x)[()]
        if self.family == "exponential-rate-1":
            return (-np.maximum(x, 0.0))[()]
        with np.errstate(divide="ignore"):
            return np.log(self.sf(x))

    def log_cdf_ratio(self, x):
        """log(F(x) / f(x)), evaluated without tail cancellation."""
        x = np.asarray(x, dtype=float)
        fam = self.family
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if fam == "standard-normal":
                return _log_mills(-x)[()]
            if fam == "exponential-rate-1":
                return np.where(x > 0, x + np.log(-np.expm1(-np.abs(x))), -np.inf)[()]
            if fam == "uniform":
                return np.log(np.asarray(self.cdf(x)) * (self.params[1] - self.params[0]))[()]
            return (np.asarray(self.logcdf(x)) - np.asarray(self.logpdf(x)))[()]

    def log_sf_ratio(self, x):
        """log((1 - F(x)) / f(x)), evaluated without tail cancellation."""
        x = np.asarray(x, dtype=float)
        fam = self.family
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if fam == "standard-normal":
                return _log_mills(x)[()]
            if fam == "exponential-rate-1":
                return np.where(x >= 0, 0.0, np.nan)[()]
            if fam == "uniform":
                return np.log(np.asarray(self.sf(x)) * (self.params[1] - self.params[0]))[()]
            return (np.asarray(self.logsf(x)) - np.asarray(self.logpdf(x)))[()]

    def ppf(self, q):
        q = np.asarray(q, dtype=float)
        fam = self.family
        if fam == "standard-normal":
            return special.ndtri(q)[()]
        if fam == "exponential-rate-1":
            return (-np.log1p(-q))[()]
        if fam == "uniform":
            a, b = self.params
            return (a + q * (b - a))[()]
        return self._tabulated_ppf(q)

    def isf(self, q):
        q = np.asarray(q, dtype=float)
        if self.family == "standard-normal":
            return (-special.ndtri(q))[()]
        if self.family == "exponential-rate-1":
            return (-np.log(q))[()]
        return self.ppf(1.0 - q)

    quantile = ppf

    def _tabulated_ppf(self, q):
        q = np.clip(np.asarray(q, dtype=float), 0.0, 1.0)
        shape = q.shape
        q = q.ravel()
        nodes = self._cdf_nodes
        xs = self._x
        k = np.clip(np.searchsorted(nodes, q, side="right") - 1, 0, len(xs) - 2)
        lo = xs[k].copy()
        hi = xs[k + 1].copy()
        # the interpolant is monotone on every panel, so bisection is safe
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            below = self._interp(mid) < q
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 1e-15 * np.maximum(1.0, np.abs(mid))):
                break
        return (0.5 * (lo + hi)).reshape(shape)[()]

    # -- misc ----------------------------------------------------------------

    @property
    def has_valid_quantile_table(self) -> bool:
        if self.family != "tabulated":
            return True
        return bool(np.all(np.diff(self._cdf_nodes) > 0.0))

    def core_interval(self, tail=1e-8) -> tuple[float, float]:
        """Finite interval holding all but ``2*tail`` of the mass."""
        lo, hi = self.support
        a = lo if math.isfinite(lo) else float(self.ppf(tail))
        b = hi if math.isfinite(hi) else float(self.isf(tail))
        return a, b

    def describe(self) -> str:
        if self.family == "uniform":
            return f"uniform({self.params[0]:g},{self.params[1]:g})"
        return self.family

    def to_dict(self) -> dict:
        d = {"family": self.family}
        if self.family == "uniform":
            d["params"] = list(self.params)
        elif self.family == "tabulated":
            d["x"] = self._x.tolist()
            d["pdf"] = list(self.params)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DistributionModel":
        fam = d["family"]
        if fam == "standard-normal":
            return standard_normal()
        if fam == "exponential-rate-1":
            return exponential()
        if fam == "uniform":
            return uniform(*d["params"])
        if fam == "tabulated":
            return tabulated(d["x"], d["pdf"])
        raise InvalidParameterError(f"unknown distribution family {fam!r}")

    def __repr__(self):
        return f"DistributionModel({self.describe()})"


def standard_normal() -> DistributionModel:
    return DistributionModel("standard-normal")


def exponential() -> DistributionModel:
    """Rate-1 exponential on [0, inf); the shifted exponential at theta = 0."""
    return DistributionModel("exponential-rate-1", support=(0.0, math.inf))


def uniform(a: float = 0.0, b: float = 1.0) -> DistributionModel:
    a, b = float(a), float(b)
    if not (math.isfinite(a) and math.isfinite(b) and a < b):
        raise InvalidParameterError(f"uniform requires finite a < b, got ({a}, {b})")
    return DistributionModel("uniform", params=(a, b), support=(a, b))


def tabulated(x, pdf) -> DistributionModel:
    """Density given on a strictly increasing grid.

    The cdf is the normalized trapezoid integral of ``pdf`` at the nodes,
    joined by a monotone (PCHIP) interpolant; the density used everywhere
    else is that interpolant's derivative.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(pdf, dtype=float)
    if x.ndim != 1 or x.shape != p.shape or len(x) < 2:
        raise InvalidParameterError("tabulated density needs matching 1-d x and pdf with >= 2 rows")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
        raise InvalidParameterError("tabulated density contains non-finite values")
    if np.any(np.diff(x) <= 0):
        raise InvalidParameterError("tabulated x must be strictly increasing")
    if np.any(p < 0):
        raise InvalidParameterError("tabulated pdf must be nonnegative")
    nodes = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(x))])
    if nodes[-1] <= 0:
        raise InvalidParameterError("tabulated pdf has zero mass")
    nodes = nodes / nodes[-1]
    interp = PchipInterpolator(x, nodes, extrapolate=True)
    return DistributionModel(
        "tabulated",
        params=tuple(p.tolist()),
        support=(float(x[0]), float(x[-1])),
        _x=x,
        _cdf_nodes=nodes,
        _interp=interp,
    )


def load_tabulated_csv(path) -> DistributionModel:
    """Read a two-column (x, pdf) CSV; a single non-numeric header row is skipped."""
    xs, ps = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                if len(row) < 2:
                    raise ValueError
                xs.append(float(row[0]))
                ps.append(float(row[1]))
            except ValueError:
                if lineno == 1:
                    continue
                raise ParseError(f"{path}: line {lineno}: expected two numeric columns (x, pdf)", lineno) from None
    return tabulated(xs, ps)


_UNIFORM_RE = re.compile(r"^uniform\s*[\(:]\s*([^,\s]+)\s*,\s*([^\)\s]+)\s*\)?$")


def parse_model(name: str) -> DistributionModel:
    """Parse a CLI model selector.

    Accepts ``standard-normal``/``normal``, ``exponential``/
    ``shifted-exponential``, ``uniform(a,b)`` and a path to a tabulated CSV.
    """
    s = name.strip().lower()
    if s in ("standard-normal", "normal", "gaussian"):
        return standard_normal()
    if s in ("exponential", "exponential-rate-1", "shifted-exponential", "exp"):
        return exponential()
    if s == "uniform":
        return uniform(0.0, 1.0)
    m = _UNIFORM_RE.match(s)
    if m:
        try:
            return uniform(float(m.group(1)), float(m.group(2)))
        except ValueError:
            raise InvalidParameterError(f"bad uniform bounds in {name!r}") from None
    if s.endswith(".csv"):
        return load_tabulated_csv(name)
    raise InvalidParameterError(f"unknown model {name!r}")


# -- quadrature ---------------------------------------------------------------


def _quad(func, a, b, points, epsabs, epsrel, limit):
    kw = dict(epsabs=epsabs, epsrel=epsrel, limit=limit, full_output=1)
    if points and math.isfinite(a) and math.isfinite(b):
        kw["points"] = points
        kw["limit"] = max(limit, 4 * len(points) + 50)
    res = _integrate.quad(func, a, b, **kw)
    val, err = res[0], res[1]
    if len(res) > 3 and not (err <= max(QUAD_TOL, QUAD_TOL * abs(val))):
        raise QuadratureError(
            f"quadrature on [{a}, {b}] did not converge (estimated error {err:.3g}): {res[3]}",
            abserr=err,
        )
    if not math.isfinite(val):
        raise QuadratureError(f"quadrature on [{a}, {b}] produced {val}", abserr=err)
    return val


def integrate(func, lo, hi, breakpoints=(), *, core=None, epsabs=1e-12, epsrel=1e-11, limit=500) -> float:
    """Integrate a scalar function over ``[lo, hi]`` (endpoints may be infinite).

    The range is split at ``breakpoints``; infinite tails outside ``core`` go
    through QUADPACK's mapped infinite-range rule.
    """
    lo, hi = float(lo), float(hi)
    if lo == hi:
        return 0.0
    if lo > hi:
        return -integrate(func, hi, lo, breakpoints, core=core, epsabs=epsabs, epsrel=epsrel, limit=limit)
    pts = sorted({float(p) for p in breakpoints if lo < p < hi and math.isfinite(p)})
    if math.isfinite(lo) and math.isfinite(hi):
        return _quad(func, lo, hi, pts, epsabs, epsrel, limit)

    if core is None:
        anchors = [v for v in (lo, hi) if math.isfinite(v)] + pts
        core = (min(anchors, default=-1.0), max(anchors, default=1.0))
    c_lo = lo if math.isfinite(lo) else min(core[0], *(pts or [core[0]]))
    c_hi = hi if math.isfinite(hi) else max(core[1], *(pts or [core[1]]))
    if c_lo >= c_hi:
        c_hi = c_lo + 1.0
    inner = [p for p in pts if c_lo < p < c_hi]
    total = _quad(func, c_lo, c_hi, inner, epsabs, epsrel, limit)
    if not math.isfinite(lo):
        total += _quad(func, -math.inf, c_lo, None, epsabs, epsrel, limit)
    if not math.isfinite(hi):
        total += _quad(func, c_hi, math.inf, None, epsabs, epsrel, limit)
    return total


def expect(model: DistributionModel, integrand, breakpoints=(), **kw) -> float:
    """E_model[integrand(X)] by adaptive quadrature over the support.

    ``breakpoints`` are points where the integrand is not smooth; the
    integrator splits there.
    """
    lo, hi = model.support
    pdf = model.pdf
    if model.family == "tabulated":
        # the interpolated density is only piecewise smooth
        breakpoints = list(breakpoints) + list(model._x[1:-1])

    def weighted(x):
        d = pdf(x)
        return 0.0 if d == 0.0 else integrand(x) * d

    return integrate(weighted, lo, hi, breakpoints, core=model.core_interval(), **kw)


def sample(model: DistributionModel, n: int, seed: int) -> np.ndarray:
    """``n`` iid draws; the same (model, n, seed) always gives the same vector."""
    n = int(n)
    if n < 1:
        raise InvalidParameterError(f"sample size must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    fam = model.family
    if fam == "standard-normal":
        return rng.standard_normal(n)
    if fam == "exponential-rate-1":
        return rng.standard_exponential(n)
    if fam == "uniform":
        a, b = model.params
        return rng.uniform(a, b, n)
    if not model.has_valid_quantile_table:
        raise UnsupportedSamplingError(
            "tabulated density has zero-mass panels; its quantile table is not invertible"
        )
    return np.asarray(model.ppf(rng.random(n)), dtype=float)
