"""Command-line entry point.

Each run executes one command, writes ``report.json`` (and any CSV
artifacts) into ``--out`` and exits 0 on success, 1 on a domain error and
2 on an I/O, parse or usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attack import aif_empirical, aif_finite_eta, optimal_attack
from .design import (
    DesignedPsi,
    exponential_tradeoff,
    kkt_residuals,
    min_aif_location,
    min_aif_scale,
    tradeoff_curve,
    tradeoff_location,
    tradeoff_scale,
    write_curve_csv,
    write_psi_csv,
)
from .distributions import parse_model
from .errors import AdvRobustError, ParseError
from .lestimator import (
    alpha_trimmed_weights,
    l_aif,
    l_estimate,
    mean_weights,
    median_weights,
    ordering_safety_threshold,
    read_weights_csv,
)
from .mestimator import builtin_psi, solve
from .population import (
    PopulationContext,
    aif_convergence_study,
    aif_population,
    gross_error_sensitivity,
    write_convergence_csv,
)

SCHEMA_VERSION = 1
COMMANDS = (
    "fit",
    "attack",
    "aif",
    "aif-pop",
    "converge",
    "design-min",
    "design-tradeoff",
    "tradeoff-curve",
    "l-aif",
)
REQUIRED = {
    "fit": ("psi", "data"),
    "attack": ("psi", "data", "eta", "p"),
    "aif": ("psi", "data", "p"),
    "aif-pop": ("psi", "model", "p"),
    "converge": ("psi", "model", "p"),
    "design-min": ("model",),
    "design-tradeoff": ("model", "xi"),
    "tradeoff-curve": ("model", "xi_grid"),
    "l-aif": ("p",),
}


# -- ingestion ----------------------------------------------------------------


def ingest(path) -> np.ndarray:
    """One number per line; a non-numeric first line is taken as a header."""
    values = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text:
                continue
            token = text.split(",")[0].strip()
            try:
                v = float(token)
            except ValueError:
                if lineno == 1:
                    continue
                raise ParseError(f"{path}: line {lineno}: not a number: {token!r}", line=lineno) from None
            if not math.isfinite(v):
                raise ParseError(f"{path}: line {lineno}: non-finite value {token!r}", line=lineno)
            values.append(v)
    if not values:
        raise ParseError(f"{path}: no numeric values", line=0)
    return np.array(values)


# -- JSON helpers ----------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items() if not isinstance(v, DesignedPsi)}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def render_report(report: dict) -> str:
    return json.dumps(_clean(report), indent=2, sort_keys=True) + "\n"


# -- argument handling --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="advrobust", description=__doc__.splitlines()[0])
    ap.add_argument("--command", required=True, choices=COMMANDS)
    ap.add_argument("--psi", help="mean | huber | gaussian-scale-mle | path to a designed-psi JSON")
    ap.add_argument("--b", type=float, help="huber corner")
    ap.add_argument("--model", help="normal | exponential | uniform(a,b) | tabulated density CSV")
    ap.add_argument("--p", help="norm order (>= 1 or inf)")
    ap.add_argument("--eta", type=float)
    ap.add_argument("--xi", type=float)
    ap.add_argument("--xi-grid", dest="xi_grid", help="comma-separated increasing IF budgets")
    ap.add_argument("--data", help="one value per line, optional header")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--tol", type=float, help="solver tolerance (M-estimator xtol / design residual)")
    ap.add_argument("--kind", choices=("location", "scale"), default="location")
    ap.add_argument("--n-grid", dest="n_grid", default="100,1000,10000,100000")
    ap.add_argument("--solver", default="auto", help="aif: closed-form | finite-eta; design-tradeoff: auto | closed-form | generic")
    ap.add_argument("--weights", help="l-aif: mean | median | trimmed | path to a weights CSV")
    ap.add_argument("--alpha", type=float, default=0.1)
    ap.add_argument("--n", type=int, help="l-aif: sample size for generated weights")
    return ap


def _validate(ap, args):
    missing = [f for f in REQUIRED[args.command] if getattr(args, f) is None]
    if missing:
        flags = ", ".join("--" + f.replace("_", "-") for f in missing)
        ap.error(f"command {args.command!r} requires {flags}")
    if args.command == "l-aif" and args.weights is None:
        ap.error("command 'l-aif' requires --weights")


def _load_psi(args):
    spec = args.psi
    if spec.endswith(".json"):
        with open(spec) as fh:
            return DesignedPsi.from_json(fh.read()).to_psispec()
    return builtin_psi(spec, args.b)


def _xi_grid(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ParseError(f"cannot parse --xi-grid {text!r}", line=0) from None


# -- commands ---------------------------------------------------------------------


def _cmd_fit(args, out):
    x = ingest(args.data)
    est = solve(_load_psi(args), x, **({"xtol": args.tol} if args.tol else {}))
    return {"estimate": est.value, "residual": est.residual, "iterations": est.iterations, "N": x.size}, {
        "bracket": est.bracket
    }


def _cmd_attack(args, out):
    x = ingest(args.data)
    plan = optimal_attack(_load_psi(args), x, args.eta, args.p)
    res = {
        "delta": plan.delta,
        "predicted_shift": plan.predicted_shift,
        "realized_shift": plan.realized_shift,
        "budget_used": plan.budget_used(),
    }
    return res, plan.diagnostics


def _cmd_aif(args, out):
    x = ingest(args.data)
    psi = _load_psi(args)
    if args.solver == "finite-eta":
        rep = aif_finite_eta(psi, x, args.p)
    else:
        rep = aif_empirical(psi, x, args.p)
    return {"aif": rep.value, "method": rep.method}, rep.diagnostics


def _cmd_aif_pop(args, out):
    ctx = PopulationContext(parse_model(args.model), _load_psi(args))
    rep = aif_population(ctx, args.p)
    return {"aif": rep.value, "gamma_star": gross_error_sensitivity(ctx), "method": rep.method}, rep.diagnostics


def _cmd_converge(args, out):
    ctx = PopulationContext(parse_model(args.model), _load_psi(args))
    grid = [int(v) for v in args.n_grid.split(",")]
    rows = aif_convergence_study(ctx, args.p, grid, args.seed)
    write_convergence_csv(rows, out / "convergence.csv")
    return {"rows": rows, "csv": "convergence.csv"}, {}


def _design_results(design: DesignedPsi, out):
    (out / "design.json").write_text(design.to_json() + "\n")
    artifacts = ["design.json"]
    if design.model is not None:
        write_psi_csv(design, out / "psi.csv")
        artifacts.append("psi.csv")
    res = {
        "design": design.to_dict(),
        "artifacts": artifacts,
    }
    if design.model is not None:
        res["kkt_residuals"] = kkt_residuals(design)
    return res


def _cmd_design_min(args, out):
    model = parse_model(args.model)
    design = min_aif_location(model) if args.kind == "location" else min_aif_scale(model)
    return _design_results(design, out), design.diagnostics


def _cmd_design_tradeoff(args, out):
    model = parse_model(args.model)
    solver = args.solver if args.solver in ("closed-form", "generic") else "auto"
    tol = {"tol": args.tol} if args.tol else {}
    closed_ok = model.family == "exponential-rate-1" and args.kind == "location"
    if solver == "closed-form" or (solver == "auto" and closed_ok and args.xi > 1):
        if not closed_ok:
            raise ParseError("--solver closed-form is available for the exponential location design only", line=0)
        design = exponential_tradeoff(args.xi)
    elif args.kind == "location":
        design = tradeoff_location(model, args.xi, **tol)
    else:
        design = tradeoff_scale(model, args.xi, **tol)
    res = _design_results(design, out)
    res["a"] = design.active_region[-1][1] if design.active_region else math.nan
    res["aif"] = design.diagnostics.get("aif")
    res["gamma_star"] = design.diagnostics.get("gamma_star")
    return res, design.diagnostics


def _cmd_tradeoff_curve(args, out):
    model = parse_model(args.model)
    rows = tradeoff_curve(model, _xi_grid(args.xi_grid), args.kind, **({"tol": args.tol} if args.tol else {}))
    write_curve_csv(rows, out / "tradeoff_curve.csv")
    return {"rows": rows, "csv": "tradeoff_curve.csv"}, {}


def _cmd_l_aif(args, out):
    x = ingest(args.data) if args.data else None
    n = args.n if args.n is not None else (x.size if x is not None else None)
    src = args.weights
    if src in ("mean", "median", "trimmed"):
        if n is None:
            raise ParseError("--n or --data is needed to size generated weights", line=0)
        w = {"mean": lambda: mean_weights(n), "median": lambda: median_weights(n),
             "trimmed": lambda: alpha_trimmed_weights(args.alpha, n)}[src]()
    else:
        w = read_weights_csv(src)
    rep = l_aif(w, args.p)
    res = {"aif": rep.value, "weights": w.a, "source": w.source}
    if x is not None:
        res["estimate"] = l_estimate(w, x)
        thr = ordering_safety_threshold(x, args.p)
        res["ordering_safety_eta"] = thr.eta
        res["all_equal"] = thr.all_equal
    return res, rep.diagnostics


HANDLERS = {
    "fit": _cmd_fit,
    "attack": _cmd_attack,
    "aif": _cmd_aif,
    "aif-pop": _cmd_aif_pop,
    "converge": _cmd_converge,
    "design-min": _cmd_design_min,
    "design-tradeoff": _cmd_design_tradeoff,
    "tradeoff-curve": _cmd_tradeoff_curve,
    "l-aif": _cmd_l_aif,
}


def _inputs(args) -> dict:
    keys = ("psi", "b", "model", "p", "eta", "xi", "xi_grid", "data", "kind", "tol", "solver", "weights", "alpha", "n")
    return {k: getattr(args, k) for k in keys if getattr(args, k) is not None}


def run(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    _validate(ap, args)
    out = Path(args.out)
    report = {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "command": args.command,
        "inputs": _inputs(args),
        "seed": args.seed,
    }
    try:
        out.mkdir(parents=True, exist_ok=True)
        results, diagnostics = HANDLERS[args.command](args, out)
        status = 0
        report.update(status="ok", results=results, diagnostics=diagnostics)
    except (ParseError, OSError) as exc:
        status = 2
        report.update(status="input-error", error=f"{type(exc).__name__}: {exc}")
    except AdvRobustError as exc:
        status = 1
        report.update(status="domain-error", error=f"{type(exc).__name__}: {exc}")
        if getattr(exc, "min_feasible_xi", None) is not None:
            report["min_feasible_xi"] = exc.min_feasible_xi
    text = render_report(report)
    try:
        (out / "report.json").write_text(text)
    except OSError as exc:
        print(f"advrobust: cannot write report: {exc}", file=sys.stderr)
        status = 2
    sys.stdout.write(text)
    if status:
        print(f"advrobust: {report['error']}", file=sys.stderr)
    return status


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":  # pragma: no cover
    main()
