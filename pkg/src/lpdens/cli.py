"""Command-line front end.

Subcommands: estimate, trace, bandwidth, simulate, bias-curve, boundary.
Input is plain text, one observation per line (two comma-separated values
per line in bivariate mode); output is CSV printed with 17 significant
digits so files round-trip exactly.  Exit codes: 0 ok, 2 input error,
3 estimation failure.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import analysis, bandwidth, bivariate, boundary, models, solver
from .closedform import cf_hjort_glad
from .kernels import get_kernel
from .solver import FitConfig, FitStatus

_MODELS = (
    "constant",
    "linear",
    "loglinear",
    "logquad",
    "normal",
    "mult-const",
    "mult-loglinear",
    "hjort-glad",
    "binormal-product",
)
_KERNELS = ("gaussian", "uniform", "uniform1", "epanechnikov", "biweight")


def _fmt(v) -> str:
    if v is None:
        return "nan"
    return f"{float(v):.17g}"


def _write_rows(path: str, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(c if isinstance(c, str) else _fmt(c) for c in row))
    text = "\n".join(lines) + "\n"
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


class InputError(Exception):
    pass


def _read_data(path: str, bivariate_mode: bool) -> np.ndarray:
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as e:
        raise InputError(f"cannot read {path!r}: {e}")
    rows = []
    for ln, line in enumerate(lines, start=1):
        s = line.strip()
        if not s:
            continue
        parts = s.split(",") if bivariate_mode else [s]
        if bivariate_mode and len(parts) != 2:
            raise InputError(f"{path}:{ln}: expected two comma-separated values")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise InputError(f"{path}:{ln}: not numeric: {s!r}")
    if not rows:
        raise InputError(f"{path}: no observations")
    arr = np.asarray(rows, dtype=float)
    return arr if bivariate_mode else arr[:, 0]


def _parse_grid(spec: str, data, h: float, bivariate_mode=False):
    if spec == "auto":
        lo = float(np.min(data)) - 2.0 * h
        hi = float(np.max(data)) + 2.0 * h
        return np.linspace(lo, hi, 129)
    try:
        lo, hi, cnt = spec.split(":")
        lo, hi, cnt = float(lo), float(hi), int(cnt)
    except ValueError:
        raise InputError(f"bad grid spec {spec!r}; use min:max:count or auto")
    if cnt < 2 or not hi > lo:
        raise InputError("grid needs count >= 2 and max > min")
    return np.linspace(lo, hi, cnt)


def _parse_f_init(spec: str, data):
    if spec is None:
        raise InputError("this model requires --f-init")
    name, _, params = spec.partition(":")
    if name != "normal":
        raise InputError(f"unsupported f-init family {name!r} (only normal)")
    if params:
        try:
            mu, sigma = (float(v) for v in params.split(","))
        except ValueError:
            raise InputError(f"bad f-init parameters {params!r}; use normal:mu,sigma")
    else:
        mu, sigma = models.fit_normal_global(data)
    return models.normal_pdf(mu, sigma)


def _parse_density(spec: str) -> analysis.TrueDensity:
    name, _, params = spec.partition(":")
    vals = [float(v) for v in params.split(",")] if params else []
    if name == "normal":
        mu, sigma = (vals + [0.0, 1.0])[:2] if vals else (0.0, 1.0)
        return analysis.normal_density(mu, sigma)
    if name in ("mixture", "mix"):
        if len(vals) % 3 != 0 or not vals:
            raise InputError("mixture spec: w1,mu1,sd1[,w2,mu2,sd2...]")
        w, m, s = vals[0::3], vals[1::3], vals[2::3]
        return analysis.mixture_density(w, m, s)
    if name == "exp":
        return analysis.exponential_density(vals[0] if vals else 1.0)
    raise InputError(f"unknown density {spec!r}")


def _family_factory(model: str, f_init, x: float):
    if model == "constant":
        return models.family_polyexp(1, x)
    if model == "linear":
        return models.family_linear(x)
    if model == "loglinear":
        return models.family_polyexp(2, x)
    if model == "logquad":
        return models.family_polyexp(3, x)
    if model == "normal":
        return models.family_normal()
    if model == "mult-const":
        return models.family_mult_correction(f_init, 1, x)
    if model == "mult-loglinear":
        return models.family_mult_correction(f_init, 2, x)
    if model.startswith("polyexp:"):
        return models.family_polyexp(int(model.split(":")[1]), x)
    raise InputError(f"model {model!r} has no local family")


def _cfg(args) -> FitConfig:
    support = (0.0, math.inf) if getattr(args, "support_zero", False) else None
    return FitConfig(support=support)


def _theta_headers(pv) -> list:
    return [
        f"theta_{j + 1}" + ("_log" if is_log else "")
        for j, is_log in enumerate(pv.log_scale)
    ]


def cmd_estimate(args) -> int:
    data = _read_data(args.infile, args.bivariate)
    kernel = get_kernel(args.kernel)
    h = args.h
    if h is None and args.h_select is None:
        raise InputError("estimate needs --h or --h-select")

    if args.bivariate:
        if args.model not in ("binormal-product", "constant", "loglinear", "logquad"):
            raise InputError(f"model {args.model!r} not available in bivariate mode")
        if args.model == "binormal-product":
            fam = bivariate.family_binormal_product()
        else:
            order = {"constant": "const", "loglinear": "linear", "logquad": "quad"}
            fam = bivariate.family_logpoly2d(order[args.model], (0.0, 0.0))
        sch = bivariate.weights_make2d(
            "score" if args.weights == "powers" else args.weights, fam
        )
        grid1 = _parse_grid(args.grid, data[:, 0], h)
        grid2 = _parse_grid(args.grid, data[:, 1], h)
        est = bivariate.fit2d_grid(
            fam, sch, kernel, kernel, h, h, data, grid1, grid2, _cfg(args)
        )
        rows = []
        bad = 0
        for i, x1 in enumerate(grid1):
            for j, x2 in enumerate(grid2):
                status = est.statuses[i][j]
                bad += status in (FitStatus.MAX_ITER, FitStatus.DEGENERATE)
                row = [x1, x2, est.f_hat[i, j], status.value]
                pv = est.theta[i][j]
                if pv is not None:
                    row += list(fam.decode(pv.values))
                else:
                    row += [math.nan] * fam.p
                rows.append(row)
        header = ["x1", "x2", "f_hat", "status"] + [f"theta_{k+1}" for k in range(fam.p)]
        _write_rows(args.out, header, rows)
        return 3 if bad > 0.1 * len(rows) else 0

    if args.h_select is not None:
        h = _run_selection(args, data).h_selected

    if args.model == "hjort-glad":
        f_init = _parse_f_init(args.f_init, data)
        grid = _parse_grid(args.grid, data, h)
        rows = []
        bad = 0
        for xg in grid:
            res = cf_hjort_glad(f_init, kernel, h, data, xg)
            bad += not res.valid
            rows.append([xg, res.f_hat, "converged" if res.valid else "invalid"])
        _write_rows(args.out, ["x", "f_hat", "status"], rows)
        return 3 if bad > 0.1 * len(rows) else 0

    f_init = (
        _parse_f_init(args.f_init, data)
        if args.model in ("mult-const", "mult-loglinear")
        else None
    )
    fam = _family_factory(args.model, f_init, 0.0)
    sch = models.weights_make(args.weights, fam)
    grid = _parse_grid(args.grid, data, h)
    est = solver.fit_grid(fam, sch, kernel, h, data, grid, _cfg(args), threads=args.threads)
    rows = []
    bad = 0
    for xg, fh, status, pv in zip(grid, est.f_hat, est.statuses, est.theta_trace):
        bad += status in (FitStatus.MAX_ITER, FitStatus.DEGENERATE)
        row = [xg, fh, status.value]
        if pv is not None:
            row += list(fam.decode(pv.values))
        else:
            row += [math.nan] * fam.p
        rows.append(row)
    header = ["x", "f_hat", "status"] + [f"theta_{k+1}" for k in range(fam.p)]
    _write_rows(args.out, header, rows)
    return 3 if bad > 0.1 * len(rows) else 0


def cmd_trace(args) -> int:
    data = _read_data(args.infile, False)
    kernel = get_kernel(args.kernel)
    if args.h is None:
        raise InputError("trace needs --h")
    f_init = (
        _parse_f_init(args.f_init, data)
        if args.model in ("mult-const", "mult-loglinear")
        else None
    )
    fam = _family_factory(args.model, f_init, 0.0)
    sch = models.weights_make(args.weights, fam)
    grid = _parse_grid(args.grid, data, args.h)
    est = solver.fit_grid(fam, sch, kernel, args.h, data, grid, _cfg(args), threads=args.threads)
    sample_pv = fam.param_vector(np.zeros(fam.p))
    header = ["x"] + _theta_headers(sample_pv) + ["status"]
    rows = []
    for xg, status, pv in zip(grid, est.statuses, est.theta_trace):
        vals = list(pv.values) if pv is not None else [math.nan] * fam.p
        rows.append([xg] + vals + [status.value])
    _write_rows(args.out, header, rows)
    return 0


def _run_selection(args, data):
    fam = _family_factory(args.model, None, 0.0)
    sch = models.weights_make(args.weights, fam)
    kernel = get_kernel(args.kernel)
    if args.h_select == "lscv":
        return bandwidth.select_h_lscv(fam, sch, kernel, data)
    if args.h_select == "plugin-ratio":
        return bandwidth.select_h_plugin_ratio(fam, sch, kernel, data)
    raise InputError(f"unknown selection method {args.h_select!r}")


def cmd_bandwidth(args) -> int:
    data = _read_data(args.infile, False)
    if args.h_select is None:
        raise InputError("bandwidth needs --h-select {lscv|plugin-ratio}")
    try:
        sel = _run_selection(args, data)
    except RuntimeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    rows = [
        [h, s, "1" if h == sel.h_selected else "0"] for h, s in sel.score_curve
    ]
    _write_rows(args.out, ["h", "score", "selected"], rows)
    return 0


def cmd_simulate(args) -> int:
    dens = _parse_density(args.density)
    if args.h is None:
        raise InputError("simulate needs --h")
    grid = _parse_grid(args.grid, np.array([-1.0, 1.0]), args.h)
    model = "classic" if args.model == "constant" else args.model
    spec = analysis.EstimatorSpec(
        model=model, h=args.h, kernel=args.kernel, scheme=args.weights
    )
    rep = analysis.mc_experiment(
        dens, spec, args.n, args.reps, args.seed, grid, threads=args.threads
    )
    header = [
        "x",
        "f_true",
        "bias",
        "variance",
        "mse",
        "se_bias",
        "se_variance",
        "theory_bias",
        "theory_variance",
        "flagged",
    ]
    rows = [
        [
            rep.grid[i],
            rep.f_true[i],
            rep.emp_bias[i],
            rep.emp_var[i],
            rep.emp_mse[i],
            rep.se_bias[i],
            rep.se_var[i],
            rep.theory_bias[i],
            rep.theory_var[i],
            "1" if rep.flagged else "0",
        ]
        for i in range(rep.grid.size)
    ]
    _write_rows(args.out, header, rows)
    return 0


def cmd_bias_curve(args) -> int:
    dens = _parse_density(args.density)
    h_list = [float(v) for v in args.h_list.split(",")]
    kernel = get_kernel(args.kernel)
    try:
        if args.support_zero:
            fam = _family_factory(args.model, None, args.p_rel * h_list[0])
            repb = boundary.boundary_bias_diag(
                fam, kernel, h_list, dens, args.p_rel,
                scheme_kind=args.weights,
            )
            curve = repb.curve
        else:
            fam = _family_factory(args.model, None, args.x)
            sch = models.weights_make(args.weights, fam)
            curve = analysis.population_bias_curve(
                fam, sch, kernel, dens, args.x, h_list
            )
    except (RuntimeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    rows = [[h, b, curve.slope] for h, b in zip(curve.h_list, curve.bias)]
    _write_rows(args.out, ["h", "bias", "slope"], rows)
    return 0


def cmd_boundary(args) -> int:
    kernel = get_kernel(args.kernel)
    if not math.isfinite(kernel.support_radius):
        print("error: boundary table needs a finite-support kernel", file=sys.stderr)
        return 2
    if args.p_grid == "auto":
        ps = np.linspace(0.0, kernel.support_radius, 21)
    else:
        ps = _parse_grid(args.p_grid, np.array([0.0]), 0.0)
    rows = []
    for p in ps:
        bm = boundary.boundary_moments(kernel, p)
        rows.append([p, *bm.a, bm.b, bm.q])
    _write_rows(args.out, ["p", "a0", "a1", "a2", "a3", "b", "Q"], rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="lpdens",
        description="Locally parametric kernel density estimation",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, needs_input=True):
        if needs_input:
            p.add_argument("--in", dest="infile", required=True, help="input data file")
        p.add_argument("--out", default="-", help="output CSV path (default stdout)")
        p.add_argument("--model", default="constant", help="|".join(_MODELS) + "|polyexp:p")
        p.add_argument("--weights", default="score", choices=("score", "powers", "l2"))
        p.add_argument("--kernel", default="gaussian", choices=_KERNELS)
        p.add_argument("--h", type=float, default=None, help="bandwidth")
        p.add_argument("--h-select", choices=("lscv", "plugin-ratio"), default=None)
        p.add_argument("--grid", default="auto", help="min:max:count or auto")
        p.add_argument("--f-init", default=None, help="parametric start, e.g. normal:0,1 or normal")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--support-zero", action="store_true", help="density supported on [0, inf)")
        p.add_argument("--bivariate", action="store_true")
        p.add_argument("--threads", type=int, default=1)

    p_est = sub.add_parser("estimate", help="density estimate on a grid")
    common(p_est)
    p_est.set_defaults(func=cmd_estimate)

    p_tr = sub.add_parser("trace", help="running-parameter trace")
    common(p_tr)
    p_tr.set_defaults(func=cmd_trace)

    p_bw = sub.add_parser("bandwidth", help="bandwidth selection")
    common(p_bw)
    p_bw.set_defaults(func=cmd_bandwidth)

    p_sim = sub.add_parser("simulate", help="Monte Carlo bias/variance study")
    common(p_sim, needs_input=False)
    p_sim.add_argument("--density", required=True, help="normal:mu,sd | mixture:w,mu,sd,... | exp:rate")
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--reps", type=int, required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_bc = sub.add_parser("bias-curve", help="population bias-law verification")
    common(p_bc, needs_input=False)
    p_bc.add_argument("--density", required=True)
    p_bc.add_argument("--x", type=float, default=0.0, help="evaluation point")
    p_bc.add_argument("--h-list", required=True, help="comma-separated decreasing bandwidths")
    p_bc.add_argument("--p-rel", type=float, default=0.5, help="x = p*h in boundary mode")
    p_bc.set_defaults(func=cmd_bias_curve)

    p_bd = sub.add_parser("boundary", help="boundary moment table")
    common(p_bd, needs_input=False)
    p_bd.add_argument("--p-grid", default="auto", help="min:max:count of relative positions")
    p_bd.set_defaults(func=cmd_boundary)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
