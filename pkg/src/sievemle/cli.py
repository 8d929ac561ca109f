"""Command-line front end: simulation, fitting, and batch diagnostics.

Every subcommand resolves its configuration (config file < flags), echoes
the resolved configuration for reproducibility, and writes deterministic
outputs: identical arguments and seed give byte-identical files.

Exit codes: 0 success; 1 usage/configuration error (nothing written);
2 numerical or model error (outputs flushed with a status field).
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .basis import BasisSpec, coefficients_for_target, gram_and_orthonormalize
from .contiguity import (
    CSV_DIAG_HEADER,
    diagnostics_report,
    jm_convergence,
    projection_convergence_test,
    rate_check,
)
from .cox import CoxData, a_n_cox, efficient_info_cox, efficient_score_cox_limit, fit_cox_partial, simulate_cox
from .errors import SieveError
from .leastfav import (
    DEFAULT_H_GRID,
    cox_expansion_inputs,
    expansion_report,
    plm_expansion_inputs,
)
from .montecarlo import build_dgp
from .plm import PlmData, default_k, fit_plm, simulate_plm
from . import cox as _cox


class _Parser(argparse.ArgumentParser):
    """Argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _json_dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(_json_dumps(obj))


def _load_config(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}")


class UsageError(Exception):
    pass


def _resolve(args, config_keys, defaults):
    """Merge defaults, config file, and explicit flags into one dict."""
    resolved = dict(defaults)
    if getattr(args, "config", None):
        cfg = _load_config(args.config)
        unknown = set(cfg) - set(config_keys)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        resolved.update(cfg)
    for key in config_keys:
        flag = getattr(args, key.replace("-", "_"), None)
        if flag is not None:
            resolved[key] = flag
    return resolved


def _emit(payload, out_prefix, resolved, csv_lines=None, csv_suffix=".csv"):
    """Write outputs and the resolved-config sidecar; print JSON to stdout."""
    payload = dict(payload)
    payload.setdefault("schema_version", 1)
    if out_prefix:
        _write_json(f"{out_prefix}.json", payload)
        _write_json(f"{out_prefix}_config.json", resolved)
        if csv_lines is not None:
            with open(f"{out_prefix}{csv_suffix}", "w") as fh:
                fh.write("\n".join(csv_lines) + "\n")
    else:
        payload = dict(payload)
        payload["resolved_config"] = resolved
    sys.stdout.write(_json_dumps(payload))


def _int_list(text):
    return [int(tok) for tok in str(text).split(",") if tok]


def _float_list(text):
    return [float(tok) for tok in str(text).split(",") if tok]


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------

def _cmd_sim(args, model):
    keys = ["n", "seed", "dgp", "out"]
    resolved = _resolve(args, keys, {"n": 1000, "seed": 0, "dgp": {}, "out": None})
    resolved["model"] = model
    if not resolved["out"]:
        raise UsageError("simulation needs --out for the dataset path prefix")
    dgp = build_dgp(model, resolved["dgp"])
    n, seed = int(resolved["n"]), int(resolved["seed"])
    if model == "plm":
        data = simulate_plm(dgp, n, seed)
    else:
        data = simulate_cox(dgp, n, seed)
    path = f"{resolved['out']}.csv"
    data.to_csv(path)
    _write_json(f"{resolved['out']}_config.json", resolved)
    sys.stdout.write(_json_dumps({"status": "ok", "rows": n, "path": path}))
    return 0


def _cmd_fit(args):
    keys = ["model", "data", "k", "sigma", "dgp", "out"]
    resolved = _resolve(args, keys, {"model": None, "data": None, "k": None,
                                     "sigma": None, "dgp": {}, "out": None})
    if resolved["model"] not in ("plm", "cox"):
        raise UsageError("--model must be plm or cox")
    if not resolved["data"]:
        raise UsageError("--data is required")
    try:
        if resolved["model"] == "plm":
            data = PlmData.from_csv(resolved["data"])
        else:
            data = CoxData.from_csv(resolved["data"])
    except OSError as exc:
        raise UsageError(f"cannot read data file: {exc}")
    except ValueError as exc:
        raise UsageError(str(exc))

    if resolved["model"] == "plm":
        k = int(resolved["k"]) if resolved["k"] is not None else default_k(data.n)
        resolved["k"] = k
        spec = BasisSpec("bspline", k, degree=3)
        bm = gram_and_orthonormalize(spec, z_points=data.z, measure="empirical")
        fit = fit_plm(data, bm, sigma=resolved["sigma"])
    else:
        fit = fit_cox_partial(data)
    payload = {"status": "ok", "model": resolved["model"], "n": data.n}
    payload.update(fit.to_json_dict())
    _emit(payload, resolved["out"], resolved)
    return 0


def _cmd_contiguity(args):
    keys = ["model", "n", "reps", "seed", "m-grid", "draws", "workers", "dgp", "out"]
    resolved = _resolve(args, keys, {
        "model": None, "n": 2000, "reps": 200, "seed": 0, "m-grid": None,
        "draws": 20_000, "workers": os.cpu_count() or 1, "dgp": {}, "out": None,
    })
    model = resolved["model"]
    if model not in ("plm", "cox"):
        raise UsageError("--model must be plm or cox")
    n = int(resolved["n"])
    if resolved["m-grid"] is None:
        resolved["m-grid"] = ([4, 8, 16, 32] if model == "plm"
                              else [_cox.default_k_contiguity(n)])
    # default nuisances outside every sieve span, so the ratio is informative
    dgp_cfg = dict(resolved["dgp"])
    if "eta0" not in dgp_cfg:
        dgp_cfg["eta0"] = "sin2pi" if model == "plm" else "one-plus-t"
    resolved["dgp"] = dgp_cfg
    dgp = build_dgp(model, dgp_cfg)
    report = diagnostics_report(
        dgp, model, n=n, reps=int(resolved["reps"]),
        m_grid=resolved["m-grid"], master_seed=int(resolved["seed"]),
        mc_draws=int(resolved["draws"]), workers=int(resolved["workers"]),
    )
    csv_lines = [CSV_DIAG_HEADER]
    for row in report.csv_rows():
        csv_lines.append(",".join(
            str(v) if isinstance(v, int) else "%.17g" % v for v in row
        ))
    _emit(report.to_json_dict(), resolved["out"], resolved, csv_lines)
    return 0


def _cmd_expansion(args):
    keys = ["model", "n", "seed", "k", "h-grid", "moments", "partial", "dgp", "out"]
    resolved = _resolve(args, keys, {
        "model": None, "n": 1000, "seed": 0, "k": None,
        "h-grid": list(DEFAULT_H_GRID), "moments": "sample",
        "partial": False, "dgp": {}, "out": None,
    })
    model = resolved["model"]
    if model not in ("plm", "cox"):
        raise UsageError("--model must be plm or cox")
    if resolved["moments"] not in ("sample", "population"):
        raise UsageError("--moments must be sample or population")
    n, seed = int(resolved["n"]), int(resolved["seed"])
    h_grid = [float(h) for h in resolved["h-grid"]]
    dgp = build_dgp(model, resolved["dgp"])
    moments = resolved["moments"]
    needs_dgp = dgp if moments == "population" else None

    if model == "plm":
        data = simulate_plm(dgp, n, seed)
        k = int(resolved["k"]) if resolved["k"] is not None else default_k(n)
        resolved["k"] = k
        spec = BasisSpec("bspline", k, degree=3, scaling="probability-orthonormal")
        bm = gram_and_orthonormalize(spec, z_points=data.z)
        blocks, scores = plm_expansion_inputs(data, bm, dgp.theta0, dgp.sigma,
                                              moments=moments, dgp=needs_dgp)
        report = expansion_report(data, bm, "plm", h_grid, blocks, scores,
                                  theta0=dgp.theta0, sigma=dgp.sigma)
        payload = report.to_json_dict()
    else:
        data = simulate_cox(dgp, n, seed)
        if resolved["partial"]:
            payload = _cox_partial_expansion(data, dgp, h_grid)
            resolved["k"] = 0
        else:
            k = int(resolved["k"]) if resolved["k"] is not None else 8
            resolved["k"] = k
            spec = BasisSpec("piecewise-constant", k, scaling="cox-scale")
            gamma0 = coefficients_for_target(spec, dgp.eta0, "cox-left-endpoint")
            blocks, scores = cox_expansion_inputs(data, spec, gamma0, dgp.theta0,
                                                  moments=moments, dgp=needs_dgp)
            report = expansion_report(data, spec, "cox", h_grid, blocks, scores,
                                      theta0=dgp.theta0)
            payload = report.to_json_dict()
    payload["model"] = model
    csv_lines = ["h,A,prediction,residual"]
    for h, a, p, r in zip(payload["h_grid"], payload["A_values"],
                          payload["lan_prediction"], payload["residuals"]):
        csv_lines.append("%.17g,%.17g,%.17g,%.17g" % (h, a, p, r))
    _emit(payload, resolved["out"], resolved, csv_lines)
    return 0


def _cox_partial_expansion(data, dgp, h_grid):
    """Partial-likelihood ratio process against its efficient-score prediction."""
    info = efficient_info_cox(dgp)
    scores = efficient_score_cox_limit(data, dgp, info.curves)
    h = np.asarray(sorted(h_grid), dtype=float)
    a_vals = a_n_cox(data, dgp.theta0, h)
    pred = h * float(np.sum(scores)) / math.sqrt(data.n) - 0.5 * h**2 * info.J
    from .leastfav import second_divided_differences

    full_h = np.concatenate([h[h < 0], [0.0], h[h > 0]])
    full_a = np.concatenate([a_vals[h < 0], [0.0], a_vals[h > 0]])
    concave = bool(np.all(second_divided_differences(full_h, full_a) <= 1e-10))
    return {
        "h_grid": list(map(float, h)),
        "A_values": list(map(float, a_vals)),
        "lan_prediction": list(map(float, pred)),
        "residuals": list(map(float, a_vals - pred)),
        "concave_ok": concave,
        "J": info.J,
    }


def _cmd_info_convergence(args):
    keys = ["model", "m-grid", "dgp", "projection-dim", "seed", "out"]
    resolved = _resolve(args, keys, {
        "model": None, "m-grid": [2, 4, 8, 16, 32, 64, 128],
        "dgp": {}, "projection-dim": 10, "seed": 0, "out": None,
    })
    model = resolved["model"]
    if model not in ("plm", "cox"):
        raise UsageError("--model must be plm or cox")
    dgp = build_dgp(model, resolved["dgp"])
    grid = [int(k) for k in resolved["m-grid"]]
    family = "piecewise-constant" if model == "cox" else "bspline"
    j_m, j_lim = jm_convergence(dgp, model, grid,
                                family="piecewise-constant", degree=0)
    dim = int(resolved["projection-dim"])
    rng = np.random.default_rng(int(resolved["seed"]))
    proj = projection_convergence_test(dim, rng.standard_normal(dim),
                                       seed=int(resolved["seed"]))
    payload = {
        "model": model,
        "m_grid": grid,
        "J_m_values": list(map(float, j_m)),
        "J_limit": float(j_lim),
        "gaps": [float(v - j_lim) for v in j_m],
        "projection_deviations": list(map(float, proj.deviations)),
        "projection_final_deviation": proj.final_deviation,
    }
    csv_lines = ["m,k_m,J_m,gap"]
    for i, k in enumerate(grid):
        csv_lines.append("%d,%d,%.17g,%.17g" % (i + 1, k, j_m[i], j_m[i] - j_lim))
    _emit(payload, resolved["out"], resolved, csv_lines)
    return 0


def _cmd_rate_check(args):
    keys = ["n", "k", "s", "xi", "a", "threshold", "out"]
    resolved = _resolve(args, keys, {
        "n": None, "k": None, "s": 3.0, "xi": None, "a": None,
        "threshold": 0.5, "out": None,
    })
    if resolved["n"] is None or resolved["k"] is None:
        raise UsageError("--n and --k are required")
    n, k = int(resolved["n"]), int(resolved["k"])
    xi = float(resolved["xi"]) if resolved["xi"] is not None else math.sqrt(k)
    a = float(resolved["a"]) if resolved["a"] is not None else 1.0 / k
    resolved.update(xi=xi, a=a)
    entries = rate_check(n, k, float(resolved["s"]), xi, a,
                         threshold=float(resolved["threshold"]))
    payload = {
        name: {"magnitude": e.magnitude, "pass": e.passed}
        for name, e in entries.items()
    }
    _emit(payload, resolved["out"], resolved)
    return 0


# ---------------------------------------------------------------------------
# Parser assembly and dispatch
# ---------------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="sievemle",
                     description="sieve MLE estimation and diagnostics")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--out", help="output path prefix")
        p.add_argument("--seed", type=int)
        return p

    p = add("plm-sim", "simulate a partially linear regression dataset")
    p.add_argument("--n", type=int)
    p = add("cox-sim", "simulate a censored proportional-hazards dataset")
    p.add_argument("--n", type=int)

    p = add("fit", "fit a dataset from CSV")
    p.add_argument("--model", choices=["plm", "cox"])
    p.add_argument("--data")
    p.add_argument("--k", type=int)
    p.add_argument("--sigma", type=float)

    p = add("contiguity", "replication diagnostics of the sieve likelihood ratio")
    p.add_argument("--model", choices=["plm", "cox"])
    p.add_argument("--n", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--m-grid", type=_int_list)
    p.add_argument("--draws", type=int)
    p.add_argument("--workers", type=int)

    p = add("expansion", "profile-likelihood ratio process and quadratic fit")
    p.add_argument("--model", choices=["plm", "cox"])
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--h-grid", type=_float_list)
    p.add_argument("--moments", choices=["sample", "population"])
    p.add_argument("--partial", action="store_true", default=None,
                   help="cox only: use the partial likelihood process")

    p = add("info-convergence", "sieve information versus its limit")
    p.add_argument("--model", choices=["plm", "cox"])
    p.add_argument("--m-grid", type=_int_list)
    p.add_argument("--projection-dim", type=int)

    p = add("rate-check", "advisory rate-condition magnitudes")
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--s", type=float)
    p.add_argument("--xi", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--threshold", type=float)
    return parser


_HANDLERS = {
    "plm-sim": lambda a: _cmd_sim(a, "plm"),
    "cox-sim": lambda a: _cmd_sim(a, "cox"),
    "fit": _cmd_fit,
    "contiguity": _cmd_contiguity,
    "expansion": _cmd_expansion,
    "info-convergence": _cmd_info_convergence,
    "rate-check": _cmd_rate_check,
}


def dispatch(argv):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return _HANDLERS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"sievemle {args.command}: error: {exc}\n")
        return 1
    except SieveError as exc:
        payload = {"status": "error", "error": type(exc).__name__,
                   "message": str(exc)}
        out = getattr(args, "out", None)
        if out:
            _write_json(f"{out}.json", payload)
        sys.stdout.write(_json_dumps(payload))
        return 2


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
