"""Command-line interface.

Exit codes: 0 on success or a passing verdict, 1 when a verdict fails,
2 on invalid input.
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys

import numpy as np

from . import __version__
from .autoparallel import (
    check_e_autoparallel_m_affine,
    counterexample_dim_ge3,
    involutivity_check,
    real_subspace,
)
from .catalog import CATALOG, load_model
from .estimation import (
    DEFAULT_EPS,
    FiltrationSpec,
    filtration_estimator,
    filtration_probs,
    estimator_moments,
    monte_carlo_moments,
    monte_carlo_quadratic,
    observable_variance,
    scalar_cr_bound,
    scalar_efficient_estimator,
)
from .manifold import dual_frame, e_geodesic, iid_extension
from .operators import OperatorSubspace, hs_norm, tensor_power_operator
from .qubit import (
    bloch_to_density,
    density_to_bloch,
    dot_sigma,
    geodesic_params,
    orthonormal_triple,
    qubit_autoparallel_surface_point,
    qubit_geodesic_point,
    xi_to_theta,
)
from .serialization import (
    MalformedInputError,
    csv_text,
    dump_model_samples,
    dumps,
    operator_from_dict,
)

DEFAULTS = {
    "common": {"tol": 1e-8, "format": "json", "out": None, "seed": 0, "fd_step": None,
               "grid": None},
    "geodesic": {"r0": "0,0,0", "u": "0,0,1", "samples": 101, "format": "csv"},
    "surface": {"c": 0.3, "u1": "1,0,0", "u2": "0,1,0", "grid": 21, "format": "csv"},
    "check-autoparallel": {"model": "bloch-ellipsoid(c=0.3)", "dump_samples": None},
    "involutivity": {"dim": 2, "subspace": None, "states": 20, "tol": 1e-10},
    "filtration-sweep": {"model": "bloch-ellipsoid(c=0.3)", "xi": None,
                         "eps_list": ",".join(map(str, DEFAULT_EPS)), "shots": 100000,
                         "u_basis": None, "format": "csv"},
    "counterexample": {"eps": 0.05, "dim": 3, "tol": 1e-3},
    "scalar-estimate": {"model": "bloch-full", "xi": None, "grad": None, "f_value": 0.0,
                        "tol": 1e-9},
    "iid-extend": {"model": "bloch-ellipsoid(c=0.3)", "n_copies": 2, "xi": None,
                   "grid": 3},
}


class InputError(ValueError):
    pass


def _vec(text, name):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return np.asarray(text, dtype=float)
    try:
        return np.array([float(t) for t in str(text).split(",")])
    except ValueError as exc:
        raise InputError(f"--{name} must be a comma-separated list of numbers") from exc


def _positive(value, name):
    if value is None or float(value) <= 0:
        raise InputError(f"{name} must be positive")
    return float(value)


def _model(cfg):
    model, grid = load_model(cfg["model"], cfg.get("grid"))
    if cfg.get("fd_step") is not None:
        model = model.with_fd_step(_positive(cfg["fd_step"], "--fd-step"))
    return model, np.atleast_2d(grid)


def _center(grid):
    """Grid point closest to the grid mean (always a domain point)."""
    m = grid.mean(axis=0)
    return grid[np.argmin(np.linalg.norm(grid - m, axis=1))]


# -- commands -------------------------------------------------------------------

def cmd_geodesic(cfg):
    r0, u = _vec(cfg["r0"], "r0"), _vec(cfg["u"], "u")
    p = geodesic_params(r0, u)
    xs = np.linspace(-1, 1, int(cfg["samples"]) + 2)[1:-1]
    rho0 = bloch_to_density(r0)
    F = dot_sigma(p.u)
    rows, worst = [], 0.0
    for xi in xs:
        r = qubit_geodesic_point(p, xi)
        exact = density_to_bloch(e_geodesic(rho0, F, xi_to_theta(p.a, xi)))
        worst = max(worst, float(np.max(np.abs(exact - r))))
        rows.append([xi, *r])
    result = {"a": p.a, "b": p.b, "c": p.c, "u": p.u, "v": p.v,
              "max_exponential_mismatch": worst, "tol": cfg["tol"], "points": rows}
    return 0, result, (["xi", "r1", "r2", "r3"], rows)


def cmd_surface(cfg):
    u1, u2, v = orthonormal_triple(_vec(cfg["u1"], "u1"), _vec(cfg["u2"], "u2"))
    c = float(cfg["c"])
    ax = np.linspace(-1, 1, int(cfg["grid"]))
    rows = []
    for x1 in ax:
        for x2 in ax:
            if x1 * x1 + x2 * x2 < 1 - 1e-8:
                rows.append([x1, x2, *qubit_autoparallel_surface_point(u1, u2, v, c, [x1, x2])])
    result = {"c": c, "u1": u1, "u2": u2, "v": v, "points": rows}
    return 0, result, (["xi1", "xi2", "r1", "r2", "r3"], rows)


def cmd_check_autoparallel(cfg):
    model, grid = _model(cfg)
    tol = _positive(cfg["tol"], "--tol")
    res = check_e_autoparallel_m_affine(model, grid, tol)
    if cfg.get("dump_samples"):
        with open(cfg["dump_samples"], "w") as fp:
            dump_model_samples(model, grid, fp)
    result = {"verdict": res.verdict, "tol": tol, "max_pairwise": res.max_pairwise,
              "max_residual": res.max_residual, "grid_size": len(grid),
              "certificate": res.certificate if res.verdict else None,
              "witness": None if res.witness is None else
              {"xi_a": res.witness[0], "xi_b": res.witness[1], "distance": res.witness[2]}}
    rows = [[i, *xi, d] for i, (xi, d) in enumerate(zip(grid, res.per_point))]
    header = ["index"] + [f"xi{k + 1}" for k in range(model.n)] + ["residual"]
    return (0 if res.verdict else 1), result, (header, rows)


def cmd_involutivity(cfg):
    tol = _positive(cfg["tol"], "--tol")
    if cfg.get("subspace"):
        with open(cfg["subspace"]) as fp:
            ops = [operator_from_dict(o) for o in json.load(fp)]
        space = OperatorSubspace(ops)
    else:
        space = real_subspace(d=int(cfg["dim"]))
    res = involutivity_check(space, tol=tol, n_random=int(cfg["states"]), seed=int(cfg["seed"]))
    result = {"involutive": res.involutive, "tol": tol, "worst_residual": res.worst_residual,
              "witness": dict(zip(["state", "a", "b", "residual"], res.witness)),
              "subspace_dim": space.dim, "states": int(cfg["states"]), "seed": int(cfg["seed"])}
    rows = [[k, r] for k, r in enumerate(res.residuals)]
    return (0 if res.involutive else 1), result, (["pair", "residual"], rows)


def cmd_filtration_sweep(cfg):
    model, grid = _model(cfg)
    tol = _positive(cfg["tol"], "--tol")
    check = check_e_autoparallel_m_affine(model, grid, tol)
    if not check.verdict:
        result = {"verdict": False, "tol": tol, "max_pairwise": check.max_pairwise,
                  "reason": "model failed the autoparallel check; no certificate"}
        return 1, result, (["eps", "u_index", "uTVu_analytic", "uTVu_mc", "stderr",
                            "cr_bound"], [])
    xi = _vec(cfg["xi"], "xi") if cfg.get("xi") is not None else _center(grid)
    U = cfg.get("u_basis")
    if isinstance(U, str):
        # from the command line; config files may give the matrix directly
        U = json.loads(U)
    if U is not None:
        U = np.asarray(U, dtype=float)
    eps_list = _vec(cfg["eps_list"], "eps-list")
    spec = FiltrationSpec(check.certificate, U, tuple(eps_list), model)
    rho, G, _, _ = dual_frame(model, xi)
    rows, worst_z = [], 0.0
    for j, eps in enumerate(spec.eps_schedule):
        Pi = filtration_estimator(spec, eps)
        _, V = estimator_moments(rho, Pi, xi)
        mc = monte_carlo_moments(rho, Pi, int(cfg["shots"]), int(cfg["seed"]) + j, xi)
        for k, u in enumerate(spec.u_basis):
            analytic = float(u @ V @ u)
            est, se = monte_carlo_quadratic(mc.counts, Pi.values, u, xi)
            worst_z = max(worst_z, abs(est - analytic) / se if se > 0 else 0.0)
            rows.append([eps, k, analytic, est, se, float(u @ G.inverse @ u)])
    result = {"verdict": True, "tol": tol, "xi": xi, "certificate": check.certificate,
              "u_basis": spec.u_basis, "probs_first": [filtration_probs(e, model.n)[0]
                                                       for e in spec.eps_schedule],
              "shots": int(cfg["shots"]), "seed": int(cfg["seed"]),
              "max_mc_zscore": worst_z,
              "rows": rows}
    header = ["eps", "u_index", "uTVu_analytic", "uTVu_mc", "stderr", "cr_bound"]
    return 0, result, (header, rows)


def cmd_counterexample(cfg):
    tol = _positive(cfg["tol"], "--tol")
    res = counterexample_dim_ge3(float(cfg["eps"]), int(cfg["dim"]))
    involutive = res <= tol
    result = {"eps": float(cfg["eps"]), "dim": int(cfg["dim"]), "residual": res,
              "tol": tol, "involutive": involutive}
    return (0 if involutive else 1), result, (["eps", "dim", "residual"],
                                              [[float(cfg["eps"]), int(cfg["dim"]), res]])


def cmd_scalar_estimate(cfg):
    model, grid = _model(cfg)
    tol = _positive(cfg["tol"], "--tol")
    xi = _vec(cfg["xi"], "xi") if cfg.get("xi") is not None else _center(grid)
    grad = _vec(cfg["grad"], "grad") if cfg.get("grad") is not None else np.eye(model.n)[0]
    if grad.shape != (model.n,):
        raise InputError(f"--grad needs {model.n} components")
    F = scalar_efficient_estimator(model, xi, float(cfg["f_value"]), grad)
    var = observable_variance(model.state(xi), F)
    bound = scalar_cr_bound(model, xi, grad)
    ok = abs(var - bound) <= tol * max(1.0, bound)
    result = {"xi": xi, "grad": grad, "observable": F, "variance": var, "cr_bound": bound,
              "tol": tol, "efficient": ok}
    return (0 if ok else 1), result, (["variance", "cr_bound"], [[var, bound]])


def cmd_iid_extend(cfg):
    model, grid = _model(cfg)
    tol = _positive(cfg["tol"], "--tol")
    N = int(cfg["n_copies"])
    ext = iid_extension(model, N)
    xi = _vec(cfg["xi"], "xi") if cfg.get("xi") is not None else _center(grid)
    _, G, slds, _ = dual_frame(model, xi)
    _, Gt, sldt, _ = dual_frame(ext, xi)
    fisher_err = float(np.max(np.abs(Gt.matrix - N * G.matrix)))
    sld_err = max(hs_norm(a - tensor_power_operator(b, N)) for a, b in zip(sldt, slds))
    base = check_e_autoparallel_m_affine(model, grid, tol)
    lifted = check_e_autoparallel_m_affine(ext, grid, tol)
    ok = fisher_err <= 1e-9 and sld_err <= 1e-8 and base.verdict == lifted.verdict
    result = {"N": N, "xi": xi, "fisher_max_error": fisher_err, "sld_max_error": sld_err,
              "verdict_base": base.verdict, "verdict_extended": lifted.verdict, "tol": tol,
              "consistent": ok}
    return (0 if ok else 1), result, (
        ["N", "fisher_max_error", "sld_max_error", "verdict_base", "verdict_extended"],
        [[N, fisher_err, sld_err, base.verdict, lifted.verdict]])


COMMANDS = {
    "geodesic": cmd_geodesic,
    "surface": cmd_surface,
    "check-autoparallel": cmd_check_autoparallel,
    "involutivity": cmd_involutivity,
    "filtration-sweep": cmd_filtration_sweep,
    "counterexample": cmd_counterexample,
    "scalar-estimate": cmd_scalar_estimate,
    "iid-extend": cmd_iid_extend,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="sldgeom", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON file of options; flags take precedence")
        p.add_argument("--tol", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="report path (stdout when omitted)")
        p.add_argument("--format", choices=["csv", "json"])
        p.add_argument("--fd-step", type=float, dest="fd_step")
        return p

    p = add("geodesic", "trace a qubit e-geodesic as a semi-ellipse")
    p.add_argument("--r0", help="initial Bloch vector, e.g. 0.1,0,0.3")
    p.add_argument("--u", help="direction of the generator u.sigma")
    p.add_argument("--samples", type=int)

    p = add("surface", "sample a qubit semi-ellipsoid surface")
    p.add_argument("--c", type=float)
    p.add_argument("--u1")
    p.add_argument("--u2")
    p.add_argument("--grid", type=int, help="points per axis")

    p = add("check-autoparallel", "F^i certificate test on a model grid")
    p.add_argument("--model", help="catalog entry: " + ", ".join(sorted(CATALOG)))
    p.add_argument("--grid", type=int, help="points per axis")
    p.add_argument("--dump-samples", dest="dump_samples", help="JSON-lines model dump")

    p = add("involutivity", "involutivity of a subspace distribution on random states")
    p.add_argument("--dim", type=int, help="use the real-symmetric subspace in dimension d")
    p.add_argument("--subspace", help="JSON list of operators spanning the subspace")
    p.add_argument("--states", type=int, help="number of random states")

    p = add("filtration-sweep", "efficient filtration variances versus eps")
    p.add_argument("--model")
    p.add_argument("--grid", type=int)
    p.add_argument("--xi", help="evaluation point (defaults to the grid center)")
    p.add_argument("--eps-list", dest="eps_list")
    p.add_argument("--shots", type=int)
    p.add_argument("--u-basis", dest="u_basis", help="JSON matrix with rows u^k")

    p = add("counterexample", "non-involutive real-symmetric distribution for d >= 3")
    p.add_argument("--eps", type=float)
    p.add_argument("--dim", type=int)

    p = add("scalar-estimate", "efficient observable for a scalar function")
    p.add_argument("--model")
    p.add_argument("--grid", type=int)
    p.add_argument("--xi")
    p.add_argument("--grad", help="gradient of f in the model coordinates")
    p.add_argument("--f-value", type=float, dest="f_value")

    p = add("iid-extend", "Fisher/SLD scaling and verdicts under i.i.d. extension")
    p.add_argument("--model")
    p.add_argument("--grid", type=int)
    p.add_argument("--N", type=int, dest="n_copies")
    p.add_argument("--xi")
    return parser


def resolve_config(args):
    """Defaults, then the config file, then explicit flags."""
    flags = vars(args).copy()
    command = flags.pop("command")
    cfg = dict(DEFAULTS["common"])
    cfg.update(DEFAULTS[command])
    path = flags.pop("config", None)
    if path:
        try:
            with open(path) as fp:
                loaded = json.load(fp)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    cfg.update(flags)
    cfg["command"] = command
    return cfg


def render(cfg, result, table):
    if cfg["format"] == "csv":
        return csv_text(*table)
    return dumps({"command": cfg["command"], "version": __version__,
                  "config": cfg, "result": result})


def run(cfg):
    """Execute a resolved config; returns ``(exit_code, report_text)``."""
    _positive(cfg["tol"], "--tol")
    code, result, table = COMMANDS[cfg["command"]](cfg)
    return code, render(cfg, result, table)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        code, text = run(cfg)
    except (InputError, MalformedInputError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if cfg["out"]:
        with open(cfg["out"], "w") as fp:
            fp.write(text)
        meta = {"version": __version__, "config": cfg, "exit_code": code,
                "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat()}
        with open(cfg["out"] + ".meta.json", "w") as fp:
            fp.write(dumps(meta))
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
