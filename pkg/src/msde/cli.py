"""``msde`` command-line tool.

Every subcommand accepts ``--config FILE`` (YAML or JSON mapping of option
names to values), ``--seed``, ``--workers`` and ``--out``. Values given on the
command line override the config file. Exit codes: 0 pass, 1 claim failure,
2 usage error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence

import numpy as np
import yaml

from . import __version__, chaos, spaces
from .errors import MsdeError, UsageError, ValidationError
from .fields import ZOO, atomic_write, zoo_field
from .simulate import (default_drift_cap, density_estimate, exit_time_functional, load_ensemble,
                       modulus_statistics, occupation_functional, save_ensemble, simulate_paths)

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3

# dests owned by argparse itself; never accepted from a config file
_INTERNAL = {"command", "action", "config", "handler"}


# -- shared helpers ------------------------------------------------------------


def _out_path(args, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _write_json(args, name: str, payload) -> str:
    path = _out_path(args, name)
    atomic_write(path, (json.dumps(payload, indent=2, default=_json_default) + "\n").encode())
    return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _require_seed(args) -> int:
    if args.seed is None:
        raise UsageError(f"'{args.command}' is stochastic; pass --seed")
    return int(args.seed)


def _vector(text, d: int, name: str) -> np.ndarray:
    if text is None:
        return np.zeros(d)
    vals = np.asarray(text if isinstance(text, (list, tuple)) else
                      [float(v) for v in str(text).split(",")], dtype=float).reshape(-1)
    if vals.size == 1:
        vals = np.full(d, vals[0])
    if vals.size != d:
        raise UsageError(f"--{name} needs {d} components, got {vals.size}")
    return vals


def _field_from(args):
    kw = {"d": args.d, "gamma": args.gamma, "amplitude": args.amplitude}
    if args.drift is not None:
        kw["drift"] = _vector(args.drift, args.d, "drift")
    if args.p_fractal is not None:
        kw["p"] = args.p_fractal
    return zoo_field(args.field, **kw)


def _sampler(args) -> spaces.SamplerSpec:
    return spaces.SamplerSpec(n_points=args.points, centers_per_axis=args.centers,
                              seed=0 if args.seed is None else int(args.seed), workers=args.workers)


def _named_function(name: str):
    table = {
        "x": lambda x: x[:, 0],
        "x2": lambda x: x[:, 0] ** 2,
        "norm2": lambda x: np.sum(x * x, axis=1),
        "cos": lambda x: np.cos(x[:, 0]),
    }
    if name not in table:
        raise UsageError(f"unknown function {name!r}; choose from {', '.join(table)}")
    return table[name]


# -- subcommands -------------------------------------------------------------


def cmd_certify(args) -> int:
    field = _field_from(args)
    report = spaces.certify_assumption(field, args.theta, args.bhat, args.r_a, args.r_b, args.p_b,
                                       _sampler(args), split_p=args.split_p, N_hat=args.n_hat)
    path = _write_json(args, "certificates.json", report.to_json())
    for cert in report.certificates:
        status = "pass" if cert.passed else "FAIL"
        limit = "" if cert.threshold is None else f" <= {cert.threshold:g}"
        print(f"{cert.quantity:<28} {cert.value:.6g}{limit}  {status}")
    print(f"certificates: {path}")
    return EXIT_PASS if report.passed else EXIT_FAIL


def cmd_split(args) -> int:
    field = _field_from(args)
    split = spaces.split_drift(field, args.p, args.n_hat, (0.0, args.T), n_t=args.n_t,
                               spatial_nodes=args.nodes)
    lhs, rhs = split.lambda_sq_integral, split.rhs_integral
    rel = abs(lhs - rhs) / max(abs(rhs), 1e-300)
    payload = {"p": args.p, "N_hat": args.n_hat, "lambda_sq_integral": lhs, "rhs_integral": rhs,
               "relative_gap": rel, "b_B_norm": split.b_B_norm, "tolerance": args.tolerance,
               "pass": bool(rel <= args.tolerance)}
    path = _write_json(args, "split.json", payload)
    print(f"int lambda^2 dt      {lhs:.8g}")
    print(f"N_hat^2 int ... dt   {rhs:.8g}")
    print(f"relative gap         {rel:.3g}")
    print(f"split: {path}")
    return EXIT_PASS if payload["pass"] else EXIT_FAIL


def _ensemble(args, seed: int):
    field = _field_from(args)
    cap = None if args.no_drift_cap else (args.drift_cap or default_drift_cap(args.dt))
    return simulate_paths(field, args.t0, _vector(args.x0, args.d, "x0"), args.T, args.dt, args.M, seed,
                          drift_cap=cap, workers=args.workers)


def cmd_simulate(args) -> int:
    seed = _require_seed(args)
    ens = _ensemble(args, seed)
    path = _out_path(args, args.name)
    save_ensemble(path, ens)
    term = ens.terminal()
    summary = {"field": args.field, "d": ens.d, "M": ens.M, "dt": ens.dt, "T": ens.T, "t0": ens.t0,
               "x0": ens.x0, "seed": seed, "drift_cap": ens.drift_cap, "paths_file": os.path.basename(path),
               "terminal_mean": term.mean(axis=0), "terminal_cov": np.atleast_2d(np.cov(term.T))}
    _write_json(args, args.name + ".json", summary)
    print(f"wrote {ens.M} paths x {ens.steps + 1} steps to {path}")
    return EXIT_PASS


def cmd_estimate(args) -> int:
    if args.paths:
        ens = load_ensemble(args.paths, workers=args.workers)
        seed = ens.seed
    else:
        seed = _require_seed(args)
        ens = _ensemble(args, seed)
    payload = {"functional": args.functional, "M": ens.M, "dt": ens.dt, "seed": seed}
    if args.functional == "occupation":
        r, t_end = args.radius, ens.t0 + ens.T
        est = occupation_functional(
            ens, lambda t, x: ((np.sum(x * x, axis=1) < r * r) & (t <= t_end)).astype(float), args.m)
        payload.update(value=est.value, std_error=est.std_error, m=args.m, radius=r)
    elif args.functional == "exit-time":
        est = exit_time_functional(ens, ens.t0, ens.x0, args.rho)
        payload.update(value=est.value, std_error=est.std_error, rho=args.rho)
    elif args.functional == "modulus":
        res = modulus_statistics(ens, args.n, args.windows)
        payload.update(value=res.slope, std_error=None, n=args.n, windows=list(args.windows),
                       estimates=res.estimates)
    else:
        t = ens.t0 + ens.T if args.t is None else args.t
        est = density_estimate(ens, t, p_prime=args.p_prime)
        payload.update(value=est.lp_norm, std_error=None, t=t, p_prime=args.p_prime,
                       bandwidth=est.bandwidth)
    path = _write_json(args, "estimate.json", payload)
    se = payload.get("std_error")
    print(f"{args.functional}: {payload['value']:.8g}" + ("" if se is None else f" +- {se:.3g}"))
    print(f"estimate: {path}")
    return EXIT_PASS


def cmd_chaos(args) -> int:
    from .verify.scenarios import chaos_case

    if args.action == "residual":
        field, f, oracle = chaos_case(args.case, args.order)
        exp = chaos.chaos_coefficients(field, f, args.r, args.order + 1, seed=0 if args.seed is None else args.seed)
        value = exp.residual(args.order)
        payload = {"case": args.case, "order": args.order, "r": args.r, "residual_energy": value,
                   "oracle": oracle, "quadrature_error": exp.levels[args.order + 1].quadrature_error,
                   "expansion": exp.to_json()}
        if args.mc_paths:
            seed = _require_seed(args)
            ens = simulate_paths(field, 0.0, np.zeros(field.d), args.r, args.dt, args.mc_paths, seed,
                                 workers=args.workers)
            proj = chaos.project_mc(ens, f, args.r, min(args.order, 3))
            payload["monte_carlo"] = {"residual": proj.residual(args.order),
                                      "std_error": float(proj.std_errors[args.order]), "M": ens.M}
        _write_json(args, "chaos_residual.json", payload)
        print(f"{value:.6f}")
        return EXIT_PASS
    if args.action == "range":
        sigma = np.asarray(json.loads(args.sigma), dtype=float)
        if sigma.ndim != 2:
            raise UsageError("--sigma must be a JSON matrix")
        rp = chaos.range_projection(sigma)
        defects = rp.defects()
        _write_json(args, "range_projection.json", {"sigma": sigma, "Sigma": rp.Sigma, "defects": defects})
        print(np.array2string(rp.Sigma, precision=6, suppress_small=True))
        return EXIT_PASS
    field = _field_from(args)
    x0 = _vector(args.x0, args.d, "x0")
    sol = chaos.semigroup_solve(field, _named_function(args.function), 0.0, args.r, x0=x0, keep="ends")
    value = float(sol.at(0.0, x0[None, :])[0])
    _write_json(args, "semigroup.json", {"function": args.function, "r": args.r, "x0": x0, "value": value,
                                         "max_principle_gap": sol.max_principle_gap()})
    print(f"{value:.8g}")
    return EXIT_PASS


def _resolve_suite(name: str) -> str:
    from .verify import builtin_suite_path

    if os.path.exists(name):
        return name
    path = builtin_suite_path(name)
    if path is None:
        raise UsageError(f"suite {name!r} is neither a file nor a bundled suite")
    return path


def cmd_verify(args) -> int:
    from .verify import run_suite

    report = run_suite(_resolve_suite(args.suite), args.workers, args.claim_workers)
    report.write(_out_path(args, "report.json"), _out_path(args, "report.txt"))
    print(report.table())
    print(f"report: {os.path.join(args.out, 'report.json')}")
    return EXIT_PASS if report.passed else EXIT_FAIL


def cmd_report(args) -> int:
    from .verify import VerificationReport

    path = args.report or os.path.join(args.out, "report.json")
    try:
        with open(path) as fh:
            data = json.load(fh)
        report = VerificationReport(data["rows"], data.get("environment", {}), data.get("wall_time", 0.0),
                                    data.get("suite"))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot read report {path}: {exc}") from None
    print(json.dumps(data, indent=2) if args.format == "json" else report.table())
    return EXIT_PASS if report.passed else EXIT_FAIL


# -- parser ------------------------------------------------------------------


def _common_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", help="YAML or JSON file of option values; flags override it")
    g.add_argument("--seed", type=int, help="master seed; required for Monte Carlo work")
    g.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="parallel workers")
    g.add_argument("--out", default="msde-out", help="output directory")
    return p


def _field_options(p: argparse.ArgumentParser, d: int = 2, field: str = "bm") -> None:
    g = p.add_argument_group("field")
    g.add_argument("--field", default=field, help=f"one of {', '.join(ZOO)} or an MSDEGRID path")
    g.add_argument("--d", type=int, default=d, help="dimension")
    g.add_argument("--gamma", type=float, default=0.1, help="strength of inverse/parabolic drifts")
    g.add_argument("--amplitude", type=float, default=1.0)
    g.add_argument("--drift", help="constant drift vector, comma separated")
    g.add_argument("--p-fractal", type=float, help="integrability exponent of the fractal drift")


def _path_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("paths")
    g.add_argument("--M", type=int, default=10000, help="number of paths")
    g.add_argument("--T", type=float, default=1.0, help="horizon length")
    g.add_argument("--t0", type=float, default=0.0)
    g.add_argument("--dt", type=float, default=0.01)
    g.add_argument("--x0", help="start point, comma separated or one value for all axes")
    g.add_argument("--drift-cap", type=float, help="cap on |b|; defaults to dt^-1/2")
    g.add_argument("--no-drift-cap", action="store_true", help="simulate the raw drift")


def build_parser() -> argparse.ArgumentParser:
    common = _common_parent()
    parser = argparse.ArgumentParser(prog="msde", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"msde {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("certify", parents=[common], help="check oscillation and Morrey thresholds on samples")
    _field_options(p, d=3, field="zero")
    p.add_argument("--theta", type=float, default=0.1, help="oscillation threshold")
    p.add_argument("--bhat", type=float, default=1.0, help="Morrey threshold")
    p.add_argument("--r-a", type=float, default=0.5)
    p.add_argument("--r-b", type=float, default=0.5)
    p.add_argument("--p-b", type=float, default=2.0)
    p.add_argument("--split-p", type=float, help="also split the drift with this p > d")
    p.add_argument("--n-hat", type=float, default=1.0)
    p.add_argument("--points", type=int, default=2048, help="samples per ball")
    p.add_argument("--centers", type=int, default=3, help="lattice centers per axis")
    p.set_defaults(handler=cmd_certify)

    p = sub.add_parser("split", parents=[common], help="threshold split and its two quadratures")
    _field_options(p, field="bump")
    p.add_argument("--p", type=float, default=4.0)
    p.add_argument("--n-hat", type=float, default=1.0)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--n-t", type=int, default=32)
    p.add_argument("--nodes", type=int, default=48)
    p.add_argument("--tolerance", type=float, default=0.005)
    p.set_defaults(handler=cmd_split)

    p = sub.add_parser("simulate", parents=[common], help="write an Euler-Maruyama ensemble")
    _field_options(p)
    _path_options(p)
    p.add_argument("--name", default="paths.msdepath", help="output file name inside --out")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("estimate", parents=[common], help="Monte Carlo path functionals")
    _field_options(p)
    _path_options(p)
    p.add_argument("functional", choices=("occupation", "exit-time", "modulus", "density"))
    p.add_argument("--paths", help="read an existing ensemble instead of simulating")
    p.add_argument("--radius", type=float, default=1.0, help="ball radius of the occupation indicator")
    p.add_argument("--m", type=int, default=1, help="moment of the occupation time")
    p.add_argument("--rho", type=float, default=0.5, help="cylinder radius")
    p.add_argument("--n", type=float, default=2.0, help="moment of the window supremum")
    p.add_argument("--windows", type=int, nargs="+", default=[4, 8, 16, 32, 64], help="window lengths in steps")
    p.add_argument("--t", type=float, help="density time; defaults to the horizon end")
    p.add_argument("--p-prime", type=float, default=2.0)
    p.set_defaults(handler=cmd_estimate)

    p = sub.add_parser("chaos", parents=[common], help="chaos residuals, range projection, semigroup values")
    _field_options(p, d=1)
    p.add_argument("action", choices=("residual", "range", "semigroup"))
    p.add_argument("--case", default="brownian-x2", choices=("brownian-x2", "brownian-x", "ou-x"))
    p.add_argument("--order", type=int, default=1)
    p.add_argument("--r", type=float, default=1.0, help="horizon")
    p.add_argument("--mc-paths", type=int, default=0, help="also project M Monte Carlo paths (needs --seed)")
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--sigma", default="[[1, 0], [0, 0]]", help="JSON matrix for the range action")
    p.add_argument("--function", default="x2", help="terminal data for the semigroup action")
    p.add_argument("--x0", help="evaluation point")
    p.set_defaults(handler=cmd_chaos)

    p = sub.add_parser("verify", parents=[common], help="run a claim suite")
    p.add_argument("--suite", default="default.suite", help="suite file or bundled suite name")
    p.add_argument("--claim-workers", type=int, default=1, help="claims run concurrently")
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("report", parents=[common], help="print a stored verification report")
    p.add_argument("--report", help="report.json; defaults to OUT/report.json")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(handler=cmd_report)
    return parser


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ValidationError(f"config {path} is not valid YAML/JSON: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValidationError(f"config {path} must be a mapping")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if args.config:
        cfg = _load_config(args.config)
        sub = _subparser(parser, args.command)
        known = {a.dest for a in sub._actions} - _INTERNAL - {"help"}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise ValidationError(f"unknown config keys for '{args.command}': {', '.join(unknown)}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")
    return args


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
        return int(args.handler(args))
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0) if isinstance(exc.code, int) else EXIT_USAGE
    except MsdeError as exc:
        print(f"msde: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001 -- any other failure is a runtime error
        print(f"msde: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
