"""Command-line front door.

Subcommands: expand | solve | verify | sweep.  A JSON config file can hold
any long-flag value (dashes as underscores); explicit flags win.  All JSON
output is sorted and indented, so identical configs produce byte-identical
files.  Exit codes: 0 success, 1 bad config or usage, 2 degeneracy, 3
numerical failure (including failed verify claims).
"""

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .errors import DegeneracyError, DiagnosticError, NumericalFailure
from .expansion import BoundaryData, expand, table_to_json
from .geometry import (Annulus, Ball, BarrierSpec, barrier_check,
                       minimal_sphere, obstruction_residual)
from .radial import (RadialProblem, corner_metrics, corner_report_json,
                     exact_ball, shoot, solution_to_csv, solve_annulus,
                     xi_ode_residual)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DEGENERACY = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


class ConfigError(ValueError):
    pass


def _config_line(path, key):
    """Best-effort line number of a key in the config file, for messages."""
    try:
        with open(path) as fh:
            for i, line in enumerate(fh, 1):
                if f'"{key}"' in line:
                    return i
    except OSError:
        pass
    return None


def _load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return cfg


def _merge(args, key, default=None):
    """Flag if given, else config value, else default."""
    val = getattr(args, key, None)
    if val is not None:
        return val
    cfg = getattr(args, "_cfg", None) or {}
    if key in cfg:
        return cfg[key]
    return default


def _require(args, key, what):
    val = _merge(args, key)
    if val is None:
        raise ConfigError(f"{what} is required (--{key.replace('_', '-')})")
    return val


def _parse_kappa(raw):
    if isinstance(raw, (list, tuple)):
        return tuple(float(v) for v in raw)
    try:
        return tuple(float(tok) for tok in str(raw).split(","))
    except ValueError:
        raise ConfigError(f"cannot parse curvature list {raw!r}")


def _parse_domain(args):
    ball = _merge(args, "ball")
    annulus = _merge(args, "annulus")
    if (ball is None) == (annulus is None):
        raise ConfigError("exactly one of --ball R or --annulus a,b")
    if ball is not None:
        return Ball(float(ball))
    if isinstance(annulus, (list, tuple)):
        a, b = (float(v) for v in annulus)
    else:
        try:
            a, b = (float(tok) for tok in str(annulus).split(","))
        except ValueError:
            raise ConfigError(f"cannot parse annulus {annulus!r}")
    return Annulus(a, b)


def _write_json(payload, path):
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    with open(path, "w") as fh:
        fh.write(text)
    return path


def _figure_path(out, suffix):
    root, _ = os.path.splitext(out)
    return f"{root}_{suffix}.png"


# -- expand -------------------------------------------------------------------

def cmd_expand(args):
    n = int(_require(args, "n", "dimension"))
    k = int(_require(args, "k", "curvature index"))
    kappa = _parse_kappa(_require(args, "kappa", "principal curvatures"))
    order = int(_merge(args, "order", 2 * n))
    mu = float(_merge(args, "mu", 0.0))
    bd = BoundaryData(n=n, k=k, kappa=kappa)
    table = expand(bd, order=order, mu=mu)
    out = _merge(args, "out", "table.json")
    with open(out, "w") as fh:
        fh.write(table_to_json(table))
    print(f"wrote {out} (order {table.order}, c_n1 = {table.c_n1:.17g})")
    if _merge(args, "figures", False):
        from .report import coefficient_figure
        print("wrote", coefficient_figure(table, _figure_path(out,
                                                              "coeffs")))
    return EXIT_OK


# -- solve --------------------------------------------------------------------

def cmd_solve(args):
    domain = _parse_domain(args)
    n = int(_require(args, "n", "dimension"))
    k = int(_require(args, "k", "curvature index"))
    J = int(_merge(args, "grid", 2000))
    epsilon = _merge(args, "epsilon")
    mu = float(_merge(args, "mu", 0.0))
    prob = RadialProblem(domain, n, k, J=J,
                         epsilon=None if epsilon is None else float(epsilon),
                         mu=mu)
    if isinstance(domain, Ball):
        if mu != 0.0:
            # the one-parameter interior family: integrate from the
            # boundary expansion with the requested free coefficient
            sol = shoot(prob, mu=mu)
            if sol.outcome != "completed":
                raise DegeneracyError(
                    f"shot with mu = {mu:g} ended in {sol.outcome} at "
                    f"r = {sol.r[0]:.6g}")
        else:
            sol = exact_ball(domain.R, n, k, J=J,
                             epsilon=None if epsilon is None
                             else float(epsilon))
        sol.corner = corner_metrics(sol)
    else:
        sol = solve_annulus(prob, method=_merge(args, "method", "newton"))
    out_csv = _merge(args, "out_csv", "solution.csv")
    out_corner = _merge(args, "out_corner", "corner.json")
    solution_to_csv(sol, out_csv)
    with open(out_corner, "w") as fh:
        fh.write(corner_report_json(sol))
    print(f"wrote {out_csv} and {out_corner} "
          f"(residual {sol.residual_max():.3e})")
    if _merge(args, "figures", False):
        from .report import area_figure, corner_figure, profile_figure
        print("wrote", profile_figure(sol, _figure_path(out_csv,
                                                        "profile")))
        print("wrote", area_figure(sol, _figure_path(out_csv, "area")))
        if (sol.corner or {}).get("found"):
            print("wrote", corner_figure(sol, _figure_path(out_csv,
                                                           "corner")))
    return EXIT_OK


# -- verify -------------------------------------------------------------------

def _verdict(name, measured, threshold, passed):
    return {"criterion": name, "measured": measured,
            "threshold": threshold, "passed": bool(passed)}


def _verify_barrier(args):
    domain = _parse_domain(args)
    if not isinstance(domain, Ball):
        raise ConfigError("the barrier suite runs on a ball")
    n = int(_require(args, "n", "dimension"))
    k = int(_require(args, "k", "curvature index"))
    bd = BoundaryData(n=n, k=k, kappa=(1.0 / domain.R,) * (n - 1))
    table = expand(bd, order=n, mu=0.0)
    spec = BarrierSpec(
        beta=float(_merge(args, "beta", 1.0)),
        theta=(None if _merge(args, "theta") is None
               else float(_merge(args, "theta"))),
        delta=float(_merge(args, "delta", 0.05)))
    rep = barrier_check(bd, table, spec)
    checks = [
        _verdict("barrier-upper-sign", rep["max_G_plus"], "< 0",
                 rep["max_G_plus"] < 0),
        _verdict("barrier-lower-sign", rep["min_G_minus"], "> 0",
                 rep["min_G_minus"] > 0),
        _verdict("barrier-delta1-covers-delta", rep["empirical_delta1"],
                 f">= {spec.delta}",
                 rep["empirical_delta1"] >= spec.delta),
    ]
    extra = {"report": rep}
    figure = None
    if _merge(args, "figures", False):
        from .report import barrier_figure
        figure = lambda out: barrier_figure(  # noqa: E731
            table, spec, _figure_path(out, "barrier"))
    return checks, extra, figure


def _verify_obstruction(args):
    domain = _parse_domain(args)
    n = int(_require(args, "n", "dimension"))
    k = int(_require(args, "k", "curvature index"))
    J = int(_merge(args, "grid", 2000))
    rng = np.random.default_rng(int(_merge(args, "seed", 0)))
    if isinstance(domain, Ball):
        sol = exact_ball(domain.R, n, k, J=J)
        lo, hi = sol.r[2], sol.r[-3]
        radii = np.sort(rng.uniform(lo, hi, 40))
    else:
        sol = solve_annulus(RadialProblem(domain, n, k, J=J))
        r_star = domain.corner_radius
        gap = 5 * (sol.r[-1] - sol.r[0]) / J
        radii = np.sort(np.concatenate([
            rng.uniform(sol.r[2], r_star - gap, 20),
            rng.uniform(r_star + gap, sol.r[-3], 20)]))
    vals = np.array([obstruction_residual(sol, float(x)) for x in radii])
    floor = -1e-6
    checks = [_verdict("obstruction-nonnegative", float(vals.min()),
                       f">= {floor}", vals.min() >= floor)]
    extra = {"samples": {f"{x:.17g}": float(v)
                         for x, v in zip(radii, vals)}}
    figure = None
    if _merge(args, "figures", False):
        from .report import area_figure
        figure = lambda out: area_figure(  # noqa: E731
            sol, _figure_path(out, "area"))
    return checks, extra, figure


def _verify_corner(args):
    domain = _parse_domain(args)
    if not isinstance(domain, Annulus):
        raise ConfigError("the corner suite runs on an annulus")
    n = int(_require(args, "n", "dimension"))
    k = int(_require(args, "k", "curvature index"))
    J = int(_merge(args, "grid", 4096))
    sol = solve_annulus(RadialProblem(domain, n, k, J=J))
    corner = sol.corner or {}
    r_star = domain.corner_radius
    h = (math.log(domain.b) - math.log(domain.a)) / J * r_star
    if k == 1:
        checks = [_verdict("corner-absent-for-k1",
                           corner.get("max_rel_mismatch"),
                           "found == False", not corner.get("found"))]
        extra = {"corner": corner}
    elif not corner.get("found"):
        checks = [_verdict("corner-found", corner.get("max_rel_mismatch"),
                           "found == True", False)]
        extra = {"corner": corner}
    else:
        coarse = solve_annulus(RadialProblem(domain, n, k, J=J // 2))
        richardson = abs(corner["jump"] - coarse.corner.get("jump",
                                                            math.nan))
        target = 1.0 / k
        checks = [
            _verdict("corner-location", corner["r_star"],
                     f"|r* - {r_star:.6g}| <= {2 * h:.3g}",
                     abs(corner["r_star"] - r_star) <= 2 * h),
            _verdict("corner-jump-significant", corner["jump"],
                     f">= 10x Richardson ({10 * richardson:.3g})",
                     corner["jump"] >= 10 * richardson),
            _verdict("corner-holder-exponent", corner["holder_exponent"],
                     f"within 0.15 of {target:.4g}",
                     abs(corner["holder_exponent"] - target) <= 0.15),
        ]
        extra = {"corner": corner, "richardson": richardson}
    figure = None
    if _merge(args, "figures", False):
        from .report import corner_figure, profile_figure

        def figure(out):
            paths = [profile_figure(sol, _figure_path(out, "profile"))]
            if corner.get("found"):
                paths.append(corner_figure(sol, _figure_path(out,
                                                             "corner")))
            return ", ".join(paths)
    return checks, extra, figure


def _verify_collar(args):
    domain = _parse_domain(args)
    if not isinstance(domain, Ball):
        raise ConfigError("the collar suite runs on a ball")
    n = int(_require(args, "n", "dimension"))
    k = int(_require(args, "k", "curvature index"))
    R = domain.R
    mu_star = 1.0 / (n * (2 * R) ** n)
    bd = BoundaryData(n=n, k=k, kappa=(1.0 / R,) * (n - 1))
    table = expand(bd, order=n + 2, mu=mu_star)
    sol = exact_ball(R, n, k, J=int(_merge(args, "grid", 4000)))
    measure = xi_ode_residual(sol, table)
    checks = [_verdict("collar-remainder-rate", measure, "<= 1e-3",
                       measure <= 1e-3)]
    return checks, {"mu": mu_star}, None


_SUITES = {
    "barrier": _verify_barrier,
    "obstruction": _verify_obstruction,
    "corner": _verify_corner,
    "collar": _verify_collar,
}


def cmd_verify(args):
    suite = args.suite
    checks, extra, figure = _SUITES[suite](args)
    passed = all(c["passed"] for c in checks)
    bundle = {"suite": suite, "passed": passed, "checks": checks}
    bundle.update(extra)
    out = _merge(args, "out", f"verify_{suite}.json")
    _write_json(bundle, out)
    for c in checks:
        mark = "pass" if c["passed"] else "FAIL"
        print(f"[{mark}] {c['criterion']}: {c['measured']} "
              f"(want {c['threshold']})")
    print(f"wrote {out}")
    if figure is not None:
        print("wrote", figure(out))
    return EXIT_OK if passed else EXIT_NUMERICAL


# -- sweep --------------------------------------------------------------------

def _sweep_one(task):
    """Worker: one annulus solve, summarized.  Must stay picklable."""
    a, b, n, k, J = task
    sol = solve_annulus(RadialProblem(Annulus(a, b), n, k, J=J))
    corner = sol.corner or {}
    ms = minimal_sphere(sol)
    return {
        "a": a, "b": b, "n": n, "k": k, "J": J,
        "iterations": sol.iterations,
        "residual": sol.residual_max(),
        "corner_found": bool(corner.get("found")),
        "r_star": corner.get("r_star"),
        "jump": corner.get("jump"),
        "holder_exponent": corner.get("holder_exponent"),
        "r_min": ms.r_min,
        "minimal_status": ms.status,
    }


def cmd_sweep(args):
    domain = _parse_domain(args)
    if not isinstance(domain, Annulus):
        raise ConfigError("sweep runs annulus solves")
    J = int(_merge(args, "grid", 1024))
    pairs_raw = _merge(args, "pairs", "3:2,4:2,4:3")
    try:
        pairs = sorted({(int(p.split(":")[0]), int(p.split(":")[1]))
                        for p in str(pairs_raw).split(",")})
    except (ValueError, IndexError):
        raise ConfigError(f"cannot parse pairs {pairs_raw!r} "
                          "(expected like 3:2,4:3)")
    tasks = [(domain.a, domain.b, n, k, J) for (n, k) in pairs]
    workers = int(os.environ.get("SKLERN_THREADS", os.cpu_count() or 1))
    workers = max(1, min(workers, len(tasks)))
    if workers == 1:
        rows = [_sweep_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_one, tasks))
    out = _merge(args, "out", "sweep.json")
    _write_json({"a": domain.a, "b": domain.b, "grid": J, "rows": rows},
                out)
    for row in rows:
        print(f"n={row['n']} k={row['k']}: corner={row['corner_found']} "
              f"r*={row['r_star']} r_min={row['r_min']:.6g}")
    print(f"wrote {out}")
    return EXIT_OK


# -- wiring -------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="JSON file with defaults for any flag")
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--out")
    p.add_argument("--figures", action="store_true", default=None,
                   help="render PNG figures next to the data files")


def build_parser():
    parser = _Parser(prog="sklern")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("expand", help="boundary expansion coefficients")
    _add_common(p)
    p.add_argument("--kappa", help="principal curvatures, comma separated")
    p.add_argument("--order", type=int)
    p.add_argument("--mu", type=float)
    p.set_defaults(fn=cmd_expand)

    p = sub.add_parser("solve", help="radial solve on a ball or annulus")
    _add_common(p)
    p.add_argument("--ball", type=float, metavar="R")
    p.add_argument("--annulus", metavar="A,B")
    p.add_argument("--grid", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--method", choices=("newton", "gauss-seidel"))
    p.add_argument("--out-csv", dest="out_csv")
    p.add_argument("--out-corner", dest="out_corner")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("verify", help="named verification suites")
    p.add_argument("suite", choices=sorted(_SUITES))
    _add_common(p)
    p.add_argument("--ball", type=float, metavar="R")
    p.add_argument("--annulus", metavar="A,B")
    p.add_argument("--grid", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("sweep", help="parallel (n,k) sweep on one annulus")
    _add_common(p)
    p.add_argument("--annulus", metavar="A,B")
    p.add_argument("--pairs", help="n:k list, like 3:2,4:2,4:3")
    p.add_argument("--grid", type=int)
    p.set_defaults(fn=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args._cfg = _load_config(args.config) if args.config else {}
    except ConfigError as exc:
        print(f"sklern: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.fn(args)
    except ConfigError as exc:
        hint = ""
        if args.config:
            key = str(exc).split()[0]
            line = _config_line(args.config, key)
            if line is not None:
                hint = f" (config line {line})"
        print(f"sklern: {exc}{hint}", file=sys.stderr)
        return EXIT_CONFIG
    except DegeneracyError as exc:
        print(f"sklern: degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERACY
    except (NumericalFailure, DiagnosticError) as exc:
        print(f"sklern: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"sklern: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
