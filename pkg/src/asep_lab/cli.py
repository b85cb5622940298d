"""Command-line entry point: ``asep-lab <command> ...``.

Every command writes its CSV output and a ``manifest.json`` into ``--out-dir``
and echoes the main CSV to stdout.  ``asep-lab rerun manifest.json`` repeats a
run from its manifest.

Exit codes: 0 success, 1 usage, 2 numeric nonconvergence, 3 simulation window
violation, 4 identity failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import random
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .errors import AsepLabError, BoundaryViolationError, ConvergenceError, DegeneratePointError, PrecisionError
from .exact import GAMMA_SCALED, RAW, Numerics, prob_position_detail
from .harness import ExperimentPlan, duality_check, manifest_json, run_convergence, software_versions
from .identities import (
    RationalPoint,
    biden_lhs,
    biden_rhs,
    sample_admissible,
    verify_cauchy_det_identity,
)
from .limits import Law, build_table
from .model import Mode, ModelParams
from .simulator import empirical_cdf_csv, simulate_batch

log = logging.getLogger("asep_lab")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NONCONVERGED = 2
EXIT_WINDOW = 3
EXIT_IDENTITY = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text: str) -> list:
    return [float(v) for v in text.replace(",", " ").split()]


def _int_list(text: str) -> list:
    return [int(v) for v in text.replace(",", " ").split()]


def _model_args(p: argparse.ArgumentParser, require_q: bool = True):
    p.add_argument("--p", type=float, required=True, help="right hop rate")
    p.add_argument("--q", type=float, required=require_q, help="left hop rate (p + q = 1)")
    p.add_argument("--rho", type=float, default=1.0, help="Bernoulli density on Z+")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="asep-lab", description="ASEP with step Bernoulli initial data")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--out-dir", default=".", help="directory for CSV and manifest output")
    parser.add_argument("--threads", type=int, default=None, help="worker cap (env ASEP_LAB_THREADS)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    ep = sub.add_parser("exact-prob", help="P(x_m(t) <= x) from the Fredholm formula")
    _model_args(ep)
    ep.add_argument("--m", type=int, required=True)
    ep.add_argument("--t", type=float, required=True)
    ep.add_argument("--x-min", type=int, required=True)
    ep.add_argument("--x-max", type=int, required=True)
    ep.add_argument("--gamma-clock", action="store_true", help="evaluate at time t / (q - p)")
    ep.add_argument("--tol", type=float, default=1e-9)
    ep.add_argument("--max-xi-nodes", type=int, default=Numerics.n_xi_max, help="node cap on the xi circle")
    ep.add_argument("--max-lambda-nodes", type=int, default=Numerics.n_lambda_max, help="node cap on the lambda circle")

    sp = sub.add_parser("simulate", help="Monte Carlo empirical laws of positions and currents")
    _model_args(sp)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--trials", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--m", type=_int_list, default=[], help="particle labels, e.g. '1,3'")
    sp.add_argument("--x", type=_int_list, default=[], help="sites for the current, e.g. '0,5'")

    lp = sub.add_parser("limit-dist", help="tabulate G, F2 or F1^2")
    lp.add_argument("--law", required=True, help="g, f2 or f1sq")
    lp.add_argument("--s-min", type=float, default=-10.0)
    lp.add_argument("--s-max", type=float, default=6.0)
    lp.add_argument("--step", type=float, default=0.1)
    lp.add_argument("--nquad", type=int, default=80)

    vp = sub.add_parser("verify-identities", help="exact checks of the symmetrization and determinant identities")
    vp.add_argument("--kmax", type=int, default=5)
    vp.add_argument("--points-per-k", type=int, default=20)
    vp.add_argument("--seed", type=int, default=0)
    vp.add_argument(
        "--perturb-tau",
        type=Fraction,
        default=Fraction(0),
        help="shift p on the right-hand side only; a nonzero value must make the checks fail",
    )

    cp = sub.add_parser("converge", help="KS convergence of scaled fluctuations")
    cp.add_argument("--p", type=float, default=0.0)
    cp.add_argument("--q", type=float, default=1.0)
    cp.add_argument("--rho", type=float, default=1.0)
    cp.add_argument("--mode", default="position", choices=["position", "current"])
    cp.add_argument("--regime", default="auto", choices=["auto", "tw2", "critical", "gaussian"])
    cp.add_argument("--sigma", type=float, default=None)
    cp.add_argument("--v", type=float, default=None)
    cp.add_argument("--t-list", type=_float_list, required=True)
    cp.add_argument("--trials", type=int, default=2000)
    cp.add_argument("--seed", type=int, default=0)
    cp.add_argument("--compare-laws", type=lambda s: s.split(","), default=[])

    rp = sub.add_parser("rerun", help="repeat a run from its manifest")
    rp.add_argument("manifest")
    return parser


def _threads(args) -> int:
    n = args.threads
    if n is None:
        env = os.environ.get("ASEP_LAB_THREADS")
        n = int(env) if env else 1
    if n < 1:
        raise UsageError("--threads must be positive")
    # the kernels here are serial; the cap is recorded and bounds BLAS pools
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(n))
    return n


def _params(args) -> ModelParams:
    if args.q is None:
        raise UsageError("--q is required")
    return ModelParams(args.p, args.q, args.rho)


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


# -- commands --------------------------------------------------------------------------


def cmd_exact_prob(args, out: Path) -> tuple:
    params = _params(args)
    if args.x_max < args.x_min:
        raise UsageError("--x-max must not be below --x-min")
    if args.max_xi_nodes < Numerics.n_xi or args.max_lambda_nodes < Numerics.n_lambda:
        raise UsageError(f"node caps must be at least {Numerics.n_xi} (xi) and {Numerics.n_lambda} (lambda)")
    numerics = Numerics(tol=args.tol, n_xi_max=args.max_xi_nodes, n_lambda_max=args.max_lambda_nodes)
    convention = GAMMA_SCALED if args.gamma_clock else RAW
    rows = ["x,P(x_m(t)<=x),imag_residual,err_estimate"]
    code = EXIT_OK
    for x in range(args.x_min, args.x_max + 1):
        ev = prob_position_detail(args.m, x, args.t, params, numerics, convention, strict=False)
        if not ev.converged:
            code = EXIT_NONCONVERGED
        rows.append(f"{x},{ev.value:.17g},{ev.imag_residual:.17g},{ev.error_estimate:.17g}")
    text = "\n".join(rows) + "\n"
    _write(out, "exact_prob.csv", text)
    sys.stdout.write(text)
    return code, {"files": ["exact_prob.csv"]}


def cmd_simulate(args, out: Path) -> tuple:
    params = _params(args)
    if not args.m and not args.x:
        raise UsageError("give at least one of --m or --x")
    if args.trials < 1:
        raise UsageError("--trials must be positive")
    batch = simulate_batch(params, args.t, args.trials, args.seed, m_list=args.m, x_list=args.x)
    files = []
    for j, m in enumerate(batch.m_list):
        name = f"position_m{m}.csv"
        _write(out, name, empirical_cdf_csv(batch.positions[:, j]))
        files.append(name)
    for j, x in enumerate(batch.x_list):
        name = f"current_x{x}.csv"
        _write(out, name, empirical_cdf_csv(batch.currents[:, j]))
        files.append(name)
    extra = {"files": files, "window": [batch.window.left_min, batch.window.right_max, batch.window.right_edge]}
    if len(batch.m_list) and len(batch.x_list):
        dual = duality_check(batch)
        extra["duality"] = {"pairs": dual.pairs, "exceptions": dual.exceptions}
    sys.stdout.write("\n".join(files) + "\n")
    return EXIT_OK, extra


def cmd_limit_dist(args, out: Path) -> tuple:
    try:
        law = Law(args.law.lower())
    except ValueError:
        raise UsageError(f"unknown law {args.law!r}; expected g, f2 or f1sq") from None
    if args.step <= 0 or args.s_max < args.s_min:
        raise UsageError("need --step > 0 and --s-max >= --s-min")
    grid = np.round(np.arange(args.s_min, args.s_max + args.step / 2, args.step), 12)
    table = build_table(law, grid, args.nquad)
    text = table.to_csv()
    _write(out, f"limit_{law.value}.csv", text)
    sys.stdout.write(text)
    return EXIT_OK, {"files": [f"limit_{law.value}.csv"], "max_err_estimate": table.tolerance}


def _identity_round(kmax: int, points: int, seed: int, delta: Fraction) -> dict:
    rng = random.Random(seed)
    report = {}
    for k in range(1, kmax + 1):
        res = {"biden": 0, "cauchy_det": 0, "failures": 0, "max_retries": 0}

        def biden(pt: RationalPoint):
            rhs = biden_rhs(pt.with_tau_perturbed(delta) if delta else pt)
            return biden_lhs(pt) == rhs

        def cauchy(pt: RationalPoint):
            return verify_cauchy_det_identity(pt) if k <= 5 else True

        for _ in range(points):
            for name, check in (("biden", biden), ("cauchy_det", cauchy)):
                _, ok, retries = sample_admissible(k, rng, check)
                res["max_retries"] = max(res["max_retries"], retries)
                if ok:
                    res[name] += 1
                else:
                    res["failures"] += 1
        report[str(k)] = res
    return report


def cmd_verify_identities(args, out: Path) -> tuple:
    if not 1 <= args.kmax <= 6:
        raise UsageError("--kmax must lie in 1..6")
    if args.points_per_k < 1:
        raise UsageError("--points-per-k must be positive")
    report = {"checks": _identity_round(args.kmax, args.points_per_k, args.seed, args.perturb_tau)}
    # negative control: a shifted p on one side must be detected
    control = _identity_round(min(args.kmax, 2), 2, args.seed + 1, Fraction(1, 97))
    report["negative_control_detected"] = all(r["failures"] > 0 for k, r in control.items() if int(k) >= 2)
    failures = sum(r["failures"] for r in report["checks"].values())
    report["failures"] = failures
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    _write(out, "identities.json", text)
    sys.stdout.write(text)
    ok = failures == 0 and (report["negative_control_detected"] or args.kmax < 2)
    return (EXIT_OK if ok else EXIT_IDENTITY), {"files": ["identities.json"]}


def cmd_converge(args, out: Path) -> tuple:
    mode = Mode(args.mode)
    value = args.sigma if mode is Mode.POSITION else args.v
    if value is None:
        raise UsageError("--sigma is required in position mode, --v in current mode")
    try:
        plan = ExperimentPlan(
            ModelParams(args.p, args.q, args.rho),
            mode,
            args.regime,
            value,
            tuple(args.t_list),
            args.trials,
            args.seed,
            tuple(args.compare_laws),
        )
    except (ValueError, AsepLabError) as exc:
        raise UsageError(str(exc)) from None
    report = run_convergence(plan)
    text = report.to_csv()
    _write(out, "convergence.csv", text)
    sys.stdout.write(text)
    return EXIT_OK, {"files": ["convergence.csv"], "report": report.manifest()}


COMMANDS = {
    "exact-prob": cmd_exact_prob,
    "simulate": cmd_simulate,
    "limit-dist": cmd_limit_dist,
    "verify-identities": cmd_verify_identities,
    "converge": cmd_converge,
}


def _run(argv: list) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command is None:
        raise UsageError("a command is required")
    if args.command == "rerun":
        manifest = json.loads(Path(args.manifest).read_text())
        return _run(manifest["argv"])
    threads = _threads(args)
    out = Path(args.out_dir)
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    code, extra = COMMANDS[args.command](args, out)
    settings = {k: (str(v) if isinstance(v, Fraction) else v) for k, v in vars(args).items()}
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "parameters": settings,
        "threads": threads,
        "versions": software_versions(),
        "started": started,
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "exit_code": code,
        **extra,
    }
    _write(out, "manifest.json", manifest_json(manifest) + "\n")
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        return _run(argv)
    except UsageError as exc:
        print(f"asep-lab: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BoundaryViolationError as exc:
        print(f"asep-lab: simulation window violated: {exc}", file=sys.stderr)
        return EXIT_WINDOW
    except (ConvergenceError, PrecisionError) as exc:
        print(f"asep-lab: not converged: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except DegeneratePointError as exc:
        print(f"asep-lab: identity check could not sample a point: {exc}", file=sys.stderr)
        return EXIT_IDENTITY
    except (ValueError, AsepLabError) as exc:
        print(f"asep-lab: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
