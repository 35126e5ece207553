"""Command-line entry point.

Matrices are read and written as headerless CSV, reports as JSON with
sorted keys, simulation output as tidy CSV. Exit codes: 0 ok, 2 usage,
3 data error, 4 numerical failure. Every non-zero exit writes one line
``code=<c>, msg=<text>`` to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from typing import List, Optional

import numpy as np

from .errors import DataError, NumericalError, ParseError
from .fixpoint import FixpointProblem, solve_qbar
from .matcore import norm_report
from .matio import format_matrix_csv, read_matrix
from .perturb import perturbation_report
from .poet import PilotTrio, PoetConfig, poet
from .robust import (
    HuberConfig,
    huber_cov,
    kendall_marginal_cov,
    kendall_spatial,
    plugin_v,
    sample_cov,
)
from .simharness import (
    FactorExperimentConfig,
    PerturbExperimentConfig,
    rows_to_csv,
    run_factor_experiment,
    run_perturb_experiment,
)
from .spectra import eig_sym, eig_top, svd

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _clean(obj):
    """Make ``obj`` strict-JSON safe: arrays to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", exc.lineno, exc.colno) from None


def _v_value(args, X) -> Optional[float]:
    if args.v is None:
        return None
    if args.v == "auto":
        return plugin_v(X)
    try:
        v = float(args.v)
    except ValueError:
        raise UsageError(f"--v expects a positive number or 'auto', got {args.v!r}") from None
    return v


def _huber(X, v, heuristic, rule="ratio"):
    n, d = X.shape
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        cfg = HuberConfig.default(n, d, v, heuristic_v=heuristic, rule=rule)
    return huber_cov(X, cfg).sigma_hat, cfg


# ----------------------------------------------------------------- commands


def cmd_norms(args):
    M = read_matrix(args.matrix)
    return dumps(norm_report(M, args.rank).to_dict())


def cmd_eig(args):
    M = read_matrix(args.matrix)
    if args.svd:
        r = args.rank or min(M.shape)
        U, s, V = svd(M, r)
        return dumps({"singular_values": s, "U": U, "V": V})
    dec = eig_sym(M, method=args.method)
    r = args.rank or dec.values.size
    return dumps({"values": dec.values[:r], "vectors": dec.vectors[:, :r], "method": args.method})


def cmd_bound(args):
    A, E = read_matrix(args.A), read_matrix(args.E)
    return dumps(perturbation_report(A, E, args.rank, mode=args.mode, delta=args.delta).to_dict())


def cmd_fixpoint(args):
    A, E = read_matrix(args.A), read_matrix(args.E)
    if args.mode == "rect":
        p = FixpointProblem.from_rectangular(A, E, args.rank)
    else:
        p = FixpointProblem.build(A, E, args.rank)
    sol = solve_qbar(p, tol=args.tol, max_iter=args.max_iter)
    if args.vbar_out:
        with open(args.vbar_out, "w", newline="") as fh:
            fh.write(format_matrix_csv(sol.Vbar))
    out = sol.to_dict()
    out["precondition"] = p.precondition
    out["qbar_bound"] = p.omega / math.sqrt(p.d)
    return dumps(out)


def _estimate(X, method, args):
    v = _v_value(args, X)
    if method == "sample":
        return sample_cov(X, center=args.center).sigma_hat
    if method == "kendall-spatial":
        return kendall_spatial(X)
    if v is None:
        raise UsageError(f"--v is required for method {method!r} (a number, or 'auto' for the plug-in heuristic)")
    Xc = X - X.mean(axis=0) if args.center else X
    S, _ = _huber(Xc, v, args.v == "auto", args.alpha_rule)
    if method == "huber":
        return S
    return kendall_marginal_cov(X, np.sqrt(np.clip(np.diag(S), 0.0, None))).sigma_hat


def cmd_estimate(args):
    X = read_matrix(args.data)
    S = _estimate(X, args.method, args)
    _emit(format_matrix_csv(S), args.out)
    return None


def cmd_poet(args):
    X = read_matrix(args.data)
    pilot_name = args.pilot
    if pilot_name == "kendall-spatial-evec":
        sk = _estimate(X, "kendall-marginal", args)
        _, Vs = eig_top(kendall_spatial(X), args.rank, by="value")
        pilot = PilotTrio.from_covariance(sk, args.rank, v_hat=Vs)
    else:
        pilot = PilotTrio.from_covariance(_estimate(X, pilot_name, args), args.rank)
    truth = None
    if args.truth or args.truth_u:
        truth = (
            read_matrix(args.truth) if args.truth else None,
            read_matrix(args.truth_u) if args.truth_u else None,
        )
    cfg = PoetConfig(
        r=args.rank, tau_scale=args.tau_scale, shrink=args.shrink, use_wn=args.use_wn, psd_repair=args.psd_repair
    )
    res = poet(X, pilot, cfg, truth=truth)
    out = res.to_dict()
    out["pilot"] = pilot_name
    _emit(dumps(out), args.out)
    return None


def cmd_sim(args):
    obj = _load_json(args.config)
    if args.experiment == "perturb":
        cfg = PerturbExperimentConfig.from_dict(obj, default_seed=args.seed)
        rows = run_perturb_experiment(cfg, threads=args.threads)
    else:
        cfg = FactorExperimentConfig.from_dict(obj, default_seed=args.seed)
        rows = run_factor_experiment(cfg, threads=args.threads)
    _emit(rows_to_csv(rows), args.out)
    return None


# ------------------------------------------------------------------- parser


def _default_seed() -> int:
    env = os.environ.get("SPECTER_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"SPECTER_SEED must be an integer, got {env!r}") from None


def build_parser(default_seed: int = 0) -> argparse.ArgumentParser:
    p = _Parser(prog="specter", description="Entrywise eigenvector perturbation and robust factor covariance tools.")
    p.add_argument("--seed", type=int, default=default_seed, help="base seed (default: $SPECTER_SEED or 0)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for simulations")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("norms", help="matrix norms of a CSV matrix")
    s.add_argument("matrix")
    s.add_argument("--rank", type=int, default=None, help="also report epsilon0 at this rank")
    s.set_defaults(func=cmd_norms)

    s = sub.add_parser("eig", help="eigen-decomposition (or SVD) of a CSV matrix")
    s.add_argument("matrix")
    s.add_argument("--rank", type=int, default=None)
    s.add_argument("--method", choices=("lapack", "jacobi"), default="lapack")
    s.add_argument("--svd", action="store_true", help="singular value decomposition instead")
    s.set_defaults(func=cmd_eig)

    s = sub.add_parser("bound", help="perturbation report for A and A + E")
    s.add_argument("--A", required=True)
    s.add_argument("--E", required=True)
    s.add_argument("--rank", type=int, required=True)
    s.add_argument("--mode", choices=("sym", "rect"), default="sym")
    s.add_argument("--delta", type=float, default=None, help="override the isolation radius")
    s.set_defaults(func=cmd_bound)

    s = sub.add_parser("fixpoint", help="solve the quadratic equation for the rotated eigenbasis")
    s.add_argument("--A", required=True)
    s.add_argument("--E", required=True)
    s.add_argument("--rank", type=int, required=True)
    s.add_argument("--mode", choices=("sym", "rect"), default="sym")
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--max-iter", type=int, default=200)
    s.add_argument("--vbar-out", default=None, help="write Vbar as CSV")
    s.set_defaults(func=cmd_fixpoint)

    s = sub.add_parser("estimate", help="covariance estimate from a data panel")
    s.add_argument("--data", required=True)
    s.add_argument("--method", choices=("sample", "huber", "kendall-marginal", "kendall-spatial"), required=True)
    s.add_argument("--v", default=None, help="variance proxy, or 'auto'")
    s.add_argument("--alpha-rule", choices=("ratio", "product"), default="ratio")
    s.add_argument("--center", action="store_true")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("poet", help="POET covariance estimate")
    s.add_argument("--data", required=True)
    s.add_argument("--rank", type=int, required=True)
    s.add_argument(
        "--pilot", choices=("sample", "huber", "kendall-marginal", "kendall-spatial-evec"), default="sample"
    )
    s.add_argument("--tau-scale", type=float, default=2.0)
    s.add_argument("--shrink", choices=("soft", "hard"), default="soft")
    s.add_argument("--use-wn", action="store_true", help="add 1/sqrt(d) to the threshold rate")
    s.add_argument("--v", default=None, help="variance proxy for robust pilots, or 'auto'")
    s.add_argument("--alpha-rule", choices=("ratio", "product"), default="ratio")
    s.add_argument("--psd-repair", action="store_true", help="shift indefinite estimates before inverting")
    s.add_argument("--center", action="store_true")
    s.add_argument("--truth", default=None)
    s.add_argument("--truth-u", default=None)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_poet)

    s = sub.add_parser("sim", help="run a simulation study")
    s.add_argument("experiment", choices=("perturb", "factor"))
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_sim)
    return p


def _fail(code: int, msg: str) -> int:
    sys.stderr.write(f"code={code}, msg={' '.join(str(msg).split())}\n")
    return code


def dispatch(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser(_default_seed()).parse_args(argv)
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        text = args.func(args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except DataError as exc:
        return _fail(EXIT_DATA, exc)
    except NumericalError as exc:
        return _fail(EXIT_NUMERIC, exc)
    except np.linalg.LinAlgError as exc:
        return _fail(EXIT_NUMERIC, f"linear algebra failure: {exc}")
    except OSError as exc:
        return _fail(EXIT_DATA, f"{exc.filename}: {exc.strerror}")
    if text is not None:
        sys.stdout.write(text)
    return 0


def main() -> None:
    sys.exit(dispatch())
