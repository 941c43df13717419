"""Command-line interface: ``epsense {gen,reconstruct,phase,bisect,compare}``.

Exit codes: 0 success (including non-converged runs), 1 usage or parameter
error, 2 numerical failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from epsense import __version__
from epsense.ep import EPConfig, run_ep
from epsense.ep_zero import run_ep_zero_t
from epsense.errors import NumericalError, ParameterError
from epsense.io import read_bundle, write_bundle, write_csv, write_manifest, write_result, write_vector
from epsense.metrics import mse, pearson_r
from epsense.omp import OMPConfig, omp_reconstruct
from epsense.phase import (PHASE_FIELDS, BisectionSpec, PhaseGridSpec, bisect_transition,
                           derive_seed, phase_sweep)
from epsense.prior import PriorParams
from epsense.problem import make_problem

log = logging.getLogger("epsense")

EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 1, 2, 3

LINE_FIELDS = ["rho", "alpha_l0", "alpha_l1", "alpha_ep"]
COMPARE_FIELDS = ["alpha", "N", "rho", "k", "trial", "seed", "solver", "converged",
                  "sweeps", "mse", "wall_ms"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _step_grid(step: float) -> list[float]:
    n = int(np.floor(1.0 / step + 1e-9))
    return [round(step * i, 12) for i in range(1, n + 1)]


def _add_ep_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("EP")
    g.add_argument("--beta", type=float, default=1e9)
    g.add_argument("--lambda", dest="lam", type=float, default=1.0, help="slab variance")
    g.add_argument("--tol", type=float, default=1e-6)
    g.add_argument("--max-sweeps", type=int, default=2000)
    g.add_argument("--damping", type=float, default=0.0)
    g.add_argument("--learn-rho", action="store_true")
    g.add_argument("--eta", type=float, default=5e-4)
    g.add_argument("--rho-init", type=float, default=None)
    g.add_argument("--rho-newton", action="store_true")


def _ep_config(args) -> EPConfig:
    return EPConfig(beta=args.beta, max_sweeps=args.max_sweeps, tol=args.tol,
                    damping=args.damping, learn_rho=args.learn_rho, eta=args.eta,
                    rho_init=args.rho_init, rho_newton=args.rho_newton)


def _add_run_flags(p: argparse.ArgumentParser, default_out: str) -> None:
    p.add_argument("--seed", type=int, default=0, help="root seed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (env EPSENSE_JOBS wins)")
    p.add_argument("--out", default=default_out, help="output CSV ('-' for stdout)")
    p.add_argument("--no-timing", action="store_true",
                   help="write 0 in wall_ms so that output is byte-reproducible")


def build_parser() -> _Parser:
    parser = _Parser(prog="epsense", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file mirroring the flags; flags win")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a problem bundle")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--correlated-k", type=int, default=None)
    p.add_argument("--noise-variance", type=float, default=0.0)
    p.add_argument("--out", required=True, help="bundle directory")

    p = sub.add_parser("reconstruct", help="run EP on a bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", default=None, help="output directory (default: the bundle)")
    p.add_argument("--mode", choices=["finite-t", "zero-t"], default="finite-t")
    p.add_argument("--rho", type=float, default=None, help="prior density (default: meta.json)")
    _add_ep_flags(p)

    p = sub.add_parser("phase", help="(rho, alpha) phase-diagram sweep")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--grid", type=float, default=0.05, help="step of both grids")
    p.add_argument("--rho-grid", type=_floats, default=None)
    p.add_argument("--alpha-grid", type=_floats, default=None)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--mode", choices=["finite-t", "zero-t"], default="finite-t")
    p.add_argument("--correlated-k", type=int, default=None)
    _add_run_flags(p, "phase.csv")
    _add_ep_flags(p)

    p = sub.add_parser("bisect", help="EP transition line by bisection")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--rho-grid", type=_floats, default=[0.2, 0.4, 0.6])
    p.add_argument("--delta", type=float, default=1e-5)
    p.add_argument("--dalpha-min", type=float, default=0.005)
    p.add_argument("--probes", type=int, default=1, help="reconstructions averaged per probe")
    p.add_argument("--mode", choices=["finite-t", "zero-t"], default="finite-t")
    _add_run_flags(p, "transition.csv")
    _add_ep_flags(p)

    p = sub.add_parser("compare", help="EP (both formulations) vs OMP on shared instances")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--correlated-k", type=int, default=5, help="-1 for i.i.d. matrices")
    p.add_argument("--alpha-grid", type=_floats, default=[0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
    p.add_argument("--trials", type=int, default=100)
    _add_run_flags(p, "compare.csv")
    _add_ep_flags(p)
    return parser


def _apply_config_file(parser: _Parser, argv: Sequence[str]) -> argparse.Namespace:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    if known.config and command is not None:
        try:
            cfg = json.loads(Path(known.config).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {known.config}: {exc}")
        if not isinstance(cfg, dict):
            raise UsageError(f"config file {known.config} must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items() if k != "command"}
        sub = parser._subparsers._group_actions[0].choices[command]
        known_dests = {a.dest for a in sub._actions}
        unknown = set(cfg) - known_dests
        if unknown:
            raise UsageError(f"config file has unknown keys: {sorted(unknown)}")
        for a in sub._actions:
            if a.dest in cfg:
                a.required = False
        sub.set_defaults(**cfg)
    return parser.parse_args(argv)


def _jobs(args) -> int:
    env = os.environ.get("EPSENSE_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"EPSENSE_JOBS must be an integer, got {env!r}")
    return max(1, args.jobs)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _snapshot(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("config", "verbose")}


def _manifest_path(out) -> Optional[Path]:
    if str(out) == "-":
        return None
    return Path(str(out) + ".manifest.json")


def cmd_gen(args) -> int:
    started = _now()
    problem = make_problem(args.n, args.m, args.rho, args.lam, k=args.correlated_k,
                           noise_variance=args.noise_variance, seed=args.seed)
    out = write_bundle(args.out, problem, {"artifact_version": __version__})
    write_manifest(out / "manifest.json", "gen", _snapshot(args), args.seed, __version__,
                   started, _now(), ["F.mat", "y.vec", "w.vec", "meta.json"])
    return 0


def cmd_reconstruct(args) -> int:
    started = _now()
    config = _ep_config(args)
    problem, meta = read_bundle(args.bundle)
    rho = args.rho if args.rho is not None else meta.get("rho")
    if rho is None:
        if not args.learn_rho:
            raise ParameterError("no --rho given and meta.json has none")
        rho = 0.5
    prior = PriorParams(float(rho), args.lam)
    solve = run_ep_zero_t if args.mode == "zero-t" else run_ep
    res = solve(problem, prior, config)

    record = {
        "mode": args.mode,
        "M": problem.M,
        "N": problem.N,
        "converged": bool(res.converged),
        "sweeps": int(res.sweeps_used),
        "eps": float(res.final_eps),
        "rho": float(rho),
        "rho_learned": res.rho_learned,
        "r": None,
        "mse": None,
    }
    if problem.truth is not None:
        record["mse"] = mse(problem.truth.values, res.mean)
        try:
            record["r"] = pearson_r(problem.truth.values, res.mean)
        except ParameterError:
            pass
    out = Path(args.out or args.bundle)
    out.mkdir(parents=True, exist_ok=True)
    write_vector(out / "w_hat.vec", res.mean)
    write_result(out / "result.json", record)
    write_manifest(out / "result.manifest.json", "reconstruct", _snapshot(args), None,
                   __version__, started, _now(), ["w_hat.vec", "result.json"])
    log.info("converged=%s sweeps=%d mse=%s", res.converged, res.sweeps_used, record["mse"])
    return 0


def cmd_phase(args) -> int:
    started = _now()
    rho_grid = args.rho_grid or _step_grid(args.grid)
    alpha_grid = args.alpha_grid or _step_grid(args.grid)
    spec = PhaseGridSpec(args.n, rho_grid, alpha_grid, args.trials, args.seed, args.mode,
                         args.correlated_k)
    points = phase_sweep(spec, args.lam, _ep_config(args), jobs=_jobs(args),
                         timing=not args.no_timing)
    write_csv(args.out, points, PHASE_FIELDS)
    _finish(args, "phase", started)
    return 0


def _bisect_one(task):
    rho, N, delta, dalpha_min, probes, seed, lam, config, mode = task
    spec = BisectionSpec(N, rho, delta=delta, dalpha_min=dalpha_min, probes=probes, seed=seed)
    alpha = bisect_transition(spec, config=config, lam=lam, solver=mode)
    return {"rho": rho, "alpha_l0": spec.alpha0, "alpha_l1": spec.alpha1, "alpha_ep": alpha}


def _map(fn, tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def cmd_bisect(args) -> int:
    started = _now()
    config = _ep_config(args)
    tasks = [(rho, args.n, args.delta, args.dalpha_min, args.probes,
              derive_seed(args.seed, i), args.lam, config, args.mode)
             for i, rho in enumerate(args.rho_grid)]
    rows = _map(_bisect_one, tasks, _jobs(args))
    write_csv(args.out, rows, LINE_FIELDS)
    _finish(args, "bisect", started)
    return 0


def compare_trial(task) -> list[dict]:
    """EP finite-T, EP zero-T and OMP on one shared instance."""
    alpha, N, rho, k, trial, seed, lam, config, timing = task
    M = max(1, min(N, int(round(alpha * N))))
    problem = make_problem(N, M, rho, lam, k=None if k < 0 else k, seed=seed)
    w = problem.truth.values
    rows = []
    base = {"alpha": alpha, "N": N, "rho": rho, "k": k, "trial": trial, "seed": seed}
    for name in ("ep-finite-t", "ep-zero-t", "omp"):
        t0 = time.perf_counter()
        converged, sweeps = True, 0
        try:
            if name == "omp":
                w_hat = omp_reconstruct(problem, OMPConfig(), rho=rho)
            else:
                solve = run_ep if name == "ep-finite-t" else run_ep_zero_t
                res = solve(problem, PriorParams(rho, lam), config)
                w_hat, converged, sweeps = res.mean, res.converged, res.sweeps_used
            err = mse(w, w_hat)
        except (NumericalError, np.linalg.LinAlgError) as exc:
            log.warning("%s failed on seed %d: %s", name, seed, exc)
            converged, err = False, float("nan")
        wall = (time.perf_counter() - t0) * 1e3 if timing else 0.0
        rows.append(dict(base, solver=name, converged=converged, sweeps=sweeps, mse=err,
                         wall_ms=wall))
    return rows


def cmd_compare(args) -> int:
    started = _now()
    config = _ep_config(args)
    tasks = []
    for i, alpha in enumerate(args.alpha_grid):
        for t in range(args.trials):
            tasks.append((alpha, args.n, args.rho, args.correlated_k, t,
                          derive_seed(args.seed, i, t), args.lam, config, not args.no_timing))
    rows = [r for chunk in _map(compare_trial, tasks, _jobs(args)) for r in chunk]
    write_csv(args.out, rows, COMPARE_FIELDS)
    _finish(args, "compare", started)
    return 0


def _finish(args, command: str, started: str) -> None:
    path = _manifest_path(args.out)
    if path is not None:
        write_manifest(path, command, _snapshot(args), args.seed, __version__, started,
                       _now(), [args.out])


COMMANDS = {
    "gen": cmd_gen,
    "reconstruct": cmd_reconstruct,
    "phase": cmd_phase,
    "bisect": cmd_bisect,
    "compare": cmd_compare,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config_file(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"epsense: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParameterError as exc:
        print(f"epsense: parameter error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"epsense: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"epsense: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
