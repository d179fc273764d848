"""Command-line front end: ``complete``, ``simulate``, ``gradcheck`` and ``bench``.

Exit codes: 0 on clean termination, 1 on a failed check or a solve/data
error, 2 on a usage error. The BLAS thread count can be pinned with the
``TUCKER_SI_THREADS`` environment variable.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import asdict, replace
from importlib import metadata
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import io
from .checks import run_checks
from .geometry import MetricContext, project_horizontal, retract
from .objective import ProblemData, cost, euclid_grad, riem_grad
from .solver import BETA_RULES, SolverConfig, init_point, solve_rcg
from .synth import ScenarioSpec, build_problem, scenario
from .tensor import matricize

THREADS_ENV = "TUCKER_SI_THREADS"


class UsageError(Exception):
    pass


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _triple(kind):
    def parse(text):
        parts = text.split(",")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(f"expected three comma-separated values, got {text!r}")
        try:
            vals = tuple(kind(p) for p in parts)
        except ValueError:
            raise argparse.ArgumentTypeError(f"cannot parse {text!r}") from None
        return vals

    return parse


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _existing(path):
    if not Path(path).is_file():
        raise argparse.ArgumentTypeError(f"no such file: {path}")
    return path


def _solver_args(p):
    p.add_argument("--metric", choices=("precond", "ls"), default="precond")
    p.add_argument("--max-iters", type=_positive_int, default=300)
    p.add_argument("--tol", type=float, default=1e-8, help="bound on the squared gradient norm")
    p.add_argument("--beta-rule", choices=BETA_RULES, default="hybrid")
    p.add_argument("--init", choices=("random", "hosvd"), default="random")


def build_parser():
    parser = argparse.ArgumentParser(prog="tucker-si", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=_version())
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("complete", help="complete a tensor from observation files")
    p.add_argument("--train", type=_existing, required=True)
    p.add_argument("--test", type=_existing)
    p.add_argument("--rank", type=_triple(int), required=True)
    for k in (1, 2, 3):
        p.add_argument(f"--features{k}", type=_existing)
    p.add_argument("--alpha", type=_triple(float), default=(0.0, 0.0, 0.0))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace-out", help="trace CSV path (default: OUT_DIR/trace.csv)")
    p.add_argument("--out-dir", default="tucker_si_out")
    _solver_args(p)

    p = sub.add_parser("simulate", help="run a synthetic case with both metrics and the alpha=0 ablation")
    p.add_argument("--case", type=int, choices=(1, 2, 3, 4), required=True)
    p.add_argument("--dims", type=_triple(int))
    p.add_argument("--rank", type=_triple(int))
    p.add_argument("--os", type=float)
    p.add_argument("--feature-noise", type=float)
    p.add_argument("--extra-cols", type=int)
    p.add_argument("--obs-noise", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="tucker_si_sim")
    p.add_argument("--save-instance", action="store_true", help="also write the generated files")
    _solver_args(p)

    p = sub.add_parser("gradcheck", help="verify gradients, projectors and invariances numerically")
    p.add_argument("--dims", type=_positive_int, default=12, help="largest mode size")
    p.add_argument("--rank", type=_positive_int, default=4, help="largest rank")
    p.add_argument("--trials", type=_positive_int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt-metric", action="store_true", help=argparse.SUPPRESS)

    p = sub.add_parser("bench", help="time the main kernels on a synthetic instance")
    p.add_argument("--dims", type=_triple(int), default=(60, 60, 60))
    p.add_argument("--rank", type=_triple(int), default=(5, 5, 5))
    p.add_argument("--os", type=float, default=1.0)
    p.add_argument("--repeat", type=_positive_int, default=5)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="write timings as CSV")
    return parser


def _config(args, seed):
    return SolverConfig(
        max_iters=args.max_iters,
        grad_tol=args.tol,
        metric=args.metric,
        seed=seed,
        init_mode=args.init,
        beta_rule=args.beta_rule,
    )


def _write_point(out, point):
    out.mkdir(parents=True, exist_ok=True)
    for k, U in enumerate(point.factors, start=1):
        io.write_matrix(out / f"U{k}.txt", U)
    # the core goes out as its mode-1 unfolding (Kolda column order)
    io.write_matrix(out / "core_mode1.txt", matricize(point.core, 0))


def _print_final(label, result):
    tr = result.trace[-1]
    test = "n/a" if tr.test_rmse is None else f"{tr.test_rmse:.6e}"
    print(
        f"{label}: iterations={tr.iter} reason={result.reason} "
        f"train_rmse={tr.train_rmse:.6e} test_rmse={test}"
    )


def cmd_complete(args):
    train = io.read_observations(args.train)
    test = io.read_observations(args.test) if args.test else None
    if test is not None and test.dims != train.dims:
        raise io.FormatError(args.test, 1, f"dims {test.dims} differ from training dims {train.dims}")
    feats = []
    for k in (1, 2, 3):
        path = getattr(args, f"features{k}")
        feats.append(io.read_matrix(path) if path else None)
    data = ProblemData.build(train, args.rank, feats, args.alpha, test)
    config = _config(args, args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = Path(args.trace_out) if args.trace_out else out / "trace.csv"

    manifest = io.RunManifest("complete", {**asdict(config), "rank": list(data.rank),
                                           "alpha": list(args.alpha)}, args.seed, version=_version())
    for name in ("train", "test", "features1", "features2", "features3"):
        if getattr(args, name):
            manifest.add_input(name, getattr(args, name))
    with io.TraceWriter(trace_path) as sink:
        result = solve_rcg(data, config, sink=sink)
    _write_point(out, result.point)
    manifest.write(out / "manifest.json")
    _print_final("complete", result)
    return 0


def _simulate_runs(spec):
    """The side-information run under both metrics and the alpha=0 ablation."""
    return (
        ("side_info_precond", spec, "precond"),
        ("side_info_ls", spec, "ls"),
        ("no_side_info", replace(spec, alpha=0.0), "ls"),
    )


def cmd_simulate(args):
    seed = 0 if args.seed is None else args.seed
    if args.seed is None:
        print(f"seed not given, using {seed}")
    overrides = {"seed": seed}
    for name, field in (("dims", "dims"), ("rank", "rank"), ("os", "os"),
                        ("feature_noise", "feature_noise"), ("extra_cols", "extra_cols"),
                        ("obs_noise", "obs_noise"), ("alpha", "alpha")):
        if getattr(args, name) is not None:
            overrides[field] = getattr(args, name)
    _, _, spec = scenario(args.case, **overrides)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for label, run_spec, metric in _simulate_runs(spec):
        data, truth = build_problem(run_spec)
        if args.save_instance and label == "side_info_precond":
            _save_instance(out / "instance", data)
        config = replace(_config(args, seed), metric=metric)
        with io.TraceWriter(out / f"trace_{label}.csv") as sink:
            result = solve_rcg(data, config, sink=sink)
        _print_final(label, result)
        tr = result.trace[-1]
        rows.append((label, metric, run_spec.alpha, tr.iter, result.reason,
                     tr.train_rmse, tr.test_rmse, tr.seconds))
    with open(out / "summary.csv", "w", encoding="utf-8") as fh:
        fh.write("run,metric,alpha,iterations,reason,train_rmse,test_rmse,seconds\n")
        for r in rows:
            fh.write("{},{},{:.17g},{},{},{:.17g},{:.17g},{:.6f}\n".format(*r))
    manifest = io.RunManifest("simulate", {"case": args.case, "scenario": asdict(spec),
                                           "solver": asdict(_config(args, seed))}, seed,
                              version=_version())
    manifest.write(out / "manifest.json")
    print(f"{'run':<20}{'metric':<9}{'iters':>6}  {'test_rmse':>11}")
    for r in rows:
        print(f"{r[0]:<20}{r[1]:<9}{r[3]:>6}  {r[6]:>11.3e}")
    return 0


def _save_instance(out, data):
    out.mkdir(parents=True, exist_ok=True)
    io.write_observations(out / "train.tensor3", data.train)
    if data.test is not None:
        io.write_observations(out / "test.tensor3", data.test)
    for k, P in enumerate(data.features.bases, start=1):
        io.write_matrix(out / f"features{k}.txt", P)


def cmd_gradcheck(args):
    if args.rank >= args.dims:
        raise UsageError("--rank must be smaller than --dims")
    results = run_checks(args.trials, args.seed, args.dims, args.rank, args.corrupt_metric)
    failed = []
    for name, err, thr, ok in results:
        print(f"{name:<26}{err:12.3e}  (threshold {thr:.0e})  {'ok' if ok else 'FAIL'}")
        if not ok:
            failed.append(name)
    if failed:
        print("failed: " + ", ".join(failed))
        return 1
    return 0


def _timeit(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def cmd_bench(args):
    seed = 0 if args.seed is None else args.seed
    if args.seed is None:
        print(f"seed not given, using {seed}")
    spec = ScenarioSpec(dims=args.dims, rank=args.rank, os=args.os, seed=seed, test_size=0)
    data, _ = build_problem(spec)
    point = init_point(data, SolverConfig(seed=seed))
    ctx = MetricContext(point, data.features)
    xi = riem_grad(ctx, point, data)
    timings = [
        ("cost", _timeit(lambda: cost(point, data), args.repeat)),
        ("euclid_grad", _timeit(lambda: euclid_grad(point, data), args.repeat)),
        ("metric_context", _timeit(lambda: MetricContext(point, data.features), args.repeat)),
        ("riem_grad", _timeit(lambda: riem_grad(ctx, point, data), args.repeat)),
        ("project_horizontal", _timeit(lambda: project_horizontal(ctx, xi), args.repeat)),
        ("retract", _timeit(lambda: retract(point, xi, 1e-3), args.repeat)),
    ]
    print(f"dims={spec.dims} rank={spec.rank} |Omega|={len(data.train)}")
    for name, t in timings:
        print(f"{name:<20}{t * 1e3:10.3f} ms")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("kernel,seconds\n")
            for name, t in timings:
                fh.write(f"{name},{t:.9f}\n")
    return 0


COMMANDS = {
    "complete": cmd_complete,
    "simulate": cmd_simulate,
    "gradcheck": cmd_gradcheck,
    "bench": cmd_bench,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    threads = os.environ.get(THREADS_ENV)
    try:
        limit = int(threads) if threads else None
    except ValueError:
        parser.error(f"{THREADS_ENV} must be an integer, got {threads!r}")
    try:
        with threadpool_limits(limits=limit):
            return COMMANDS[args.command](args)
    except UsageError as err:
        parser.error(str(err))
    except (ValueError, np.linalg.LinAlgError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
