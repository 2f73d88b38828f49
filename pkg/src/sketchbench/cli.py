"""``sketchbench`` command-line runner.

Exit status: 0 on success, 2 when a run completes but misses its acceptance
threshold, 1 on any error.  Every option can also come from ``--config``
(a flat ``key=value`` or JSON file); explicit flags take precedence.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import all_constants, constant, first_passing, save_constants
from .errors import BadParams, ParseError, SketchbenchError
from .io import load_matrix, load_scores, report_json, save_csv, save_matrix, save_sketch
from .leverage import LeverageScoreSet, exact_scores
from .linalg import check_matrix, check_vector, random_orthonormal, spiked_orthonormal
from .randbits import BitSource

EXIT_OK, EXIT_ERROR, EXIT_THRESHOLD = 0, 1, 2


def default_seed() -> int:
    raw = os.environ.get("SKETCHBENCH_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw, 0)
    except ValueError:
        raise BadParams(f"SKETCHBENCH_SEED must be an integer, got {raw!r}") from None


# -- config -----------------------------------------------------------------


def read_config(path) -> dict:
    """Flat config: a JSON object, or ``key = value`` lines (``#`` comments)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read config: {exc.strerror}", path) from exc
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, path, exc.lineno, exc.colno) from None
        if not isinstance(data, dict) or any(isinstance(v, (dict, list)) for v in data.values()):
            raise ParseError("config must be a flat JSON object", path)
        return {k.replace("-", "_"): v for k, v in data.items()}
    out = {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", path, no)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ParseError("empty key", path, no, 1)
        out[key.replace("-", "_")] = value
    return out


def _coerce(value, action):
    if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
        if isinstance(value, bool):
            return value
        return str(value).strip().lower() in ("1", "true", "yes", "on")
    if action.type is not None and isinstance(value, str):
        return action.type(value)
    if action.type is not None and value is not None:
        return action.type(value)
    return value


# -- matrix sources ---------------------------------------------------------


def synthetic_matrix(spec: str, seed: int) -> np.ndarray:
    """``gaussian:n,d``, ``orthonormal:n,d`` or ``spiked:n,d,heavy``."""
    try:
        name, dims = spec.split(":", 1)
        nums = [int(x) for x in dims.split(",")]
    except ValueError:
        raise BadParams(f"bad synthetic spec {spec!r}") from None
    src = BitSource(seed, 0x5EED)
    if name == "gaussian" and len(nums) == 2:
        return src.gaussian(nums[0] * nums[1]).reshape(nums[0], nums[1])
    if name == "orthonormal" and len(nums) == 2:
        return random_orthonormal(nums[0], nums[1], src)
    if name == "spiked" and len(nums) == 3:
        return spiked_orthonormal(nums[0], nums[1], nums[2], src)
    raise BadParams(f"bad synthetic spec {spec!r}")


def _input_matrix(args) -> np.ndarray:
    if getattr(args, "input", None):
        M = load_matrix(args.input)
        return check_matrix(M.toarray() if hasattr(M, "toarray") else M)
    if getattr(args, "synthetic", None):
        return synthetic_matrix(args.synthetic, args.seed)
    raise BadParams("provide --input FILE or --synthetic SPEC")


def _rhs(args, A) -> np.ndarray:
    if getattr(args, "rhs", None):
        M = load_matrix(args.rhs)
        M = M.toarray() if hasattr(M, "toarray") else M
        return check_vector(M, A.shape[0], "rhs")
    src = BitSource(args.seed, 0xB0B)
    return A @ src.gaussian(A.shape[1]) + 0.1 * src.gaussian(A.shape[0])


# -- commands ---------------------------------------------------------------


def cmd_sketch(args):
    from .sketch import SketchParams, build_sketch, column_nnz_stats, row_nnz_stats
    scores = None
    if args.scores:
        scores = load_scores(args.scores)
    elif args.kind.startswith("less"):
        if args.input or args.synthetic:
            scores = exact_scores(_input_matrix(args))
        else:
            raise BadParams("LESS kinds need --scores or an input matrix")
    params = SketchParams(args.kind, args.m, args.n, args.p, scores=scores,
                          seed=args.seed, round_up=args.round_up)
    t0 = time.perf_counter()
    S = build_sketch(params)
    ms = 1e3 * (time.perf_counter() - t0)
    if args.out_matrix:
        save_sketch(S, args.out_matrix)
    report = {"command": "sketch", "kind": params.kind, "m": S.m, "n": S.n, "p": params.p,
              "p_eff": S.p_eff, "scale": S.scale, "seed": params.seed,
              "bits_used": S.bits_used, "bit_costs": S.bit_costs, "summands": S.summands,
              "clamped_columns": S.clamped_columns,
              "nnz": {"total": int(S.matrix.nnz), "row": list(row_nnz_stats(S)),
                      "col": list(column_nnz_stats(S))}}
    return report, {"build_ms": ms}, True


def _embedding_report_dict(rep, command, extra=None):
    out = {"command": command, "smin": rep.smin, "smax": rep.smax, "kappa": rep.kappa,
           "eps_hat": rep.eps_hat, "eps_sym": rep.eps_sym, "m": rep.m, "d": rep.d,
           "nnz": rep.nnz, "bits_used": rep.bits_used}
    out.update(rep.extra)
    out.update(extra or {})
    return out


def cmd_ose_chain(args):
    from .pipeline import EmbeddingSpec, fast_ose_chain, fast_ose_lowbits
    A = _input_matrix(args)
    spec = EmbeddingSpec(A.shape[1], A.shape[0], delta=args.delta, theta=args.theta,
                         gamma=args.gamma)
    run = fast_ose_lowbits if args.variant == "lowbits" else fast_ose_chain
    res = run(A, spec, args.seed)
    if args.out_matrix:
        save_matrix(res.SA, args.out_matrix)
    rep = res.report
    report = _embedding_report_dict(rep, "ose-chain", {
        "variant": args.variant, "seed": args.seed,
        "stage_kappa": {name: r.kappa for name, r in res.stage_reports}})
    ok = rep.smin >= 0.5 and rep.smax <= 2.0
    return report, rep.timing(), ok


def cmd_low_distortion(args):
    from .pipeline import EmbeddingSpec, fast_low_distortion
    A = _input_matrix(args)
    spec = EmbeddingSpec(A.shape[1], A.shape[0], eps=args.eps, delta=args.delta, gamma=args.gamma)
    res = fast_low_distortion(A, args.eps, spec, args.seed, args.kind)
    if args.out_matrix:
        save_matrix(res.SA, args.out_matrix)
    report = _embedding_report_dict(res.report, "low-distortion",
                                    {"eps": args.eps, "kind": args.kind, "seed": args.seed})
    return report, res.report.timing(), res.report.eps_hat <= args.eps


def cmd_reduce(args):
    from .pipeline import reduce_regression
    from .regression import lstsq_oracle, objective
    A = _input_matrix(args)
    b = _rhs(args, A)
    At, bt, res = reduce_regression(A, b, args.eps, seed=args.seed)
    if args.out_matrix:
        save_matrix(np.column_stack([At, bt]), args.out_matrix)
    x_red = np.linalg.lstsq(At, bt, rcond=None)[0]
    f_red = objective(A, b, x_red)
    f_opt = objective(A, b, lstsq_oracle(A, b))
    ratio = f_red / f_opt if f_opt > 0 else (0.0 if f_red <= 1e-16 else math.inf)
    report = _embedding_report_dict(res.report, "reduce", {
        "eps": args.eps, "seed": args.seed, "rows_out": int(At.shape[0]),
        "f_reduced_solution": f_red, "f_opt": f_opt, "ratio": ratio})
    ok = f_red <= (1 + 10 * args.eps) * f_opt + 1e-12
    return report, res.report.timing(), ok


def cmd_lsq(args):
    from .regression import least_squares_fast, lstsq_oracle, objective
    A = _input_matrix(args)
    b = _rhs(args, A)
    t0 = time.perf_counter()
    res = least_squares_fast(A, b, args.eps, args.seed, args.mode, args.batch, args.iters,
                             args.alpha, proof_beta=args.proof_beta)
    ms = 1e3 * (time.perf_counter() - t0)
    f = objective(A, b, res.x)
    f_opt = objective(A, b, lstsq_oracle(A, b))
    if res.trace is not None and args.csv:
        save_csv(args.csv, ["t", "f", "eta"], res.trace.rows())
    report = {"command": "lsq", "mode": args.mode, "eps": args.eps, "seed": args.seed,
              "f": f, "f0": objective(A, b, res.x0), "f_opt": f_opt,
              "ratio": f / f_opt if f_opt > 0 else None, "bits_used": res.bits_used,
              "x": res.x}
    if res.trace is not None:
        s = res.trace.schedule
        report.update({"iters": s.T, "batch": s.k, "alpha": s.alpha, "beta": s.beta})
    ok = f <= (1 + args.eps) * f_opt + 1e-6
    return report, {"total_ms": ms}, ok


def cmd_verify(args):
    from . import verify as V
    check = args.check
    if check == "moments":
        scores = None
        if args.kind.startswith("less"):
            scores = exact_scores(spiked_orthonormal(args.n, args.d, max(1, args.d // 4), args.seed))
        a = V.moment_audit(args.kind, args.m, args.n, args.p, args.builds, args.pairs,
                           args.tol, args.seed, scores)
        rep = a.to_dict()
        ok = a.ok
        rows = None
    elif check == "spectrum":
        frac = V.gaussian_spectrum_check(args.m, args.d, args.t, args.trials, args.seed)
        Y = BitSource(args.seed, 3).gaussian(min(args.m, 64) * args.d).reshape(-1, args.d)
        gap = V.augsym_eigen_check(Y)
        rep = {"fraction_inside": frac, "augsym_eigen_gap": gap, "t": args.t}
        ok = frac >= 0.99 and gap <= 1e-8
        rows = None
    elif check == "universality":
        u = V.universality_check(args.kind, args.m, args.n, args.d, args.p, args.lam,
                                 args.trials, args.seed)
        rep = u.to_dict()
        ok = u.passed
        rows = [(i, x) for i, x in enumerate(u.distances)]
    elif check == "bounds":
        b = V.singular_value_bounds_check(args.kind, args.d, args.n, args.m, args.p,
                                          args.eps, args.trials, args.seed)
        rep = b.to_dict()
        ok = b.success >= 1 - args.delta
        rows = [(i, lo, hi) for i, (lo, hi) in enumerate(zip(b.smin, b.smax))]
    else:  # pragma: no cover - argparse restricts choices
        raise BadParams(f"unknown check {check!r}")
    if args.csv and rows is not None:
        header = ["trial", "hausdorff"] if check == "universality" else ["trial", "smin", "smax"]
        save_csv(args.csv, header, rows)
    rep.update({"command": "verify", "check": check, "seed": args.seed})
    return rep, None, ok


def _calibrate_chain(args):
    from .pipeline import EmbeddingSpec, fast_ose_chain
    d, n = 16, 8192
    def success(theta):
        ok = 0
        for s in range(args.trials):
            U = random_orthonormal(n, d, BitSource(args.seed + s, 1))
            r = fast_ose_chain(U, EmbeddingSpec(d, n, theta=theta), args.seed + s).report
            ok += r.smin >= 0.5 and r.smax <= 2.0
        return ok / args.trials
    theta, rate, rates = first_passing([1, 2, 3, 5, 7, 9, 11, 15], success)
    return {"chain_theta": theta}, rate, rates


def _calibrate_ose(args):
    from .sketch import KINDS
    from .verify import singular_value_bounds_check
    d, n, eps = 16, 4096, 0.5
    pm = math.ceil(constant("ose_c2") * math.log2(d / 0.1) ** 4)
    def success(c1):
        m = math.ceil(c1 * d / eps ** 2)
        return min(singular_value_bounds_check(k, d, n, m, min(m, pm) / m, eps, args.trials,
                                               args.seed).success for k in KINDS)
    c1, rate, rates = first_passing([0.5, 1.0, 1.5, 2.0, 3.0, 4.0], success)
    return {"ose_c1": c1}, rate, rates


def _calibrate_lowdist(args):
    from .pipeline import fast_low_distortion
    d, n = 16, 4096
    def success(c):
        ok = 0
        for eps in (0.5, 0.25):
            for s in range(args.trials):
                A = spiked_orthonormal(n, d, 4, BitSource(args.seed + s, 2))
                r = fast_low_distortion(A, eps, seed=args.seed + s,
                                        m=min(n, math.ceil(c * d / eps ** 2))).report
                ok += r.eps_hat <= eps
        return ok / (2 * args.trials)
    c, rate, rates = first_passing([1, 2, 3, 4, 6, 8], success)
    return {"lowdist_c": c}, rate, rates


def _calibrate_universality(args):
    from .sketch import KINDS
    from .verify import universality_check
    ratios = [universality_check(k, 64, 256, 8, 0.25, 0.0, args.trials, args.seed).ratio
              for k in KINDS]
    worst = max(ratios)
    C = math.ceil(200 * worst) / 100  # twice the worst ratio, rounded up to 0.01
    return {"universality_C": C}, 1.0, list(zip(KINDS, ratios))


_CALIBRATORS = {
    "chain": _calibrate_chain,
    "ose": _calibrate_ose,
    "lowdist": _calibrate_lowdist,
    "universality": _calibrate_universality,
}


def cmd_calibrate(args):
    values, rate, rates = _CALIBRATORS[args.target](args)
    found = all(v is not None for v in values.values())
    if found and args.write:
        save_constants(values)
    report = {"command": "calibrate", "target": args.target, "values": values,
              "success_rate": rate, "grid": [list(map(_plain, r)) for r in rates],
              "trials": args.trials, "seed": args.seed, "written": bool(found and args.write),
              "constants": all_constants()}
    return report, None, found


def _plain(x):
    return float(x) if isinstance(x, (int, float, np.floating)) else x


# -- parser -----------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    """Usage errors raise instead of exiting with argparse's status 2."""

    def error(self, message):
        raise BadParams(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="64-bit seed (env SKETCHBENCH_SEED)")
    common.add_argument("--threads", type=int, default=None,
                        help="worker count; results do not depend on it")
    common.add_argument("--config", default=None, help="flat key=value or JSON config file")
    common.add_argument("--report", default=None, help="write the JSON report here")
    common.add_argument("--csv", default=None, help="write per-trial or trace CSV here")

    p = _Parser(prog="sketchbench", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def matrix_args(sp, rhs=False):
        sp.add_argument("--input", help="Matrix Market file")
        sp.add_argument("--synthetic", help="gaussian:n,d | orthonormal:n,d | spiked:n,d,heavy")
        if rhs:
            sp.add_argument("--rhs", help="Matrix Market right-hand side")
        sp.add_argument("--out-matrix", help="write the sketched matrix (Matrix Market)")

    s = sub.add_parser("sketch", parents=[common], help="build one sketch")
    s.add_argument("--kind", default="osnap")
    s.add_argument("--m", type=int, default=64)
    s.add_argument("--n", type=int, default=256)
    s.add_argument("--p", type=float, default=0.25)
    s.add_argument("--scores", help="score file written by save_scores")
    s.add_argument("--round-up", action="store_true")
    matrix_args(s)
    s.set_defaults(func=cmd_sketch)

    s = sub.add_parser("ose-chain", parents=[common], help="fast oblivious embedding")
    matrix_args(s)
    s.add_argument("--variant", choices=["chain", "lowbits"], default="chain")
    s.add_argument("--theta", type=float, default=None)
    s.add_argument("--gamma", type=float, default=0.25)
    s.add_argument("--delta", type=float, default=0.1)
    s.set_defaults(func=cmd_ose_chain)

    s = sub.add_parser("low-distortion", parents=[common], help="fast (1+eps) embedding")
    matrix_args(s)
    s.add_argument("--eps", type=float, default=0.5)
    s.add_argument("--kind", choices=["less-rows", "less-ent"], default="less-rows")
    s.add_argument("--gamma", type=float, default=0.25)
    s.add_argument("--delta", type=float, default=0.1)
    s.set_defaults(func=cmd_low_distortion)

    s = sub.add_parser("reduce", parents=[common], help="sketch [A | b] for regression")
    matrix_args(s, rhs=True)
    s.add_argument("--eps", type=float, default=0.1)
    s.set_defaults(func=cmd_reduce)

    s = sub.add_parser("lsq", parents=[common], help="sketched least squares")
    matrix_args(s, rhs=True)
    s.add_argument("--eps", type=float, default=0.5)
    s.add_argument("--batch", type=int, default=None)
    s.add_argument("--iters", type=int, default=None)
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--mode", choices=["sgd", "single-pass"], default="sgd")
    s.add_argument("--proof-beta", action="store_true", help="use the k/4 base step")
    s.set_defaults(func=cmd_lsq)

    s = sub.add_parser("verify", parents=[common], help="empirical checks")
    s.add_argument("--check", choices=["moments", "spectrum", "universality", "bounds"],
                   required=True)
    s.add_argument("--kind", default="iid-ent")
    s.add_argument("--m", type=int, default=16)
    s.add_argument("--n", type=int, default=64)
    s.add_argument("--d", type=int, default=8)
    s.add_argument("--p", type=float, default=0.25)
    s.add_argument("--lam", type=float, default=0.0)
    s.add_argument("--eps", type=float, default=0.5)
    s.add_argument("--delta", type=float, default=0.1)
    s.add_argument("--t", type=float, default=4.0)
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--builds", type=int, default=20000)
    s.add_argument("--pairs", type=int, default=200)
    s.add_argument("--tol", type=float, default=0.015)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("calibrate", parents=[common], help="rerun a calibration grid")
    s.add_argument("--target", choices=sorted(_CALIBRATORS), default="chain")
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--write", action="store_true", help="update the shipped constants")
    s.set_defaults(func=cmd_calibrate)
    return p


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        config = read_config(args.config)
        sp = _subparser(parser, args.command)
        actions = {a.dest: a for a in sp._actions if a.dest not in ("help", "config")}
        unknown = sorted(set(config) - set(actions))
        if unknown:
            raise ParseError(f"unknown config keys: {', '.join(unknown)}", args.config)
        sp.set_defaults(**{k: _coerce(v, actions[k]) for k, v in config.items()})
        args = parser.parse_args(argv)
    if args.seed is None:
        args.seed = default_seed()
    if args.threads is not None and args.threads < 1:
        raise BadParams("--threads must be positive")
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        report, timing, ok = args.func(args)
        if args.threads is not None:
            report["threads"] = args.threads
        report["passed"] = bool(ok)
        text = report_json(report, timing)
        if args.report:
            Path(args.report).write_text(text)
        sys.stdout.write(text)
        return EXIT_OK if ok else EXIT_THRESHOLD
    except (SketchbenchError, OSError, ValueError) as exc:
        print(f"sketchbench: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
