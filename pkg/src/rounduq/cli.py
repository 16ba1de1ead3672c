"""Command-line front end.

Exit status: 0 on success, 2 for invalid arguments or inputs, 3 when a
computation fails (zero pivot, range violation, ...). Output goes to
``--out``, else to ``$ROUNDUQ_OUT_DIR/<command>.<ext>``, else to stdout.
"""

from __future__ import annotations

import argparse
import functools
import os
import sys
from pathlib import Path

import numpy as np

from . import bounds, bvp, interchange, kernels, rng, stats
from .bounds import Method
from .errors import BoundInvalid, RoundUQError, ValidationError
from .precision import ErrorModel, FloatFormat, parse_format, round_array, sample_errors

ENV_OUT_DIR = "ROUNDUQ_OUT_DIR"
METHODS = [m.value for m in (Method.DBEA, Method.MMIBEA, Method.VIBEA)]


def _ints(text: str) -> list[int]:
    try:
        vals = [int(float(v)) if "e" in v.lower() else int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}") from e
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("expected non-negative integers")
    return vals


def _reals(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals: {text!r}") from e


def _formats(text: str) -> list[FloatFormat]:
    return [parse_format(s) for s in text.split(",") if s.strip()]


def _unit_interval(text: str) -> float:
    v = float(text)
    if not 0.0 <= v < 1.0:
        raise argparse.ArgumentTypeError("must lie in [0, 1)")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _seed(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("seed must be non-negative")
    return v


def _experiment_format(fmt: FloatFormat, args) -> FloatFormat:
    return fmt if args.strict_underflow else fmt.with_subnormals(True)


# Commands ---------------------------------------------------------------------
# Each returns (extension, text).


def cmd_bounds_table(args, config):
    cols = ["fmt", "u", "zeta", "n", "dbea_valid", "DBEA", "MMIBEA", "VIBEA"]
    if args.lam is not None:
        cols += ["MIBEA_original", "p_h_printed", "p_h_squared"]
    rows = []
    for fmt in args.fmt:
        u = fmt.unit_roundoff
        st = bounds.log_error_stats_uniform(u, args.c_bound, args.moments)
        for n in args.n:
            try:
                d = bounds.gamma_dbea(u, n).gamma
            except BoundInvalid:
                d = None
            row = [fmt.label, u, args.zeta, n, d is not None, d,
                   bounds.gamma_mmibea(args.zeta, u, n).gamma,
                   bounds.gamma_vibea(args.zeta, u, n, st).gamma]
            if args.lam is not None:
                r = bounds.gamma_mibea_original(u, n, args.lam)
                row += [r.gamma, r.holds_with_prob_at_least,
                        bounds.mibea_probability(u, args.lam, "squared")]
            rows.append(row)
    return "csv", interchange.render_csv("bounds-table", config, cols, rows)


def cmd_critical_sizes(args, config):
    rows = []
    for fmt in args.fmt:
        for z in args.zeta:
            nc, nd = bounds.critical_sizes(z, fmt.unit_roundoff, args.c_bound, evaluation=args.moments)
            rows.append([z, fmt.label, nc, nd])
    return "csv", interchange.render_csv("critical-sizes", config, ["zeta", "fmt", "n_c", "n_d"], rows)


def cmd_coverage(args, config):
    cols = ["fmt", "u", "n", "zeta", "method", "gamma", "coverage", "threshold", "pass"]
    rows = []
    for fmt in args.fmt:
        u = fmt.unit_roundoff
        st = bounds.log_error_stats_uniform(u, args.c_bound, args.moments)
        for n in args.n:
            dev = bounds.product_deviations(u, n, args.trials, args.seed, threads=args.jobs)
            for z in args.zeta:
                thr = z - stats.acceptance_slack(z, args.trials)
                for m in METHODS:
                    try:
                        g = bounds.gamma_for(m, z, u, n, st).gamma
                    except BoundInvalid:
                        continue
                    cov = float(np.mean(dev <= g))
                    rows.append([fmt.label, u, n, z, m, g, cov, thr, cov >= thr])
    return "csv", interchange.render_csv("coverage", config, cols, rows)


def _bound_values(entries, key="bwd_bound"):
    return [getattr(entries[m], key) if entries[m].valid else None for m in METHODS]


def cmd_dot(args, config):
    fmt = _experiment_format(args.fmt[0], args)
    if args.a or args.b:
        if not (args.a and args.b):
            raise ValidationError("--a and --b must be given together")
        a = round_array(interchange.read_vector(args.a), fmt)
        b = round_array(interchange.read_vector(args.b), fmt)
        _, run = kernels.dot_emulated(a, b, fmt, args.q_target, args.c_bound)
        return "json", interchange.render_json("dot", config, run.to_dict())
    n = args.n[0]
    ex = kernels.dot_experiment(n, fmt, args.trials, args.seed, args.q_target,
                                with_model=args.model, c_bound=args.c_bound)
    bvals = _bound_values(ex.bounds)
    if args.edf_out:
        _write_edf(args.edf_out + "_true.csv", "dot", config, ex.measured_bwd)
        if args.model:
            _write_edf(args.edf_out + "_model.csv", "dot", config, ex.modeled_bwd)
    if args.format == "json":
        payload = {
            "n": n, "trials": args.trials, "fmt": fmt.label,
            "max_measured_bwd": float(ex.measured_bwd.max()),
            "coverage": {m: ex.coverage(m) if ex.bounds[m].valid else None for m in METHODS},
            "threshold": args.q_target - stats.acceptance_slack(args.q_target, args.trials),
            "bounds": {k: vars(v) for k, v in ex.bounds.items()},
        }
        if args.model:
            payload["edf_excess_model_over_true"] = stats.edf_excess(
                stats.edf_build(ex.modeled_bwd), stats.edf_build(ex.measured_bwd))
        return "json", interchange.render_json("dot", config, payload)
    cols = ["trial", "measured_bwd"] + (["modeled_bwd"] if args.model else []) + METHODS
    rows = []
    for i in range(args.trials):
        row = [i, ex.measured_bwd[i]] + ([ex.modeled_bwd[i]] if args.model else [])
        rows.append(row + bvals)
    return "csv", interchange.render_csv("dot", config, cols, rows)


def _kernel_rows(runs):
    cols = ["trial", "measured_bwd", "measured_fwd", "excluded"] + METHODS + [m + "_fwd" for m in METHODS]
    rows = [[i, r.measured_bwd, r.measured_fwd, r.excluded] + _bound_values(r.bounds)
            + _bound_values(r.bounds, "fwd_bound") for i, r in enumerate(runs)]
    return cols, rows


def _matvec_trial(fmt, m, n, seed, q_target, c_bound, i):
    g = rng.substream(seed, rng.DATA, i)
    A = kernels.uniform_data(fmt, (m, n), g)
    x = kernels.uniform_data(fmt, n, g)
    return kernels.matvec_emulated(A, x, fmt, q_target, c_bound)[1]


def _matmul_trial(fmt, shape, seed, q_target, c_bound, i):
    m, n, t = shape
    g = rng.substream(seed, rng.DATA, i)
    A = kernels.uniform_data(fmt, (m, n), g)
    B = kernels.uniform_data(fmt, (n, t), g)
    return kernels.matmul_emulated(A, B, fmt, q_target, c_bound)[1]


def _thomas_trial(fmt, n, q_target, c_bound, theta):
    A, b = bvp.assemble(bvp.BvpParams(theta[0], theta[1], n + 1))
    return kernels.thomas_solve(A.rounded(fmt), round_array(b, fmt), fmt, q_target, c_bound)[1]


def _bvp_trial(fmt, M, q_target, enclosure, c_bound, theta):
    return bvp.solve(bvp.BvpParams(theta[0], theta[1], M), fmt, q_target, enclosure, c_bound)


def cmd_matvec(args, config):
    fmt = _experiment_format(args.fmt[0], args)
    if args.A or args.x:
        if not (args.A and args.x):
            raise ValidationError("--A and --x must be given together")
        A = round_array(interchange.read_matrix(args.A), fmt)
        x = round_array(interchange.read_vector(args.x), fmt)
        y, run = kernels.matvec_emulated(A, x, fmt, args.q_target, args.c_bound)
        if args.result:
            interchange.write_matrix(args.result, y[:, None])
        return "json", interchange.render_json("matvec", config, run.to_dict())
    n = args.n[0]
    m = args.m or n
    task = functools.partial(_matvec_trial, fmt, m, n, args.seed, args.q_target, args.c_bound)
    runs = stats.map_ordered(task, range(args.trials), args.jobs)
    return "csv", interchange.render_csv("matvec", config, *_kernel_rows(runs))


def cmd_matmul(args, config):
    fmt = _experiment_format(args.fmt[0], args)
    if args.A or args.B:
        if not (args.A and args.B):
            raise ValidationError("--A and --B must be given together")
        A = round_array(interchange.read_matrix(args.A), fmt)
        B = round_array(interchange.read_matrix(args.B), fmt)
        C, run = kernels.matmul_emulated(A, B, fmt, args.q_target, args.c_bound)
        if args.result:
            interchange.write_matrix(args.result, C)
        return "json", interchange.render_json("matmul", config, run.to_dict())
    task = functools.partial(_matmul_trial, fmt, tuple(args.shape), args.seed, args.q_target, args.c_bound)
    runs = stats.map_ordered(task, range(args.trials), args.jobs)
    return "csv", interchange.render_csv("matmul", config, *_kernel_rows(runs))


def _read_tridiagonal(path) -> kernels.TriDiagonal:
    T = interchange.read_matrix(path)
    if T.ndim != 2 or T.shape[1] != 3:
        raise ValidationError("tridiagonal file needs three columns: sub, diag, sup")
    return kernels.TriDiagonal(T[1:, 0], T[:, 1], T[:-1, 2])


def cmd_thomas(args, config):
    fmt = _experiment_format(args.fmt[0], args)
    keys = ["DBEA", "DBEA_final", "MMIBEA", "VIBEA"]
    if args.system or args.b:
        if not (args.system and args.b):
            raise ValidationError("--system and --b must be given together")
        A = _read_tridiagonal(args.system).rounded(fmt)
        b = round_array(interchange.read_vector(args.b), fmt)
        x, run = kernels.thomas_solve(A, b, fmt, args.q_target, args.c_bound)
        if args.result:
            interchange.write_matrix(args.result, x[:, None])
        return "json", interchange.render_json("thomas", config, run.to_dict())
    n = args.n[0]
    if n < 1:
        raise ValidationError("--n must be positive")
    theta = bvp.sample_parameters(args.trials, args.seed)
    cols = ["trial", "theta1", "theta2", "measured_bwd", "measured_fwd", "C_LS"] + keys + [k + "_fwd" for k in keys]
    task = functools.partial(_thomas_trial, fmt, n, args.q_target, args.c_bound)
    runs = stats.map_ordered(task, [tuple(t) for t in theta], args.jobs)
    rows = []
    for i, ((t1, t2), run) in enumerate(zip(theta, runs)):
        rows.append([i, t1, t2, run.measured_bwd, run.measured_fwd, run.extras["C_LS"]]
                    + [run.bounds[k].bwd_bound for k in keys] + [run.bounds[k].fwd_bound for k in keys])
    return "csv", interchange.render_csv("thomas", config, cols, rows)


BVP_KEYS = {"m": int, "n_samples": int, "fmt": str, "seed": int, "q_target": float,
            "zeta_target": float, "c_bound": str}


def _bvp_settings(args) -> dict:
    cfg = {}
    if args.config:
        for k, v in interchange.read_kv(args.config).items():
            if k not in BVP_KEYS:
                raise ValidationError(f"unknown config key {k!r}")
            try:
                cfg[k] = BVP_KEYS[k](v)
            except ValueError as e:
                raise ValidationError(f"bad value for {k}: {v!r}") from e
    if "zeta_target" in cfg:
        cfg.setdefault("q_target", cfg.pop("zeta_target"))
    out = {
        "M": args.M if args.M is not None else cfg.get("m", 8),
        "n_samples": args.n_samples if args.n_samples is not None else cfg.get("n_samples", 100),
        "fmt": args.fmt[0] if args.fmt_given else parse_format(cfg.get("fmt", "fp16")),
        "seed": args.seed if args.seed_given else cfg.get("seed", 0),
        "q_target": args.q_target if args.q_target_given else cfg.get("q_target", 0.99),
        "c_bound": args.c_bound if args.c_bound_given else cfg.get("c_bound", "paper"),
    }
    if out["M"] < 2 or out["n_samples"] < 1:
        raise ValidationError("need M >= 2 and n_samples >= 1")
    if not 0.0 <= out["q_target"] < 1.0 or out["c_bound"] not in bounds.C_BOUNDS:
        raise ValidationError("q_target must lie in [0, 1) and c_bound in {paper, symmetric}")
    return out


def cmd_bvp(args, config):
    s = _bvp_settings(args)
    config.update({k: (v.label if isinstance(v, FloatFormat) else v) for k, v in s.items()})
    fmt = _experiment_format(s["fmt"], args)
    M = s["M"]
    if args.format == "json":
        mc = bvp.monte_carlo_q(M, s["n_samples"], fmt, s["seed"])
        enc = bvp.discretization_enclosure(bvp.BvpParams(1.0, 1.0, M))
        payload = {k: getattr(mc, k) for k in ("M", "n_samples", "q_hat", "q_ref", "q_true",
                                                "abs_err_vs_reference", "abs_err_vs_truth",
                                                "sampling_stderr", "n_failed")}
        payload["enclosure_qoi_width_theta_1_1"] = enc.qoi_width
        return "json", interchange.render_json("bvp", config, payload)
    theta = bvp.sample_parameters(s["n_samples"], s["seed"])
    cols = ["sample", "theta1", "theta2", "p_hat", "p_ref", "p_tilde", "p_exact"] + \
        ["bound_" + m for m in METHODS] + ["confidence_count"]
    if args.enclosure:
        cols.append("enclosure_qoi_width")
    task = functools.partial(_bvp_trial, fmt, M, s["q_target"], args.enclosure, s["c_bound"])
    runs = stats.map_ordered(task, [tuple(t) for t in theta], args.jobs)
    rows = []
    for i, ((t1, t2), r) in enumerate(zip(theta, runs)):
        row = [i, t1, t2, r.p_hat, r.p_ref, r.p_tilde, r.p_exact] + \
            [r.rounding_bounds[m] for m in METHODS] + [r.confidence_count]
        if args.enclosure:
            row.append(r.enclosure.qoi_width)
        rows.append(row)
    return "csv", interchange.render_csv("bvp", config, cols, rows)


def realized_errors(fmt: FloatFormat, op: str, k: int, count: int, seed: int) -> np.ndarray:
    """``|delta|`` of representation, addition or multiplication rounding on U[2^k, 2^(k+1)] data."""
    g = rng.substream(seed, rng.DATA)
    lo = 2.0 ** k
    if op == "repr":
        z = g.uniform(lo, 2 * lo, count)
    else:
        a = round_array(g.uniform(lo, 2 * lo, count), fmt)
        b = round_array(g.uniform(lo, 2 * lo, count), fmt)
        z = a + b if op == "add" else a * b
    return np.abs(round_array(z, fmt) / z - 1.0)


def cmd_edf_model_check(args, config):
    rows = []
    for fmt in args.fmt:
        true = realized_errors(fmt, args.op, args.k, args.samples, args.seed)
        model = np.abs(sample_errors(ErrorModel.for_format(fmt), args.samples, args.seed))
        et, em = stats.edf_build(true), stats.edf_build(model)
        excess = stats.edf_excess(em, et)
        if args.edf_out:
            _write_edf(f"{args.edf_out}_{fmt.label}_true.csv", "edf-model-check", config, true)
            _write_edf(f"{args.edf_out}_{fmt.label}_model.csv", "edf-model-check", config, model)
        rows.append([fmt.label, args.op, args.k, args.samples, fmt.unit_roundoff, excess,
                     args.slack, excess <= args.slack])
    cols = ["fmt", "op", "k", "samples", "u", "max_excess", "slack", "dominates"]
    return "csv", interchange.render_csv("edf-model-check", config, cols, rows)


def _write_edf(path, command, config, samples):
    rows = stats.edf_rows(stats.edf_build(samples))
    Path(path).write_text(interchange.render_csv(command + ".edf", config, ["t", "F"], rows))


# Parser -----------------------------------------------------------------------


class _Tracking(argparse.Action):
    """Stores the value and records that the flag was given explicitly."""

    def __call__(self, parser, ns, values, option_string=None):
        setattr(ns, self.dest, values)
        setattr(ns, self.dest + "_given", True)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rounduq", description="Rounding-error bounds and experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, fmt_default="fp16", seed=True):
        sp.add_argument("--fmt", type=_formats, default=_formats(fmt_default), action=_Tracking,
                        help="format name(s): fp16, bf16, fp32, fp64 or p<P>e<Emin>:<Emax>")
        sp.add_argument("--c-bound", dest="c_bound", choices=bounds.C_BOUNDS, default="paper",
                        action=_Tracking)
        sp.add_argument("--out", help="output file (default: $%s/<command>.<ext> or stdout)" % ENV_OUT_DIR)
        if seed:
            sp.add_argument("--seed", type=_seed, default=0, action=_Tracking)

    def moments(sp):
        sp.add_argument("--moments", choices=bounds.EVALUATIONS, default="stable",
                        help="evaluation of the log-error mean and variance")

    def experiment(sp, trials):
        sp.add_argument("--trials", type=_positive, default=trials)
        sp.add_argument("--q-target", dest="q_target", type=_unit_interval, default=0.99, action=_Tracking)
        sp.add_argument("--jobs", type=_positive, default=1,
                        help="worker processes for per-trial loops (the batched dot experiment ignores it)")
        sp.add_argument("--strict-underflow", action="store_true",
                        help="raise on results below the normal range instead of gradual underflow")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")

    sp = sub.add_parser("bounds-table", help="gamma constants for each method")
    common(sp, "fp16,fp32", seed=False)
    moments(sp)
    sp.add_argument("--zeta", type=_unit_interval, default=0.99)
    sp.add_argument("--n", type=_ints, default=[1, 10, 100, 1000, 10 ** 4, 10 ** 5, 10 ** 6])
    sp.add_argument("--lambda", dest="lam", type=float, default=None,
                    help="also tabulate the original mean-informed constant at this lambda")

    sp = sub.add_parser("critical-sizes", help="n_c and n_d")
    common(sp, "fp16,fp32", seed=False)
    moments(sp)
    sp.add_argument("--zeta", type=_reals, default=[0.5, 0.9, 0.95, 0.99, 0.999])

    sp = sub.add_parser("coverage", help="Monte-Carlo coverage of the probabilistic constants")
    common(sp, "fp16,fp32")
    moments(sp)
    sp.add_argument("--zeta", type=_reals, default=[0.9, 0.99])
    sp.add_argument("--n", type=_ints, default=[4, 64, 1024])
    sp.add_argument("--trials", type=_positive, default=10 ** 5)
    sp.add_argument("--jobs", type=_positive, default=1, help="threads for the sampling kernel")

    sp = sub.add_parser("dot", help="dot-product backward-error experiment")
    common(sp)
    experiment(sp, 1000)
    sp.add_argument("--n", type=_ints, default=[2048])
    sp.add_argument("--model", action="store_true", help="also simulate the error model")
    sp.add_argument("--edf-out", help="prefix for EDF CSV files")
    sp.add_argument("--a")
    sp.add_argument("--b")

    sp = sub.add_parser("matvec", help="matrix-vector backward-error experiment")
    common(sp)
    experiment(sp, 10)
    sp.add_argument("--n", type=_ints, default=[256])
    sp.add_argument("--m", type=_positive, default=None)
    sp.add_argument("--A")
    sp.add_argument("--x")
    sp.add_argument("--result", help="write y_hat here (.bin or CSV)")

    sp = sub.add_parser("matmul", help="matrix-matrix backward-error experiment")
    common(sp)
    experiment(sp, 10)
    sp.add_argument("--shape", type=_ints, default=[8, 8, 8], help="m,n,t")
    sp.add_argument("--A")
    sp.add_argument("--B")
    sp.add_argument("--result", help="write C_hat here (.bin or CSV)")

    sp = sub.add_parser("thomas", help="Thomas solve of finite-difference systems")
    common(sp)
    experiment(sp, 100)
    sp.add_argument("--n", type=_ints, default=[127], help="system size")
    sp.add_argument("--system", help="three-column file: sub, diag, sup")
    sp.add_argument("--b")
    sp.add_argument("--result", help="write x_hat here (.bin or CSV)")

    sp = sub.add_parser("bvp", help="stochastic boundary value problem")
    common(sp)
    experiment(sp, 1)
    sp.add_argument("--config", help="key = value file (M, n_samples, fmt, seed, q_target)")
    sp.add_argument("--M", type=int, default=None)
    sp.add_argument("--n-samples", dest="n_samples", type=int, default=None)
    sp.add_argument("--enclosure", action="store_true", help="add the discretization enclosure width")

    sp = sub.add_parser("edf-model-check", help="realized rounding errors vs the uniform model")
    common(sp, "fp16,fp32")
    sp.add_argument("--op", choices=("repr", "add", "mul"), default="add")
    sp.add_argument("--k", type=int, default=0, help="operands from U[2^k, 2^(k+1)]")
    sp.add_argument("--samples", type=_positive, default=10 ** 5)
    sp.add_argument("--slack", type=float, default=0.02)
    sp.add_argument("--edf-out", help="prefix for EDF CSV files")
    return p


_NOT_CONFIG = {"out", "edf_out", "result", "command"}

COMMANDS = {
    "bounds-table": cmd_bounds_table,
    "critical-sizes": cmd_critical_sizes,
    "coverage": cmd_coverage,
    "dot": cmd_dot,
    "matvec": cmd_matvec,
    "matmul": cmd_matmul,
    "thomas": cmd_thomas,
    "bvp": cmd_bvp,
    "edf-model-check": cmd_edf_model_check,
}


def _config_of(args) -> dict:
    cfg = {}
    for k, v in sorted(vars(args).items()):
        if k in _NOT_CONFIG or k.endswith("_given"):
            continue
        if isinstance(v, list) and v and isinstance(v[0], FloatFormat):
            v = [f.label for f in v]
        cfg[k] = v
    return cfg


def _destination(args, ext: str):
    if args.out:
        return Path(args.out)
    d = os.environ.get(ENV_OUT_DIR)
    if d:
        return Path(d) / f"{args.command}.{ext}"
    return None


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("fmt", "seed", "q_target", "c_bound"):
        if not hasattr(args, name + "_given"):
            setattr(args, name + "_given", False)
    if args.command == "matmul" and len(args.shape) != 3:
        parser.error("--shape needs three integers m,n,t")
    config = _config_of(args)
    try:
        ext, text = COMMANDS[args.command](args, config)
        dest = _destination(args, ext)
        if dest is None:
            sys.stdout.write(text)
        else:
            dest.parent.mkdir(parents=True, exist_ok=True)
            dest.write_text(text)
    except ValidationError as e:
        print(f"rounduq: error: {e}", file=sys.stderr)
        return 2
    except (RoundUQError, OSError) as e:
        print(f"rounduq: {type(e).__name__}: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
