"""``sgdchain`` command-line interface.

Exit codes: 0 success, 1 usage error (including a refused step size),
2 numerical failure (divergence), 3 certification failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .config import ConfigError, RunSpec, load_config, save_config
from .core import SgdConfig, broadcast_point, parse_test_function
from .errors import (
    CertificationError,
    DivergenceError,
    EvaluationError,
    SgdChainError,
    StepSizeError,
)
from .noise import NoiseModel, RngStream, gen_regression_data, load_dataset, save_dataset
from .objectives import DATA_OBJECTIVES, canonical_name, make_objective
from .sgd import default_workers, run_ensemble, write_iterates_csv
from .stats import (
    asymp_var_batch_means,
    asymp_var_replication,
    bias_sweep,
    clt_experiment,
    confidence_interval,
    default_batch_len,
    normality_test,
    two_sample_ks,
)
from .theory import (
    check_convexity,
    check_dissipativity,
    check_linear_growth,
    check_local_growth,
    check_step_size,
    constants_for,
    constants_report,
    step_size_bounds,
)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_CERT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> List[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> List[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


# recorded iterations per run for the two preset horizons
HORIZONS = {"moderate": 1_000, "long": 100_000}

# flag -> (section, field)
_OVERRIDES = {
    "objective": ("objective", "name"),
    "dim": ("objective", "dim"),
    "lam": ("objective", "lam"),
    "nu": ("objective", "nu"),
    "R": ("objective", "R"),
    "center": ("objective", "center"),
    "dataset": ("objective", "dataset"),
    "noise": ("noise", "kind"),
    "sigma": ("noise", "sigma"),
    "df": ("noise", "df"),
    "scale": ("noise", "scale"),
    "eta": ("sgd", "eta"),
    "n_iters": ("sgd", "n_iters"),
    "burn_in": ("sgd", "burn_in"),
    "theta0": ("sgd", "theta0"),
    "seed": ("sgd", "seed"),
    "batch_size": ("sgd", "batch_size"),
    "phi": ("test", "functions"),
    "N": ("experiment", "N"),
    "etas": ("experiment", "etas"),
    "theta0_alt": ("experiment", "theta0_alt"),
    "skew_tol": ("experiment", "skew_tol"),
    "kurt_tol": ("experiment", "kurt_tol"),
    "level": ("experiment", "level"),
    "strategy": ("experiment", "strategy"),
    "batch_len": ("experiment", "batch_len"),
    "out": ("output", "dir"),
}


def _spec_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="key = value config file; flags override it")
    g = p.add_argument_group("objective")
    g.add_argument("--objective", help="quadratic, quadsine, simplified-cauchy, simplified-bz, "
                                       "cauchy-reg-mle or bz-mle")
    g.add_argument("--dim", type=_positive_int)
    g.add_argument("--lam", type=float)
    g.add_argument("--nu", type=float)
    g.add_argument("--R", type=float)
    g.add_argument("--center", type=_floats)
    g.add_argument("--dataset", help="CSV written by generate-data (data objectives only)")
    g = p.add_argument_group("noise")
    g.add_argument("--noise", choices=["none", "gaussian", "student_t", "minibatch"])
    g.add_argument("--sigma", type=float)
    g.add_argument("--df", type=float)
    g.add_argument("--scale", type=float)
    g = p.add_argument_group("sgd")
    g.add_argument("--eta", type=float)
    g.add_argument("--n-iters", type=_positive_int)
    g.add_argument("--horizon", choices=sorted(HORIZONS),
                   help="preset recorded length (moderate 10^3, long 10^5) added to the burn-in; "
                        "--n-iters wins")
    g.add_argument("--burn-in", type=int)
    g.add_argument("--theta0", type=_floats, help="scalar (filled) or comma-separated vector")
    g.add_argument("--seed", type=int)
    g.add_argument("--batch-size", type=_positive_int)
    g.add_argument("--phi", type=_names, help="test functions: norm, coord:<i>, sigmoid_f")
    g = p.add_argument_group("experiment")
    g.add_argument("--N", type=int, help="number of replications")
    g.add_argument("--etas", type=_floats)
    g.add_argument("--theta0-alt", type=_floats, help="second initialization for clt")
    g.add_argument("--skew-tol", type=float)
    g.add_argument("--kurt-tol", type=float)
    g.add_argument("--level", type=float)
    g.add_argument("--strategy", choices=["batch-means", "replication"])
    g.add_argument("--batch-len", type=_positive_int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=_positive_int,
                   help="worker processes (default: SGDCHAIN_WORKERS or available cores)")
    p.add_argument("--force", action="store_true", help="run even above the step-size cap")
    return p


def build_spec(args) -> RunSpec:
    spec = load_config(args.config) if getattr(args, "config", None) else RunSpec()
    for flag, (section, name) in _OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(getattr(spec, section), name, value)
    horizon = getattr(args, "horizon", None)
    if horizon is not None and getattr(args, "n_iters", None) is None:
        spec.sgd.n_iters = spec.sgd.burn_in + HORIZONS[horizon]
    return spec


# --------------------------------------------------------------------------
# Spec -> domain objects
# --------------------------------------------------------------------------


def make_objective_from_spec(spec: RunSpec):
    o = spec.objective
    key = canonical_name(o.name)
    dataset = None
    if key in DATA_OBJECTIVES:
        if not o.dataset:
            raise UsageError(f"{key} needs --dataset (see generate-data)")
        dataset = load_dataset(o.dataset)
    return make_objective(key, dim=o.dim, lam=o.lam, nu=o.nu, R=o.R, center=o.center,
                          dataset=dataset)


def make_noise_from_spec(spec: RunSpec, objective) -> NoiseModel:
    n = spec.noise
    if n.kind == "none":
        return NoiseModel.none()
    if n.kind == "gaussian":
        return NoiseModel.gaussian(n.sigma)
    if n.kind == "student_t":
        return NoiseModel.student_t(n.df, n.scale)
    if n.kind == "minibatch":
        if not hasattr(objective, "minibatch_grad"):
            raise UsageError("minibatch noise needs a data objective")
        return NoiseModel.minibatch(objective, spec.sgd.batch_size, n.replace)
    raise UsageError(f"unknown noise kind {n.kind!r}")


def make_config(spec: RunSpec, objective, eta=None, theta0=None, seed=None) -> SgdConfig:
    s = spec.sgd
    return SgdConfig(
        eta=s.eta if eta is None else eta,
        n_iters=s.n_iters,
        theta0=broadcast_point(s.theta0 if theta0 is None else theta0, objective.dim),
        burn_in=s.burn_in,
        seed=s.seed if seed is None else seed,
        batch_size=s.batch_size,
    )


def _theta_star_norm(objective) -> float:
    return 0.0 if objective.known_min is None else float(np.linalg.norm(objective.known_min))


def enforce_cap(objective, noise, etas, force: bool, all_caps: bool = False) -> dict:
    """Refuse step sizes at or above the ergodicity cap (or every cap) unless forced."""
    c = constants_for(objective, noise)
    b = step_size_bounds(c.L, c.alpha, c.beta, c.L_xi, _theta_star_norm(objective), c.L_tilde)
    caps = b.caps if all_caps else {"c_L_alpha": b.c_L_alpha}
    if not force:
        for eta in etas:
            check_step_size(eta, caps)
    return caps


def _workers(args) -> int:
    return args.workers if getattr(args, "workers", None) else default_workers()


def _out_dir(spec: RunSpec) -> Path:
    out = Path(spec.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, default=_jsonable) + "\n")
    return path


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _tag(eta: float) -> str:
    return repr(float(eta))


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_generate_data(args) -> int:
    if args.m < 1 or args.d < 1:
        raise UsageError("--m and --d must be positive")
    if not args.noise_df > 0:
        raise UsageError("--noise-df must be positive")
    ds = gen_regression_data(args.m, args.d, args.noise_df, RngStream(args.seed, 0))
    csv_path, meta_path = save_dataset(ds, args.out)
    print(csv_path)
    print(meta_path)
    return EXIT_OK


def cmd_run(args) -> int:
    spec = build_spec(args)
    obj = make_objective_from_spec(spec)
    noise = make_noise_from_spec(spec, obj)
    cfg = make_config(spec, obj)
    enforce_cap(obj, noise, [cfg.eta], args.force)
    fns = [parse_test_function(t, obj) for t in spec.test.functions]
    run = run_ensemble(obj, noise, cfg, fns, stream_ids=[args.stream_id],
                       store_iterates=bool(args.dump_iterates))
    traj = run.trajectory(0)
    out = _out_dir(spec)
    save_config(spec, out / "run_spec.cfg")
    summary = {
        "objective": obj.describe(),
        "noise": noise.describe(),
        "sgd": cfg.describe(),
        "stream_id": args.stream_id,
        "n_recorded": traj.n_recorded,
        "means": {name: traj.mean(name) for name in run.names},
        "second_moment": traj.second_moment(),
        "fourth_moment": traj.fourth_moment(),
        "polyak_ruppert": (traj.sum_theta / traj.n_recorded).tolist(),
        "final_theta": traj.final_theta.tolist(),
    }
    print(_write_json(out / "run_summary.json", summary))
    if args.dump_iterates:
        print(write_iterates_csv(traj, out / "iterates.csv"))
    return EXIT_OK


def cmd_clt(args) -> int:
    spec = build_spec(args)
    e = spec.experiment
    if e.N < 2:
        raise UsageError("--N must be at least 2")
    obj = make_objective_from_spec(spec)
    noise = make_noise_from_spec(spec, obj)
    etas = e.etas or [spec.sgd.eta]
    enforce_cap(obj, noise, etas, args.force)
    phi = parse_test_function(spec.test.functions[0], obj)
    inits = [spec.sgd.theta0] + ([e.theta0_alt] if e.theta0_alt else [])
    workers = _workers(args)
    out = _out_dir(spec)
    save_config(spec, out / "run_spec.cfg")
    cells, ensembles = [], {}
    for eta in etas:
        for i, th in enumerate(inits):
            # step sizes share random numbers; each initialization gets its own seed
            cfg = make_config(spec, obj, eta=eta, theta0=th, seed=spec.sgd.seed + i)
            ens = clt_experiment(obj, noise, cfg, phi, e.N, workers=workers)
            ensembles[(eta, i)] = ens
            stem = f"eta{_tag(eta)}_init{i}"
            ens.to_csv(out / f"clt_{stem}.csv")
            report = normality_test(ens, e.skew_tol, e.kurt_tol)
            _write_json(out / f"normality_{stem}.json", report.to_dict())
            cells.append({"eta": eta, "init": i, "theta0": list(map(float, th)), "seed": cfg.seed,
                          "mean": ens.mean(), "se": ens.se(), "normality_passed": report.passed,
                          "ensemble_csv": f"clt_{stem}.csv",
                          "normality_json": f"normality_{stem}.json"})
    comparisons = []
    if len(inits) > 1:
        for eta in etas:
            ks = two_sample_ks(ensembles[(eta, 0)], ensembles[(eta, 1)])
            _write_json(out / f"ks_eta{_tag(eta)}.json", ks.to_dict())
            comparisons.append({"eta": eta, **ks.to_dict()})
    shifts = []
    for a, b in zip(etas[:-1], etas[1:]):
        ea, eb = ensembles[(a, 0)], ensembles[(b, 0)]
        combined = math.hypot(ea.se(), eb.se())
        diff = eb.mean() - ea.mean()
        shifts.append({"eta_a": a, "eta_b": b, "mean_a": ea.mean(), "mean_b": eb.mean(),
                       "combined_se": combined, "diff": diff,
                       "differs_2se": abs(diff) > 2 * combined})
    summary = {"phi": phi.name, "N": e.N, "n": spec.sgd.n_iters - spec.sgd.burn_in,
               "cells": cells, "init_ks": comparisons, "mean_shifts": shifts}
    print(_write_json(out / "clt_summary.json", summary))
    return EXIT_OK


def cmd_bias(args) -> int:
    spec = build_spec(args)
    e = spec.experiment
    obj = make_objective_from_spec(spec)
    noise = make_noise_from_spec(spec, obj)
    etas = e.etas or [spec.sgd.eta]
    enforce_cap(obj, noise, etas, args.force, all_caps=True)
    phi = parse_test_function(spec.test.functions[0], obj)
    out = _out_dir(spec)
    save_config(spec, out / "run_spec.cfg")
    curve = bias_sweep(obj, noise, phi, etas, spec.sgd.n_iters, e.N, spec.sgd.seed,
                       theta0=broadcast_point(spec.sgd.theta0, obj.dim), burn_in=spec.sgd.burn_in,
                       workers=_workers(args), enforce_cap=False, trace=True)
    print(_write_json(out / "bias_curve.json", curve.to_dict()))
    print(curve.write_trace_csv(out / "bias_trace.csv"))
    return EXIT_OK


def cmd_variance(args) -> int:
    spec = build_spec(args)
    e = spec.experiment
    if not 0.0 < e.level < 1.0:
        raise UsageError(f"--level must be in (0, 1), got {e.level}")
    obj = make_objective_from_spec(spec)
    noise = make_noise_from_spec(spec, obj)
    cfg = make_config(spec, obj)
    enforce_cap(obj, noise, [cfg.eta], args.force)
    phi = parse_test_function(spec.test.functions[0], obj)
    n = cfg.n_recorded
    if e.strategy == "batch-means":
        batch_len = e.batch_len or default_batch_len(n)
        run = run_ensemble(obj, noise, cfg, [phi], stream_ids=[0], batch_len=batch_len)
        traj = run.trajectory(0)
        sigma2 = asymp_var_batch_means(traj, phi, batch_len)
        mean, n_eff = traj.mean(phi.name), n
        meta = {"batch_len": batch_len, "n_batches": n // batch_len}
    else:
        run = run_ensemble(obj, noise, cfg, [phi], e.N, workers=_workers(args))
        means = run.means(phi.name)
        mean = float(means.mean())
        sigma2 = asymp_var_replication(math.sqrt(n) * (means - mean))
        n_eff = n * e.N
        meta = {"N": e.N}
    lo, hi = confidence_interval(mean, sigma2, n_eff, e.level)
    out = _out_dir(spec)
    save_config(spec, out / "run_spec.cfg")
    result = {"strategy": e.strategy, "phi": phi.name, "n": n, "mean": mean, "sigma2": sigma2,
              "level": e.level, "ci": [lo, hi], **meta}
    print(_write_json(out / "variance.json", result))
    return EXIT_OK


CHECKS = ("linear_growth", "dissipativity", "localized_dissipativity", "lojasiewicz", "convexity")


def cmd_check(args) -> int:
    spec = build_spec(args)
    obj = make_objective_from_spec(spec)
    stream = RngStream(spec.sgd.seed, 0)
    wanted = CHECKS if args.assumption == "all" else (args.assumption,)
    certs = []
    for name in wanted:
        if name == "linear_growth":
            c = check_linear_growth(obj, args.radius, args.n_samples, stream, L=args.L)
        elif name == "dissipativity":
            c = check_dissipativity(obj, args.radius, args.n_samples, stream,
                                    alpha=args.alpha, beta=args.beta)
        elif name == "convexity":
            c = check_convexity(obj, args.radius, args.n_samples, stream)
        else:
            c = check_local_growth(obj, name, n_samples=args.n_samples, stream=stream,
                                   alpha=args.alpha, beta=args.beta, gamma=args.gamma)
        certs.append(c)
    out = _out_dir(spec)
    for c in certs:
        (out / f"certificate_{c.assumption}.json").write_text(c.to_json() + "\n")
    report = [c.to_dict() for c in certs]
    print(json.dumps(report if len(report) > 1 else report[0], indent=2, default=_jsonable))
    return EXIT_OK if all(c.certified for c in certs) else EXIT_CERT


def cmd_constants(args) -> int:
    explicit = {"L": args.L, "alpha": args.alpha, "beta": args.beta, "L_xi": args.L_xi}
    L_tilde, ts = args.L_tilde, args.theta_star_norm
    if any(v is None for v in explicit.values()):
        if args.objective is None and args.config is None:
            missing = [k for k, v in explicit.items() if v is None]
            raise UsageError(f"missing constants {missing}; pass them or --objective")
        spec = build_spec(args)
        obj = make_objective_from_spec(spec)
        c = constants_for(obj, make_noise_from_spec(spec, obj))
        derived = {"L": c.L, "alpha": c.alpha, "beta": c.beta, "L_xi": c.L_xi}
        explicit = {k: derived[k] if v is None else v for k, v in explicit.items()}
        L_tilde = c.L_tilde if L_tilde is None else L_tilde
        ts = _theta_star_norm(obj) if ts is None else ts
    report = constants_report(explicit["L"], explicit["alpha"], explicit["beta"], explicit["L_xi"],
                              L_tilde=L_tilde, theta_star_norm=ts or 0.0, eta=args.eta)
    print(json.dumps(report, indent=2, default=_jsonable))
    return EXIT_OK


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sgdchain", description="Constant step size SGD as a Markov chain")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    parent = _spec_parent()

    p = sub.add_parser("generate-data", help="synthetic heavy-tailed regression data")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--noise-df", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out/data.csv", help="CSV path (sidecar JSON alongside)")
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("run", parents=[parent], help="one trajectory with summary statistics")
    p.add_argument("--stream-id", type=int, default=0)
    p.add_argument("--dump-iterates", action="store_true", help="write iterates.csv")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("clt", parents=[parent], help="ensembles of scaled partial sums")
    p.set_defaults(func=cmd_clt)

    p = sub.add_parser("bias", parents=[parent], help="stationary bias across step sizes")
    p.set_defaults(func=cmd_bias)

    p = sub.add_parser("variance", parents=[parent], help="long-run variance and CI")
    p.set_defaults(func=cmd_variance)

    p = sub.add_parser("check", parents=[parent], help="sampled checks of the assumptions")
    p.add_argument("--assumption", choices=CHECKS + ("all",), required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--L", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--radius", type=float, default=50.0)
    p.add_argument("--n-samples", type=_positive_int, default=10_000)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("constants", parents=[parent], help="closed-form step-size and bias constants")
    p.add_argument("--L", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--L-xi", type=float)
    p.add_argument("--L-tilde", type=float)
    p.add_argument("--theta-star-norm", type=float)
    p.set_defaults(func=cmd_constants)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StepSizeError as exc:
        print(f"error: {exc}; pass --force to run anyway", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, EvaluationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CertificationError as exc:
        print(f"certification failed: {exc}", file=sys.stderr)
        return EXIT_CERT
    except (ConfigError, SgdChainError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
