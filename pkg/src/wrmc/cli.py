"""Command-line interface: ``wrmc {exact,simulate,bench,counterexample,validate}``.

Exit status is 0 on success, 1 when a model or function file is invalid (or
a run exceeds its step budget) and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys


from . import bench as _bench
from . import exact
from .chain import STATIONARY, run_chain
from .estimators import estimate
from .model import (
    AlphaBarker,
    BoltzmannKappa,
    Metropolis,
    MetropolisKappa,
    ModelError,
    ModelValidationError,
    function_from_file,
    parse_model,
    validate_model,
)


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("chain lengths must be positive")
    return values


def _seed(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def _positive(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return value


def _kappa_prime(model, text):
    if text is None:
        return None
    name, _, arg = text.partition(":")
    if model.kind == "single":
        if name == "metropolis":
            return Metropolis()
        if name in ("barker", "alpha_barker"):
            return AlphaBarker(float(arg) if arg else 1.0)
    else:
        if name == "metropolis":
            return MetropolisKappa()
        if name == "boltzmann":
            return BoltzmannKappa()
    raise ModelError(f"unsupported alternate kernel {text!r} for a {model.kind}-proposal model")


def _load(path):
    with open(path) as fh:
        model = parse_model(fh.read())
    report = validate_model(model)
    if not report.ok:
        raise ModelValidationError("model failed validation:\n" + report.format(), report)
    return model


def _functions(args, model):
    f = function_from_file(model, args.f, "f")
    psi = function_from_file(model, args.psi, "psi") if args.psi else None
    return f, psi


def _cmd_exact(args):
    model = _load(args.model)
    f, psi = _functions(args, model)
    report = exact.variance_report(model, f, psi, tilde=args.tilde)
    print(report.to_json())
    return 0


def _cmd_simulate(args):
    model = _load(args.model)
    f, psi = _functions(args, model)
    trace = run_chain(model, args.n, args.seed, init=args.init)
    report = estimate(trace, f, psi, kappa_prime=_kappa_prime(model, args.kappa_prime))
    if args.dump_trace:
        with open(args.dump_trace, "w") as fh:
            trace.dump(fh)
    print(report.to_json() if args.format == "json" else report.format())
    return 0


def _bench_config(args, model):
    return _bench.BenchConfig(
        n_list=tuple(args.n_list), reps=args.reps, level=args.level, seed=args.seed,
        estimators=tuple(args.estimators.split(",")), init=args.init,
        kappa_prime=_kappa_prime(model, args.kappa_prime), workers=args.workers, max_steps=args.max_steps,
    )


def _print_table(table, fmt):
    if fmt == "csv":
        sys.stdout.write(table.format_csv())
    else:
        print(table.format_text())


def _cmd_bench(args):
    model = _load(args.model)
    f, psi = _functions(args, model)
    table = _bench.run_bench(model, f, psi, _bench_config(args, model))
    _print_table(table, args.format)
    return 0


def _fmt(x):
    return "absent" if x is None else f"{x:.15g}"


def _cmd_counterexample(args):
    model = _bench.counterexample_model()
    f = _bench.counterexample_f()
    if args.bench:
        args.kappa_prime = None
        table = _bench.run_bench(model, f, f, _bench_config(args, model))
        _print_table(table, args.format)
        return 0
    report = exact.variance_report(model, f, f)
    gap = report.sigma2_cv - report.sigma2
    values = {
        "sigma2": report.sigma2,
        "sigma2_cv_f_f": report.sigma2_cv,
        "sigma2_cv_f_f_minus_sigma2": gap,
        "relative_change": -gap / report.sigma2,
        "closed_form_gap": _bench.counterexample_gap(),
        "sigma2_opt": report.sigma2_opt,
        "delta_f": report.delta_f,
        "b_star": report.b_star,
        "var_pi_f": report.var_pi_f,
    }
    if args.format == "json":
        print(json.dumps({k: float(f"{v:.15g}") for k, v in values.items()}, indent=2))
    else:
        for k, v in values.items():
            print(f"{k}={_fmt(v)}")
    return 0


def _cmd_validate(args):
    with open(args.model) as fh:
        model = parse_model(fh.read())
    report = validate_model(model)
    print(json.dumps(report.to_dict(), indent=2) if args.format == "json" else report.format())
    return 0 if report.ok else 1


def _add_bench_options(p):
    p.add_argument("--n-list", type=_int_list, default=list(_bench.PAPER_N_LIST),
                   help="comma-separated chain lengths (default 1,2,5,10,100,1000)")
    p.add_argument("--reps", type=_positive, default=10_000, help="replications per chain length")
    p.add_argument("--seed", type=_seed, default=0, help="master seed")
    p.add_argument("--level", type=float, default=0.95, help="confidence level")
    p.add_argument("--init", default=STATIONARY, help="'stationary' or a state label")
    p.add_argument("--estimators", default="plain,cv", help="comma list of plain,cv,adaptive,ppsi,jprime")
    p.add_argument("--workers", type=_positive, default=1, help="worker threads")
    p.add_argument("--max-steps", type=_positive, default=None,
                   help="cap on total simulated steps (default: WRMC_MAX_STEPS or 2e9)")
    p.add_argument("--format", choices=("text", "csv"), default="text")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wrmc", description="Waste-recycling Metropolis-Hastings variance laboratory.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def common(p, psi=True):
        p.add_argument("--model", required=True, help="model file (JSON)")
        p.add_argument("--f", required=True, help="observable f: JSON map state label -> value")
        if psi:
            p.add_argument("--psi", help="control-variate function psi (default: f for simulate/bench)")

    p = sub.add_parser("exact", help="closed-form asymptotic variances")
    common(p)
    p.add_argument("--tilde", action="store_true", help="also report the variance of the X_k-conditioned control variate")
    p.set_defaults(func=_cmd_exact)

    p = sub.add_parser("simulate", help="run one chain and report every estimator")
    common(p)
    p.add_argument("--n", type=_positive, required=True, help="number of steps")
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--init", default=STATIONARY, help="'stationary' or a state label")
    p.add_argument("--kappa-prime", help="alternate kernel for J'_n: metropolis, boltzmann, barker, alpha_barker:A")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.add_argument("--dump-trace", metavar="PATH", help="write a tab-separated trace dump (debugging aid)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("bench", help="replicated variance table with confidence intervals")
    common(p)
    p.add_argument("--kappa-prime", help="alternate kernel for the jprime estimator")
    _add_bench_options(p)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("counterexample", help="the built-in three-state counter-example")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true", help="closed-form numbers (default)")
    mode.add_argument("--bench", action="store_true", help="replicated variance table")
    _add_bench_options(p)
    p.set_defaults(func=_cmd_counterexample)

    p = sub.add_parser("validate", help="check every model invariant")
    p.add_argument("--model", required=True, help="model file (JSON)")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "exact" and args.tilde and not args.psi:
        parser.error("--tilde needs --psi")
    if args.command == "counterexample" and args.format == "csv" and not args.bench:
        args.format = "text"
    try:
        return args.func(args)
    except ModelValidationError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (ModelError, _bench.BudgetExceededError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
