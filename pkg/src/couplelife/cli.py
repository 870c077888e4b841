"""Command-line interface: ``couplelife <subcommand> [options]``.

Every subcommand writes its outputs atomically and, next to the main output,
a ``<out>.config.json`` with the fully resolved options. Exit status is 0 on
success, 2 on a usage error and 1 on any other failure.
"""

import argparse
import csv
import io
import json
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from ._parallel import WORKERS_ENV, default_workers
from .actuarial import PRODUCTS, ProductSpec, expectancy_curve, portfolio_expected_values
from .data import (
    GeneratorConfig,
    death_age_pairs,
    dependence_summary,
    describe_ages,
    generator_config_from_dict,
    load_portfolio,
    partition_by_age_gap,
    read_kv_config,
    synthesize_portfolio,
    write_portfolio,
)
from .dependence import DependenceModel
from .estimation import (
    fit_marginal,
    fit_result_to_json,
    ifm_fit_copula,
    load_fit_result,
    omnibus_fit_copula,
)
from .gof import bootstrap_gof
from .risk import DEFAULT_DEDUCTIBLES, SimulationConfig, run_study
from .survival import GompertzParams

log = logging.getLogger("couplelife")

# Generator truth when no model is given: the published male/female Gompertz
# estimates and Gumbel age-gap coefficients.
DEFAULT_MARGINALS = {"m_male": 86.378, "sigma_male": 9.833,
                     "m_female": 92.175, "sigma_female": 8.114}
DEFAULT_TRUTH = {"family": "gumbel", "form": "agegap",
                 "beta0": 1.027, "beta1": -0.024, "beta2": 0.036}


class UsageError(Exception):
    pass


class CommandError(Exception):
    """Runtime failure tagged with the module and operation that raised it."""

    def __init__(self, where, err):
        super().__init__(f"{where}: {err}")


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return None if not math.isfinite(o) else float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _clean(obj):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _write_resolved(args, out):
    # the worker count never changes results, so it is left out
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "config", "workers")}
    cfg["subcommand"] = args.command
    _atomic_write(f"{out}.config.json", _dump_json(_clean(cfg)))


def _run(where, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except (ValueError, RuntimeError, KeyError, OSError) as err:
        raise CommandError(where, err) from err


def _load(args):
    return _run("data.load_portfolio", load_portfolio, args.input,
                event_flag=args.event_flag, window_years=args.window)


def _load_fits(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return load_fit_result(fh.read())
    except (OSError, ValueError, KeyError) as err:
        raise CommandError("estimation.load_fit_result", err) from err


def _pick_fit(fits, method, form=None):
    cands = [f for (m, fm), f in fits.items() if m == method and (form is None or fm == form)]
    if form is None:
        non_const = [f for f in cands if f.model.form != "constant"]
        cands = non_const or cands
    if not cands:
        raise CommandError("cli.fit_lookup", f"no {method} fit with form {form or 'any'} in fit file")
    return cands[0]


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_gen(args):
    settings = {"n_couples": args.couples, "window_years": args.window,
                "late_entry_fraction": args.late_entry_fraction}
    cfg = _run("data.synthesize_portfolio", generator_config_from_dict, settings)
    marg = (GompertzParams(args.m_male, args.sigma_male),
            GompertzParams(args.m_female, args.sigma_female))
    if args.form == "constant":
        dep = DependenceModel(args.family, "constant", alpha=args.alpha)
    elif args.family == "independence":
        dep = DependenceModel.independence()
    else:
        dep = DependenceModel(args.family, args.form, beta0=args.beta0, beta1=args.beta1,
                              beta2=args.beta2)
    port = _run("data.synthesize_portfolio", synthesize_portfolio, cfg, marg, dep, args.seed)
    _run("data.write_portfolio", write_portfolio, port, args.out)
    _write_resolved(args, args.out)
    log.info("wrote %d couples to %s", len(port), args.out)
    return 0


def cmd_validate(args):
    port = _load(args)
    report = {"n_couples": len(port), "censoring": port.censoring_counts(), "valid": True}
    text = _dump_json(report)
    if args.out:
        _atomic_write(args.out, text)
        _write_resolved(args, args.out)
    else:
        sys.stdout.write(text)
    return 0


def _dep_block(port):
    pairs = death_age_pairs(port)
    if len(pairs) < 2:
        return {"n_pairs": int(len(pairs)), "pearson_r": None, "spearman_rho": None,
                "kendall_tau": None}
    try:
        s = dependence_summary(pairs)
    except ValueError:
        return {"n_pairs": int(len(pairs)), "pearson_r": None, "spearman_rho": None,
                "kendall_tau": None}
    return {"n_pairs": s.n_pairs, "pearson_r": s.pearson_r, "spearman_rho": s.spearman_rho,
            "kendall_tau": s.kendall_tau}


def cmd_summarize(args):
    port = _load(args)
    bands = [float(b) for b in args.bands.split(",")]
    by_gap = _run("data.partition_by_age_gap", partition_by_age_gap, port, bands, False)
    by_both = _run("data.partition_by_age_gap", partition_by_age_gap, port, bands, True)
    older_m = port.x_m >= port.x_f
    by_sign = {"x_m>=x_f": port.subset(older_m), "x_m<x_f": port.subset(~older_m), "total": port}

    def blocks(parts):
        return {label: {"n_couples": len(sub), **_dep_block(sub)} for label, sub in parts.items()}

    out = {
        "univariate": describe_ages(port),
        "censoring": port.censoring_counts(),
        "dependence": _dep_block(port),
        "by_sign": blocks(by_sign),
        "by_age_gap": blocks(by_gap),
        "by_age_gap_and_sign": blocks(by_both),
    }
    text = _dump_json(_clean(out))
    if args.out:
        _atomic_write(args.out, text)
        _write_resolved(args, args.out)
    else:
        sys.stdout.write(text)
    return 0


def cmd_fit(args):
    port = _load(args)
    mm = _run("estimation.fit_marginal", fit_marginal, port, "m")
    mf = _run("estimation.fit_marginal", fit_marginal, port, "f")
    methods = ["ifm", "omnibus"] if args.method == "both" else [args.method]
    forms = [args.form] if args.form == "constant" else [args.form, "constant"]
    fits = []
    for method in methods:
        for form in forms:
            if method == "ifm":
                fit = _run("estimation.ifm_fit_copula", ifm_fit_copula, port, mm, mf,
                           args.family, form)
            else:
                fit = _run("estimation.omnibus_fit_copula", omnibus_fit_copula, port,
                           args.family, form)
            if not fit.converged:
                log.warning("%s %s fit did not converge", method, form)
            fits.append(fit)
    text = fit_result_to_json(mm, mf, fits)
    _atomic_write(args.out, json.dumps(_clean(json.loads(text)), indent=2, sort_keys=True) + "\n")
    _write_resolved(args, args.out)
    return 0


def cmd_gof(args):
    port = _load(args)
    mm, mf, fits = _load_fits(args.fit)
    fit = _pick_fit(fits, args.method, args.form)
    marginals = (mm, mf) if args.method == "ifm" else None
    if args.method == "ifm" and mm is None:
        raise CommandError("goodness_of_fit.bootstrap_gof", "fit file has no marginals")
    res = _run("goodness_of_fit.bootstrap_gof", bootstrap_gof, port, marginals, fit,
               method=args.method, K=args.replicates, seed=args.seed, paired=args.paired,
               censoring=args.censoring, refit_marginals=not args.freeze_marginals,
               workers=args.workers)
    out = res.to_dict()
    out.update({"family": fit.model.family.value, "form": fit.model.form})
    _atomic_write(args.out, _dump_json(_clean(out)))
    _write_resolved(args, args.out)
    return 0


def _models_from_fits(fits, method, labels):
    out = {}
    for label in labels:
        if label == "A":
            out["A"] = DependenceModel.independence()
        elif label == "B":
            out["B"] = _pick_fit(fits, method, "constant").model
        elif label == "C":
            out["C"] = _pick_fit(fits, method, None).model
        else:
            raise UsageError(f"unknown model {label!r}; use A, B or C")
    return out


def _products(text):
    if text == "all":
        return PRODUCTS
    try:
        return tuple(ProductSpec(p.strip()).kind for p in text.split(","))
    except ValueError as err:
        raise UsageError(str(err)) from None


def cmd_price(args):
    port = _load(args)
    mm, mf, fits = _load_fits(args.fit)
    if mm is None:
        raise CommandError("actuarial.price", "fit file has no marginals")
    marg = (mm.params, mf.params)
    models = _models_from_fits(fits, args.method, ["A", "B", "C"])
    products = _products(args.products)
    values = _run("actuarial.portfolio_expected_values", portfolio_expected_values,
                  port.to_array(), marg, models[args.model], products, args.delta)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["couple_id", "product", "expected_pv"])
    for cid, row in zip(port.couple_id, values):
        for kind, v in zip(products, row):
            w.writerow([cid, ProductSpec(kind).label, format(v, ".17g")])
    _atomic_write(args.out, buf.getvalue())
    rows = _run("actuarial.expectancy_curve", expectancy_curve, marg, models,
                fixed=args.fixed, age=args.age, d_range=(-20, 20), step=args.step)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["d", "model", "e_last_survivor"])
    for d, label, e in rows:
        w.writerow([format(d, "g"), label, format(e, ".17g")])
    _atomic_write(args.curve_out or f"{os.path.splitext(args.out)[0]}_curve.csv", buf.getvalue())
    _write_resolved(args, args.out)
    return 0


def cmd_simulate(args):
    port = _load(args)
    mm, mf, fits = _load_fits(args.fit)
    if mm is None:
        raise CommandError("risk_engine.simulate_liability", "fit file has no marginals")
    labels = [s.strip().upper() for s in args.models.split(",") if s.strip()]
    models = _models_from_fits(fits, args.method, labels)
    deductibles = dict(DEFAULT_DEDUCTIBLES)
    if args.deductibles:
        vals = [float(v) for v in args.deductibles.split(",")]
        if len(vals) != 4:
            raise UsageError("--deductibles needs four comma-separated values (P1..P4)")
        deductibles = dict(zip(PRODUCTS, vals))
    cfg = _run("risk_engine.simulate_liability", SimulationConfig, n_paths=args.paths,
               seed=args.seed, delta=args.delta, products=_products(args.products),
               deductibles=deductibles, workers=args.workers)
    study = _run("risk_engine.run_study", run_study, port, (mm.params, mf.params), models, cfg)
    _atomic_write(args.out, _dump_json(_clean(study.to_dict())))
    study.write_samples(args.samples_out or f"{os.path.splitext(args.out)[0]}_samples.csv")
    _write_resolved(args, args.out)
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (math.isfinite(v) and v >= 0):
        raise argparse.ArgumentTypeError("must be finite and >= 0")
    return v


def _add_input(p):
    p.add_argument("--input", required=True, help="portfolio CSV")
    p.add_argument("--event-flag", action="store_true",
                   help="input flags mark deaths with 1 (flipped on load)")
    p.add_argument("--window", type=float, default=GeneratorConfig.window_years,
                   help="observation window in years used to validate durations")


def _add_workers(p):
    p.add_argument("--workers", type=_positive_int, default=None,
                   help=f"worker processes (default: ${WORKERS_ENV} or all cores)")


class _DefaultsFormatter(argparse.HelpFormatter):
    """Append each option's default once; ``None`` and flags stay silent."""

    def _get_help_string(self, action):
        help = action.help or ""
        if "(default" in help or not action.option_strings or action.required:
            return help
        if action.default is None or action.default is argparse.SUPPRESS or action.nargs == 0:
            return help
        return f"{help} (default: %(default)s)".lstrip()


def build_parser():
    fmt = _DefaultsFormatter
    parser = argparse.ArgumentParser(prog="couplelife", formatter_class=fmt,
                                     description="Dependent couple lifetimes: fit, test, price, simulate.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", default=None,
                        help="key = value file overriding option defaults")
    parser.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("gen", help="simulate a synthetic portfolio", formatter_class=fmt)
    p.add_argument("--couples", type=_positive_int, default=GeneratorConfig.n_couples)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=float, default=GeneratorConfig.window_years)
    p.add_argument("--late-entry-fraction", type=float,
                   default=GeneratorConfig.late_entry_fraction,
                   help="share of couples entering uniformly during the window")
    p.add_argument("--family", default=DEFAULT_TRUTH["family"],
                   choices=["gumbel", "frank", "clayton", "joe", "independence"])
    p.add_argument("--form", default=DEFAULT_TRUTH["form"], choices=["constant", "agegap", "youn"])
    p.add_argument("--alpha", type=float, default=2.0, help="parameter of the constant form")
    for k in ("beta0", "beta1", "beta2"):
        p.add_argument(f"--{k}", type=float, default=DEFAULT_TRUTH[k])
    for k, v in DEFAULT_MARGINALS.items():
        p.add_argument(f"--{k.replace('_', '-')}", type=float, default=v)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("validate", help="check a portfolio file", formatter_class=fmt)
    _add_input(p)
    p.add_argument("--out", default=None, help="JSON report (stdout if omitted)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("summarize", help="descriptive statistics", formatter_class=fmt)
    _add_input(p)
    p.add_argument("--bands", default="2,4", help="|d| band edges")
    p.add_argument("--out", default=None, help="JSON output (stdout if omitted)")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("fit", help="fit margins and copula", formatter_class=fmt)
    _add_input(p)
    p.add_argument("--family", default="gumbel", choices=["gumbel", "frank", "clayton", "joe"])
    p.add_argument("--form", default="agegap", choices=["constant", "agegap", "youn"])
    p.add_argument("--method", default="both", choices=["ifm", "omnibus", "both"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("gof", help="bootstrap goodness-of-fit test", formatter_class=fmt)
    _add_input(p)
    p.add_argument("--fit", required=True, help="JSON written by 'fit'")
    p.add_argument("--method", default="ifm", choices=["ifm", "omnibus"])
    p.add_argument("--form", default=None, choices=["constant", "agegap", "youn"],
                   help="which fitted form to test (default: the non-constant one)")
    p.add_argument("--replicates", type=_positive_int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--censoring", default="km", choices=["km", "observed"],
                   help="draw censoring times from their KM estimate or resample observed values")
    p.add_argument("--paired", action=argparse.BooleanOptionalAction, default=True,
                   help="spouses share one censoring time")
    p.add_argument("--freeze-marginals", action="store_true",
                   help="IFM replicates reuse the original margins")
    p.add_argument("--out", required=True)
    _add_workers(p)
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("price", help="expected values and expectancy curves", formatter_class=fmt)
    _add_input(p)
    p.add_argument("--fit", required=True)
    p.add_argument("--method", default="ifm", choices=["ifm", "omnibus"])
    p.add_argument("--model", default="C", choices=["A", "B", "C"],
                   help="model for the per-couple values")
    p.add_argument("--products", default="all")
    p.add_argument("--delta", type=_nonneg_float, default=0.05, help="force of interest")
    p.add_argument("--fixed", default="x", choices=["x", "y"], help="spouse held at --age")
    p.add_argument("--age", type=float, default=65.0)
    p.add_argument("--step", type=float, default=1.0, help="age-gap grid step")
    p.add_argument("--out", required=True, help="per-couple CSV")
    p.add_argument("--curve-out", default=None, help="curve CSV (default: <out>_curve.csv)")
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("simulate", help="Monte Carlo risk study", formatter_class=fmt)
    _add_input(p)
    p.add_argument("--fit", required=True)
    p.add_argument("--method", default="ifm", choices=["ifm", "omnibus"])
    p.add_argument("--products", default="all")
    p.add_argument("--models", default="A,B,C")
    p.add_argument("--paths", type=_positive_int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delta", type=_nonneg_float, default=0.05)
    p.add_argument("--deductibles", default=None,
                   help="P1..P4 stop-loss deductibles (default: 4e6,4.5e6,4.2e6,1.7e6)")
    p.add_argument("--out", required=True)
    p.add_argument("--samples-out", default=None,
                   help="CSV of the liability sample (default: <out>_samples.csv)")
    _add_workers(p)
    p.set_defaults(func=cmd_simulate)

    # options without help text would otherwise hide their defaults
    for sp in sub.choices.values():
        for action in sp._actions:
            if not action.help and action.option_strings and action.default is not None:
                action.help = "(default: %(default)s)"
    return parser


def _apply_config(parser, argv):
    """Use a ``--config`` file's values as defaults for the chosen subcommand."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        values = read_kv_config(known.config)
    except (OSError, ValueError) as err:
        parser.error(f"cannot read config: {err}")
    values = {k.replace("-", "_"): v for k, v in values.items()}
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for sp in [parser, *sub_action.choices.values()]:
        dests = {a.dest for a in sp._actions}
        sp.set_defaults(**{k: v for k, v in values.items() if k in dests})
        for action in sp._actions:
            if action.dest in values and action.required:
                action.required = False


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    _apply_config(parser, argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if not args.command:
        parser.print_usage(sys.stderr)
        return 2
    optional_out = args.command in ("validate", "summarize")
    for name in ("input", "out", "fit"):
        if getattr(args, name, "") is None and not (name == "out" and optional_out):
            # required flags may be supplied by --config, so argparse cannot check them
            print(f"error: --{name} is required", file=sys.stderr)
            return 2
    if getattr(args, "workers", None) is None and hasattr(args, "workers"):
        args.workers = default_workers()
    try:
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except CommandError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # noqa: BLE001 - last-resort guard for a batch tool
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
