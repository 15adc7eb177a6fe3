"""Command-line interface: ``downturn-lgd {synth,fit-mle,fit-mcmc,capital}``.

Human-readable tables go to stdout, JSON documents to ``--output``.
Exit codes: 0 success, 2 usage, 3 data validation, 4 numeric degeneracy.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import warnings
from pathlib import Path

from importlib.metadata import version as _dist_version
from .capital import capital_report, format_capital_table
from .data_io import dumps_report, format_observations, generate_synthetic, load_observations
from .errors import DataValidationError, DegenerateInputError, DomainError
from .mcmc import PARAM_NAMES, PriorSpec, SamplerConfig, load_chain, posterior_summary, run_chain, save_chain
from .mle import fit_mle
from .model import ModelParams

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DEGENERATE = 0, 2, 3, 4
TABLE_PARAMS = ("p", "rho", "mu", "omega", "sigma")


class UsageError(Exception):
    pass


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _parse_sizes(text: str):
    sizes = []
    for tok in text.split(","):
        tok = tok.strip().lower()
        if tok in ("inf", "infinity", "∞"):
            sizes.append(None)
            continue
        try:
            n = int(tok)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad portfolio size {tok!r}") from None
        if n < 1:
            raise argparse.ArgumentTypeError("portfolio sizes must be positive")
        sizes.append(n)
    return sizes


def _parse_bound(text: str):
    try:
        name, rng = text.split("=", 1)
        lo, hi = (float(v) for v in rng.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bound must look like NAME=LOW,HIGH, got {text!r}") from None
    if name not in PARAM_NAMES:
        raise argparse.ArgumentTypeError(f"unknown parameter {name!r}; choose from {', '.join(PARAM_NAMES)}")
    return name, (lo, hi)


def _quantile_level(text: str) -> float:
    q = float(text)
    if not 0.0 < q < 1.0:
        raise argparse.ArgumentTypeError(f"quantile level must lie in (0, 1), got {text}")
    return q


def _int_at_least(low: int, what: str):
    def parse(text: str) -> int:
        try:
            n = int(text)
        except ValueError:
            n = low - 1
        if n < low:
            raise argparse.ArgumentTypeError(f"expected a {what} integer, got {text!r}")
        return n

    return parse


_positive_int = _int_at_least(1, "positive")
_nonnegative_int = _int_at_least(0, "non-negative")


def _mle_row(params: ModelParams) -> str:
    head = f"{'item':<7}{'MLE':>10}"
    rows = [head, "-" * len(head)]
    for name in TABLE_PARAMS:
        rows.append(f"{name:<7}{getattr(params, name):>10.4g}")
    return "\n".join(rows) + "\n"


def _posterior_table(summary: dict, mle: dict | None) -> str:
    cols = ("MLE", "Mode", "Mean", "Stdev", "Skewness", "Kurtosis", "CV")
    head = f"{'item':<7}" + "".join(f"{c:>10}" for c in cols)
    rows = [head, "-" * len(head)]
    fmt = lambda v: f"{v:>10.4g}" if v is not None else f"{'-':>10}"  # noqa: E731
    for name in TABLE_PARAMS:
        s = summary[name]
        m = mle.get(name) if mle else None
        rows.append(f"{name:<7}" + "".join(fmt(v) for v in (m, s.mode, s.mean, s.stdev, s.skewness, s.kurtosis, s.cv)))
    return "\n".join(rows) + "\n"


# -- subcommands ------------------------------------------------------------------

def cmd_synth(args) -> int:
    params = ModelParams(p=args.p, rho=args.rho, mu=args.mu, sigma=args.sigma, omega=args.omega)
    truth = generate_synthetic(params, args.years, args.firms, args.seed, start_year=args.start_year)
    _atomic_write(args.output, format_observations(truth.series))
    if args.truth_output:
        doc = {"params": params.as_dict(), "path": truth.path.values.tolist(), "seed": args.seed,
               "years": truth.series.years.tolist()}
        _atomic_write(args.truth_output, dumps_report(doc))
    print(f"wrote {args.years} years ({args.firms} firms/year) to {args.output}")
    return EXIT_OK


def cmd_fit_mle(args) -> int:
    data = load_observations(args.input)
    try:
        fit = fit_mle(data)
    except DegenerateInputError as exc:
        partial = exc.partial
        if partial is not None and getattr(partial, "degenerate", False):
            warnings.warn(str(exc), RuntimeWarning, stacklevel=1)
            doc = {"params": {"p": partial.p, "rho": partial.rho}, "degenerate": True, "notes": [str(exc)]}
            if args.output:
                _atomic_write(args.output, dumps_report(doc))
            print(f"p    {partial.p:.4g}\nrho  {partial.rho:.4g}   (degenerate: {exc})")
            return EXIT_OK
        raise
    if args.output:
        _atomic_write(args.output, dumps_report(fit.as_dict(years=data.years)))
    sys.stdout.write(_mle_row(fit.params))
    for note in fit.notes:
        print(f"note: {note}")
    return EXIT_OK


def cmd_fit_mcmc(args) -> int:
    data = load_observations(args.input)
    try:
        prior = PriorSpec(**dict(args.bound or []))
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    config = SamplerConfig(
        burn_in=args.burn_in, samples=args.samples, seed=args.seed,
        count_mode=args.count_mode, ridge_moves=not args.no_ridge_moves,
    )
    mle = None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            mle = fit_mle(data).params.as_dict()
    except (DegenerateInputError, DomainError):
        pass
    chain = run_chain(data, prior, config)
    summary = posterior_summary(chain)
    chain.extra["mle"] = mle
    chain.extra["posterior_summary"] = {k: v.as_dict() for k, v in summary.items()}
    if args.output:
        save_chain(chain, args.output)
    sys.stdout.write(_posterior_table(summary, mle))
    acc = chain.acceptance
    print(f"acceptance: min {min(acc.values()):.3f}, max {max(acc.values()):.3f}"
          + ("" if chain.tuning_converged else "  (tuning did not converge)"))
    return EXIT_OK


def cmd_capital(args) -> int:
    path = Path(args.input)
    if not path.exists():
        raise DataValidationError(f"{path}: no such file")
    chain = None
    mle = None
    summary = None
    if path.suffix.lower() == ".json":
        doc = json.loads(path.read_text(encoding="utf-8"))
        if doc.get("degenerate"):
            raise DegenerateInputError("input fit is degenerate; no capital can be computed")
        mle = ModelParams.from_dict(doc.get("params", doc))
    else:
        chain = load_chain(path)
        if chain.extra.get("mle"):
            mle = ModelParams.from_dict(chain.extra["mle"])
        summary = chain.extra.get("posterior_summary")
    report = capital_report(
        chain, q=args.q, portfolio_sizes=args.portfolio_sizes, n_draws=args.draws,
        mode=args.s_mode, seed=args.seed, mle_params=mle, threads=args.threads,
        include_samples=args.include_samples, stride=args.stride,
    )
    config = {
        "input": str(args.input), "q": args.q, "s_mode": args.s_mode, "draws": args.draws, "seed": args.seed,
        "stride": args.stride,
        "portfolio_sizes": ["inf" if s is None else s for s in args.portfolio_sizes],
    }
    doc = {
        "config": config,
        "mle": mle.as_dict() if mle else None,
        "posterior_summary": summary,
        "capital": report.as_dict(),
    }
    if args.output:
        _atomic_write(args.output, dumps_report(doc))
    sys.stdout.write(format_capital_table(report))
    return EXIT_OK


# -- parser -------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="downturn-lgd", description=__doc__.splitlines()[0], formatter_class=fmt)
    parser.add_argument("--version", action="version", version=_dist_version("downturn-lgd"))
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="simulate annual default/recovery data", formatter_class=fmt)
    for name, default in (("p", 0.0167), ("rho", 0.0635), ("mu", 0.411), ("sigma", 0.499), ("omega", 0.0192)):
        p.add_argument(f"--{name}", type=float, default=default, help=f"true {name}")
    p.add_argument("--years", type=_positive_int, default=29, help="number of years T")
    p.add_argument("--firms", type=_positive_int, default=2500, help="firms per year J")
    p.add_argument("--start-year", type=int, default=1982, help="first calendar year")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--output", required=True, help="CSV to write")
    p.add_argument("--truth-output", help="optional JSON with the true parameters and factor path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit-mle", help="closed-form maximum likelihood fit", formatter_class=fmt)
    p.add_argument("--input", required=True, help="CSV with year,firms,defaults,avg_recovery")
    p.add_argument("--output", help="JSON file for the fit")
    p.set_defaults(func=cmd_fit_mle)

    p = sub.add_parser("fit-mcmc", help="Bayesian fit by component-wise Metropolis-Hastings", formatter_class=fmt)
    p.add_argument("--input", required=True, help="CSV with year,firms,defaults,avg_recovery")
    p.add_argument("--output", help="chain CSV to write (metadata goes to the same stem with .json)")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--burn-in", type=_nonnegative_int, default=20_000, help="burn-in sweeps (proposal tuning happens here)")
    p.add_argument("--samples", type=_positive_int, default=100_000, help="retained sweeps")
    p.add_argument("--count-mode", choices=("binomial", "normal"), default="binomial",
                   help="default-count likelihood: exact binomial or its normal approximation")
    p.add_argument("--bound", type=_parse_bound, action="append", metavar="NAME=LOW,HIGH",
                   help="override a uniform prior bound; defaults: probit_p (-10,10), rho (0,1), "
                        "mu (0,1), sigma (0.01,1), omega (0,1)")
    p.add_argument("--no-ridge-moves", action="store_true",
                   help="disable the joint moves that keep the likelihood fixed (pure single-site sampler)")
    p.set_defaults(func=cmd_fit_mcmc)

    p = sub.add_parser("capital", help="economic capital from a chain or a parameter fit", formatter_class=fmt)
    p.add_argument("--input", required=True, help="chain CSV from fit-mcmc, or JSON from fit-mle")
    p.add_argument("--output", help="JSON report")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--q", type=_quantile_level, default=0.999, help="quantile level")
    p.add_argument("--portfolio-sizes", type=_parse_sizes, default=[50, 500, 5000, None],
                   help="comma list of J values for the predictive quantile; 'inf' is the limiting portfolio "
                        "(default 50,500,5000,inf)")
    p.add_argument("--draws", type=_positive_int, default=100_000, help="Monte Carlo draws per predictive quantile")
    p.add_argument("--s-mode", choices=("exact", "linear"), default="exact",
                   help="conditional loss per default: exact expectation of max(1-R,0), or linear 1-E[R|x]")
    p.add_argument("--stride", type=_positive_int, default=1,
                   help="use every k-th chain row for the posterior of the parameter-conditional quantile")
    p.add_argument("--threads", type=_positive_int, default=1, help="worker threads for loss simulation")
    p.add_argument("--include-samples", action="store_true", help="embed posterior quantile samples in the JSON")
    p.set_defaults(func=cmd_capital)
    return parser


def _format_warning(message, category, filename, lineno, line=None):
    return f"warning: {message}\n"


def main(argv=None) -> int:
    warnings.formatwarning = _format_warning
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DegenerateInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except DomainError as exc:
        # domain errors from estimators mean the data cannot support the requested fit
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
