"""Command-line entry point: the published tables, single runs and the HTTP service."""

import argparse
import asyncio
import logging
import pathlib
import re
import sys
from typing import Optional, Sequence

import pandas as pd
from pydantic import ValidationError

from src.config import Configuration, load_configuration
from src.consts import EXIT_CONFIG, EXIT_FAILURE, EXIT_OK, Criterion, OutputFormat
from src.exceptions import ConfigError, DomainError, ReinsuranceError
from src.experiments import (
    CalibrateExperiment,
    Table1Experiment,
    Table2Experiment,
    Table3Experiment,
    VerifyExperiment,
)
from src.experiments.bayes_table import WIDTHS, table3_rows
from src.main import serve, setup_logging
from src.orchestrator import ExperimentOrchestrator
from src.reinsurance.bayes import parse_prior
from src.reinsurance.contracts import parse_contract
from src.reinsurance.distributions import parse_distribution
from src.reinsurance.risk import risk_report
from src.utils import write_table

logger = logging.getLogger(__name__)


def _cuts(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.replace(",", ";").split(";") if v.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"cut points must be numbers: {text!r}") from e


PRIOR_ITEM = re.compile(r"\s*(d\d)\s*=\s*([A-Za-z]+\([^)]*\))\s*(?:,|$)")


def _priors(text: str) -> tuple[str, str, str]:
    """``d0=exp(1),d1=gamma(3, 2),d2=exp(1)``; the commas inside a prior stay with it."""
    given, position = {}, 0
    while position < len(text):
        match = PRIOR_ITEM.match(text, position)
        if match is None:
            raise argparse.ArgumentTypeError(f"cannot read priors from {text!r}")
        given[match[1]] = match[2]
        position = match.end()
    if sorted(given) != list(WIDTHS):
        raise argparse.ArgumentTypeError(f"priors needed for {', '.join(WIDTHS)}, got {text!r}")
    try:
        for prior in given.values():
            parse_prior(prior)
    except DomainError as e:
        raise argparse.ArgumentTypeError(str(e)) from e
    return tuple(given[w] for w in WIDTHS)


def _widths(text: str) -> list[float]:
    widths = _cuts(text)
    if len(widths) != len(WIDTHS) or any(w <= 0 for w in widths):
        raise argparse.ArgumentTypeError(
            f"{len(WIDTHS)} positive widths needed, got {text!r}"
        )
    return list(widths)


def _add_weights(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--alpha", type=float, help="CTE level (default 0.1)")
    parser.add_argument("--omega", type=float, help="weight of the ceded part (default 0.2)")
    parser.add_argument("--beta", type=float, help="utility coefficient (default 1)")


def build_parser() -> argparse.ArgumentParser:
    # accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="INI ([section] key = value) or YAML config file")
    common.add_argument("--output", help="write the table here instead of stdout")
    common.add_argument(
        "--format",
        "--out",
        dest="format",
        choices=[f.value for f in OutputFormat],
        help="table format (default csv)",
    )
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    common.add_argument(
        "--parallel", action="store_true", help="run table rows concurrently"
    )
    common.add_argument("--seed", type=int, help="seed for every stochastic step")

    parser = argparse.ArgumentParser(
        prog="reinsurance",
        description="Multi-layer reinsurance contracts under CTE, variance and utility criteria.",
        parents=[common],
    )
    commands = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("table1", "2-layer ladders under the variance criterion"),
        ("table2", "2-layer ladders under the utility criterion"),
    ):
        table = commands.add_parser(name, help=help_text, parents=[common])
        table.add_argument(
            "--dist", action="append", help="severity literal, repeatable (default: config list)"
        )
        table.add_argument("--mode", choices=["strict", "match"], help="deductible handling")
        _add_weights(table)

    table3 = commands.add_parser(
        "table3", help="Bayes estimates of ladder widths", parents=[common]
    )
    table3.add_argument("--claim-dist", help="severity literal (default: the published rows)")
    table3.add_argument(
        "--priors", type=_priors, help="d0=exp(1),d1=exp(1),d2=exp(1) (default Exp(1) each)"
    )
    table3.add_argument("--init", type=_widths, help="censoring widths of the first round")
    table3.add_argument("--reps", type=int, help="repetitions per row (default 100)")
    table3.add_argument(
        "--n",
        "--sample-size",
        dest="sample_size",
        type=int,
        help="claims per repetition (default 100)",
    )
    table3.add_argument("--rounds", type=int, help="re-censoring rounds (default 10)")
    table3.add_argument("--grid-points", type=int, help="grid points per axis (default 64)")
    table3.add_argument("--alpha", type=float, help="level of the reference stop-loss")

    calibrate = commands.add_parser("calibrate", help="calibrate one ladder", parents=[common])
    calibrate.add_argument("--dist", required=True, help="severity literal, e.g. exp(mean=10)")
    calibrate.add_argument("--layers", type=int, default=1, help="number of cut points")
    calibrate.add_argument(
        "--criterion", choices=[c.value for c in Criterion], default=Criterion.VARIANCE.value
    )
    calibrate.add_argument("--mode", choices=["strict", "match"], help="deductible handling")
    _add_weights(calibrate)

    verify = commands.add_parser(
        "verify", help="Monte-Carlo check of risk-preserving extensions", parents=[common]
    )
    verify.add_argument("--dist", required=True, help="severity literal")
    verify.add_argument("--base", required=True, help="stoploss:d or prop:c")
    verify.add_argument(
        "--cuts", type=_cuts, action="append", default=[], help="'M1;M2;...', repeatable"
    )
    verify.add_argument("--rho", default="cte:0.1", help="cte:<alpha> or var:<alpha>")
    verify.add_argument("--n", type=int, help="Monte-Carlo sample size")
    verify.add_argument(
        "--adversarial", action="store_true", help="add a contract with a flat below d_alpha"
    )
    verify.add_argument(
        "--omega-star", type=float, help="build the convex extension for this weight instead"
    )
    verify.add_argument("--alpha", type=float, help="level used for d_alpha")

    report = commands.add_parser(
        "report", help="all risk functionals of one contract", parents=[common]
    )
    report.add_argument("--dist", required=True, help="severity literal")
    report.add_argument(
        "--contract", required=True, help="stoploss:d, prop:c, layer:a;l, ladder:d;M1;M2 or a file"
    )
    report.add_argument("--premium", type=float, help="premium (default E[h(X)])")
    _add_weights(report)

    commands.add_parser("serve", help="start the HTTP service", parents=[common])
    return parser


def _upper(text: Optional[str]) -> Optional[str]:
    return text.upper() if text else None


def _overrides(args: argparse.Namespace) -> dict:
    """Only flags that were given; everything else comes from the config file."""
    sections = {
        "experiment": {
            "alpha": getattr(args, "alpha", None),
            "omega": getattr(args, "omega", None),
            "beta": getattr(args, "beta", None),
            "seed": getattr(args, "seed", None),
            "format": getattr(args, "format", None),
            "parallel": getattr(args, "parallel", None),
            "distributions": getattr(args, "dist", None)
            if args.command in ("table1", "table2")
            else None,
        },
        "calibration": {"mode": getattr(args, "mode", None)},
        "bayes": {
            "reps": getattr(args, "reps", None),
            "sample_size": getattr(args, "sample_size", None),
            "rounds": getattr(args, "rounds", None),
            "grid_points": getattr(args, "grid_points", None),
            "init": getattr(args, "init", None),
        },
        "logger": {"level": _upper(getattr(args, "log_level", None))},
    }
    overrides = {}
    for section, values in sections.items():
        given = {k: v for k, v in values.items() if v is not None}
        if given:
            overrides[section] = given
    return overrides


def _emit(frame: pd.DataFrame, settings: Configuration, output: Optional[str]) -> None:
    path = None
    if output:
        path = pathlib.Path(output)
        if not path.is_absolute():
            path = pathlib.Path(settings.output.dir) / path
    text = write_table(frame, OutputFormat(settings.experiment.format), path)
    if path is None:
        sys.stdout.write(text)


def _check_severities(args: argparse.Namespace, experiment) -> None:
    """A severity literal that does not parse is a usage error, not a failed row."""
    if args.command.startswith("table"):
        literals = [getattr(item, "dist", item) for item in experiment.items()]
    else:
        literals = [args.dist]
    for literal in literals:
        parse_distribution(literal)


def _experiment(args: argparse.Namespace, settings: Configuration):
    if args.command == "table1":
        return Table1Experiment(settings)
    if args.command == "table2":
        return Table2Experiment(settings)
    if args.command == "table3":
        rows = table3_rows(getattr(args, "claim_dist", None), getattr(args, "priors", None))
        return Table3Experiment(settings, rows)
    if args.command == "calibrate":
        return CalibrateExperiment(
            settings, args.dist, criterion=Criterion(args.criterion), layers=args.layers
        )
    return VerifyExperiment(
        settings,
        args.dist,
        args.base,
        cut_sets=args.cuts,
        rho=args.rho,
        n=args.n,
        adversarial=args.adversarial,
        omega_star=args.omega_star,
    )


def run(args: argparse.Namespace, settings: Configuration) -> int:
    if args.command == "serve":
        serve(settings)
        return EXIT_OK
    if args.command == "report":
        report = risk_report(
            parse_distribution(args.dist),
            parse_contract(args.contract),
            alpha=settings.experiment.alpha,
            omega=settings.experiment.omega,
            beta=settings.experiment.beta,
            premium=args.premium,
            contract_id=args.contract,
        )
        _emit(pd.DataFrame([report.to_row()]), settings, getattr(args, "output", None))
        return EXIT_OK

    experiment = _experiment(args, settings)
    _check_severities(args, experiment)
    orchestrator = ExperimentOrchestrator(
        experiment,
        parallel=settings.experiment.parallel,
        max_retries=settings.calibration.max_retries,
    )
    outcome = asyncio.run(orchestrator.run())
    _emit(outcome.frame, settings, getattr(args, "output", None))
    return outcome.exit_code


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = load_configuration(getattr(args, "config", None), _overrides(args))
    except (ConfigError, ValidationError, ValueError) as e:
        setup_logging()
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG
    setup_logging(settings, _upper(getattr(args, "log_level", None)))

    try:
        return run(args, settings)
    except (ConfigError, ValidationError) as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_CONFIG
    except ReinsuranceError as e:
        logger.error(f"{e.title}: {e.detail}", exc_info=e)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
