"""Command-line entry point."""
from __future__ import annotations

import argparse
from collections.abc import Callable, Iterable, Sequence
import csv
from dataclasses import astuple
import io
import logging
from pathlib import Path
import sys
from typing import Any, NoReturn

import numpy as np

from .approx import (
    DIRECTION_CALIBRATE,
    KIND_QUERY,
    ApproxState,
    Marginal,
    TraceRow,
    bin_edges,
    calibrate_initial,
    iterate,
    query_marginal,
)
from .benchmarks import BUILDERS
from .clique_tree import build_clique_tree, format_tree
from .config import experiment_config, propagation_config
from .const import (
    CONF_BINS,
    CONF_COMPONENTS,
    CONF_EM_ITERATIONS,
    CONF_EM_TOLERANCE,
    CONF_KIND,
    CONF_LAMBDA,
    CONF_LAMBDA_SWEEP,
    CONF_LW_SAMPLES,
    CONF_MAX_CONTINUOUS,
    CONF_MIN_LEAF,
    CONF_NETWORK,
    CONF_PASSES,
    CONF_PSEUDOCOUNT,
    CONF_SAMPLE_SWEEP,
    CONF_SAMPLES,
    CONF_SCENARIO,
    CONF_SCHEDULE,
    CONF_SEED,
    CONF_SEEDS,
    CSV_PRECISION,
    DEFAULT_BINS,
    DEFAULT_COMPONENTS,
    DEFAULT_EM_ITERATIONS,
    DEFAULT_EM_TOLERANCE,
    DEFAULT_LAMBDA,
    DEFAULT_LAMBDA_SWEEP,
    DEFAULT_MAX_CONTINUOUS_PER_CLIQUE,
    DEFAULT_MIN_LEAF_SAMPLES,
    DEFAULT_PASSES,
    DEFAULT_PSEUDOCOUNT,
    DEFAULT_SAMPLE_SWEEP,
    DEFAULT_SAMPLES,
    DEFAULT_SEED,
    DEFAULT_SEEDS,
    EXPERIMENT_HEADER,
    EXPERIMENT_KINDS,
    MARGINAL_HEADER,
    STARTUP_MESSAGE,
    TRACE_HEADER,
)
from .density_tree import format_density_tree
from .evaluation import (
    DiscretizationSpec,
    discretize_network,
    kl_error,
    reference_marginals,
    run_experiment,
)
from .exact import exact_marginals
from .exceptions import ContractError, HybridPropError
from .network import HybridNetwork, Variable
from .network_io import load_evidence, load_network, serialize_network
from .sampler import derive_rng, likelihood_weighting, weighted_histogram

_LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

Handler = Callable[[argparse.Namespace], str]


class UsageError(Exception):
    """Error to indicate bad command-line usage."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        raise UsageError(f"{self.prog}: {message}")


def _format(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.{CSV_PRECISION}g}"
    return str(value)


def emit_csv(rows: Iterable[Sequence[Any]], header: Sequence[str]) -> str:
    """CSV text with a header row, reals at six significant digits."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ContractError(f"row {tuple(row)!r} does not match {tuple(header)!r}")
        writer.writerow([_format(value) for value in row])
    return buffer.getvalue()


def _write(text: str, out: str) -> None:
    if out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _marginal_rows(marginals: Iterable[Marginal]) -> list[tuple[Any, ...]]:
    rows = []
    for marginal in marginals:
        variable = marginal.variable
        if variable.is_discrete:
            labels: list[Any] = list(variable.states)
        else:
            assert marginal.edges is not None
            labels = list(0.5 * (marginal.edges[:-1] + marginal.edges[1:]))
        for label, probability in zip(labels, marginal.probabilities):
            rows.append((variable.name, label, float(probability)))
    return rows


def _queries(net: HybridNetwork, text: str) -> list[Variable]:
    names = [name.strip() for name in text.split(",") if name.strip()]
    if not names:
        raise UsageError("--query needs at least one variable")
    return [net.variable(name) for name in names]


def _load(args: argparse.Namespace) -> tuple[HybridNetwork, dict[int, float]]:
    net = load_network(args.net)
    return net, load_evidence(args.evidence, net)


def _cmd_validate(args: argparse.Namespace) -> str:
    net = load_network(args.net)
    return f"{net.name}: ok ({len(net.variables)} variables)\n"


def _cmd_show_tree(args: argparse.Namespace) -> str:
    net = load_network(args.net)
    tree = build_clique_tree(net, getattr(args, CONF_MAX_CONTINUOUS))
    return format_tree(tree, net)


def _propagate(
    args: argparse.Namespace, net: HybridNetwork, evidence: dict[int, float]
) -> tuple[ApproxState, list[TraceRow]]:
    """Run the approximate engine; with --reference also score each half-pass."""
    config = propagation_config(vars(args))
    tree = build_clique_tree(net, config.max_continuous_per_clique)
    state = calibrate_initial(net, tree, evidence, config)
    summaries: list[TraceRow] = []
    if not getattr(args, "reference", False):
        return iterate(state), summaries

    query = _queries(net, args.query)[0]
    spec = DiscretizationSpec(config.bins)
    reference = reference_marginals(net, evidence, [query.id], spec)[query.id]

    def observe(state: ApproxState, pass_index: int, direction: str) -> None:
        approx = query_marginal(state, query.id).probabilities
        summaries.append(
            TraceRow(
                pass_index,
                direction,
                -1,
                KIND_QUERY,
                query.id,
                float("nan"),
                0,
                0.0,
                kl_error(reference, approx),
            )
        )

    observe(state, 0, DIRECTION_CALIBRATE)
    return iterate(state, observer=observe), summaries


def _cmd_show_density(args: argparse.Namespace) -> str:
    net, evidence = _load(args)
    state, _ = _propagate(args, net, evidence)
    if args.clique not in state.potentials:
        raise ContractError(f"clique {args.clique} does not exist")
    return format_density_tree(state.potentials[args.clique])


def _cmd_infer_exact(args: argparse.Namespace) -> str:
    net, evidence = _load(args)
    marginals = exact_marginals(net, evidence)
    queries = _queries(net, args.query)
    return emit_csv(
        _marginal_rows(Marginal(query, marginals[query.id]) for query in queries),
        MARGINAL_HEADER,
    )


def _cmd_infer_lw(args: argparse.Namespace) -> str:
    net, evidence = _load(args)
    queries = _queries(net, args.query)
    config = propagation_config(vars(args))
    samples = likelihood_weighting(
        net, evidence, config.samples_per_clique, derive_rng(config.seed)
    )
    marginals = [
        Marginal(
            query,
            weighted_histogram(samples, query, config.bins),
            None if query.is_discrete else bin_edges(query, config.bins),
        )
        for query in queries
    ]
    return emit_csv(_marginal_rows(marginals), MARGINAL_HEADER)


def _cmd_infer_approx(args: argparse.Namespace) -> str:
    net, evidence = _load(args)
    queries = _queries(net, args.query)
    state, summaries = _propagate(args, net, evidence)
    if args.trace:
        rows = [astuple(row) for row in [*state.diagnostics, *summaries]]
        _write(emit_csv(rows, TRACE_HEADER), args.trace)
    return emit_csv(
        _marginal_rows(query_marginal(state, query.id) for query in queries),
        MARGINAL_HEADER,
    )


def _cmd_discretize(args: argparse.Namespace) -> str:
    net = load_network(args.net)
    spec = DiscretizationSpec(getattr(args, CONF_BINS))
    return serialize_network(discretize_network(net, spec))


def _cmd_experiment(args: argparse.Namespace) -> str:
    result = run_experiment(experiment_config(vars(args)))
    return emit_csv((row.as_tuple() for row in result.rows), EXPERIMENT_HEADER)


def _add_engine_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--samples",
        dest=CONF_SAMPLES,
        type=int,
        default=DEFAULT_SAMPLES,
        help="samples per clique (M)",
    )
    parser.add_argument(
        "--passes",
        dest=CONF_PASSES,
        type=int,
        default=DEFAULT_PASSES,
        help="up+down sweeps after calibration",
    )
    parser.add_argument(
        "--lambda",
        dest=CONF_LAMBDA,
        type=float,
        default=DEFAULT_LAMBDA,
        help="EM variance regularizer",
    )
    parser.add_argument(
        "--components",
        dest=CONF_COMPONENTS,
        type=int,
        default=DEFAULT_COMPONENTS,
        help="mixture components per leaf",
    )
    parser.add_argument(
        "--min-leaf",
        dest=CONF_MIN_LEAF,
        type=int,
        default=DEFAULT_MIN_LEAF_SAMPLES,
        help="minimum samples to split a node",
    )
    parser.add_argument(
        "--pseudocount",
        dest=CONF_PSEUDOCOUNT,
        type=float,
        default=DEFAULT_PSEUDOCOUNT,
        help="Dirichlet pseudocount",
    )
    parser.add_argument(
        "--em-iterations",
        dest=CONF_EM_ITERATIONS,
        type=int,
        default=DEFAULT_EM_ITERATIONS,
        help="EM iteration cap",
    )
    parser.add_argument(
        "--em-tolerance",
        dest=CONF_EM_TOLERANCE,
        type=float,
        default=DEFAULT_EM_TOLERANCE,
        help="EM stopping tolerance",
    )
    parser.add_argument(
        "--schedule",
        dest=CONF_SCHEDULE,
        default=None,
        help="per-pass sample counts, e.g. 100,1000",
    )
    _add_bins(parser)
    _add_max_continuous(parser)


def _add_bins(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--bins",
        dest=CONF_BINS,
        type=int,
        default=DEFAULT_BINS,
        help="histogram bins per continuous variable",
    )


def _add_max_continuous(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--max-continuous",
        dest=CONF_MAX_CONTINUOUS,
        type=int,
        default=DEFAULT_MAX_CONTINUOUS_PER_CLIQUE,
        help="continuous variables per clique before a warning",
    )


def _joined(values: Sequence[Any]) -> str:
    return ",".join(str(value) for value in values)


def build_parser() -> argparse.ArgumentParser:
    """The full argument parser."""
    common = _Parser(add_help=False)
    common.add_argument(
        "--seed", dest=CONF_SEED, type=int, default=DEFAULT_SEED, help="random seed"
    )
    common.add_argument("--out", default="-", help="output file, - for stdout")
    common.add_argument(
        "-v", "--verbose", action="count", default=0, help="log more (repeatable)"
    )

    network = _Parser(add_help=False)
    network.add_argument("--net", required=True, help="network file (.hbn)")

    evidence = _Parser(add_help=False)
    evidence.add_argument("--evidence", default=None, help="evidence file (.evid)")

    query = _Parser(add_help=False)
    query.add_argument(
        "--query", required=True, help="variable names, comma separated"
    )

    formatter = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(
        prog="hybridprop",
        description="Inference in hybrid Bayesian networks.",
        formatter_class=formatter,
    )
    commands = parser.add_subparsers(
        dest="command", required=True, parser_class=_Parser
    )

    def command(name: str, handler: Handler, parents: list[Any], text: str) -> Any:
        sub = commands.add_parser(
            name, parents=[common, *parents], formatter_class=formatter, help=text
        )
        sub.set_defaults(handler=handler)
        return sub

    command("validate", _cmd_validate, [network], "check a network file")

    sub = command("show-tree", _cmd_show_tree, [network], "print the clique tree")
    _add_max_continuous(sub)

    sub = command(
        "show-density",
        _cmd_show_density,
        [network, evidence],
        "print one clique's density tree after propagation",
    )
    sub.add_argument("--clique", type=int, default=0, help="clique id")
    _add_engine_flags(sub)

    command(
        "infer-exact",
        _cmd_infer_exact,
        [network, evidence, query],
        "exact marginals of a discrete network",
    )

    sub = command(
        "infer-lw",
        _cmd_infer_lw,
        [network, evidence, query],
        "likelihood-weighting marginals",
    )
    sub.add_argument(
        "--samples",
        dest=CONF_SAMPLES,
        type=int,
        default=DEFAULT_SAMPLES,
        help="number of samples",
    )
    _add_bins(sub)

    sub = command(
        "infer-approx",
        _cmd_infer_approx,
        [network, evidence, query],
        "approximate propagation marginals",
    )
    _add_engine_flags(sub)
    sub.add_argument(
        "--trace", default=None, help="write per-refinement diagnostics to this CSV"
    )
    sub.add_argument(
        "--reference",
        action="store_true",
        help="add per-half-pass KL-error rows for the first query variable",
    )

    sub = command(
        "discretize", _cmd_discretize, [network], "write the discretized network"
    )
    _add_bins(sub)

    sub = command(
        "experiment", _cmd_experiment, [], "run an experiment on a bundled network"
    )
    sub.add_argument(
        "--kind", dest=CONF_KIND, required=True, choices=EXPERIMENT_KINDS
    )
    sub.add_argument(
        "--net", dest=CONF_NETWORK, required=True, choices=sorted(BUILDERS)
    )
    sub.add_argument(
        "--scenario", dest=CONF_SCENARIO, default=None, help="evidence scenario"
    )
    sub.add_argument(
        "--seeds",
        dest=CONF_SEEDS,
        default=_joined(DEFAULT_SEEDS),
        help="comma separated seeds",
    )
    sub.add_argument(
        "--sample-sweep",
        dest=CONF_SAMPLE_SWEEP,
        default=_joined(DEFAULT_SAMPLE_SWEEP),
        help="M values of the samples experiment",
    )
    sub.add_argument(
        "--lambda-sweep",
        dest=CONF_LAMBDA_SWEEP,
        default=_joined(DEFAULT_LAMBDA_SWEEP),
        help="lambda values of the lambda experiment",
    )
    sub.add_argument(
        "--lw-samples",
        dest=CONF_LW_SAMPLES,
        type=int,
        default=None,
        help="fixed LW sample count instead of a matched time budget",
    )
    _add_engine_flags(sub)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Run one subcommand; return the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        sys.stderr.write(f"{err}\n")
        return EXIT_USAGE
    except SystemExit as err:
        return int(err.code or 0)

    logging.basicConfig(
        level=max(logging.DEBUG, logging.WARNING - 10 * args.verbose),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    _LOGGER.debug(STARTUP_MESSAGE)
    try:
        _write(args.handler(args), args.out)
    except UsageError as err:
        sys.stderr.write(f"hybridprop {args.command}: {err}\n")
        return EXIT_USAGE
    except HybridPropError as err:
        sys.stderr.write(f"hybridprop {args.command}: {err}\n")
        return EXIT_DATA
    except OSError as err:
        sys.stderr.write(f"hybridprop {args.command}: {err}\n")
        return EXIT_DATA
    return EXIT_OK
