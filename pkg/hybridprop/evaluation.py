"""Discretized ground truth, KL-error and the experiment suite."""
from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass, field, replace
from functools import partial
import logging
import statistics
import time

import numpy as np
from scipy.stats import norm

from .approx import (
    ApproxState,
    PropagationConfig,
    bin_edges,
    calibrate_initial,
    iterate,
    query_marginal,
    run_approximate,
)
from .benchmarks import NETWORK_THERMOSTAT, NETWORK_TRAFFIC, benchmark, scenario
from .clique_tree import build_clique_tree
from .const import (
    DEFAULT_BINS,
    DEFAULT_LAMBDA_SWEEP,
    DEFAULT_SAMPLE_SWEEP,
    DEFAULT_SEEDS,
    DENSITY_FIT_LAMBDAS,
    DISCRETIZED_ROW_TOLERANCE,
    EXPERIMENT_DENSITY_FIT,
    EXPERIMENT_ITERATIONS,
    EXPERIMENT_KINDS,
    EXPERIMENT_LW,
    EXPERIMENT_SAMPLES,
    KL_FLOOR,
    LW_PILOT_SAMPLES,
    REFERENCE_MAX_ENTRIES,
)
from .exceptions import ConfigError, ContractError, DegeneracyError
from .exact import (
    check_table_sizes,
    marginal_from_potentials,
    shafer_shenoy_propagate,
)
from .gmm import em_fit
from .network import (
    ClgBody,
    Cpd,
    Evidence,
    HybridNetwork,
    TableBody,
    UniformBody,
    Variable,
    clg_moments,
    cpd_log_density,
)
from .sampler import derive_rng, likelihood_weighting, weighted_histogram

_LOGGER = logging.getLogger(__name__)

LW_TASK = 7
DENSITY_TASK = 8


@dataclass(frozen=True)
class DiscretizationSpec:
    """Equal-width bins over [L, U] with midpoint representatives."""

    bins: int = DEFAULT_BINS

    def __post_init__(self) -> None:
        """Need at least two bins."""
        if self.bins < 2:
            raise ConfigError(f"bins must be >= 2, got {self.bins}")

    def edges(self, variable: Variable) -> np.ndarray:
        """Bin edges of one continuous variable."""
        return bin_edges(variable, self.bins)

    def midpoints(self, variable: Variable) -> np.ndarray:
        """Representative point of every bin."""
        edges = self.edges(variable)
        return 0.5 * (edges[:-1] + edges[1:])  # type: ignore[no-any-return]

    def bin_of(self, variable: Variable, value: float) -> int:
        """Index of the bin holding a value; U falls in the last bin."""
        edges = self.edges(variable)
        index = int(np.searchsorted(edges, value, side="right")) - 1
        return min(index, self.bins - 1)


def _discretized_variable(variable: Variable, spec: DiscretizationSpec) -> Variable:
    if variable.is_discrete:
        return variable
    edges = spec.edges(variable)
    labels = [f"[{lo:.6g},{hi:.6g})" for lo, hi in zip(edges[:-1], edges[1:])]
    return Variable.discrete(variable.id, variable.name, labels)


def _parent_grid(cpd: Cpd, spec: DiscretizationSpec) -> np.ndarray:
    """Every parent assignment in C order; continuous parents at bin midpoints."""
    sizes = [
        int(parent.cardinality or 0) if parent.is_discrete else spec.bins
        for parent in cpd.parents
    ]
    if not sizes:
        return np.zeros((1, 0))
    index = np.indices(sizes).reshape(len(sizes), -1).T
    grid = index.astype(float)
    for position, parent in enumerate(cpd.parents):
        if not parent.is_discrete:
            grid[:, position] = spec.midpoints(parent)[index[:, position]]
    return grid


def _discretized_rows(cpd: Cpd, spec: DiscretizationSpec) -> np.ndarray:
    body = cpd.body
    if isinstance(body, TableBody):
        return body.probabilities
    if isinstance(body, UniformBody):
        return np.full((1, spec.bins), 1.0 / spec.bins)
    grid = _parent_grid(cpd, spec)
    if isinstance(body, ClgBody):
        mean, variance = clg_moments(cpd, body, grid)
        edges = spec.edges(cpd.child)
        cdf = norm.cdf(
            edges[None, :], loc=mean[:, None], scale=np.sqrt(variance)[:, None]
        )
        rows = np.diff(cdf, axis=1)
        rows[:, 0] += cdf[:, 0]
        rows[:, -1] += 1.0 - cdf[:, -1]
        flat = body.flat_blocks[cpd.block_index(grid)]
        rows[flat] = 1.0 / spec.bins
    else:
        states = range(int(cpd.child.cardinality or 0))
        rows = np.column_stack(
            [
                np.exp(cpd_log_density(cpd, np.full(grid.shape[0], float(k)), grid))
                for k in states
            ]
        )
    totals = rows.sum(axis=1, keepdims=True)
    drift = np.abs(totals - 1.0)
    if np.any(drift > DISCRETIZED_ROW_TOLERANCE):
        row = int(np.argmax(drift))
        raise ContractError(
            f"cpd[{cpd.child.name}]: discretized row {row} sums to {totals[row, 0]!r}"
        )
    return rows / totals  # type: ignore[no-any-return]


def discretize_network(
    net: HybridNetwork, spec: DiscretizationSpec | None = None
) -> HybridNetwork:
    """Purely discrete copy of a network with the same ids and names."""
    spec = spec or DiscretizationSpec()
    variables = tuple(_discretized_variable(v, spec) for v in net.variables)
    cpds = [
        Cpd(
            variables[cpd.child.id],
            tuple(variables[parent.id] for parent in cpd.parents),
            TableBody(_discretized_rows(cpd, spec)),
        )
        for cpd in sorted(net.cpds, key=lambda item: item.child.id)
    ]
    _LOGGER.debug("Discretized %s into %d bins per variable", net.name, spec.bins)
    return HybridNetwork(variables, tuple(cpds), name=f"{net.name}-discretized")


def discretize_evidence(
    net: HybridNetwork,
    evidence: Mapping[int, float],
    spec: DiscretizationSpec | None = None,
) -> Evidence:
    """Map continuous evidence values to their bin indices."""
    spec = spec or DiscretizationSpec()
    result: Evidence = {}
    for var_id, value in evidence.items():
        variable = net.variable(var_id)
        result[var_id] = value if variable.is_discrete else spec.bin_of(variable, value)
    return result


def kl_error(exact: np.ndarray, approx: np.ndarray) -> float:
    """sum p log(p / q) with q floored at 1e-12; terms with p = 0 vanish."""
    p = np.asarray(exact, dtype=float)
    q = np.asarray(approx, dtype=float)
    if p.shape != q.shape:
        raise ContractError(f"shape mismatch: {p.shape} vs {q.shape}")
    support = p > 0
    ratio = p[support] / np.maximum(q[support], KL_FLOOR)
    return max(float(np.sum(p[support] * np.log(ratio))), 0.0)


def reference_marginals(
    net: HybridNetwork,
    evidence: Mapping[int, float],
    queries: list[int],
    spec: DiscretizationSpec | None = None,
    limit: int = REFERENCE_MAX_ENTRIES,
) -> dict[int, np.ndarray]:
    """Exact posteriors of the discretized network, on the same bin grid."""
    spec = spec or DiscretizationSpec()
    discrete = discretize_network(net, spec)
    tree = build_clique_tree(discrete, max_continuous_per_clique=len(net.variables))
    check_table_sizes(tree, discrete, limit)
    observed = discretize_evidence(net, evidence, spec)
    potentials = shafer_shenoy_propagate(tree, discrete, observed)
    return {
        var_id: marginal_from_potentials(tree, potentials, var_id)
        for var_id in queries
    }


def posterior_probability(
    net: HybridNetwork,
    evidence: Mapping[int, float],
    variable: int | str,
    value: int | str,
    spec: DiscretizationSpec | None = None,
) -> float:
    """Exact discretized posterior probability of one discrete state."""
    target = net.variable(variable)
    if not target.is_discrete:
        raise ContractError(f"{target.name} is not discrete")
    marginal = reference_marginals(net, evidence, [target.id], spec)[target.id]
    return float(marginal[target.state_index(value)])


@dataclass(frozen=True)
class ExperimentRow:
    """One (experiment, parameter, seed) measurement."""

    experiment: str
    parameter: float
    seed: int
    kl_error: float
    seconds: float

    def as_tuple(self) -> tuple[str, float, int, float, float]:
        """Values in CSV column order."""
        return (self.experiment, self.parameter, self.seed, self.kl_error, self.seconds)


@dataclass
class ExperimentResult:
    """Rows of one experiment run, in the order they were produced."""

    rows: list[ExperimentRow] = field(default_factory=list)

    def add(
        self, experiment: str, parameter: float, seed: int, kl: float, seconds: float
    ) -> None:
        """Append a measurement."""
        self.rows.append(ExperimentRow(experiment, parameter, seed, kl, seconds))
        _LOGGER.info(
            "Finished %s cell %g seed %d: %.6g in %.3f seconds",
            experiment,
            parameter,
            seed,
            kl,
            seconds,
        )

    def parameters(self, experiment: str) -> list[float]:
        """Distinct parameters of one experiment id, in first-seen order."""
        return list(
            dict.fromkeys(
                row.parameter for row in self.rows if row.experiment == experiment
            )
        )

    def mean(self, experiment: str, parameter: float) -> float:
        """Seed-averaged error of one cell."""
        return statistics.fmean(
            row.kl_error
            for row in self.rows
            if row.experiment == experiment and row.parameter == parameter
        )


@dataclass(frozen=True)
class ExperimentConfig:
    """What to run and how often."""

    kind: str
    network: str = NETWORK_THERMOSTAT
    scenario: str | None = None
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    sample_sweep: tuple[int, ...] = DEFAULT_SAMPLE_SWEEP
    lambda_sweep: tuple[float, ...] = DEFAULT_LAMBDA_SWEEP
    lw_samples: int | None = None
    discretization: DiscretizationSpec = field(default_factory=DiscretizationSpec)

    def __post_init__(self) -> None:
        """Check the kind and the sweeps."""
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.lw_samples is not None and self.lw_samples < 1:
            raise ConfigError(f"lw_samples must be >= 1, got {self.lw_samples}")

    @property
    def scenario_name(self) -> str:
        """Named scenario, defaulting per experiment kind."""
        if self.scenario is not None:
            return self.scenario
        if self.kind == EXPERIMENT_LW and self.network == NETWORK_TRAFFIC:
            return "full"
        return "easy"


@dataclass(frozen=True)
class _Problem:
    net: HybridNetwork
    evidence: Evidence
    query: int
    reference: np.ndarray
    bins: int

    def error(self, state: ApproxState) -> float:
        approx = query_marginal(state, self.query, self.bins).probabilities
        return kl_error(self.reference, approx)


def _run_iterations(config: ExperimentConfig, problem: _Problem) -> ExperimentResult:
    """KL-error after calibration and after every half-pass."""
    result = ExperimentResult()
    tree = build_clique_tree(problem.net, config.propagation.max_continuous_per_clique)
    for seed in config.seeds:
        propagation = replace(config.propagation, seed=seed, convergence_threshold=0.0)
        start = time.perf_counter()
        state = calibrate_initial(problem.net, tree, problem.evidence, propagation)
        elapsed = time.perf_counter() - start
        result.add(EXPERIMENT_ITERATIONS, 0, seed, problem.error(state), elapsed)
        half_passes = [0]

        def observe(
            state: ApproxState, pass_index: int, direction: str, seed: int = seed
        ) -> None:
            half_passes[0] += 1
            elapsed = time.perf_counter() - start
            error = problem.error(state)
            result.add(EXPERIMENT_ITERATIONS, half_passes[0], seed, error, elapsed)

        iterate(state, observer=observe)
    return result


def _run_sweep(
    config: ExperimentConfig,
    problem: _Problem,
    cells: list[tuple[float, Callable[[int], PropagationConfig]]],
) -> ExperimentResult:
    """One row per (parameter, seed); seconds is the mean time per pass."""
    result = ExperimentResult()
    tree = build_clique_tree(problem.net, config.propagation.max_continuous_per_clique)
    for parameter, configure in cells:
        for seed in config.seeds:
            start = time.perf_counter()
            state = calibrate_initial(
                problem.net, tree, problem.evidence, configure(seed)
            )
            calibrated = time.perf_counter()
            iterate(state)
            finished = time.perf_counter()
            per_pass = finished - start
            if state.pass_counter:
                per_pass = (finished - calibrated) / state.pass_counter
            result.add(config.kind, parameter, seed, problem.error(state), per_pass)
    return result


def _matched_lw_budget(
    net: HybridNetwork, evidence: Evidence, seconds: float, seed: int
) -> int:
    """Sample count LW can draw in the given wall-clock time."""
    start = time.perf_counter()
    rng = derive_rng(seed, LW_TASK, 0)
    likelihood_weighting(net, evidence, LW_PILOT_SAMPLES, rng)
    per_sample = (time.perf_counter() - start) / LW_PILOT_SAMPLES
    if not per_sample > 0:
        return LW_PILOT_SAMPLES
    return max(1, int(seconds / per_sample))


def _run_lw_comparison(config: ExperimentConfig, problem: _Problem) -> ExperimentResult:
    """Approximate propagation against likelihood weighting on equal time."""
    result = ExperimentResult()
    net, evidence = problem.net, problem.evidence
    target = net.variable(problem.query)
    observed = len(evidence)
    tree = build_clique_tree(net, config.propagation.max_continuous_per_clique)
    for seed in config.seeds:
        start = time.perf_counter()
        propagation = replace(config.propagation, seed=seed)
        state = run_approximate(net, evidence, propagation, tree=tree)
        approx_seconds = time.perf_counter() - start
        error = problem.error(state)
        result.add(f"{EXPERIMENT_LW}:approx", observed, seed, error, approx_seconds)

        count = config.lw_samples or _matched_lw_budget(
            net, evidence, approx_seconds, seed
        )
        start = time.perf_counter()
        rng = derive_rng(seed, LW_TASK, 1)
        samples = likelihood_weighting(net, evidence, count, rng)
        try:
            estimate = weighted_histogram(samples, target, problem.bins)
        except DegeneracyError:
            _LOGGER.warning("Likelihood weighting kept no weight at %d samples", count)
            estimate = np.full(problem.reference.shape, 1.0 / problem.reference.size)
        elapsed = time.perf_counter() - start
        error = kl_error(problem.reference, estimate)
        result.add(f"{EXPERIMENT_LW}:lw", observed, seed, error, elapsed)
    return result


def _run_density_fit(
    config: ExperimentConfig, net: HybridNetwork, evidence: Evidence, query: int
) -> ExperimentResult:
    """Held-out negative log-likelihood of GMMs fit at several lambdas.

    The weighted samples of the query clique's last refinement are split into
    even (train) and odd (test) rows.
    """
    result = ExperimentResult()
    tree = build_clique_tree(net, config.propagation.max_continuous_per_clique)
    clique = tree.smallest_clique_with(query).id
    settings = config.propagation.tree
    for seed in config.seeds:
        propagation = replace(config.propagation, seed=seed)
        state = run_approximate(net, evidence, propagation, tree=tree)
        if clique not in state.samples:
            raise ContractError(f"clique {clique} produced no samples")
        samples = state.samples[clique]
        continuous = [v.id for v in samples.variables if not v.is_discrete]
        if not continuous:
            raise ContractError("the query clique has no continuous variables")
        points = np.column_stack([samples.column(var_id) for var_id in continuous])
        train, test = points[0::2], points[1::2]
        train_weights = samples.weights[0::2]
        train_weights = train_weights * (train.shape[0] / train_weights.sum())
        test_weights = samples.weights[1::2]
        for lam in DENSITY_FIT_LAMBDAS:
            start = time.perf_counter()
            model = em_fit(
                train,
                train_weights,
                settings.components,
                replace(settings.em, lam=lam),
                derive_rng(seed, DENSITY_TASK),
            )
            log_likelihood = model.log_pdf(test)
            nll = -float(np.dot(test_weights, log_likelihood) / test_weights.sum())
            elapsed = time.perf_counter() - start
            result.add(EXPERIMENT_DENSITY_FIT, lam, seed, nll, elapsed)
    return result


def _with_samples(base: PropagationConfig, count: int, seed: int) -> PropagationConfig:
    return replace(base, seed=seed, samples_per_clique=count)


def _with_lambda(base: PropagationConfig, lam: float, seed: int) -> PropagationConfig:
    em = replace(base.tree.em, lam=lam)
    return replace(base, seed=seed, tree=replace(base.tree, em=em))


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run one experiment kind on a bundled network."""
    net = benchmark(config.network)
    chosen = scenario(config.network, config.scenario_name)
    evidence = chosen.resolve(net)
    query = net.variable(chosen.query).id
    _LOGGER.info(
        "Running %s on %s/%s with %d seeds",
        config.kind,
        config.network,
        chosen.name,
        len(config.seeds),
    )
    if config.kind == EXPERIMENT_DENSITY_FIT:
        return _run_density_fit(config, net, evidence, query)

    spec = config.discretization
    reference = reference_marginals(net, evidence, [query], spec)[query]
    problem = _Problem(net, evidence, query, reference, spec.bins)
    if config.kind == EXPERIMENT_ITERATIONS:
        return _run_iterations(config, problem)
    if config.kind == EXPERIMENT_LW:
        return _run_lw_comparison(config, problem)
    base = config.propagation
    cells: list[tuple[float, Callable[[int], PropagationConfig]]]
    if config.kind == EXPERIMENT_SAMPLES:
        cells = [
            (float(count), partial(_with_samples, base, count))
            for count in config.sample_sweep
        ]
    else:
        cells = [
            (lam, partial(_with_lambda, base, lam)) for lam in config.lambda_sweep
        ]
    return _run_sweep(config, problem, cells)
