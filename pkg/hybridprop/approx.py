"""Approximate clique-tree propagation with density-tree potentials and messages.

Calibration runs the exact two-pass schedule once with prior-sample proposals.
Iteration then sweeps up and down the tree, resampling every potential from
itself and refitting messages from the refreshed potentials.
"""
from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
import logging
import math
import time

import numpy as np

from .clique_tree import CliqueTree, build_clique_tree
from .const import (
    CLIP_FACTOR,
    CONVERGENCE_THRESHOLD,
    DEFAULT_BINS,
    DEFAULT_MAX_CONTINUOUS_PER_CLIQUE,
    DEFAULT_PASSES,
    DEFAULT_SAMPLES,
    DEFAULT_SEED,
    ESS_WARNING_THRESHOLD,
)
from .density_tree import (
    DensityTree,
    Leaf,
    TreeConfig,
    WeightedSampleSet,
    dt_learn,
    dt_marginalize,
    dt_sample_batch,
    log_density,
)
from .exceptions import CliqueTreeError, ConfigError, DegenerateEvidenceError
from .network import Evidence, HybridNetwork, Variable, check_evidence, cpd_log_density
from .sampler import derive_rng, importance_reweight, prior_sample

_LOGGER = logging.getLogger(__name__)

PHASE_PRIOR = 0
PHASE_CALIBRATE = 1
PHASE_ITERATE = 2

DIRECTION_CALIBRATE = "calibrate"
DIRECTION_UP = "up"
DIRECTION_DOWN = "down"

KIND_POTENTIAL = "potential"
KIND_MESSAGE = "message"
KIND_QUERY = "query"


@dataclass(frozen=True)
class PropagationConfig:
    """Approximate engine settings."""

    samples_per_clique: int = DEFAULT_SAMPLES
    passes: int = DEFAULT_PASSES
    tree: TreeConfig = field(default_factory=TreeConfig)
    seed: int = DEFAULT_SEED
    sample_schedule: tuple[int, ...] = ()
    convergence_threshold: float = CONVERGENCE_THRESHOLD
    bins: int = DEFAULT_BINS
    clip_factor: float = CLIP_FACTOR
    max_continuous_per_clique: int = DEFAULT_MAX_CONTINUOUS_PER_CLIQUE

    def __post_init__(self) -> None:
        """Range-check the settings."""
        if self.samples_per_clique < 1:
            raise ConfigError(
                f"samples_per_clique must be >= 1, got {self.samples_per_clique}"
            )
        if self.passes < 0:
            raise ConfigError(f"passes must be >= 0, got {self.passes}")
        if any(count < 1 for count in self.sample_schedule):
            raise ConfigError("every sample_schedule entry must be >= 1")
        if self.bins < 2:
            raise ConfigError(f"bins must be >= 2, got {self.bins}")

    def samples_for_pass(self, pass_index: int) -> int:
        """M for one iteration pass."""
        if not self.sample_schedule:
            return self.samples_per_clique
        return self.sample_schedule[min(pass_index, len(self.sample_schedule) - 1)]


@dataclass(frozen=True)
class TraceRow:
    """Diagnostics of one refinement (or one half-pass query summary)."""

    pass_index: int
    direction: str
    clique: int
    kind: str
    target: int | None
    ess: float
    clipped: int
    seconds: float
    kl_error: float | None = None


@dataclass
class ApproxState:
    """Everything the engine knows between refinements."""

    net: HybridNetwork
    tree: CliqueTree
    evidence: Evidence
    config: PropagationConfig
    potentials: dict[int, DensityTree] = field(default_factory=dict)
    messages: dict[tuple[int, int], DensityTree] = field(default_factory=dict)
    prior_proposals: dict[int, DensityTree] = field(default_factory=dict)
    samples: dict[int, WeightedSampleSet] = field(default_factory=dict)
    pass_counter: int = 0
    diagnostics: list[TraceRow] = field(default_factory=list)

    def free_variables(self, clique: int) -> tuple[Variable, ...]:
        """Clique variables that are not observed, by increasing id."""
        return tuple(
            self.net.variable(var_id)
            for var_id in sorted(self.tree.scope(clique) - set(self.evidence))
        )

    def free_sepset(self, i: int, j: int) -> frozenset[int]:
        """S_ij minus the observed variables."""
        return self.tree.sepset(i, j) - set(self.evidence)


Observer = Callable[[ApproxState, int, str], None]


def target_log_factor(
    state: ApproxState, clique: int, values: np.ndarray, exclude: int | None = None
) -> np.ndarray:
    """Log of the clique target at each row of ``values``.

    The target is phi*_i times every incoming eta_{j'->i} except ``exclude``.

    Rows hold the clique's free variables in increasing id order. Observed
    variables are substituted, unassigned continuous variables get a uniform
    density, and continuous values outside their range get density zero.
    """
    free = state.free_variables(clique)
    columns = tuple(variable.id for variable in free)
    values = np.asarray(values, dtype=float)
    if values.ndim < 2:
        values = values.reshape(-1, len(columns))
    count = values.shape[0]
    full = {var_id: values[:, index] for index, var_id in enumerate(columns)}
    for var_id, value in state.evidence.items():
        if var_id in state.tree.scope(clique):
            full[var_id] = np.full(count, float(value))

    assigned = state.tree.cliques[clique].assigned_cpds
    result = np.zeros(count)
    for child in sorted(assigned):
        cpd = state.net.cpd(child)
        parents = np.zeros((count, 0))
        if cpd.parents:
            parents = np.column_stack([full[parent.id] for parent in cpd.parents])
        result += cpd_log_density(cpd, full[child], parents)
    for variable in free:
        if variable.is_discrete:
            continue
        assert variable.lower is not None and variable.upper is not None
        column = full[variable.id]
        result[(column < variable.lower) | (column > variable.upper)] = -math.inf
        if variable.id not in assigned:
            result -= math.log(variable.width)
    for neighbor in state.tree.neighbors(clique):
        if neighbor == exclude:
            continue
        message = state.messages.get((neighbor, clique))
        if message is not None and message.variables:
            result += log_density(message, columns, values)
    return result


def target_factor_eval(
    state: ApproxState,
    clique: int,
    assignment: Mapping[int, float],
    exclude: int | None = None,
) -> float:
    """Unnormalized target at one assignment of the clique's free variables."""
    columns = [variable.id for variable in state.free_variables(clique)]
    row = np.array([[float(assignment[var_id]) for var_id in columns]])
    return float(np.exp(target_log_factor(state, clique, row, exclude)[0]))


def _weighted_draws(
    state: ApproxState,
    clique: int,
    proposal: DensityTree,
    exclude: int | None,
    count: int,
    rng: np.random.Generator,
) -> tuple[WeightedSampleSet, float, int]:
    """Samples from ``proposal`` weighted toward the clique target."""
    free = state.free_variables(clique)
    values = dt_sample_batch(proposal, count, rng)
    samples = WeightedSampleSet(free, values, np.ones(count))
    columns = proposal.columns
    reweighted = importance_reweight(
        samples,
        target=lambda rows: target_log_factor(state, clique, rows, exclude),
        proposal=lambda rows: log_density(proposal, columns, rows),
        log_domain=True,
        clip_factor=state.config.clip_factor,
    )
    if not reweighted.samples.total_weight > 0:
        raise DegenerateEvidenceError(clique, "every importance weight vanished")
    if reweighted.ess < ESS_WARNING_THRESHOLD:
        _LOGGER.warning(
            "Effective sample size %.3g at clique %d is below %.3g",
            reweighted.ess,
            clique,
            ESS_WARNING_THRESHOLD,
        )
    if reweighted.clipped:
        _LOGGER.warning(
            "Clipped %d importance weights at clique %d", reweighted.clipped, clique
        )
    return reweighted.samples, reweighted.ess, reweighted.clipped


def _fit_potential(
    state: ApproxState,
    clique: int,
    proposal: DensityTree,
    count: int,
    rng: np.random.Generator,
    pass_index: int,
    direction: str,
) -> DensityTree:
    start = time.perf_counter()
    if not state.free_variables(clique):
        state.potentials[clique] = DensityTree.constant()
        return state.potentials[clique]
    samples, ess, clipped = _weighted_draws(state, clique, proposal, None, count, rng)
    state.samples[clique] = samples
    state.potentials[clique] = dt_learn(samples, state.config.tree, rng)
    seconds = time.perf_counter() - start
    state.diagnostics.append(
        TraceRow(
            pass_index, direction, clique, KIND_POTENTIAL, None, ess, clipped, seconds
        )
    )
    _LOGGER.debug("Refit potential of clique %d (ess %.3g)", clique, ess)
    return state.potentials[clique]


def _fit_message(
    state: ApproxState,
    i: int,
    j: int,
    proposal: DensityTree,
    count: int,
    rng: np.random.Generator,
    pass_index: int,
    direction: str,
) -> DensityTree:
    start = time.perf_counter()
    keep = state.free_sepset(i, j)
    if not keep or not state.free_variables(i):
        state.messages[(i, j)] = DensityTree.constant()
        return state.messages[(i, j)]
    samples, ess, clipped = _weighted_draws(state, i, proposal, j, count, rng)
    message = dt_learn(samples.project(sorted(keep)), state.config.tree, rng)
    if message.scope != keep:
        raise CliqueTreeError(f"message {i} -> {j} has scope {sorted(message.scope)}")
    state.messages[(i, j)] = message
    seconds = time.perf_counter() - start
    state.diagnostics.append(
        TraceRow(pass_index, direction, i, KIND_MESSAGE, j, ess, clipped, seconds)
    )
    _LOGGER.debug("Refit message %d -> %d (ess %.3g)", i, j, ess)
    return message


def calibrate_initial(
    net: HybridNetwork,
    tree: CliqueTree,
    evidence: Mapping[int, float],
    config: PropagationConfig,
) -> ApproxState:
    """Initial calibration: one two-pass schedule with prior-fitted proposals."""
    state = ApproxState(net, tree, check_evidence(net, evidence), config)
    count = config.samples_per_clique
    prior = prior_sample(net, count, derive_rng(config.seed, PHASE_PRIOR))
    for clique in tree.cliques:
        free = state.free_variables(clique.id)
        if not free:
            state.prior_proposals[clique.id] = DensityTree.constant()
            continue
        state.prior_proposals[clique.id] = dt_learn(
            prior.project([variable.id for variable in free]),
            config.tree,
            derive_rng(config.seed, PHASE_PRIOR, clique.id + 1),
        )

    for i, j in tree.upward_schedule() + tree.downward_schedule():
        _fit_message(
            state,
            i,
            j,
            state.prior_proposals[i],
            count,
            derive_rng(config.seed, PHASE_CALIBRATE, i, j + 1),
            0,
            DIRECTION_CALIBRATE,
        )
    for clique in tree.cliques:
        _fit_potential(
            state,
            clique.id,
            state.prior_proposals[clique.id],
            count,
            derive_rng(config.seed, PHASE_CALIBRATE, clique.id, 0),
            0,
            DIRECTION_CALIBRATE,
        )
    _LOGGER.info("Calibrated %d cliques with %d samples each", len(tree.cliques), count)
    return state


def _direction_index(direction: str) -> int:
    return 0 if direction == DIRECTION_UP else 1


def refine_potential(
    state: ApproxState,
    clique: int,
    direction: str = DIRECTION_DOWN,
    count: int | None = None,
) -> DensityTree:
    """Resample psi_i from itself against the full target and refit it."""
    pass_index = state.pass_counter + 1
    task = (PHASE_ITERATE, pass_index, _direction_index(direction), clique, 0)
    rng = derive_rng(state.config.seed, *task)
    count = count or state.config.samples_for_pass(state.pass_counter)
    proposal = state.potentials[clique]
    return _fit_potential(state, clique, proposal, count, rng, pass_index, direction)


def refine_message(
    state: ApproxState,
    i: int,
    j: int,
    direction: str = DIRECTION_DOWN,
    count: int | None = None,
) -> DensityTree:
    """Refit eta_{i->j} from samples of the current psi_i."""
    pass_index = state.pass_counter + 1
    task = (PHASE_ITERATE, pass_index, _direction_index(direction), i, j + 1)
    rng = derive_rng(state.config.seed, *task)
    count = count or state.config.samples_for_pass(state.pass_counter)
    proposal = state.potentials[i]
    return _fit_message(state, i, j, proposal, count, rng, pass_index, direction)


@dataclass(frozen=True, eq=False)
class Marginal:
    """Posterior of one variable; ``edges`` is set for continuous histograms."""

    variable: Variable
    probabilities: np.ndarray
    edges: np.ndarray | None = None


def bin_edges(variable: Variable, bins: int) -> np.ndarray:
    """Equal-width bin edges over [L, U]."""
    return np.linspace(variable.lower, variable.upper, bins + 1)


def point_mass(variable: Variable, value: float, bins: int = DEFAULT_BINS) -> Marginal:
    """Marginal of an observed variable."""
    if variable.is_discrete:
        probabilities = np.zeros(int(variable.cardinality or 0))
        probabilities[int(value)] = 1.0
        return Marginal(variable, probabilities)
    edges = bin_edges(variable, bins)
    probabilities = np.zeros(bins)
    index = int(np.searchsorted(edges, value, side="right")) - 1
    probabilities[min(index, bins - 1)] = 1.0
    return Marginal(variable, probabilities, edges)


def query_marginal(
    state: ApproxState, variable: int | str, bins: int | None = None
) -> Marginal:
    """Single-variable posterior read off the smallest clique potential holding it."""
    target = state.net.variable(variable)
    bins = bins or state.config.bins
    if target.id in state.evidence:
        return point_mass(target, state.evidence[target.id], bins)
    clique = state.tree.smallest_clique_with(target.id)
    marginal = dt_marginalize(state.potentials[clique.id], {target.id})
    if target.is_discrete:
        values = np.arange(int(target.cardinality or 0), dtype=float).reshape(-1, 1)
        probabilities = np.exp(log_density(marginal, [target.id], values))
        return Marginal(target, probabilities / probabilities.sum())
    edges = bin_edges(target, bins)
    root = marginal.root
    assert isinstance(root, Leaf)
    masses = root.gmm.bin_masses(0, edges)
    return Marginal(target, masses / masses.sum(), edges)


def all_marginals(state: ApproxState, bins: int | None = None) -> dict[int, np.ndarray]:
    """Posterior of every variable, by id."""
    return {
        variable.id: query_marginal(state, variable.id, bins).probabilities
        for variable in state.net.variables
    }


def max_total_variation(
    before: Mapping[int, np.ndarray], after: Mapping[int, np.ndarray]
) -> float:
    """Largest total-variation distance between paired marginals."""
    return max(
        (0.5 * float(np.abs(before[key] - after[key]).sum()) for key in after),
        default=0.0,
    )


def _sweep(state: ApproxState, direction: str) -> None:
    if direction == DIRECTION_UP:
        for child, parent in state.tree.upward_schedule():
            refine_potential(state, child, direction)
            refine_message(state, child, parent, direction)
        return
    parents = state.tree.parents()
    order = [0, *parents]
    for clique in order:
        refine_potential(state, clique, direction)
        for neighbor in state.tree.neighbors(clique):
            if parents.get(neighbor) == clique:
                refine_message(state, clique, neighbor, direction)


def iterate(
    state: ApproxState,
    passes: int | None = None,
    observer: Observer | None = None,
) -> ApproxState:
    """Run up and down sweeps until the pass budget or convergence."""
    passes = state.config.passes if passes is None else passes
    threshold = state.config.convergence_threshold
    previous = all_marginals(state) if passes and threshold > 0 else None
    for _ in range(passes):
        start = time.perf_counter()
        for direction in (DIRECTION_UP, DIRECTION_DOWN):
            _sweep(state, direction)
            if observer is not None:
                observer(state, state.pass_counter + 1, direction)
        state.pass_counter += 1
        _LOGGER.info(
            "Finished pass %d in %.3f seconds",
            state.pass_counter,
            time.perf_counter() - start,
        )
        if previous is not None:
            current = all_marginals(state)
            change = max_total_variation(previous, current)
            previous = current
            if change < threshold:
                _LOGGER.info(
                    "Converged after pass %d (change %.3g)", state.pass_counter, change
                )
                break
    return state


def run_approximate(
    net: HybridNetwork,
    evidence: Mapping[int, float] | None = None,
    config: PropagationConfig | None = None,
    observer: Observer | None = None,
    tree: CliqueTree | None = None,
) -> ApproxState:
    """Build the clique tree, calibrate, then iterate."""
    config = config or PropagationConfig()
    tree = tree or build_clique_tree(net, config.max_continuous_per_clique)
    state = calibrate_initial(net, tree, evidence or {}, config)
    return iterate(state, observer=observer)

