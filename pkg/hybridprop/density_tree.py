"""Density trees: discrete splits over multinomial and diagonal-GMM leaves."""
from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
import logging
import math
from typing import Any, Union

import numpy as np
from scipy.special import logsumexp

from .const import (
    DEFAULT_COMPONENTS,
    DEFAULT_MIN_LEAF_SAMPLES,
    DEFAULT_PSEUDOCOUNT,
    EDGE_PROBABILITY_FLOOR,
)
from .exceptions import ConfigError, ContractError, LearningError
from .gmm import DiagonalGmm, EmConfig, em_fit
from .network import Variable

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class WeightedSampleSet:
    """Samples over an ordered variable list; column k holds variables[k]."""

    variables: tuple[Variable, ...]
    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        """Check array shapes against the variable list."""
        if self.values.shape != (self.weights.shape[0], len(self.variables)):
            raise ContractError(
                f"values {self.values.shape} do not match {len(self.variables)} "
                f"variables and {self.weights.shape[0]} weights"
            )

    @property
    def scope(self) -> tuple[int, ...]:
        """Variable ids in column order."""
        return tuple(variable.id for variable in self.variables)

    @property
    def size(self) -> int:
        """M."""
        return int(self.weights.shape[0])

    @property
    def total_weight(self) -> float:
        """Sum of all weights."""
        return float(self.weights.sum())

    def column(self, var_id: int) -> np.ndarray:
        """Values of one variable."""
        return self.values[:, self.scope.index(var_id)]  # type: ignore[no-any-return]

    def project(self, keep: Sequence[int]) -> WeightedSampleSet:
        """Keep only the given variables, in increasing id order."""
        positions = [i for i, var_id in enumerate(self.scope) if var_id in set(keep)]
        return WeightedSampleSet(
            tuple(self.variables[i] for i in positions),
            self.values[:, positions],
            self.weights,
        )

    def reweighted(self, weights: np.ndarray) -> WeightedSampleSet:
        """Same samples with new weights."""
        weights = np.asarray(weights, dtype=float)
        return WeightedSampleSet(self.variables, self.values, weights)


@dataclass(frozen=True)
class TreeConfig:
    """Density tree learning settings."""

    min_leaf_samples: int = DEFAULT_MIN_LEAF_SAMPLES
    components: int = DEFAULT_COMPONENTS
    pseudocount: float = DEFAULT_PSEUDOCOUNT
    em: EmConfig = field(default_factory=EmConfig)

    def __post_init__(self) -> None:
        """Range-check the settings."""
        if self.min_leaf_samples < 1:
            raise ConfigError(
                f"min_leaf_samples must be >= 1, got {self.min_leaf_samples}"
            )
        if self.components < 1:
            raise ConfigError(f"components must be >= 1, got {self.components}")
        if self.pseudocount < 0:
            raise ConfigError(f"pseudocount must be >= 0, got {self.pseudocount}")


@dataclass(frozen=True, eq=False)
class Leaf:
    """Independent multinomials times one GMM over the continuous variables."""

    multinomials: Mapping[int, np.ndarray]
    continuous: tuple[int, ...]
    gmm: DiagonalGmm


@dataclass(frozen=True, eq=False)
class Split:
    """Interior node: one child per value of a discrete variable."""

    variable: int
    probabilities: np.ndarray
    children: tuple[Node, ...]


Node = Union[Leaf, Split]


@dataclass(frozen=True, eq=False)
class DensityTree:
    """A density over the scope of ``variables`` (sorted by id)."""

    variables: tuple[Variable, ...]
    root: Node

    @classmethod
    def constant(cls) -> DensityTree:
        """The empty-scope tree with density 1."""
        return cls((), Leaf({}, (), DiagonalGmm.empty()))

    @property
    def scope(self) -> frozenset[int]:
        """Variable ids covered by the tree."""
        return frozenset(variable.id for variable in self.variables)

    @property
    def columns(self) -> tuple[int, ...]:
        """Variable ids in column order for batch evaluation and sampling."""
        return tuple(variable.id for variable in self.variables)


def _node_log_density(
    node: Node,
    values: np.ndarray,
    position: Mapping[int, int],
    rows: np.ndarray,
    out: np.ndarray,
) -> None:
    if isinstance(node, Split):
        branch = values[rows, position[node.variable]].astype(np.intp)
        with np.errstate(divide="ignore"):
            log_q = np.log(node.probabilities)
        for value, child in enumerate(node.children):
            selected = rows[branch == value]
            if selected.size:
                _node_log_density(child, values, position, selected, out)
                out[selected] += log_q[value]
        return
    result = np.zeros(rows.size)
    with np.errstate(divide="ignore"):
        for var_id, probabilities in node.multinomials.items():
            states = values[rows, position[var_id]].astype(np.intp)
            result += np.log(probabilities[states])
    if node.continuous:
        points = values[np.ix_(rows, [position[var_id] for var_id in node.continuous])]
        result += node.gmm.log_pdf(points)
    out[rows] = result


def log_density(
    tree: DensityTree, columns: Sequence[int], values: np.ndarray
) -> np.ndarray:
    """Vectorized log density; ``values`` has one column per id in ``columns``.

    Columns outside the tree's scope are ignored.
    """
    position = {var_id: index for index, var_id in enumerate(columns)}
    missing = tree.scope - set(position)
    if missing:
        raise ContractError(f"assignment misses variables {sorted(missing)}")
    values = np.asarray(values, dtype=float)
    if values.ndim < 2:
        values = values.reshape(-1, len(position))
    out = np.zeros(values.shape[0])
    _node_log_density(tree.root, values, position, np.arange(values.shape[0]), out)
    return out


def dt_eval(tree: DensityTree, assignment: Mapping[int, float]) -> float:
    """Density of one assignment covering the tree's scope."""
    columns = sorted(assignment)
    values = np.array([[float(assignment[var_id]) for var_id in columns]])
    return float(np.exp(log_density(tree, columns, values)[0]))


def _condition_node(node: Node, evidence: Mapping[int, float]) -> tuple[Node, float]:
    """Slice a subtree at the evidence; returns the new node and its log mass."""
    if isinstance(node, Split):
        if node.variable in evidence:
            value = int(evidence[node.variable])
            child, log_mass = _condition_node(node.children[value], evidence)
            edge = float(node.probabilities[value])
            return child, (log_mass + math.log(edge) if edge > 0 else -math.inf)
        conditioned = [_condition_node(child, evidence) for child in node.children]
        with np.errstate(divide="ignore"):
            masses = np.array([mass for _, mass in conditioned])
            log_parts = np.log(node.probabilities) + masses
        log_mass = float(logsumexp(log_parts))
        probabilities = node.probabilities
        if np.isfinite(log_mass):
            probabilities = np.exp(log_parts - log_mass)
        children = tuple(child for child, _ in conditioned)
        return Split(node.variable, probabilities, children), log_mass

    log_mass = 0.0
    multinomials = {}
    for var_id, probabilities in node.multinomials.items():
        if var_id in evidence:
            picked = probabilities[int(evidence[var_id])]
            log_mass += math.log(picked) if picked > 0 else -math.inf
        else:
            multinomials[var_id] = probabilities
    observed = [dim for dim, var_id in enumerate(node.continuous) if var_id in evidence]
    gmm, gmm_log_mass = node.gmm.condition(
        observed, [evidence[node.continuous[dim]] for dim in observed]
    )
    continuous = tuple(var_id for var_id in node.continuous if var_id not in evidence)
    return Leaf(multinomials, continuous, gmm), log_mass + gmm_log_mass


def dt_condition(
    tree: DensityTree, evidence: Mapping[int, float]
) -> tuple[DensityTree, float]:
    """Instantiate evidence variables.

    Returns the normalized density over the remaining scope and the retained
    mass, so that eval(tree, full) == mass * eval(conditioned, rest). A mass of
    zero signals evidence the tree cannot produce.
    """
    unknown = set(evidence) - tree.scope
    if unknown:
        raise ContractError(f"evidence on {sorted(unknown)} outside the tree scope")
    if not evidence:
        return tree, 1.0
    root, log_mass = _condition_node(tree.root, evidence)
    remaining = tuple(v for v in tree.variables if v.id not in evidence)
    return DensityTree(remaining, root), math.exp(log_mass)


def _first_discrete(parts: Sequence[tuple[float, Node]]) -> int | None:
    for _, node in parts:
        if isinstance(node, Split):
            return node.variable
    candidates = [
        var_id
        for _, node in parts
        if isinstance(node, Leaf)
        for var_id in node.multinomials
    ]
    return min(candidates) if candidates else None


def _mix(parts: Sequence[tuple[float, Node]], cardinality: Mapping[int, int]) -> Node:
    """Exact mixture of nodes over the same remaining scope."""
    parts = [(weight, node) for weight, node in parts if weight > 0] or list(parts)
    if len(parts) == 1:
        return parts[0][1]
    variable = _first_discrete(parts)
    if variable is None:
        leaves = [(weight, node) for weight, node in parts if isinstance(node, Leaf)]
        gmm = DiagonalGmm.mixture([(weight, node.gmm) for weight, node in leaves])
        return Leaf({}, leaves[0][1].continuous, gmm)
    branches = []
    edge = np.zeros(cardinality[variable])
    for value in range(cardinality[variable]):
        conditioned = []
        for weight, node in parts:
            child, log_mass = _condition_node(node, {variable: value})
            conditioned.append((weight * math.exp(log_mass), child))
        edge[value] = sum(weight for weight, _ in conditioned)
        if edge[value] > 0:
            branches.append(_mix(conditioned, cardinality))
        else:
            unweighted = [(1.0, child) for _, child in conditioned]
            branches.append(_mix(unweighted, cardinality))
    return Split(variable, edge / edge.sum(), tuple(branches))


def _marginalize_node(
    node: Node, drop: frozenset[int], cardinality: Mapping[int, int]
) -> Node:
    if isinstance(node, Split):
        children = [
            _marginalize_node(child, drop, cardinality) for child in node.children
        ]
        if node.variable not in drop:
            return Split(node.variable, node.probabilities, tuple(children))
        return _mix(list(zip(node.probabilities.tolist(), children)), cardinality)
    dims = [dim for dim, var_id in enumerate(node.continuous) if var_id not in drop]
    return Leaf(
        {var_id: p for var_id, p in node.multinomials.items() if var_id not in drop},
        tuple(node.continuous[dim] for dim in dims),
        node.gmm.marginal(dims),
    )


def dt_marginalize(
    tree: DensityTree, keep: Sequence[int] | frozenset[int]
) -> DensityTree:
    """Sum and integrate out every variable not in ``keep``."""
    keep = frozenset(keep)
    if not keep <= tree.scope:
        raise ContractError(f"cannot keep {sorted(keep - tree.scope)}: not in scope")
    if keep == tree.scope:
        return tree
    cardinality = {
        v.id: int(v.cardinality) for v in tree.variables if v.cardinality is not None
    }
    root = _marginalize_node(tree.root, tree.scope - keep, cardinality)
    return DensityTree(tuple(v for v in tree.variables if v.id in keep), root)


def _sample_node(
    node: Node,
    out: np.ndarray,
    position: Mapping[int, int],
    rows: np.ndarray,
    rng: np.random.Generator,
) -> None:
    if isinstance(node, Split):
        edges = node.probabilities
        branch = rng.choice(edges.size, size=rows.size, p=edges)
        out[rows, position[node.variable]] = branch
        for value, child in enumerate(node.children):
            selected = rows[branch == value]
            if selected.size:
                _sample_node(child, out, position, selected, rng)
        return
    for var_id, probabilities in sorted(node.multinomials.items()):
        out[rows, position[var_id]] = rng.choice(
            probabilities.size, size=rows.size, p=probabilities
        )
    if node.continuous:
        points = node.gmm.sample(rows.size, rng)
        out[np.ix_(rows, [position[var_id] for var_id in node.continuous])] = points


def dt_sample_batch(
    tree: DensityTree, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``count`` assignments; columns follow ``tree.columns``."""
    out = np.zeros((count, len(tree.variables)))
    position = {var_id: index for index, var_id in enumerate(tree.columns)}
    _sample_node(tree.root, out, position, np.arange(count), rng)
    return out


def dt_sample(tree: DensityTree, rng: np.random.Generator) -> dict[int, float]:
    """Draw one assignment over the tree's scope."""
    row = dt_sample_batch(tree, 1, rng)[0]
    return {
        variable.id: int(value) if variable.is_discrete else float(value)
        for variable, value in zip(tree.variables, row)
    }


def _floored(probabilities: np.ndarray) -> np.ndarray:
    probabilities = probabilities / probabilities.sum()
    probabilities = np.maximum(probabilities, EDGE_PROBABILITY_FLOOR)
    return probabilities / probabilities.sum()  # type: ignore[no-any-return]


def _best_split(
    data: WeightedSampleSet, rows: np.ndarray, available: Sequence[Variable]
) -> Variable | None:
    """Variable whose unweighted branch counts have the lowest variance."""
    best: tuple[float, int] | None = None
    chosen = None
    for variable in available:
        states = data.column(variable.id)[rows].astype(np.intp)
        counts = np.bincount(states, minlength=int(variable.cardinality or 0))
        if np.any(counts == 0):
            continue
        score = (float(np.var(counts)), variable.id)
        if best is None or score < best:
            best, chosen = score, variable
    return chosen


def _grow(
    data: WeightedSampleSet,
    rows: np.ndarray,
    available: tuple[Variable, ...],
    continuous: tuple[Variable, ...],
    config: TreeConfig,
    rng: np.random.Generator,
) -> Node:
    weights = data.weights[rows]
    if rows.size >= config.min_leaf_samples and available:
        variable = _best_split(data, rows, available)
        if variable is not None:
            branch = data.column(variable.id)[rows].astype(np.intp)
            cardinality = int(variable.cardinality or 0)
            mass = np.bincount(branch, weights=weights, minlength=cardinality)
            if not mass.sum() > 0:
                mass = np.bincount(branch, minlength=cardinality).astype(float)
            rest = tuple(v for v in available if v.id != variable.id)
            children = tuple(
                _grow(data, rows[branch == value], rest, continuous, config, rng)
                for value in range(cardinality)
            )
            _LOGGER.debug("Split %d samples on variable %d", rows.size, variable.id)
            return Split(variable.id, _floored(mass), children)

    if not weights.sum() > 0:
        weights = np.ones(rows.size)
    multinomials = {}
    for variable in available:
        cardinality = int(variable.cardinality or 0)
        states = data.column(variable.id)[rows].astype(np.intp)
        counts = np.bincount(states, weights=weights, minlength=cardinality)
        multinomials[variable.id] = (counts + config.pseudocount) / (
            weights.sum() + cardinality * config.pseudocount
        )
    if not continuous:
        return Leaf(multinomials, (), DiagonalGmm.empty())
    points = np.column_stack([data.column(v.id)[rows] for v in continuous])
    gmm = em_fit(points, weights, config.components, config.em, rng)
    return Leaf(multinomials, tuple(v.id for v in continuous), gmm)


def dt_learn(
    data: WeightedSampleSet,
    config: TreeConfig | None = None,
    rng: np.random.Generator | None = None,
) -> DensityTree:
    """Learn a density tree from weighted samples.

    Splits are chosen on unweighted counts; every probability and mixture
    parameter is estimated from the weights. Weights are rescaled to mean one
    first, so the EM regularizer sees the same scale whatever the caller's units.
    """
    config = config or TreeConfig()
    rng = rng if rng is not None else np.random.default_rng(config.em.seed)
    total = data.total_weight
    if data.size == 0 or not total > 0 or not np.isfinite(total):
        raise LearningError(f"cannot learn from total weight {total}")
    scaled = data.reweighted(data.weights * (data.size / total))
    order = sorted(range(len(data.variables)), key=lambda i: data.variables[i].id)
    scaled = WeightedSampleSet(
        tuple(data.variables[i] for i in order), scaled.values[:, order], scaled.weights
    )
    discrete = tuple(v for v in scaled.variables if v.is_discrete)
    continuous = tuple(v for v in scaled.variables if not v.is_discrete)
    root = _grow(scaled, np.arange(scaled.size), discrete, continuous, config, rng)
    return DensityTree(scaled.variables, root)


def tree_from_table(variables: Sequence[Variable], table: np.ndarray) -> DensityTree:
    """Exact density tree for a table over discrete variables.

    Axis k of ``table`` belongs to ``variables[k]``.
    """
    order = sorted(range(len(variables)), key=lambda i: variables[i].id)
    ordered = tuple(variables[i] for i in order)
    table = np.asarray(table, dtype=float)
    if order:
        table = np.transpose(table, order)
    table = table / table.sum()

    def build(sub: np.ndarray, depth: int) -> Node:
        if depth == len(ordered):
            return Leaf({}, (), DiagonalGmm.empty())
        flat = sub.reshape(sub.shape[0], -1).sum(axis=1)
        total = flat.sum()
        edge = flat / total if total > 0 else np.full(flat.size, 1.0 / flat.size)
        return Split(
            ordered[depth].id,
            edge,
            tuple(build(sub[value], depth + 1) for value in range(sub.shape[0])),
        )

    return DensityTree(ordered, build(table, 0))


def tree_structure(tree: DensityTree) -> Any:
    """Nested tuple of split variables; leaves are ``None``."""

    def shape(node: Node) -> Any:
        if isinstance(node, Leaf):
            return None
        return (node.variable, tuple(shape(child) for child in node.children))

    return shape(tree.root)


def format_density_tree(tree: DensityTree) -> str:
    """Indented text dump of a density tree."""
    names = {variable.id: variable for variable in tree.variables}
    lines = [f"density tree over {{{', '.join(v.name for v in tree.variables)}}}"]

    def label(var_id: int, value: int) -> str:
        variable = names[var_id]
        return variable.states[value] if variable.states else str(value)

    def walk(node: Node, indent: str) -> None:
        if isinstance(node, Split):
            for value, (q, child) in enumerate(zip(node.probabilities, node.children)):
                name = names[node.variable].name
                value_label = label(node.variable, value)
                lines.append(f"{indent}{name} = {value_label} (q={q:.6g})")
                walk(child, indent + "  ")
            return
        for var_id, probabilities in sorted(node.multinomials.items()):
            text = ", ".join(f"{p:.6g}" for p in probabilities)
            lines.append(f"{indent}{names[var_id].name} ~ multinomial({text})")
        if node.continuous:
            dims = ", ".join(names[var_id].name for var_id in node.continuous)
            count = node.gmm.components
            lines.append(f"{indent}({dims}) ~ gmm with {count} components")
            for k in range(node.gmm.components):
                mean = ", ".join(f"{m:.6g}" for m in node.gmm.means[k])
                var = ", ".join(f"{s:.6g}" for s in node.gmm.variances[k])
                weight = node.gmm.weights[k]
                lines.append(f"{indent}  pi={weight:.6g} mean=({mean}) var=({var})")

    walk(tree.root, "  ")
    return "\n".join(lines) + "\n"
