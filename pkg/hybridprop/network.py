"""Hybrid Bayesian network model: variables, the four CPD families and validation."""
from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, fields
from functools import cached_property
import logging
import math
from typing import Any, Union

import networkx as nx
import numpy as np
from scipy.special import softmax
from scipy.stats import norm

from .const import (
    CPD_CLG,
    CPD_SOFTMAX,
    CPD_TABLE,
    CPD_UNIFORM,
    KIND_CONTINUOUS,
    KIND_DISCRETE,
    ROW_SUM_TOLERANCE,
)
from .exceptions import ContractError, DomainError

_LOGGER = logging.getLogger(__name__)

Evidence = dict[int, float]


@dataclass(frozen=True)
class Variable:
    """A discrete or range-bounded continuous network variable."""

    id: int
    name: str
    cardinality: int | None = None
    lower: float | None = None
    upper: float | None = None
    states: tuple[str, ...] = ()

    @classmethod
    def discrete(cls, var_id: int, name: str, states: Sequence[str]) -> Variable:
        """Create a discrete variable from its state labels."""
        return cls(var_id, name, cardinality=len(states), states=tuple(states))

    @classmethod
    def continuous(
        cls, var_id: int, name: str, lower: float, upper: float
    ) -> Variable:
        """Create a continuous variable on [lower, upper]."""
        return cls(var_id, name, lower=float(lower), upper=float(upper))

    @property
    def is_discrete(self) -> bool:
        """Return True for discrete variables."""
        return self.cardinality is not None

    @property
    def kind(self) -> str:
        """Return the file-format kind name."""
        return KIND_DISCRETE if self.is_discrete else KIND_CONTINUOUS

    @property
    def width(self) -> float:
        """Return U - L for continuous variables."""
        assert self.lower is not None and self.upper is not None
        return self.upper - self.lower

    def state_index(self, value: Any) -> int:
        """Map a state label or index to an index."""
        assert self.cardinality is not None
        if isinstance(value, str):
            if value in self.states:
                return self.states.index(value)
            try:
                value = int(value)
            except ValueError as err:
                raise DomainError(f"{self.name}: unknown state {value!r}") from err
        index = int(value)
        if index != value or not 0 <= index < self.cardinality:
            raise DomainError(f"{self.name}: state {value!r} out of domain")
        return index

    def check_value(self, value: Any) -> None:
        """Raise DomainError if value is outside this variable's domain."""
        if self.is_discrete:
            self.state_index(value)
            return
        assert self.lower is not None and self.upper is not None
        if not math.isfinite(value) or not self.lower <= value <= self.upper:
            raise DomainError(
                f"{self.name}: value {value!r} outside [{self.lower}, {self.upper}]"
            )


class _ArrayFieldsMixin:
    """Structural equality for dataclasses holding numpy arrays."""

    def __eq__(self, other: object) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        for item in fields(self):  # type: ignore[arg-type]
            mine, theirs = getattr(self, item.name), getattr(other, item.name)
            if isinstance(mine, np.ndarray):
                if not np.array_equal(mine, theirs):
                    return False
            elif mine != theirs:
                return False
        return True

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class TableBody(_ArrayFieldsMixin):
    """Conditional probability table, one row per parent assignment (C order)."""

    probabilities: np.ndarray


@dataclass(frozen=True, eq=False)
class ClgBody(_ArrayFieldsMixin):
    """Conditional linear Gaussian, one block per discrete-parent assignment.

    A block marked in ``flat`` ignores its Gaussian parameters and is uniform on
    the child's declared range.
    """

    intercepts: np.ndarray
    weights: np.ndarray
    variances: np.ndarray
    flat: np.ndarray | None = None

    def __post_init__(self) -> None:
        """Default to no flat blocks."""
        if self.flat is None:
            object.__setattr__(self, "flat", np.zeros(self.intercepts.shape, bool))

    @property
    def flat_blocks(self) -> np.ndarray:
        """Boolean mask of the uniform blocks."""
        assert self.flat is not None
        return self.flat


@dataclass(frozen=True, eq=False)
class SoftmaxBlock(_ArrayFieldsMixin):
    """Regions of a generalized softmax for one discrete-parent assignment.

    Row r of ``alphas`` is (alpha_0, alpha_1, ..., alpha_m) over the m continuous
    parents and row r of ``probabilities`` is the region's child distribution.
    """

    alphas: np.ndarray
    probabilities: np.ndarray

    def region_weights(self, continuous: np.ndarray) -> np.ndarray:
        """Return the (M, R) region weights at the given parent values."""
        scores = self.alphas[:, 0] + continuous @ self.alphas[:, 1:].T
        return softmax(scores, axis=1)  # type: ignore[no-any-return]

    def distribution(self, continuous: np.ndarray) -> np.ndarray:
        """Return the (M, k) child distribution at the given parent values."""
        weights = self.region_weights(continuous)
        return weights @ self.probabilities  # type: ignore[no-any-return]


@dataclass(frozen=True)
class SoftmaxBody:
    """Generalized softmax CPD of a discrete child."""

    blocks: tuple[SoftmaxBlock, ...]


@dataclass(frozen=True)
class UniformBody:
    """Uniform density on the child's declared range."""


CpdBody = Union[TableBody, ClgBody, SoftmaxBody, UniformBody]

_BODY_KINDS: dict[type, str] = {
    TableBody: CPD_TABLE,
    ClgBody: CPD_CLG,
    SoftmaxBody: CPD_SOFTMAX,
    UniformBody: CPD_UNIFORM,
}


@dataclass(frozen=True)
class Cpd:
    """Conditional distribution of one child given its ordered parents."""

    child: Variable
    parents: tuple[Variable, ...]
    body: CpdBody

    @property
    def kind(self) -> str:
        """Return the file-format kind name."""
        return _BODY_KINDS[type(self.body)]

    @property
    def family(self) -> frozenset[int]:
        """Return the child and parent ids."""
        return frozenset((self.child.id, *(parent.id for parent in self.parents)))

    @property
    def discrete_positions(self) -> tuple[int, ...]:
        """Positions of the discrete parents in the parent list."""
        return tuple(i for i, p in enumerate(self.parents) if p.is_discrete)

    @property
    def continuous_positions(self) -> tuple[int, ...]:
        """Positions of the continuous parents in the parent list."""
        return tuple(i for i, p in enumerate(self.parents) if not p.is_discrete)

    @property
    def block_count(self) -> int:
        """Number of joint discrete-parent assignments."""
        return math.prod(
            int(self.parents[i].cardinality or 0) for i in self.discrete_positions
        )

    def block_index(self, parent_values: np.ndarray) -> np.ndarray:
        """Return the row/block index of each parent assignment in ``(M, P)``."""
        positions = self.discrete_positions
        if not positions:
            return np.zeros(parent_values.shape[0], dtype=np.intp)
        values = parent_values[:, positions].astype(np.intp)
        cards = tuple(int(self.parents[i].cardinality or 0) for i in positions)
        return np.ravel_multi_index(values.T, cards)  # type: ignore[no-any-return]


@dataclass(frozen=True)
class Violation:
    """One broken network rule."""

    subject: str
    rule: str
    detail: str

    def __str__(self) -> str:
        return f"{self.subject}: {self.rule} ({self.detail})"


@dataclass(frozen=True)
class ValidationReport:
    """Result of validate_network."""

    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        """Return True when no rule is broken."""
        return not self.violations

    def rules(self) -> set[str]:
        """Return the names of every broken rule."""
        return {violation.rule for violation in self.violations}


@dataclass(frozen=True)
class HybridNetwork:
    """A DAG of variables, each carrying exactly one CPD."""

    variables: tuple[Variable, ...]
    cpds: tuple[Cpd, ...]
    name: str = field(default="network", compare=False)

    __hash__ = None  # type: ignore[assignment]

    def variable(self, key: int | str) -> Variable:
        """Look a variable up by id or name."""
        if isinstance(key, str):
            try:
                return self._by_name[key]
            except KeyError as err:
                raise ContractError(f"unknown variable {key!r}") from err
        if not 0 <= key < len(self.variables):
            raise ContractError(f"unknown variable id {key}")
        return self.variables[key]

    def cpd(self, var_id: int) -> Cpd:
        """Return the CPD whose child is var_id."""
        return self._by_child[var_id]

    @cached_property
    def _by_name(self) -> dict[str, Variable]:
        return {variable.name: variable for variable in self.variables}

    @cached_property
    def _by_child(self) -> dict[int, Cpd]:
        return {cpd.child.id: cpd for cpd in self.cpds}

    @cached_property
    def graph(self) -> nx.DiGraph:
        """Directed graph with parent -> child edges."""
        graph = nx.DiGraph()
        graph.add_nodes_from(variable.id for variable in self.variables)
        for cpd in self.cpds:
            graph.add_edges_from((parent.id, cpd.child.id) for parent in cpd.parents)
        return graph

    @cached_property
    def topological_order(self) -> tuple[int, ...]:
        """Variable ids ordered parents-first, ties broken by lowest id."""
        return tuple(nx.lexicographical_topological_sort(self.graph))

    @property
    def is_discrete(self) -> bool:
        """Return True when every variable is discrete."""
        return all(variable.is_discrete for variable in self.variables)

    @property
    def continuous_ids(self) -> tuple[int, ...]:
        """Ids of the continuous variables."""
        return tuple(v.id for v in self.variables if not v.is_discrete)


def check_evidence(net: HybridNetwork, evidence: Mapping[int, float]) -> Evidence:
    """Validate evidence against the network and return a normalized copy."""
    checked: Evidence = {}
    for var_id, value in evidence.items():
        variable = net.variable(var_id)
        if variable.is_discrete:
            checked[variable.id] = variable.state_index(value)
        else:
            try:
                number = float(value)
            except (TypeError, ValueError) as err:
                raise DomainError(
                    f"{variable.name}: {value!r} is not a number"
                ) from err
            variable.check_value(number)
            checked[variable.id] = number
    return checked


def _row_violations(
    subject: str, rows: np.ndarray, expected_shape: tuple[int, int]
) -> list[Violation]:
    if rows.shape != expected_shape:
        detail = f"expected {expected_shape}, got {rows.shape}"
        return [Violation(subject, "table-shape", detail)]
    found = []
    if np.any(rows < 0) or not np.all(np.isfinite(rows)):
        found.append(
            Violation(subject, "row-nonnegative", "negative or non-finite entry")
        )
    for index, row in enumerate(rows):
        total = math.fsum(row)
        if abs(total - 1.0) > ROW_SUM_TOLERANCE:
            found.append(
                Violation(subject, "row-sum", f"row {index}: row sum ≠ 1 ({total!r})")
            )
    return found


def _cpd_violations(cpd: Cpd) -> list[Violation]:
    subject = f"cpd[{cpd.child.name}]"
    child = cpd.child
    body = cpd.body
    continuous_count = len(cpd.continuous_positions)
    cardinality = int(child.cardinality or 0)
    if isinstance(body, TableBody):
        if not child.is_discrete or not all(p.is_discrete for p in cpd.parents):
            detail = "table CPDs need discrete child and parents"
            return [Violation(subject, "table-discrete", detail)]
        rows = math.prod(int(p.cardinality or 0) for p in cpd.parents)
        return _row_violations(subject, body.probabilities, (rows, cardinality))
    if isinstance(body, ClgBody):
        if child.is_discrete:
            detail = "CLG child must be continuous"
            return [Violation(subject, "clg-continuous-child", detail)]
        blocks = cpd.block_count
        if (
            body.intercepts.shape != (blocks,)
            or body.weights.shape != (blocks, continuous_count)
            or body.variances.shape != (blocks,)
            or body.flat_blocks.shape != (blocks,)
        ):
            detail = f"expected {blocks} blocks over {continuous_count} weights"
            return [Violation(subject, "clg-shape", detail)]
        if np.any(~(body.variances > 0) & ~body.flat_blocks):
            detail = "every variance must be > 0"
            return [Violation(subject, "positive-variance", detail)]
        return []
    if isinstance(body, SoftmaxBody):
        if not child.is_discrete:
            detail = "softmax child must be discrete"
            return [Violation(subject, "softmax-discrete-child", detail)]
        if len(body.blocks) != cpd.block_count:
            detail = f"expected {cpd.block_count} blocks, got {len(body.blocks)}"
            return [Violation(subject, "softmax-shape", detail)]
        found = []
        for index, block in enumerate(body.blocks):
            regions = block.alphas.shape[0] if block.alphas.ndim == 2 else 0
            if regions < 1 or block.alphas.shape != (regions, continuous_count + 1):
                detail = f"block {index}: alpha needs {continuous_count + 1} entries"
                found.append(Violation(subject, "softmax-shape", detail))
                continue
            found.extend(
                Violation(f"{subject} block {index}", item.rule, item.detail)
                for item in _row_violations(
                    subject, block.probabilities, (regions, cardinality)
                )
            )
        return found
    if child.is_discrete or cpd.parents:
        detail = "uniform CPDs need a continuous child without parents"
        return [Violation(subject, "uniform-root", detail)]
    return []


def validate_network(net: HybridNetwork) -> ValidationReport:
    """Check every structural and numerical invariant of a network."""
    found: list[Violation] = []
    names = [variable.name for variable in net.variables]
    for name in sorted({name for name in names if names.count(name) > 1}):
        found.append(Violation(name, "unique-names", "name used more than once"))
    for position, variable in enumerate(net.variables):
        if variable.id != position:
            detail = f"id {variable.id} at position {position}"
            found.append(Violation(variable.name, "variable-ids", detail))
        if variable.is_discrete:
            if int(variable.cardinality or 0) < 2:
                detail = "discrete variables need k >= 2"
                found.append(Violation(variable.name, "cardinality", detail))
        elif not (
            variable.lower is not None
            and variable.upper is not None
            and math.isfinite(variable.lower)
            and math.isfinite(variable.upper)
            and variable.lower < variable.upper
        ):
            detail = "continuous variables need L < U"
            found.append(Violation(variable.name, "bounded-range", detail))

    children = [cpd.child.id for cpd in net.cpds]
    for variable in net.variables:
        count = children.count(variable.id)
        if count != 1:
            detail = f"{count} CPDs"
            found.append(Violation(variable.name, "one-cpd-per-variable", detail))

    known = set(net.variables)
    for cpd in net.cpds:
        subject = f"cpd[{cpd.child.name}]"
        if cpd.child not in known or any(p not in known for p in cpd.parents):
            detail = "refers to an unknown variable"
            found.append(Violation(subject, "parents-match", detail))
            continue
        parent_ids = {parent.id for parent in cpd.parents}
        if len(parent_ids) != len(cpd.parents) or cpd.child.id in parent_ids:
            found.append(Violation(subject, "parents-match", "repeated parent"))
            continue
        found.extend(_cpd_violations(cpd))

    if not nx.is_directed_acyclic_graph(net.graph):
        cycle = nx.find_cycle(net.graph)
        path = " -> ".join(net.variables[edge[0]].name for edge in cycle)
        found.append(Violation("graph", "acyclic", f"cycle through {path}"))

    if found:
        _LOGGER.debug("Network %s has %d violations", net.name, len(found))
    return ValidationReport(tuple(found))


def _as_parent_matrix(cpd: Cpd, parent_assignment: Any) -> np.ndarray:
    if isinstance(parent_assignment, Mapping):
        try:
            values = [parent_assignment[parent.id] for parent in cpd.parents]
        except KeyError as err:
            raise ContractError(
                f"cpd[{cpd.child.name}]: parent {err} not assigned"
            ) from err
    else:
        values = list(parent_assignment)
        if len(values) != len(cpd.parents):
            raise ContractError(
                f"cpd[{cpd.child.name}]: expected {len(cpd.parents)} parent values"
            )
    for parent, value in zip(cpd.parents, values):
        parent.check_value(value)
    numeric = [
        parent.state_index(value) if parent.is_discrete else float(value)
        for parent, value in zip(cpd.parents, values)
    ]
    return np.asarray(numeric, dtype=float).reshape(1, len(cpd.parents))


def clg_moments(
    cpd: Cpd, body: ClgBody, parent_values: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-row mean and variance of a CLG child."""
    blocks = cpd.block_index(parent_values)
    continuous = parent_values[:, cpd.continuous_positions]
    mean = body.intercepts[blocks] + np.einsum(
        "ij,ij->i", body.weights[blocks], continuous
    )
    return mean, body.variances[blocks]


def cpd_log_density(
    cpd: Cpd, child_values: np.ndarray, parent_values: np.ndarray
) -> np.ndarray:
    """Vectorized log probability/density of child values given parent rows.

    ``parent_values`` has one column per parent in ``cpd.parents`` order; discrete
    columns hold state indices. No domain checks are made here: a uniform child
    outside its range gets ``-inf`` and the other families evaluate their formula.
    """
    child_values = np.asarray(child_values, dtype=float)
    count = child_values.shape[0]
    parent_values = np.asarray(parent_values, dtype=float)
    parent_values = parent_values.reshape(count, len(cpd.parents))
    body = cpd.body
    with np.errstate(divide="ignore"):
        if isinstance(body, TableBody):
            rows = cpd.block_index(parent_values)
            picked = body.probabilities[rows, child_values.astype(np.intp)]
            return np.log(picked)  # type: ignore[no-any-return]
        if isinstance(body, SoftmaxBody):
            blocks = cpd.block_index(parent_values)
            continuous = parent_values[:, cpd.continuous_positions]
            result = np.empty(count)
            for block_id in np.unique(blocks):
                rows = blocks == block_id
                table = body.blocks[block_id].distribution(continuous[rows])
                states = child_values[rows].astype(np.intp)
                picked = table[np.arange(table.shape[0]), states]
                result[rows] = np.log(picked)
            return result
    assert cpd.child.lower is not None and cpd.child.upper is not None
    inside = (child_values >= cpd.child.lower) & (child_values <= cpd.child.upper)
    uniform = np.where(inside, -math.log(cpd.child.width), -np.inf)
    if isinstance(body, ClgBody):
        mean, variance = clg_moments(cpd, body, parent_values)
        gaussian = norm.logpdf(child_values, loc=mean, scale=np.sqrt(variance))
        flat = body.flat_blocks[cpd.block_index(parent_values)]
        return np.where(flat, uniform, gaussian)  # type: ignore[no-any-return]
    return uniform


def cpd_eval(cpd: Cpd, child_value: Any, parent_assignment: Any = ()) -> float:
    """Probability (discrete child) or density (continuous child) of one value.

    ``parent_assignment`` is either a sequence aligned with ``cpd.parents`` or a
    mapping from parent id to value. Out-of-domain values raise DomainError.
    """
    cpd.child.check_value(child_value)
    if cpd.child.is_discrete:
        child = float(cpd.child.state_index(child_value))
    else:
        child = float(child_value)
    parents = _as_parent_matrix(cpd, parent_assignment)
    return float(np.exp(cpd_log_density(cpd, np.array([child]), parents)[0]))


def _sample_rows(probabilities: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cumulative = np.cumsum(probabilities, axis=1)
    draws = rng.random(probabilities.shape[0]) * cumulative[:, -1]
    picked = (cumulative <= draws[:, None]).sum(axis=1)
    return np.minimum(picked, probabilities.shape[1] - 1).astype(float)


def cpd_sample_batch(
    cpd: Cpd, parent_values: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, int]:
    """Draw one child value per parent row; return values and the clamp count.

    CLG draws falling outside the child's declared range are clamped to the
    nearest boundary and counted.
    """
    parent_values = np.asarray(parent_values, dtype=float)
    count = parent_values.shape[0]
    body = cpd.body
    if isinstance(body, TableBody):
        return _sample_rows(body.probabilities[cpd.block_index(parent_values)], rng), 0
    if isinstance(body, SoftmaxBody):
        blocks = cpd.block_index(parent_values)
        continuous = parent_values[:, cpd.continuous_positions]
        table = np.empty((count, int(cpd.child.cardinality or 0)))
        for block_id in np.unique(blocks):
            rows = blocks == block_id
            table[rows] = body.blocks[block_id].distribution(continuous[rows])
        return _sample_rows(table, rng), 0
    assert cpd.child.lower is not None and cpd.child.upper is not None
    if isinstance(body, UniformBody):
        return rng.uniform(cpd.child.lower, cpd.child.upper, size=count), 0
    mean, variance = clg_moments(cpd, body, parent_values)
    flat = body.flat_blocks[cpd.block_index(parent_values)]
    values = mean + np.sqrt(variance) * rng.standard_normal(count)
    clamped = np.clip(values, cpd.child.lower, cpd.child.upper)
    moved = int(np.count_nonzero((clamped != values) & ~flat))
    if flat.any():
        spread = rng.uniform(cpd.child.lower, cpd.child.upper, size=count)
        clamped = np.where(flat, spread, clamped)
    return clamped, moved


def cpd_sample(
    cpd: Cpd, parent_assignment: Any, rng: np.random.Generator
) -> float:
    """Draw one child value given one parent assignment."""
    parents = _as_parent_matrix(cpd, parent_assignment)
    values, clamped = cpd_sample_batch(cpd, parents, rng)
    if clamped:
        _LOGGER.debug("Clamped a %s sample to its declared range", cpd.child.name)
    value = float(values[0])
    return int(value) if cpd.child.is_discrete else value  # type: ignore[return-value]
