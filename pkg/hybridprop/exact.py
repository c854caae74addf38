"""Exact Shafer-Shenoy propagation over discrete networks."""
from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass
import logging
import math

import numpy as np

from .clique_tree import CliqueTree, build_clique_tree
from .const import BRUTE_FORCE_MAX_STATES, REFERENCE_MAX_ENTRIES
from .exceptions import (
    ContractError,
    ImpossibleEvidenceError,
    ReferenceInfeasibleError,
    StateSpaceTooLargeError,
)
from .network import Cpd, HybridNetwork, check_evidence, cpd_log_density

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TableFactor:
    """Nonnegative table over discrete variables; axis k belongs to scope[k]."""

    scope: tuple[int, ...]
    values: np.ndarray

    @classmethod
    def ones(cls, scope: Iterable[int], cards: Mapping[int, int]) -> TableFactor:
        """The multiplicative identity over a scope."""
        scope = tuple(scope)
        return cls(scope, np.ones(tuple(cards[v] for v in scope)))

    @property
    def total(self) -> float:
        """Sum of all entries."""
        return float(self.values.sum())

    def normalized(self) -> TableFactor:
        """Copy scaled to sum to one."""
        return TableFactor(self.scope, self.values / self.values.sum())


def factor_product(f: TableFactor, g: TableFactor) -> TableFactor:
    """Pointwise product over the union of both scopes."""
    scope = f.scope + tuple(v for v in g.scope if v not in f.scope)
    axis = {var_id: position for position, var_id in enumerate(scope)}
    values = np.einsum(
        f.values,
        [axis[v] for v in f.scope],
        g.values,
        [axis[v] for v in g.scope],
        list(range(len(scope))),
    )
    return TableFactor(scope, values)


def factor_marginalize(f: TableFactor, drop: Iterable[int]) -> TableFactor:
    """Sum the dropped variables out of a factor."""
    drop = set(drop)
    if not drop <= set(f.scope):
        raise ContractError(f"cannot drop {sorted(drop - set(f.scope))}: not in scope")
    axes = tuple(position for position, v in enumerate(f.scope) if v in drop)
    kept = tuple(v for v in f.scope if v not in drop)
    return TableFactor(kept, f.values.sum(axis=axes) if axes else f.values.copy())


def indicator_factor(var_id: int, cardinality: int, value: int) -> TableFactor:
    """Evidence indicator: one at the observed state, zero elsewhere."""
    values = np.zeros(cardinality)
    values[value] = 1.0
    return TableFactor((var_id,), values)


def cpd_factor(cpd: Cpd) -> TableFactor:
    """Table over (parents..., child) for a CPD whose family is all discrete."""
    family = (*cpd.parents, cpd.child)
    if not all(variable.is_discrete for variable in family):
        raise ContractError(f"cpd[{cpd.child.name}] has continuous variables")
    cards = tuple(int(variable.cardinality or 0) for variable in family)
    grid = np.indices(cards).reshape(len(cards), -1).T.astype(float)
    values = np.exp(cpd_log_density(cpd, grid[:, -1], grid[:, :-1]))
    return TableFactor(tuple(v.id for v in family), values.reshape(cards))


def _cardinalities(net: HybridNetwork) -> dict[int, int]:
    return {variable.id: int(variable.cardinality or 0) for variable in net.variables}


def check_table_sizes(
    tree: CliqueTree, net: HybridNetwork, limit: int = REFERENCE_MAX_ENTRIES
) -> None:
    """Refuse trees whose clique tables would exceed the entry limit."""
    cards = _cardinalities(net)
    for clique in tree.cliques:
        entries = math.prod(cards[v] for v in clique.scope)
        if entries > limit:
            raise ReferenceInfeasibleError(clique.id, entries)


def initial_potentials(
    tree: CliqueTree, net: HybridNetwork, evidence: Mapping[int, float]
) -> dict[int, TableFactor]:
    """phi*_i: assigned CPDs times evidence indicators, over the whole clique scope."""
    cards = _cardinalities(net)
    potentials = {}
    for clique in tree.cliques:
        factor = TableFactor.ones(sorted(clique.scope), cards)
        for child in sorted(clique.assigned_cpds):
            factor = factor_product(factor, cpd_factor(net.cpd(child)))
        for var_id in sorted(set(evidence) & clique.scope):
            factor = factor_product(
                factor, indicator_factor(var_id, cards[var_id], int(evidence[var_id]))
            )
        potentials[clique.id] = factor
    return potentials


def shafer_shenoy_propagate(
    tree: CliqueTree,
    net: HybridNetwork,
    evidence: Mapping[int, float] | None = None,
    root: int = 0,
) -> dict[int, TableFactor]:
    """Normalized clique posteriors psi_i from a two-pass schedule rooted at root."""
    if not net.is_discrete:
        raise ContractError("exact propagation needs a purely discrete network")
    evidence = check_evidence(net, evidence or {})
    phi = initial_potentials(tree, net, evidence)

    messages: dict[tuple[int, int], TableFactor] = {}
    for i, j in tree.upward_schedule(root) + tree.downward_schedule(root):
        tau = phi[i]
        for k in tree.neighbors(i):
            if k != j:
                tau = factor_product(tau, messages[(k, i)])
        messages[(i, j)] = factor_marginalize(tau, tree.complement(i, j))
        _LOGGER.debug("Sent exact message %d -> %d", i, j)

    posteriors = {}
    for clique in tree.cliques:
        psi = phi[clique.id]
        for k in tree.neighbors(clique.id):
            psi = factor_product(psi, messages[(k, clique.id)])
        if not psi.total > 0:
            raise ImpossibleEvidenceError("evidence has probability zero")
        posteriors[clique.id] = psi.normalized()
    return posteriors


def marginal_from_potentials(
    tree: CliqueTree, posteriors: Mapping[int, TableFactor], var_id: int
) -> np.ndarray:
    """Single-variable marginal read off the smallest clique holding it."""
    clique = tree.smallest_clique_with(var_id)
    factor = posteriors[clique.id]
    reduced = factor_marginalize(factor, set(factor.scope) - {var_id})
    return reduced.values / reduced.values.sum()  # type: ignore[no-any-return]


def exact_marginals(
    net: HybridNetwork,
    evidence: Mapping[int, float] | None = None,
    tree: CliqueTree | None = None,
    limit: int | None = None,
) -> dict[int, np.ndarray]:
    """Posterior marginal of every variable of a discrete network."""
    tree = tree or build_clique_tree(net)
    if limit is not None:
        check_table_sizes(tree, net, limit)
    posteriors = shafer_shenoy_propagate(tree, net, evidence)
    return {
        variable.id: marginal_from_potentials(tree, posteriors, variable.id)
        for variable in net.variables
    }


def brute_force_joint(
    net: HybridNetwork, evidence: Mapping[int, float] | None = None
) -> dict[int, np.ndarray]:
    """Posterior marginals by enumerating the full joint distribution."""
    if not net.is_discrete:
        raise ContractError("enumeration needs a purely discrete network")
    cards = _cardinalities(net)
    states = math.prod(cards.values())
    if states > BRUTE_FORCE_MAX_STATES:
        raise StateSpaceTooLargeError(
            f"{states} joint states exceed {BRUTE_FORCE_MAX_STATES}"
        )
    evidence = check_evidence(net, evidence or {})
    joint = TableFactor.ones(range(len(net.variables)), cards)
    for cpd in sorted(net.cpds, key=lambda item: item.child.id):
        joint = factor_product(joint, cpd_factor(cpd))
    for var_id, value in evidence.items():
        indicator = indicator_factor(var_id, cards[var_id], int(value))
        joint = factor_product(joint, indicator)
    if not joint.total > 0:
        raise ImpossibleEvidenceError("evidence has probability zero")
    joint = joint.normalized()
    return {
        var_id: factor_marginalize(joint, set(joint.scope) - {var_id}).values
        for var_id in joint.scope
    }
