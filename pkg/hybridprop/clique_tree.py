"""Clique tree construction over the moral graph."""
from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from functools import cached_property
import itertools
import logging

import networkx as nx
from networkx.utils import UnionFind

from .const import DEFAULT_MAX_CONTINUOUS_PER_CLIQUE
from .exceptions import CliqueTreeError, ContractError
from .network import HybridNetwork

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class Clique:
    """A cluster of variables with the CPDs and evidence assigned to it."""

    id: int
    scope: frozenset[int]
    assigned_cpds: frozenset[int] = frozenset()
    local_evidence: Mapping[int, float] = field(default_factory=dict)

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class CliqueTree:
    """Undirected tree of cliques; edges are (i, j) pairs with i < j."""

    cliques: tuple[Clique, ...]
    edges: tuple[tuple[int, int], ...]
    violations: tuple[str, ...] = ()

    __hash__ = None  # type: ignore[assignment]

    @cached_property
    def graph(self) -> nx.Graph:
        """The tree as a networkx graph over clique ids."""
        graph = nx.Graph()
        graph.add_nodes_from(clique.id for clique in self.cliques)
        graph.add_edges_from(self.edges)
        return graph

    def scope(self, clique: int) -> frozenset[int]:
        """Variables of one clique."""
        return self.cliques[clique].scope

    def neighbors(self, clique: int) -> tuple[int, ...]:
        """Adjacent clique ids in increasing order."""
        return tuple(sorted(self.graph.neighbors(clique)))

    def sepset(self, i: int, j: int) -> frozenset[int]:
        """S_ij, the variables shared by two cliques."""
        return self.cliques[i].scope & self.cliques[j].scope

    def complement(self, i: int, j: int) -> frozenset[int]:
        """C_i minus S_ij, the variables summed out of a message from i to j."""
        return self.cliques[i].scope - self.sepset(i, j)

    def parents(self, root: int = 0) -> dict[int, int]:
        """Parent of every non-root clique when the tree hangs from root."""
        return dict(nx.bfs_predecessors(self.graph, root, sort_neighbors=sorted))

    def upward_schedule(self, root: int = 0) -> list[tuple[int, int]]:
        """Directed edges leaves-to-root; every clique sends after its children."""
        parents = self.parents(root)
        order = [root, *parents]
        return [
            (clique, parents[clique]) for clique in reversed(order) if clique != root
        ]

    def downward_schedule(self, root: int = 0) -> list[tuple[int, int]]:
        """Directed edges root-to-leaves in breadth-first order."""
        return [(parent, child) for child, parent in self.parents(root).items()]

    def smallest_clique_with(self, var_id: int) -> Clique:
        """The smallest clique containing a variable, ties to the lowest id."""
        holding = [clique for clique in self.cliques if var_id in clique.scope]
        if not holding:
            raise ContractError(f"variable {var_id} is in no clique")
        return min(holding, key=lambda clique: (len(clique.scope), clique.id))


def moral_graph(net: HybridNetwork) -> nx.Graph:
    """Undirected graph linking every child to its parents and co-parents."""
    graph = nx.Graph()
    graph.add_nodes_from(variable.id for variable in net.variables)
    for cpd in net.cpds:
        family = sorted(cpd.family)
        graph.add_edges_from(itertools.combinations(family, 2))
    return graph


def _fill_cost(adjacency: dict[int, set[int]], node: int) -> int:
    """If node were eliminated, how many fill-in edges would it add?"""
    neighbors = sorted(adjacency[node])
    return sum(
        1
        for first, second in itertools.combinations(neighbors, 2)
        if second not in adjacency[first]
    )


def min_fill_elimination(graph: nx.Graph) -> tuple[list[int], list[frozenset[int]]]:
    """Greedy min-fill elimination; ties go to the lowest variable id.

    Returns the elimination order and the clique created by each elimination.
    """
    adjacency = {node: set(graph.neighbors(node)) for node in graph.nodes}
    order: list[int] = []
    cliques: list[frozenset[int]] = []
    while adjacency:
        node = min(adjacency, key=lambda item: (_fill_cost(adjacency, item), item))
        neighbors = adjacency.pop(node)
        cliques.append(frozenset({node, *neighbors}))
        order.append(node)
        for first, second in itertools.combinations(neighbors, 2):
            adjacency[first].add(second)
            adjacency[second].add(first)
        for neighbor in neighbors:
            adjacency[neighbor].discard(node)
    return order, cliques


def _maximal(cliques: list[frozenset[int]]) -> list[frozenset[int]]:
    kept = []
    for index, clique in enumerate(cliques):
        dominated = any(
            clique < other or (clique == other and position < index)
            for position, other in enumerate(cliques)
            if position != index
        )
        if not dominated:
            kept.append(clique)
    return kept


def _max_spanning_edges(scopes: list[frozenset[int]]) -> list[tuple[int, int]]:
    """Kruskal on sepset sizes, ties by lowest (i, j).

    Zero-weight edges are allowed so disconnected components still join.
    """
    candidates = sorted(
        itertools.combinations(range(len(scopes)), 2),
        key=lambda pair: (-len(scopes[pair[0]] & scopes[pair[1]]), pair),
    )
    components = UnionFind(range(len(scopes)))
    edges = []
    for i, j in candidates:
        if components[i] != components[j]:
            components.union(i, j)
            edges.append((i, j))
    return sorted(edges)


def assign_cpds(tree: CliqueTree, net: HybridNetwork) -> CliqueTree:
    """Assign every CPD to its smallest covering clique (ties to lowest id)."""
    assigned: dict[int, set[int]] = {clique.id: set() for clique in tree.cliques}
    for cpd in sorted(net.cpds, key=lambda item: item.child.id):
        covering = [clique for clique in tree.cliques if cpd.family <= clique.scope]
        if not covering:
            raise CliqueTreeError(f"no clique covers the family of {cpd.child.name}")
        best = min(covering, key=lambda clique: (len(clique.scope), clique.id))
        assigned[best.id].add(cpd.child.id)
    cliques = tuple(
        replace(clique, assigned_cpds=frozenset(assigned[clique.id]))
        for clique in tree.cliques
    )
    return replace(tree, cliques=cliques)


def attach_evidence(tree: CliqueTree, evidence: Mapping[int, float]) -> CliqueTree:
    """Give each clique the evidence restricted to its scope."""
    cliques = tuple(
        replace(
            clique,
            local_evidence={k: v for k, v in evidence.items() if k in clique.scope},
        )
        for clique in tree.cliques
    )
    return replace(tree, cliques=cliques)


def build_clique_tree(
    net: HybridNetwork,
    max_continuous_per_clique: int = DEFAULT_MAX_CONTINUOUS_PER_CLIQUE,
) -> CliqueTree:
    """Build a deterministic clique tree for a valid network."""
    order, raw = min_fill_elimination(moral_graph(net))
    scopes = _maximal(raw)
    _LOGGER.debug("Eliminated %d variables into %d cliques", len(order), len(scopes))

    continuous = set(net.continuous_ids)
    violations = []
    for index, scope in enumerate(scopes):
        count = len(scope & continuous)
        if count > max_continuous_per_clique:
            violations.append(
                f"clique {index} holds {count} continuous variables "
                f"(limit {max_continuous_per_clique})"
            )
    for violation in violations:
        _LOGGER.warning("Oversized clique: %s", violation)

    tree = CliqueTree(
        cliques=tuple(Clique(index, scope) for index, scope in enumerate(scopes)),
        edges=tuple(_max_spanning_edges(scopes)),
        violations=tuple(violations),
    )
    return assign_cpds(tree, net)


def verify_running_intersection(tree: CliqueTree) -> bool:
    """True iff the edges form a tree and each variable's cliques are connected."""
    if len(tree.cliques) > 1 and not nx.is_tree(tree.graph):
        return False
    variables = set().union(*(clique.scope for clique in tree.cliques))
    for var_id in variables:
        holding = [clique.id for clique in tree.cliques if var_id in clique.scope]
        if not nx.is_connected(tree.graph.subgraph(holding)):
            return False
    return True


def verify_family_preservation(tree: CliqueTree, net: HybridNetwork) -> bool:
    """True iff every CPD sits in exactly one clique that covers its family."""
    for cpd in net.cpds:
        holders = [c for c in tree.cliques if cpd.child.id in c.assigned_cpds]
        if len(holders) != 1 or not cpd.family <= holders[0].scope:
            return False
    return True


def format_tree(tree: CliqueTree, net: HybridNetwork) -> str:
    """Text listing of cliques, sepsets and CPD assignment."""

    def names(ids: frozenset[int]) -> str:
        return ", ".join(net.variable(i).name for i in sorted(ids))

    lines = [f"clique tree: {len(tree.cliques)} cliques, {len(tree.edges)} edges"]
    for clique in tree.cliques:
        lines.append(f"clique {clique.id}: {{{names(clique.scope)}}}")
        lines.append(f"  cpds: {names(clique.assigned_cpds) or '-'}")
    for i, j in tree.edges:
        lines.append(f"edge {i} -- {j}: sepset {{{names(tree.sepset(i, j))}}}")
    lines.extend(f"warning: {violation}" for violation in tree.violations)
    return "\n".join(lines) + "\n"
