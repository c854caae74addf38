"""Tests for exact discrete propagation."""
from __future__ import annotations

import numpy as np
import pytest

from hybridprop.clique_tree import build_clique_tree
from hybridprop.exact import (
    TableFactor,
    brute_force_joint,
    cpd_factor,
    exact_marginals,
    factor_marginalize,
    factor_product,
    shafer_shenoy_propagate,
)
from hybridprop.exceptions import (
    ContractError,
    ImpossibleEvidenceError,
    ReferenceInfeasibleError,
)
from hybridprop.network import HybridNetwork
from hybridprop.network_io import network_from_dict

from .common import chain_dict, random_discrete_network


def test_chain_prior(chain: HybridNetwork) -> None:
    """Marginals of the chain without evidence."""
    marginals = exact_marginals(chain)
    np.testing.assert_allclose(marginals[0], [0.6, 0.4], atol=1e-12)
    np.testing.assert_allclose(marginals[1], [0.62, 0.38], atol=1e-12)
    np.testing.assert_allclose(marginals[2], [0.472, 0.528], atol=1e-12)


def test_chain_posterior(chain: HybridNetwork) -> None:
    """Evidence at the leaf flows back to the root."""
    marginals = exact_marginals(chain, {2: 1})
    assert marginals[0][1] == pytest.approx(0.312 / 0.528, abs=1e-12)
    np.testing.assert_allclose(marginals[2], [0.0, 1.0])


@pytest.mark.parametrize("seed", range(50))
def test_matches_enumeration(seed: int) -> None:
    """Propagation agrees with brute-force enumeration."""
    rng = np.random.default_rng(seed)
    net = random_discrete_network(rng, int(rng.integers(2, 9)), max_parents=3)
    observed = rng.choice(len(net.variables), size=2, replace=False)
    evidence = {int(var_id): int(rng.integers(0, 2)) for var_id in observed}
    expected = brute_force_joint(net, evidence)
    actual = exact_marginals(net, evidence)
    for var_id, marginal in expected.items():
        np.testing.assert_allclose(actual[var_id], marginal, atol=1e-9)


@pytest.mark.parametrize("root", [0, 1])
def test_sepsets_are_calibrated(chain: HybridNetwork, root: int) -> None:
    """Neighboring posteriors agree on their sepset for any root."""
    tree = build_clique_tree(chain)
    posteriors = shafer_shenoy_propagate(tree, chain, {0: 0}, root=root)
    for i, j in tree.edges:
        sepset = tree.sepset(i, j)
        left = factor_marginalize(posteriors[i], set(posteriors[i].scope) - sepset)
        right = factor_marginalize(posteriors[j], set(posteriors[j].scope) - sepset)
        np.testing.assert_allclose(left.values, right.values, atol=1e-12)


def test_impossible_evidence() -> None:
    """Evidence of probability zero is an error in both engines."""
    data = chain_dict()
    data["cpds"][0]["params"]["rows"][""] = [1.0, 0.0]
    net = network_from_dict(data)
    with pytest.raises(ImpossibleEvidenceError):
        exact_marginals(net, {0: 1})
    with pytest.raises(ImpossibleEvidenceError):
        brute_force_joint(net, {0: 1})


def test_hybrid_network_is_refused(hybrid: HybridNetwork) -> None:
    """Continuous variables need the approximate engine."""
    with pytest.raises(ContractError):
        exact_marginals(hybrid)


def test_table_limit(chain: HybridNetwork) -> None:
    """A clique table above the entry limit is refused."""
    with pytest.raises(ReferenceInfeasibleError) as err:
        exact_marginals(chain, limit=3)
    assert err.value.entries == 4


def test_factor_product_aligns_axes() -> None:
    """Shared variables line up whatever their axis position."""
    f = TableFactor((0, 1), np.array([[1.0, 2.0], [3.0, 4.0]]))
    g = TableFactor((1, 2), np.array([[1.0, 10.0], [100.0, 1000.0]]))
    product = factor_product(f, g)
    assert product.scope == (0, 1, 2)
    assert product.values[1, 1, 0] == 4.0 * 100.0
    summed = factor_marginalize(product, {1})
    assert summed.scope == (0, 2)
    assert summed.values[0, 1] == pytest.approx(1.0 * 10.0 + 2.0 * 1000.0)
    with pytest.raises(ContractError):
        factor_marginalize(f, {5})


def test_cpd_factor_puts_child_last(chain: HybridNetwork) -> None:
    """CPD tables are laid out parents first."""
    factor = cpd_factor(chain.cpd(1))
    assert factor.scope == (0, 1)
    np.testing.assert_allclose(factor.values, [[0.9, 0.1], [0.2, 0.8]])
