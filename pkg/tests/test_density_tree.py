"""Tests for density tree learning and operations."""
from __future__ import annotations

import numpy as np
import pytest
from scipy.integrate import trapezoid

from hybridprop.density_tree import (
    DensityTree,
    Leaf,
    Split,
    TreeConfig,
    WeightedSampleSet,
    dt_condition,
    dt_eval,
    dt_learn,
    dt_marginalize,
    dt_sample,
    dt_sample_batch,
    format_density_tree,
    log_density,
    tree_from_table,
    tree_structure,
)
from hybridprop.exceptions import ConfigError, ContractError, LearningError
from hybridprop.gmm import DiagonalGmm, EmConfig
from hybridprop.network import Variable

D = Variable.discrete(0, "D", ["off", "on"])
X = Variable.continuous(1, "X", -10.0, 10.0)
E = Variable.discrete(2, "E", ["a", "b", "c"])
GRID = np.linspace(-15.0, 15.0, 6001)


def _mixed_samples(seed: int = 0, count: int = 2000) -> WeightedSampleSet:
    rng = np.random.default_rng(seed)
    d = (rng.random(count) < 0.7).astype(float)
    x = np.where(d == 1, 2.0, -2.0) + rng.standard_normal(count)
    e = rng.integers(0, 3, size=count).astype(float)
    weights = rng.uniform(0.5, 1.5, size=count)
    return WeightedSampleSet((D, X, E), np.column_stack([d, x, e]), weights)


def _density_on_grid(tree: DensityTree, fixed: dict[int, float]) -> np.ndarray:
    columns = [*sorted(fixed), X.id]
    values = np.column_stack(
        [*(np.full(GRID.size, fixed[var_id]) for var_id in sorted(fixed)), GRID]
    )
    return np.exp(log_density(tree, columns, values))


@pytest.fixture(name="learned", scope="module")
def learned_fixture() -> DensityTree:
    """Tree learned from the mixed samples."""
    return dt_learn(_mixed_samples(), TreeConfig(em=EmConfig(seed=1)))


def test_learned_tree_splits_on_discrete(learned: DensityTree) -> None:
    """Discrete variables become splits before any leaf."""
    assert learned.columns == (0, 1, 2)
    structure = tree_structure(learned)
    assert structure[0] in (D.id, E.id)
    assert isinstance(learned.root, Split)


def test_learned_tree_is_normalized(learned: DensityTree) -> None:
    """Summing over states and integrating X gives one."""
    total = sum(
        trapezoid(_density_on_grid(learned, {0: d, 2: e}), GRID)
        for d in range(2)
        for e in range(3)
    )
    assert total == pytest.approx(1.0, abs=1e-3)


def test_learned_tree_tracks_weights(learned: DensityTree) -> None:
    """Edge probabilities follow the weighted frequencies."""
    marginal = dt_marginalize(learned, {D.id})
    assert dt_eval(marginal, {0: 1}) == pytest.approx(0.7, abs=0.03)


def test_condition_keeps_mass(learned: DensityTree) -> None:
    """eval(full) equals mass times eval(conditioned, rest)."""
    conditioned, mass = dt_condition(learned, {X.id: 0.5})
    assert conditioned.scope == frozenset({D.id, E.id})
    for d in range(2):
        for e in range(3):
            full = dt_eval(learned, {0: d, 1: 0.5, 2: e})
            rest = dt_eval(conditioned, {0: d, 2: e})
            assert full == pytest.approx(mass * rest, rel=1e-9)
    everything, point = dt_condition(learned, {0: 1, 1: 0.5, 2: 2})
    assert everything.scope == frozenset()
    assert point == pytest.approx(dt_eval(learned, {0: 1, 1: 0.5, 2: 2}), rel=1e-9)
    assert dt_eval(everything, {}) == pytest.approx(1.0)


def test_condition_on_split_variable(learned: DensityTree) -> None:
    """Conditioning on a split variable keeps one branch."""
    conditioned, mass = dt_condition(learned, {D.id: 0, E.id: 1})
    densities = _density_on_grid(conditioned, {})
    assert trapezoid(densities, GRID) == pytest.approx(1.0, abs=1e-3)
    assert 0.05 < mass < 0.2


def test_marginalize_matches_integration(learned: DensityTree) -> None:
    """Removing X integrates it out."""
    kept = dt_marginalize(learned, {D.id, E.id})
    for d in range(2):
        integral = trapezoid(_density_on_grid(learned, {0: d, 2: 0}), GRID)
        assert dt_eval(kept, {0: d, 2: 0}) == pytest.approx(integral, abs=1e-3)


def test_marginalize_split_variable(learned: DensityTree) -> None:
    """Removing a split variable mixes its branches."""
    over_x = dt_marginalize(learned, {X.id})
    area = trapezoid(_density_on_grid(over_x, {}), GRID)
    assert area == pytest.approx(1.0, abs=1e-3)
    expected = sum(
        dt_eval(learned, {0: d, 1: 2.0, 2: e}) for d in range(2) for e in range(3)
    )
    assert dt_eval(over_x, {1: 2.0}) == pytest.approx(expected, rel=1e-9)
    with pytest.raises(ContractError):
        dt_marginalize(learned, {7})


def test_table_tree_is_exact() -> None:
    """A tree built from a table reproduces it."""
    rng = np.random.default_rng(2)
    table = rng.dirichlet(np.ones(6)).reshape(3, 2)
    tree = tree_from_table([E, D], table)
    assert tree.columns == (0, 2)
    for e in range(3):
        for d in range(2):
            assert dt_eval(tree, {0: d, 2: e}) == pytest.approx(table[e, d])
    summed = dt_marginalize(tree, {E.id})
    for e in range(3):
        assert dt_eval(summed, {2: e}) == pytest.approx(table[e].sum())


def test_three_level_mix() -> None:
    """Removing a middle split variable keeps the joint of the others."""
    f = Variable.discrete(3, "F", ["0", "1"])
    rng = np.random.default_rng(3)
    table = rng.dirichlet(np.ones(12)).reshape(2, 3, 2)
    tree = tree_from_table([D, E, f], table)
    outer = dt_marginalize(tree, {D.id, f.id})
    expected = table.sum(axis=1)
    for d in range(2):
        for value in range(2):
            assert dt_eval(outer, {0: d, 3: value}) == pytest.approx(
                expected[d, value]
            )


def test_sampling_follows_table() -> None:
    """Sample frequencies approach the tree's probabilities."""
    table = np.array([[0.1, 0.2], [0.3, 0.4]])
    f = Variable.discrete(3, "F", ["0", "1"])
    tree = tree_from_table([D, f], table)
    draws = dt_sample_batch(tree, 40000, np.random.default_rng(4))
    counts = np.zeros((2, 2))
    np.add.at(counts, (draws[:, 0].astype(int), draws[:, 1].astype(int)), 1)
    np.testing.assert_allclose(counts / 40000, table, atol=0.01)


def test_weight_scale_does_not_matter() -> None:
    """Weights are rescaled before learning."""
    data = _mixed_samples(seed=5, count=300)
    config = TreeConfig(em=EmConfig(seed=2))
    first = dt_learn(data, config)
    second = dt_learn(data.reweighted(data.weights * 1000.0), config)
    point = {0: 1, 1: 1.5, 2: 0}
    assert dt_eval(first, point) == pytest.approx(dt_eval(second, point), rel=1e-9)


def test_small_sets_become_one_leaf() -> None:
    """Below the leaf size no split is made."""
    data = _mixed_samples(count=10)
    tree = dt_learn(data, TreeConfig(min_leaf_samples=25))
    assert isinstance(tree.root, Leaf)
    assert set(tree.root.multinomials) == {D.id, E.id}
    assert tree.root.continuous == (X.id,)


def test_unseen_state_is_not_split_on() -> None:
    """A variable missing a state in the node's samples is skipped."""
    values = np.column_stack([np.zeros(100), np.linspace(-1.0, 1.0, 100)])
    data = WeightedSampleSet((D, X), values, np.ones(100))
    tree = dt_learn(data)
    assert isinstance(tree.root, Leaf)
    probabilities = tree.root.multinomials[D.id]
    assert probabilities[1] > 0
    assert probabilities.sum() == pytest.approx(1.0)


def test_learning_errors() -> None:
    """Zero weight and bad settings are refused."""
    data = _mixed_samples(count=20)
    with pytest.raises(LearningError):
        dt_learn(data.reweighted(np.zeros(20)))
    with pytest.raises(ConfigError):
        TreeConfig(min_leaf_samples=0)
    with pytest.raises(ContractError):
        WeightedSampleSet((D,), np.zeros((3, 2)), np.ones(3))


def test_empty_scope() -> None:
    """The constant tree has density one."""
    tree = DensityTree.constant()
    assert dt_eval(tree, {}) == 1.0
    assert dt_sample_batch(tree, 3, np.random.default_rng(0)).shape == (3, 0)


def test_project_keeps_id_order() -> None:
    """Projection drops columns and keeps weights."""
    data = _mixed_samples(count=5)
    projected = data.project([E.id, D.id])
    assert projected.scope == (0, 2)
    np.testing.assert_array_equal(projected.weights, data.weights)


def test_format_lists_splits_and_leaves(learned: DensityTree) -> None:
    """The dump names variables and mixture sizes."""
    text = format_density_tree(learned)
    assert text.startswith("density tree over {D, X, E}")
    assert "~ gmm with" in text


def _known_tree() -> DensityTree:
    """D ~ (0.3, 0.7); X | D=off ~ N(-3, 1); X | D=on ~ N(3, 0.25)."""
    return DensityTree(
        (D, X),
        Split(
            D.id,
            np.array([0.3, 0.7]),
            (
                Leaf({}, (X.id,), DiagonalGmm.single([-3.0], [1.0])),
                Leaf({}, (X.id,), DiagonalGmm.single([3.0], [0.25])),
            ),
        ),
    )


def test_reweighting_some_samples_keeps_the_splits() -> None:
    """Doubling a subset of weights moves leaf parameters, never the structure."""
    data = _mixed_samples(seed=6, count=600)
    weights = data.weights.copy()
    weights[::3] *= 2.0
    config = TreeConfig(em=EmConfig(seed=2))
    first = dt_learn(data, config)
    second = dt_learn(data.reweighted(weights), config)
    assert tree_structure(first) == tree_structure(second)
    point = {0: 1, 1: 1.5, 2: 0}
    assert dt_eval(first, point) != pytest.approx(dt_eval(second, point), rel=1e-6)


def test_sampling_follows_continuous_leaves() -> None:
    """Histogram of 10^5 draws matches the integrated density per branch."""
    tree = DensityTree(
        (D, X),
        Split(
            D.id,
            np.array([0.3, 0.7]),
            (
                Leaf({}, (X.id,), DiagonalGmm.single([-2.0], [1.0])),
                Leaf(
                    {},
                    (X.id,),
                    DiagonalGmm(
                        np.array([0.4, 0.6]),
                        np.array([[1.0], [4.0]]),
                        np.array([[0.5], [1.5]]),
                    ),
                ),
            ),
        ),
    )
    draws = dt_sample_batch(tree, 100000, np.random.default_rng(7))
    edges = np.linspace(-8.0, 8.0, 33)
    for d in range(2):
        chosen = draws[draws[:, 0] == d, 1]
        counts, _ = np.histogram(chosen, bins=edges)
        expected = []
        for low, high in zip(edges[:-1], edges[1:]):
            grid = np.linspace(low, high, 41)
            values = np.column_stack([np.full(grid.size, d), grid])
            expected.append(trapezoid(np.exp(log_density(tree, [0, 1], values)), grid))
        np.testing.assert_allclose(counts / 100000, expected, atol=0.004)
    single = dt_sample(tree, np.random.default_rng(8))
    assert set(single) == {D.id, X.id}
    assert isinstance(single[D.id], int)


def test_learning_recovers_a_known_tree() -> None:
    """Edge probabilities, means and variances come back within 10%."""
    known = _known_tree()
    values = dt_sample_batch(known, 10000, np.random.default_rng(9))
    data = WeightedSampleSet((D, X), values, np.ones(10000))
    learned = dt_learn(data, TreeConfig(components=1, em=EmConfig(seed=3)))
    assert isinstance(learned.root, Split)
    assert learned.root.variable == D.id
    np.testing.assert_allclose(learned.root.probabilities, [0.3, 0.7], rtol=0.1)
    for child, mean, variance in zip(learned.root.children, (-3.0, 3.0), (1.0, 0.25)):
        assert isinstance(child, Leaf)
        assert child.gmm.means[0, 0] == pytest.approx(mean, rel=0.1)
        assert child.gmm.variances[0, 0] == pytest.approx(variance, rel=0.1)


def test_splits_fit_better_than_one_leaf() -> None:
    """The learned tree's weighted log-likelihood beats a single-leaf fit."""
    data = _mixed_samples(seed=10, count=2000)
    tree = dt_learn(data, TreeConfig(em=EmConfig(seed=4)))
    one_leaf = TreeConfig(min_leaf_samples=data.size + 1, em=EmConfig(seed=4))
    flat = dt_learn(data, one_leaf)
    assert isinstance(flat.root, Leaf)

    def fit(learned: DensityTree) -> float:
        scores = log_density(learned, list(data.scope), data.values)
        return float(np.dot(data.weights, scores))

    assert fit(tree) >= fit(flat)
