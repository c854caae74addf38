"""Tests for approximate propagation."""
from __future__ import annotations

import numpy as np
import pytest
from scipy.stats import norm

from hybridprop.approx import (
    DIRECTION_CALIBRATE,
    DIRECTION_DOWN,
    DIRECTION_UP,
    KIND_MESSAGE,
    KIND_POTENTIAL,
    ApproxState,
    PropagationConfig,
    all_marginals,
    calibrate_initial,
    iterate,
    max_total_variation,
    point_mass,
    query_marginal,
    refine_message,
    refine_potential,
    run_approximate,
    target_factor_eval,
    target_log_factor,
)
from hybridprop.clique_tree import build_clique_tree
from hybridprop.density_tree import DensityTree, log_density
from hybridprop.evaluation import kl_error
from hybridprop.exact import exact_marginals
from hybridprop.exceptions import ConfigError, ContractError, DegenerateEvidenceError
from hybridprop.network import Cpd, HybridNetwork, TableBody, cpd_eval
from hybridprop.network_io import network_from_dict

from .common import chain_dict, discrete_variable, table_cpd

FAST = PropagationConfig(samples_per_clique=400, passes=1)


def _total_variation(first: np.ndarray, second: np.ndarray) -> float:
    return 0.5 * float(np.abs(first - second).sum())


def _six_variable_tree() -> HybridNetwork:
    """A -> B, A -> C, B -> D, B -> E, C -> F."""
    rows = {"0": [0.8, 0.2], "1": [0.3, 0.7]}
    return network_from_dict(
        {
            "name": "six",
            "variables": [discrete_variable(name) for name in "ABCDEF"],
            "cpds": [
                table_cpd("A", [], {"": [0.4, 0.6]}),
                table_cpd("B", ["A"], rows),
                table_cpd("C", ["A"], {"0": [0.6, 0.4], "1": [0.1, 0.9]}),
                table_cpd("D", ["B"], {"0": [0.9, 0.1], "1": [0.25, 0.75]}),
                table_cpd("E", ["B"], rows),
                table_cpd("F", ["C"], {"0": [0.7, 0.3], "1": [0.2, 0.8]}),
            ],
        }
    )


@pytest.mark.parametrize("net_name", ["chain", "six"])
def test_discrete_networks_match_exact(net_name: str, chain: HybridNetwork) -> None:
    """After two passes at M=3000 every marginal is close to exact."""
    net = chain if net_name == "chain" else _six_variable_tree()
    evidence = {len(net.variables) - 1: 1}
    exact = exact_marginals(net, evidence)
    errors = []
    for seed in range(5):
        config = PropagationConfig(samples_per_clique=3000, passes=2, seed=seed)
        state = run_approximate(net, evidence, config)
        approx = all_marginals(state)
        errors.append([_total_variation(approx[k], exact[k]) for k in exact])
    assert np.all(np.mean(errors, axis=0) < 0.03)


def test_same_seed_same_answer(hybrid: HybridNetwork) -> None:
    """Two runs with one seed agree bit for bit."""
    first = all_marginals(run_approximate(hybrid, {2: 1}, FAST))
    second = all_marginals(run_approximate(hybrid, {2: 1}, FAST))
    for var_id, marginal in first.items():
        np.testing.assert_array_equal(marginal, second[var_id])


def test_seed_changes_the_draws(chain: HybridNetwork) -> None:
    """Different seeds give different estimates."""
    first = all_marginals(run_approximate(chain, {2: 1}, FAST))
    other = PropagationConfig(samples_per_clique=400, passes=1, seed=11)
    second = all_marginals(run_approximate(chain, {2: 1}, other))
    assert max_total_variation(first, second) > 0


def test_continuous_evidence(hybrid: HybridNetwork) -> None:
    """Observing X gives the Bayes posterior of D and the softmax row of S."""
    state = run_approximate(hybrid, {1: 1.0}, PropagationConfig(passes=1))
    low = 0.3 * norm.pdf(1.0, loc=-2.0, scale=1.0)
    high = 0.7 * norm.pdf(1.0, loc=2.0, scale=np.sqrt(0.5))
    d = query_marginal(state, "D")
    assert d.probabilities[1] == pytest.approx(high / (low + high), abs=0.03)
    s = query_marginal(state, "S")
    expected = cpd_eval(hybrid.cpd(2), "high", [1.0])
    assert s.probabilities[1] == pytest.approx(expected, abs=0.03)


def test_continuous_marginal_histogram(hybrid: HybridNetwork) -> None:
    """Continuous queries come back as normalized histograms over the range."""
    state = run_approximate(hybrid, {}, PropagationConfig(passes=1, bins=40))
    y = query_marginal(state, "Y")
    assert y.edges is not None
    assert y.edges.shape == (41,)
    assert y.probabilities.sum() == pytest.approx(1.0, abs=1e-9)
    midpoints = 0.5 * (y.edges[:-1] + y.edges[1:])
    assert float(midpoints @ y.probabilities) == pytest.approx(2.0, abs=0.25)
    coarse = query_marginal(state, "Y", bins=10)
    assert coarse.probabilities.shape == (10,)


def test_observed_variable_is_a_point_mass(hybrid: HybridNetwork) -> None:
    """Evidence variables report their observed value."""
    state = run_approximate(hybrid, {2: 1, 4: 3.3}, FAST)
    np.testing.assert_array_equal(query_marginal(state, "S").probabilities, [0, 1])
    y = query_marginal(state, "Y", bins=20)
    assert y.probabilities[13] == 1.0
    top = point_mass(hybrid.variable("Y"), 10.0, bins=20)
    assert top.probabilities[-1] == 1.0
    with pytest.raises(ContractError):
        query_marginal(state, "Q")


def test_calibration_records_every_fit(chain: HybridNetwork) -> None:
    """Calibration fits each message once and each potential once."""
    tree = build_clique_tree(chain)
    state = calibrate_initial(chain, tree, {}, FAST)
    kinds = [(row.direction, row.kind) for row in state.diagnostics]
    assert kinds.count((DIRECTION_CALIBRATE, KIND_MESSAGE)) == 2
    assert kinds.count((DIRECTION_CALIBRATE, KIND_POTENTIAL)) == 2
    assert set(state.messages) == {(0, 1), (1, 0)}
    assert state.messages[(1, 0)].scope == frozenset({1})
    assert state.pass_counter == 0


def test_iteration_sweeps_both_ways(hybrid: HybridNetwork) -> None:
    """Every pass visits all cliques going up and again coming down."""
    config = PropagationConfig(
        samples_per_clique=200, passes=2, convergence_threshold=0.0
    )
    seen: list[tuple[int, str]] = []

    def observer(state: ApproxState, pass_index: int, direction: str) -> None:
        seen.append((pass_index, direction))

    state = run_approximate(hybrid, {}, config, observer=observer)
    assert seen == [
        (1, DIRECTION_UP),
        (1, DIRECTION_DOWN),
        (2, DIRECTION_UP),
        (2, DIRECTION_DOWN),
    ]
    assert state.pass_counter == 2
    cliques = len(state.tree.cliques)
    for pass_index in (1, 2):
        for direction in (DIRECTION_UP, DIRECTION_DOWN):
            rows = [
                row
                for row in state.diagnostics
                if row.pass_index == pass_index
                and row.direction == direction
                and row.kind == KIND_POTENTIAL
            ]
            expected = cliques - 1 if direction == DIRECTION_UP else cliques
            assert len(rows) == expected


def test_zero_passes_leave_the_state(chain: HybridNetwork) -> None:
    """With no passes the calibrated state is returned as is."""
    tree = build_clique_tree(chain)
    state = calibrate_initial(chain, tree, {2: 0}, FAST)
    before = all_marginals(state)
    iterate(state, passes=0)
    after = all_marginals(state)
    assert max_total_variation(before, after) == 0.0
    assert state.pass_counter == 0


def test_target_factor(hybrid: HybridNetwork) -> None:
    """Targets multiply assigned CPDs and a uniform term for unassigned ranges."""
    state = calibrate_initial(hybrid, build_clique_tree(hybrid), {}, FAST)
    value = target_factor_eval(state, 1, {1: 0.5, 2: 1}, exclude=0)
    assert value == pytest.approx(cpd_eval(hybrid.cpd(2), 1, [0.5]) / 20.0)
    outside = target_factor_eval(state, 1, {1: 12.0, 2: 1}, exclude=0)
    assert outside == 0.0


def test_fully_observed_clique(chain: HybridNetwork) -> None:
    """A clique with every variable observed keeps a constant potential."""
    state = run_approximate(chain, {0: 1, 1: 0}, FAST)
    assert state.potentials[0].scope == frozenset()
    exact = exact_marginals(chain, {0: 1, 1: 0})
    approx = query_marginal(state, "C").probabilities
    assert _total_variation(approx, exact[2]) < 0.06


def test_impossible_evidence_degenerates() -> None:
    """Evidence the network cannot produce collapses every weight."""
    data = chain_dict()
    data["cpds"][0]["params"]["rows"][""] = [1.0, 0.0]
    net = network_from_dict(data)
    with pytest.raises(DegenerateEvidenceError):
        run_approximate(net, {0: 1}, FAST)


def test_config_ranges() -> None:
    """Nonsense settings are refused; schedules repeat their last entry."""
    with pytest.raises(ConfigError):
        PropagationConfig(samples_per_clique=0)
    with pytest.raises(ConfigError):
        PropagationConfig(passes=-1)
    with pytest.raises(ConfigError):
        PropagationConfig(sample_schedule=(100, 0))
    schedule = PropagationConfig(sample_schedule=(100, 300))
    assert [schedule.samples_for_pass(i) for i in range(4)] == [100, 300, 300, 300]
    assert FAST.samples_for_pass(3) == 400


def test_max_total_variation() -> None:
    """Largest half-L1 distance over shared keys."""
    before = {0: np.array([0.5, 0.5]), 1: np.array([1.0, 0.0])}
    after = {0: np.array([0.4, 0.6]), 1: np.array([0.0, 1.0])}
    assert max_total_variation(before, after) == pytest.approx(1.0)
    assert max_total_variation({}, {}) == 0.0


def _mean_kl(state: ApproxState, exact: dict[int, np.ndarray]) -> float:
    approx = all_marginals(state)
    return float(np.mean([kl_error(exact[k], approx[k]) for k in exact]))


def test_refinement_weights_without_a_return_message(chain: HybridNetwork) -> None:
    """With a constant incoming message both refits weight samples alike."""
    tree = build_clique_tree(chain)
    state = calibrate_initial(chain, tree, {2: 1}, FAST)
    i, j = tree.upward_schedule()[0]
    state.messages[(j, i)] = DensityTree.constant()
    proposal = state.potentials[i]
    refine_potential(state, i)
    samples = state.samples[i]
    log_q = log_density(proposal, proposal.columns, samples.values)
    expected = samples.weights / samples.weights.sum()
    for exclude in (None, j):
        ratio = np.exp(target_log_factor(state, i, samples.values, exclude) - log_q)
        np.testing.assert_allclose(expected, ratio / ratio.sum(), rtol=1e-9)
    message = refine_message(state, i, j)
    assert message.scope == state.free_sepset(i, j)
    assert state.messages[(i, j)] is message
    assert [(row.kind, row.target) for row in state.diagnostics[-2:]] == [
        (KIND_POTENTIAL, None),
        (KIND_MESSAGE, j),
    ]


def test_scaled_cpd_gives_the_same_marginals(chain: HybridNetwork) -> None:
    """Multiplying a CPD by a constant cancels in the self-normalized weights."""
    b = chain.variable("B")
    body = chain.cpd(b.id).body
    assert isinstance(body, TableBody)
    scaled = Cpd(b, chain.cpd(b.id).parents, TableBody(body.probabilities * 4.0))
    scaled_net = HybridNetwork(
        chain.variables, (chain.cpd(0), scaled, chain.cpd(2)), name="scaled"
    )
    first = all_marginals(run_approximate(chain, {2: 1}, FAST))
    second = all_marginals(run_approximate(scaled_net, {2: 1}, FAST))
    for var_id, marginal in first.items():
        np.testing.assert_allclose(second[var_id], marginal, rtol=1e-9, atol=1e-12)


def test_refinement_beats_calibration() -> None:
    """Iterating after calibration moves discrete marginals closer to exact."""
    data = chain_dict()
    data["cpds"][0]["params"]["rows"][""] = [0.98, 0.02]
    data["cpds"][1]["params"]["rows"] = {"0": [0.95, 0.05], "1": [0.05, 0.95]}
    data["cpds"][2]["params"]["rows"] = {"0": [0.95, 0.05], "1": [0.05, 0.95]}
    net = network_from_dict(data)
    exact = exact_marginals(net, {2: 1})
    tree = build_clique_tree(net)
    calibrated, refined = [], []
    for seed in range(5):
        config = PropagationConfig(samples_per_clique=200, passes=2, seed=seed)
        state = calibrate_initial(net, tree, {2: 1}, config)
        calibrated.append(_mean_kl(state, exact))
        refined.append(_mean_kl(iterate(state), exact))
    assert np.mean(refined) < np.mean(calibrated)


@pytest.mark.slow
def test_discrete_error_falls_with_samples() -> None:
    """Mean KL to exact drops strictly from 10^2 to 10^3 to 10^4 samples."""
    net = _six_variable_tree()
    exact = exact_marginals(net, {5: 1})
    means = []
    for count in (100, 1000, 10000):
        errors = [
            _mean_kl(
                run_approximate(
                    net,
                    {5: 1},
                    PropagationConfig(samples_per_clique=count, passes=1, seed=seed),
                ),
                exact,
            )
            for seed in range(5)
        ]
        means.append(float(np.mean(errors)))
    assert means[0] > means[1] > means[2]
