"""Tests for sampling and importance reweighting."""
from __future__ import annotations

import logging

import numpy as np
import pytest
from scipy.stats import norm

from hybridprop.density_tree import WeightedSampleSet
from hybridprop.exceptions import ContractError, DegeneracyError
from hybridprop.network import HybridNetwork, Variable
from hybridprop.network_io import network_from_dict
from hybridprop.sampler import (
    derive_rng,
    effective_sample_size,
    importance_reweight,
    likelihood_weighting,
    prior_sample,
    weighted_expectation,
    weighted_histogram,
)

from .common import continuous_variable

Z = Variable.continuous(0, "Z", -10.0, 10.0)


def test_derived_streams() -> None:
    """Same task gives the same stream; different tasks differ."""
    first = derive_rng(7, 1, 2).random(4)
    np.testing.assert_array_equal(first, derive_rng(7, 1, 2).random(4))
    assert not np.array_equal(first, derive_rng(7, 2, 1).random(4))
    assert not np.array_equal(first, derive_rng(8, 1, 2).random(4))


def test_prior_sample_frequencies(chain: HybridNetwork) -> None:
    """Unit-weight draws follow the prior."""
    samples = prior_sample(chain, 20000, derive_rng(0))
    np.testing.assert_array_equal(samples.weights, 1.0)
    assert samples.column(2).mean() == pytest.approx(0.528, abs=0.015)


def test_likelihood_weighting_discrete(chain: HybridNetwork) -> None:
    """Leaf evidence reweights the root."""
    samples = likelihood_weighting(chain, {2: 1}, 20000, derive_rng(1))
    assert np.all(samples.column(2) == 1)
    posterior = weighted_histogram(samples, chain.variable("A"))
    assert posterior[1] == pytest.approx(0.312 / 0.528, abs=0.015)


def test_likelihood_weighting_continuous(hybrid: HybridNetwork) -> None:
    """Continuous evidence weights by its density."""
    samples = likelihood_weighting(hybrid, {1: 1.0}, 20000, derive_rng(2))
    low = 0.3 * norm.pdf(1.0, loc=-2.0, scale=1.0)
    high = 0.7 * norm.pdf(1.0, loc=2.0, scale=np.sqrt(0.5))
    posterior = weighted_histogram(samples, hybrid.variable("D"))
    assert posterior[1] == pytest.approx(high / (low + high), abs=0.01)
    d = samples.column(0)
    expected = np.where(
        d == 1, norm.pdf(1.0, 2.0, np.sqrt(0.5)), norm.pdf(1.0, -2.0, 1.0)
    )
    np.testing.assert_allclose(samples.weights, expected, rtol=1e-12)


def test_clamped_draws_warn(caplog: pytest.LogCaptureFixture) -> None:
    """Draws pushed onto the range boundary are reported."""
    net = network_from_dict(
        {
            "variables": [continuous_variable("X", -1.0, 1.0)],
            "cpds": [
                {
                    "child": "X",
                    "kind": "clg",
                    "params": {"": {"intercept": 50.0, "variance": 1.0}},
                }
            ],
        }
    )
    with caplog.at_level(logging.WARNING, logger="hybridprop.sampler"):
        samples = prior_sample(net, 10, derive_rng(3))
    assert np.all(samples.values == 1.0)
    assert "Clamped 10 CLG samples" in caplog.text


def test_effective_sample_size() -> None:
    """ESS ranges from one to the sample count."""
    assert effective_sample_size(np.ones(40)) == pytest.approx(40.0)
    assert effective_sample_size(np.array([0.0, 3.0, 0.0])) == pytest.approx(1.0)
    assert effective_sample_size(np.zeros(5)) == 0.0


def test_reweighting_corrects_the_proposal() -> None:
    """Weighted draws from a wide proposal estimate the narrow target."""
    rng = derive_rng(4)
    draws = rng.normal(0.0, 2.0, size=(50000, 1))
    samples = WeightedSampleSet((Z,), draws, np.ones(50000))
    result = importance_reweight(
        samples,
        target=lambda rows: norm.pdf(rows[:, 0]),
        proposal=lambda rows: norm.pdf(rows[:, 0], scale=2.0),
    )
    second_moment = weighted_expectation(result.samples, lambda rows: rows[:, 0] ** 2)
    assert second_moment == pytest.approx(1.0, abs=0.05)
    assert 0 < result.ess < 50000


def test_log_domain_matches_linear() -> None:
    """Log-domain callbacks give the same weights."""
    draws = derive_rng(5).normal(size=(100, 1))
    samples = WeightedSampleSet((Z,), draws, np.ones(100))
    linear = importance_reweight(
        samples,
        target=lambda rows: norm.pdf(rows[:, 0], loc=0.5),
        proposal=lambda rows: norm.pdf(rows[:, 0]),
    )
    logged = importance_reweight(
        samples,
        target=lambda rows: norm.logpdf(rows[:, 0], loc=0.5),
        proposal=lambda rows: norm.logpdf(rows[:, 0]),
        log_domain=True,
    )
    np.testing.assert_allclose(logged.samples.weights, linear.samples.weights)


def test_outliers_are_clipped() -> None:
    """Weights above the clip factor times the median are capped and counted."""
    samples = WeightedSampleSet((Z,), np.zeros((5, 1)), np.ones(5))
    result = importance_reweight(
        samples,
        target=lambda rows: np.array([1.0, 1.0, 1.0, 1.0, 1000.0]),
        proposal=lambda rows: np.ones(rows.shape[0]),
        clip_factor=10.0,
    )
    assert result.clipped == 1
    weights = result.samples.weights
    assert weights[4] == pytest.approx(10.0 * weights[0])


def test_zero_proposal_is_a_contract_error() -> None:
    """The proposal must cover every weighted sample."""
    samples = WeightedSampleSet((Z,), np.zeros((3, 1)), np.ones(3))
    with pytest.raises(ContractError):
        importance_reweight(
            samples,
            target=lambda rows: np.ones(3),
            proposal=lambda rows: np.array([1.0, 0.0, 1.0]),
        )


def test_vanished_target_gives_zero_weights() -> None:
    """A target that is zero everywhere leaves no weight."""
    samples = WeightedSampleSet((Z,), np.zeros((3, 1)), np.ones(3))
    result = importance_reweight(
        samples,
        target=lambda rows: np.zeros(3),
        proposal=lambda rows: np.ones(3),
    )
    assert result.ess == 0.0
    with pytest.raises(DegeneracyError):
        weighted_expectation(result.samples, lambda rows: rows[:, 0])
    with pytest.raises(DegeneracyError):
        weighted_histogram(result.samples, Z)


def test_continuous_histogram() -> None:
    """Continuous histograms use equal bins over the range."""
    values = np.array([[-9.5], [-9.5], [9.5], [0.1]])
    samples = WeightedSampleSet((Z,), values, np.array([1.0, 1.0, 2.0, 0.0]))
    histogram = weighted_histogram(samples, Z, bins=4)
    np.testing.assert_allclose(histogram, [0.5, 0.0, 0.0, 0.5])


def test_huge_outlier_is_still_clipped() -> None:
    """An outlier far beyond float range is capped without zeroing the rest."""
    samples = WeightedSampleSet((Z,), np.zeros((5, 1)), np.ones(5))
    result = importance_reweight(
        samples,
        target=lambda rows: np.zeros(rows.shape[0]),
        proposal=lambda rows: np.array([0.0, 0.0, 0.0, 0.0, -800.0]),
        log_domain=True,
    )
    assert result.clipped == 1
    weights = result.samples.weights
    np.testing.assert_allclose(weights[:4] / weights[4], 1e-6, rtol=1e-9)
    assert result.ess > 1.0


U01 = Variable.continuous(0, "U", 0.0, 1.0)


def _linear_density_mean(count: int, seed: int) -> float:
    draws = derive_rng(seed).random((count, 1))
    samples = WeightedSampleSet((U01,), draws, np.ones(count))
    result = importance_reweight(
        samples,
        target=lambda rows: 2.0 * rows[:, 0],
        proposal=lambda rows: np.ones(rows.shape[0]),
    )
    return weighted_expectation(result.samples, lambda rows: rows[:, 0])


def test_uniform_proposal_for_a_linear_density() -> None:
    """Draws from U[0, 1] weighted by 2x estimate the mean 2/3."""
    assert _linear_density_mean(100000, 20) == pytest.approx(2 / 3, abs=0.01)


def test_error_shrinks_with_more_samples() -> None:
    """RMSE over 30 seeded trials is lower at 10^4 samples than at 10^2."""

    def rmse(count: int) -> float:
        errors = [_linear_density_mean(count, seed) - 2 / 3 for seed in range(30)]
        return float(np.sqrt(np.mean(np.square(errors))))

    assert rmse(10000) < rmse(100)


def test_expectation_ignores_weight_scale() -> None:
    """Multiplying every weight by a constant leaves the estimate alone."""
    rng = derive_rng(21)
    samples = WeightedSampleSet((Z,), rng.normal(size=(500, 1)), rng.random(500))
    scaled = samples.reweighted(samples.weights * 37.5)

    def square(rows: np.ndarray) -> np.ndarray:
        return rows[:, 0] ** 2  # type: ignore[no-any-return]

    assert weighted_expectation(scaled, square) == pytest.approx(
        weighted_expectation(samples, square), abs=1e-12
    )


def test_fully_observed_weights_are_the_joint(chain: HybridNetwork) -> None:
    """With every variable observed each weight is P(evidence)."""
    samples = likelihood_weighting(chain, {0: 1, 1: 0, 2: 1}, 50, derive_rng(22))
    np.testing.assert_allclose(samples.weights, 0.4 * 0.2 * 0.3, rtol=1e-12)


def test_root_evidence_weights_are_equal(chain: HybridNetwork) -> None:
    """Observing only the root weights every sample by its prior."""
    samples = likelihood_weighting(chain, {0: 1}, 2000, derive_rng(23))
    np.testing.assert_allclose(samples.weights, 0.4, rtol=1e-12)
    posterior = weighted_histogram(samples, chain.variable("B"))
    assert posterior[1] == pytest.approx(0.8, abs=0.03)
