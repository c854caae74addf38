"""Ancestral sampling, likelihood weighting and importance-sampling primitives."""
from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass
import logging
import math

import numpy as np

from .const import CLIP_FACTOR, DEFAULT_BINS
from .density_tree import WeightedSampleSet
from .exceptions import ContractError, DegeneracyError
from .network import (
    HybridNetwork,
    Variable,
    check_evidence,
    cpd_log_density,
    cpd_sample_batch,
)

_LOGGER = logging.getLogger(__name__)

PointwiseFunction = Callable[[np.ndarray], np.ndarray]


def derive_rng(seed: int, *task: int) -> np.random.Generator:
    """Independent stream for one task: SeedSequence([seed, *task])."""
    return np.random.default_rng(np.random.SeedSequence([seed, *task]))


def _ancestral(
    net: HybridNetwork,
    count: int,
    rng: np.random.Generator,
    evidence: Mapping[int, float],
) -> tuple[np.ndarray, np.ndarray]:
    """Sample top-down with evidence clamped; return values and log weights."""
    values = np.zeros((count, len(net.variables)))
    log_weights = np.zeros(count)
    column = {variable.id: index for index, variable in enumerate(net.variables)}
    clamped = 0
    for var_id in net.topological_order:
        cpd = net.cpd(var_id)
        parents = values[:, [column[parent.id] for parent in cpd.parents]]
        if var_id in evidence:
            values[:, column[var_id]] = evidence[var_id]
            log_weights += cpd_log_density(cpd, values[:, column[var_id]], parents)
            continue
        drawn, clamp_count = cpd_sample_batch(cpd, parents, rng)
        values[:, column[var_id]] = drawn
        clamped += clamp_count
    if clamped:
        _LOGGER.warning("Clamped %d CLG samples to their declared ranges", clamped)
    return values, log_weights


def prior_sample(
    net: HybridNetwork, count: int, rng: np.random.Generator
) -> WeightedSampleSet:
    """M unit-weight full assignments drawn top-down."""
    values, _ = _ancestral(net, count, rng, {})
    return WeightedSampleSet(tuple(net.variables), values, np.ones(count))


def likelihood_weighting(
    net: HybridNetwork,
    evidence: Mapping[int, float],
    count: int,
    rng: np.random.Generator,
) -> WeightedSampleSet:
    """Ancestral samples with evidence clamped, weighted by the evidence likelihood.

    Continuous evidence contributes a density, not a probability.
    """
    evidence = check_evidence(net, evidence)
    values, log_weights = _ancestral(net, count, rng, evidence)
    weights = np.exp(log_weights)
    if not weights.sum() > 0:
        _LOGGER.warning("Every likelihood weight is zero for %d samples", count)
    return WeightedSampleSet(tuple(net.variables), values, weights)


@dataclass(frozen=True, eq=False)
class Reweighted:
    """Result of one importance reweighting."""

    samples: WeightedSampleSet
    clipped: int
    ess: float


def effective_sample_size(weights: np.ndarray) -> float:
    """(sum w)^2 / sum w^2; zero for an all-zero weight vector."""
    weights = np.asarray(weights, dtype=float)
    squares = float(np.dot(weights, weights))
    return float(weights.sum()) ** 2 / squares if squares > 0 else 0.0


def importance_reweight(
    samples: WeightedSampleSet,
    target: PointwiseFunction,
    proposal: PointwiseFunction,
    log_domain: bool = False,
    clip_factor: float = CLIP_FACTOR,
) -> Reweighted:
    """Multiply weights by target/proposal at each sample, then clip outliers.

    ``target`` and ``proposal`` map the (M, d) value matrix to densities, or to
    log densities when ``log_domain`` is set. Weights come back scaled by one
    common constant; weights above ``clip_factor`` times the median positive
    weight are clipped and counted.
    """
    values = samples.values
    with np.errstate(divide="ignore"):
        log_target = target(values) if log_domain else np.log(target(values))
        log_proposal = proposal(values) if log_domain else np.log(proposal(values))
        log_old = np.log(samples.weights)
    vanished = np.flatnonzero(~np.isfinite(log_proposal) & (samples.weights > 0))
    if vanished.size:
        raise ContractError(f"proposal density is zero at sample {int(vanished[0])}")
    log_ratio = log_target - log_proposal + log_old
    finite = np.isfinite(log_ratio)
    if not finite.any():
        return Reweighted(samples.reweighted(np.zeros(samples.size)), 0, 0.0)
    cap = math.log(clip_factor) + float(np.median(log_ratio[finite]))
    clipped = int(np.count_nonzero(finite & (log_ratio > cap)))
    if clipped:
        log_ratio = np.minimum(log_ratio, cap)
        _LOGGER.debug("Clipped %d importance weights", clipped)
    weights = np.where(finite, np.exp(log_ratio - log_ratio[finite].max()), 0.0)
    ess = effective_sample_size(weights)
    return Reweighted(samples.reweighted(weights), clipped, ess)


def weighted_expectation(samples: WeightedSampleSet, f: PointwiseFunction) -> float:
    """Self-normalized estimate of the mean of f over weighted samples."""
    total = samples.total_weight
    if not total > 0:
        raise DegeneracyError("expectation over zero total weight")
    return float(np.dot(f(samples.values), samples.weights) / total)


def weighted_histogram(
    samples: WeightedSampleSet, variable: Variable, bins: int = DEFAULT_BINS
) -> np.ndarray:
    """Normalized weighted marginal of one variable.

    Discrete variables give a multinomial; continuous ones a histogram over
    ``bins`` equal-width bins of [L, U].
    """
    total = samples.total_weight
    if not total > 0:
        raise DegeneracyError(f"no weight to estimate {variable.name}")
    column = samples.column(variable.id)
    if variable.is_discrete:
        counts = np.bincount(
            column.astype(np.intp),
            weights=samples.weights,
            minlength=int(variable.cardinality or 0),
        )
    else:
        counts, _ = np.histogram(
            column,
            bins=bins,
            range=(variable.lower, variable.upper),
            weights=samples.weights,
        )
    return counts / counts.sum()  # type: ignore[no-any-return]
