"""Diagonal-covariance Gaussian mixtures fit by regularized, weighted EM."""
from __future__ import annotations

from collections.abc import Iterator, Sequence
from dataclasses import dataclass
import logging
import math

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from .const import (
    COMPONENT_DEATH_WEIGHT,
    DEFAULT_EM_ITERATIONS,
    DEFAULT_EM_TOLERANCE,
    DEFAULT_LAMBDA,
    DEFAULT_SEED,
    MIN_VARIANCE,
)
from .exceptions import ConfigError, ContractError, LearningError

_LOGGER = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class DiagonalGmm:
    """Mixture of K Gaussians with per-dimension variances.

    ``weights`` has shape (K,), ``means`` and ``variances`` shape (K, d). A
    mixture with d = 0 is the constant density 1.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    @classmethod
    def empty(cls) -> DiagonalGmm:
        """The zero-dimensional mixture."""
        return cls(np.ones(1), np.zeros((1, 0)), np.ones((1, 0)))

    @classmethod
    def single(cls, mean: Sequence[float], variance: Sequence[float]) -> DiagonalGmm:
        """One component with the given mean and variance vectors."""
        return cls(
            np.ones(1),
            np.asarray(mean, dtype=float).reshape(1, -1),
            np.asarray(variance, dtype=float).reshape(1, -1),
        )

    @classmethod
    def mixture(cls, parts: Sequence[tuple[float, DiagonalGmm]]) -> DiagonalGmm:
        """Concatenate weighted mixtures of equal dimension into one."""
        parts = [(weight, gmm) for weight, gmm in parts if weight > 0]
        if not parts:
            raise ContractError("mixture of nothing")
        total = sum(weight for weight, _ in parts)
        weights = np.concatenate(
            [weight / total * gmm.weights for weight, gmm in parts]
        )
        means = np.concatenate([gmm.means for _, gmm in parts])
        variances = np.concatenate([gmm.variances for _, gmm in parts])
        if means.shape[1] == 0:
            return cls.empty()
        return cls(weights, means, variances)

    @property
    def components(self) -> int:
        """K."""
        return int(self.weights.shape[0])

    @property
    def dims(self) -> int:
        """d."""
        return int(self.means.shape[1])

    def component_log_pdf(self, points: np.ndarray) -> np.ndarray:
        """log pi_k + log N(y | mean_k, diag var_k) with shape (N, K)."""
        points = np.asarray(points, dtype=float)
        if points.ndim < 2:
            points = points.reshape(-1, self.dims)
        with np.errstate(divide="ignore"):
            log_weights = np.log(self.weights)
        if self.dims == 0:
            return np.tile(log_weights, (points.shape[0], 1))
        diff = points[:, None, :] - self.means[None, :, :]
        log_norm = -0.5 * (_LOG_2PI + np.log(self.variances)).sum(axis=1)
        quad = -0.5 * (diff**2 / self.variances[None, :, :]).sum(axis=2)
        log_parts = log_weights[None, :] + log_norm[None, :] + quad
        return log_parts  # type: ignore[no-any-return]

    def log_pdf(self, points: np.ndarray) -> np.ndarray:
        """Log density at each row of ``points``."""
        log_parts = self.component_log_pdf(points)
        return logsumexp(log_parts, axis=1)  # type: ignore[no-any-return]

    def pdf(self, points: np.ndarray) -> np.ndarray:
        """Density at each row of ``points``."""
        return np.exp(self.log_pdf(points))  # type: ignore[no-any-return]

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``count`` points: a component by weight, then each dimension."""
        probabilities = self.weights / self.weights.sum()
        picked = rng.choice(self.components, size=count, p=probabilities)
        noise = rng.standard_normal((count, self.dims))
        spread = np.sqrt(self.variances[picked])
        return self.means[picked] + spread * noise  # type: ignore[no-any-return]

    def marginal(self, dims: Sequence[int]) -> DiagonalGmm:
        """Mixture over the kept dimensions; dropped ones integrate to one."""
        dims = list(dims)
        if not dims:
            return DiagonalGmm.empty()
        return DiagonalGmm(
            self.weights.copy(), self.means[:, dims], self.variances[:, dims]
        )

    def condition(
        self, dims: Sequence[int], values: Sequence[float]
    ) -> tuple[DiagonalGmm, float]:
        """Slice at ``values`` for ``dims``.

        Returns the normalized mixture over the remaining dimensions and the log
        density of the observed values; ``-inf`` when it vanishes.
        """
        dims = list(dims)
        rest = [dim for dim in range(self.dims) if dim not in dims]
        if not dims:
            return self, 0.0
        observed = self.marginal(dims)
        point = np.asarray(values, dtype=float).reshape(1, -1)
        log_parts = observed.component_log_pdf(point)[0]
        log_mass = float(logsumexp(log_parts))
        if not np.isfinite(log_mass):
            return self.marginal(rest), -math.inf
        remaining = DiagonalGmm(
            np.exp(log_parts - log_mass), self.means[:, rest], self.variances[:, rest]
        )
        if not rest:
            return DiagonalGmm.empty(), log_mass
        return remaining, log_mass

    def bin_masses(self, dim: int, edges: np.ndarray) -> np.ndarray:
        """Mass of each bin of one dimension; tails go to the boundary bins."""
        edges = np.asarray(edges, dtype=float)
        scale = np.sqrt(self.variances[:, dim])
        cdf = norm.cdf(
            edges[None, :], loc=self.means[:, dim, None], scale=scale[:, None]
        )
        cdf = self.weights @ cdf / self.weights.sum()
        masses = np.diff(cdf)
        masses[0] += cdf[0]
        masses[-1] += 1.0 - cdf[-1]
        return masses  # type: ignore[no-any-return]


@dataclass(frozen=True)
class EmConfig:
    """Regularized EM settings."""

    lam: float = DEFAULT_LAMBDA
    max_iterations: int = DEFAULT_EM_ITERATIONS
    tolerance: float = DEFAULT_EM_TOLERANCE
    seed: int = DEFAULT_SEED

    def __post_init__(self) -> None:
        """Reject settings the update rule cannot use."""
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not self.tolerance > 0:
            raise ConfigError(f"tolerance must be > 0, got {self.tolerance}")


def regularized_error(
    model: DiagonalGmm, points: np.ndarray, weights: np.ndarray, lam: float
) -> float:
    """Weighted negative log-likelihood plus lam * sum_k sum_i 1/(2 var_ki)."""
    weights = np.asarray(weights, dtype=float)
    log_likelihood = model.log_pdf(points)
    positive = weights > 0
    nll = -float(np.dot(weights[positive], log_likelihood[positive]))
    return nll + lam * float((0.5 / model.variances).sum())


def _weighted_moments(
    points: np.ndarray, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    total = weights.sum()
    mean = weights @ points / total
    variance = weights @ (points - mean) ** 2 / total
    return mean, np.maximum(variance, MIN_VARIANCE)


def _initial_model(
    points: np.ndarray, weights: np.ndarray, components: int, rng: np.random.Generator
) -> DiagonalGmm:
    """Means drawn by weight without replacement, then global variances."""
    positive = np.flatnonzero(weights > 0)
    count = min(components, positive.size)
    probabilities = weights[positive] / weights[positive].sum()
    chosen = rng.choice(positive, size=count, replace=False, p=probabilities)
    _, variance = _weighted_moments(points, weights)
    return DiagonalGmm(
        np.full(count, 1.0 / count),
        points[np.sort(chosen)].copy(),
        np.tile(variance, (count, 1)),
    )


def _m_step(
    points: np.ndarray, weights: np.ndarray, model: DiagonalGmm, lam: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    log_parts = model.component_log_pdf(points)
    responsibilities = np.exp(log_parts - logsumexp(log_parts, axis=1, keepdims=True))
    responsibilities *= weights[:, None]
    mass = responsibilities.sum(axis=0)
    safe = np.where(mass > 0, mass, 1.0)
    means = responsibilities.T @ points / safe[:, None]
    squared = (points[:, None, :] - means[None]) ** 2
    scatter = np.einsum("mk,mkd->kd", responsibilities, squared)
    variances = np.maximum((scatter + lam) / safe[:, None], MIN_VARIANCE)
    return mass / mass.sum(), means, variances


def em_steps(
    points: np.ndarray,
    weights: np.ndarray,
    components: int,
    config: EmConfig,
    rng: np.random.Generator | None = None,
) -> Iterator[DiagonalGmm]:
    """Yield the model after every EM iteration until the stopping rule fires.

    Iteration stops after ``config.max_iterations`` or once the regularized error
    decreases by less than ``config.tolerance`` per unit of sample weight.
    """
    points = np.asarray(points, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if points.ndim != 2 or points.shape[0] != weights.shape[0] or points.shape[0] == 0:
        raise ContractError("points must be an (M, d) array with M matching weights")
    if components < 1:
        raise ContractError(f"need at least one component, got {components}")
    total = float(weights.sum())
    if not total > 0 or np.any(weights < 0):
        raise LearningError("EM needs nonnegative weights with positive total")
    if points.shape[1] == 0:
        yield DiagonalGmm.empty()
        return

    rng = rng if rng is not None else np.random.default_rng(config.seed)
    model = _initial_model(points, weights, components, rng)
    reseeded = np.zeros(model.components, dtype=bool)
    error = regularized_error(model, points, weights, config.lam)
    for iteration in range(config.max_iterations):
        mixing, means, variances = _m_step(points, weights, model, config.lam)
        dead = mixing < COMPONENT_DEATH_WEIGHT
        if dead.any():
            drop = dead & reseeded
            revive = np.flatnonzero(dead & ~reseeded)
            if revive.size:
                residual = model.log_pdf(points)
                residual[weights <= 0] = np.inf
                _, global_variance = _weighted_moments(points, weights)
                worst = np.argsort(residual, kind="stable")[: revive.size]
                means[revive] = points[worst]
                variances[revive] = np.maximum(global_variance, config.lam / total)
                mixing[revive] = 1.0 / mixing.size
                reseeded[revive] = True
                _LOGGER.debug("Reseeded %d dead mixture components", revive.size)
            keep = ~drop
            mixing, means, variances, reseeded = (
                mixing[keep],
                means[keep],
                variances[keep],
                reseeded[keep],
            )
            mixing = mixing / mixing.sum()
        model = DiagonalGmm(mixing, means, variances)
        previous, error = error, regularized_error(model, points, weights, config.lam)
        _LOGGER.debug("EM iteration %d: error %.6g", iteration, error)
        yield model
        if not dead.any() and previous - error < config.tolerance * total:
            return


def em_fit(
    points: np.ndarray,
    weights: np.ndarray,
    components: int,
    config: EmConfig | None = None,
    rng: np.random.Generator | None = None,
) -> DiagonalGmm:
    """Fit a diagonal GMM to weighted points with the regularized variance update."""
    config = config or EmConfig()
    points = np.asarray(points, dtype=float)
    weights = np.asarray(weights, dtype=float)
    model = DiagonalGmm.empty()
    for model in em_steps(points, weights, components, config, rng):
        pass
    if config.lam == 0 and points.shape[1] > 0:
        distinct = np.unique(points[weights > 0], axis=0).shape[0]
        if components > distinct:
            _LOGGER.warning(
                "Fitting %d components to %d distinct points without regularization",
                components,
                distinct,
            )
    return model
