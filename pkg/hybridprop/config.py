"""Schemas for configuration that enters from outside (command-line flags)."""
from __future__ import annotations

from collections.abc import Mapping
from typing import Any

import voluptuous as vol

from .approx import PropagationConfig
from .benchmarks import BUILDERS
from .const import (
    CLIP_FACTOR,
    CONF_BINS,
    CONF_COMPONENTS,
    CONF_EM_ITERATIONS,
    CONF_EM_TOLERANCE,
    CONF_KIND,
    CONF_LAMBDA,
    CONF_LAMBDA_SWEEP,
    CONF_LW_SAMPLES,
    CONF_MAX_CONTINUOUS,
    CONF_MIN_LEAF,
    CONF_NETWORK,
    CONF_PASSES,
    CONF_PSEUDOCOUNT,
    CONF_SAMPLE_SWEEP,
    CONF_SAMPLES,
    CONF_SCENARIO,
    CONF_SCHEDULE,
    CONF_SEED,
    CONF_SEEDS,
    DEFAULT_BINS,
    DEFAULT_COMPONENTS,
    DEFAULT_EM_ITERATIONS,
    DEFAULT_EM_TOLERANCE,
    DEFAULT_LAMBDA,
    DEFAULT_LAMBDA_SWEEP,
    DEFAULT_MAX_CONTINUOUS_PER_CLIQUE,
    DEFAULT_MIN_LEAF_SAMPLES,
    DEFAULT_PASSES,
    DEFAULT_PSEUDOCOUNT,
    DEFAULT_SAMPLE_SWEEP,
    DEFAULT_SAMPLES,
    DEFAULT_SEED,
    DEFAULT_SEEDS,
    EXPERIMENT_KINDS,
)
from .density_tree import TreeConfig
from .evaluation import DiscretizationSpec, ExperimentConfig
from .exceptions import ConfigError
from .gmm import EmConfig


def comma_list(kind: type) -> vol.All:
    """Validator for "a,b,c" strings (or sequences) of one numeric type."""

    def parse(value: Any) -> tuple[Any, ...]:
        if isinstance(value, str):
            value = [item for item in value.split(",") if item.strip()]
        if not value:
            raise vol.Invalid("expected at least one value")
        return tuple(kind(item) for item in value)

    return vol.All(parse, vol.Length(min=1))


POSITIVE_INT = vol.All(vol.Coerce(int), vol.Range(min=1))
NONNEGATIVE_INT = vol.All(vol.Coerce(int), vol.Range(min=0))
SEED = vol.All(vol.Coerce(int), vol.Range(min=0))

PROPAGATION_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_SAMPLES, default=DEFAULT_SAMPLES): POSITIVE_INT,
        vol.Optional(CONF_PASSES, default=DEFAULT_PASSES): NONNEGATIVE_INT,
        vol.Optional(CONF_LAMBDA, default=DEFAULT_LAMBDA): vol.All(
            vol.Coerce(float), vol.Range(min=0)
        ),
        vol.Optional(CONF_COMPONENTS, default=DEFAULT_COMPONENTS): POSITIVE_INT,
        vol.Optional(CONF_MIN_LEAF, default=DEFAULT_MIN_LEAF_SAMPLES): POSITIVE_INT,
        vol.Optional(CONF_PSEUDOCOUNT, default=DEFAULT_PSEUDOCOUNT): vol.All(
            vol.Coerce(float), vol.Range(min=0)
        ),
        vol.Optional(CONF_EM_ITERATIONS, default=DEFAULT_EM_ITERATIONS): POSITIVE_INT,
        vol.Optional(CONF_EM_TOLERANCE, default=DEFAULT_EM_TOLERANCE): vol.All(
            vol.Coerce(float), vol.Range(min=0, min_included=False)
        ),
        vol.Optional(CONF_SCHEDULE, default=None): vol.Any(None, comma_list(int)),
        vol.Optional(CONF_SEED, default=DEFAULT_SEED): SEED,
        vol.Optional(CONF_BINS, default=DEFAULT_BINS): vol.All(
            vol.Coerce(int), vol.Range(min=2)
        ),
        vol.Optional(
            CONF_MAX_CONTINUOUS, default=DEFAULT_MAX_CONTINUOUS_PER_CLIQUE
        ): POSITIVE_INT,
    },
    extra=vol.REMOVE_EXTRA,
)

EXPERIMENT_SCHEMA = PROPAGATION_SCHEMA.extend(
    {
        vol.Required(CONF_KIND): vol.In(EXPERIMENT_KINDS),
        vol.Required(CONF_NETWORK): vol.In(sorted(BUILDERS)),
        vol.Optional(CONF_SCENARIO, default=None): vol.Any(None, str),
        vol.Optional(CONF_SEEDS, default=DEFAULT_SEEDS): comma_list(int),
        vol.Optional(CONF_SAMPLE_SWEEP, default=DEFAULT_SAMPLE_SWEEP): comma_list(int),
        vol.Optional(CONF_LAMBDA_SWEEP, default=DEFAULT_LAMBDA_SWEEP): comma_list(
            float
        ),
        vol.Optional(CONF_LW_SAMPLES, default=None): vol.Any(None, POSITIVE_INT),
    },
    extra=vol.REMOVE_EXTRA,
)


def validated(schema: vol.Schema, options: Mapping[str, Any]) -> dict[str, Any]:
    """Apply a schema; failures become ConfigError naming the offending key."""
    try:
        return schema(dict(options))  # type: ignore[no-any-return]
    except vol.Invalid as err:
        key = ".".join(str(item) for item in err.path) or "<options>"
        raise ConfigError(f"{key}: {err.msg}") from err


def _propagation(data: Mapping[str, Any]) -> PropagationConfig:
    em = EmConfig(
        lam=data[CONF_LAMBDA],
        max_iterations=data[CONF_EM_ITERATIONS],
        tolerance=data[CONF_EM_TOLERANCE],
        seed=data[CONF_SEED],
    )
    tree = TreeConfig(
        min_leaf_samples=data[CONF_MIN_LEAF],
        components=data[CONF_COMPONENTS],
        pseudocount=data[CONF_PSEUDOCOUNT],
        em=em,
    )
    return PropagationConfig(
        samples_per_clique=data[CONF_SAMPLES],
        passes=data[CONF_PASSES],
        tree=tree,
        seed=data[CONF_SEED],
        sample_schedule=tuple(data[CONF_SCHEDULE] or ()),
        bins=data[CONF_BINS],
        clip_factor=CLIP_FACTOR,
        max_continuous_per_clique=data[CONF_MAX_CONTINUOUS],
    )


def propagation_config(options: Mapping[str, Any]) -> PropagationConfig:
    """Engine configuration from flag values."""
    return _propagation(validated(PROPAGATION_SCHEMA, options))


def experiment_config(options: Mapping[str, Any]) -> ExperimentConfig:
    """Experiment configuration from flag values."""
    data = validated(EXPERIMENT_SCHEMA, options)
    return ExperimentConfig(
        kind=data[CONF_KIND],
        network=data[CONF_NETWORK],
        scenario=data[CONF_SCENARIO],
        seeds=data[CONF_SEEDS],
        propagation=_propagation(data),
        sample_sweep=data[CONF_SAMPLE_SWEEP],
        lambda_sweep=data[CONF_LAMBDA_SWEEP],
        lw_samples=data[CONF_LW_SAMPLES],
        discretization=DiscretizationSpec(data[CONF_BINS]),
    )
