"""Fixtures for hybridprop tests."""
from __future__ import annotations

import hypothesis
import numpy as np
import pytest

from hybridprop.benchmarks import build_thermostat_network, build_traffic_dbn
from hybridprop.network import HybridNetwork
from hybridprop.network_io import network_from_dict

from .common import chain_dict, hybrid_dict

np.seterr(all="warn")

hypothesis.settings.register_profile("ci", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.register_profile(
    "debugger", report_multiple_bugs=False, deadline=None
)
hypothesis.settings.load_profile("ci")


@pytest.fixture(name="chain")
def chain_fixture() -> HybridNetwork:
    """Three-node discrete chain."""
    return network_from_dict(chain_dict())


@pytest.fixture(name="hybrid")
def hybrid_fixture() -> HybridNetwork:
    """Small net with all four CPD families."""
    return network_from_dict(hybrid_dict())


@pytest.fixture(name="thermostat", scope="session")
def thermostat_fixture() -> HybridNetwork:
    """Bundled thermostat network."""
    return build_thermostat_network()


@pytest.fixture(name="traffic", scope="session")
def traffic_fixture() -> HybridNetwork:
    """Bundled traffic DBN."""
    return build_traffic_dbn()
