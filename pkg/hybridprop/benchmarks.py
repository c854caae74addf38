"""Bundled benchmark networks and their named evidence scenarios.

Both networks are reconstructions: their structure follows the classic
thermostat and highway-driving examples, and every number below is a constant
chosen for this package. The tables in this module are the single source of
truth for those constants.
"""
from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass
import itertools
from typing import Any

import numpy as np

from .const import (
    CPD_CLG,
    CPD_SOFTMAX,
    CPD_TABLE,
    CPD_UNIFORM,
    KIND_CONTINUOUS,
    KIND_DISCRETE,
)
from .exceptions import ConfigError, ContractError
from .network import Evidence, HybridNetwork, check_evidence
from .network_io import network_from_dict

NETWORK_THERMOSTAT = "thermostat"
NETWORK_TRAFFIC = "traffic"

# Thermostat, two slices.
THERMOSTAT = {
    "outside_range": (-10.0, 40.0),
    "inside_range": (-5.0, 45.0),
    # OutsideTemp_1 = 0.9 * OutsideTemp_0 + 1.5 + N(0, 4)
    "outside_drift": (1.5, 0.9, 4.0),
    # InsideTemp_0 = 0.5 * OutsideTemp_0 + 10 + N(0, 9)
    "inside_initial": (10.0, 0.5, 9.0),
    # InsideTemp_1 = b[heater] + 0.3 * OutsideTemp_1 + 0.6 * InsideTemp_0 + N(0, 2)
    "inside_heater_offset": {"off": 0.0, "on": 5.0},
    "inside_weights": (0.3, 0.6),
    "inside_variance": 2.0,
    "thermometer_ok": 0.9999,
    # Softmax region scores alpha_0 + alpha_1 * InsideTemp for low, medium, high.
    "reading_alphas": ((0.0, -1.5), (-22.5, 0.0), (-60.0, 1.5)),
    "reading_regions": (
        (0.95, 0.04, 0.01),
        (0.03, 0.94, 0.03),
        (0.01, 0.04, 0.95),
    ),
    "heater_on": {"low": 0.9, "medium": 0.5, "high": 0.05},
}

# Highway-driving DBN, per slice.
TRAFFIC = {
    "xdot_range": (-15.0, 15.0),
    "ydot_range": (-5.0, 5.0),
    "left_clear": 0.7,
    "right_clear": 0.6,
    # P(sensed clear | clear), P(sensed clear | blocked)
    "clearance_sensor": (0.9, 0.2),
    # Initial lane change given (left, right) clearance.
    "lane_change_initial": {
        ("clear", "clear"): (0.1, 0.8, 0.1),
        ("clear", "blocked"): (0.15, 0.8, 0.05),
        ("blocked", "clear"): (0.05, 0.8, 0.15),
        ("blocked", "blocked"): (0.02, 0.96, 0.02),
    },
    # Lane change persistence given the previous slice, before blocking.
    "lane_change_persistence": {
        "left": (0.6, 0.35, 0.05),
        "none": (0.1, 0.8, 0.1),
        "right": (0.05, 0.35, 0.6),
    },
    # Share of a blocked side's mass moved to "none".
    "blocked_suppression": 0.8,
    "xdot_offset": {"left": -3.0, "none": 0.0, "right": 3.0},
    "xdot_initial_variance": 9.0,
    "xdot_persistence": 0.7,
    "xdot_variance": 2.0,
    "sensor_ok": 0.9999,
    "xdot_sensor_variance": 0.25,
    "ydot_offset": {"left": -1.5, "none": 0.0, "right": 1.5},
    "ydot_variance": 0.5,
    "ydot_sensor_variance": 0.1,
}

LANES = ("left", "none", "right")
CLEARANCE = ("clear", "blocked")
STATUS = ("ok", "broken")


def _discrete(name: str, values: tuple[str, ...]) -> dict[str, Any]:
    return {"name": name, "kind": KIND_DISCRETE, "values": list(values)}


def _continuous(name: str, bounds: tuple[float, float]) -> dict[str, Any]:
    return {"name": name, "kind": KIND_CONTINUOUS, "range": list(bounds)}


def _prior(name: str, first: float) -> dict[str, Any]:
    rows = {"": [first, 1.0 - first]}
    return {"child": name, "kind": CPD_TABLE, "params": {"rows": rows}}


def _linear(intercept: float, weights: list[float], variance: float) -> dict[str, Any]:
    return {"intercept": intercept, "weights": weights, "variance": variance}


def build_thermostat_network() -> HybridNetwork:
    """Two-slice thermostat with a softmax reading and a failing thermometer."""
    c = THERMOSTAT
    variables = []
    cpds: list[dict[str, Any]] = []
    for t in range(2):
        variables += [
            _continuous(f"OutsideTemp_{t}", c["outside_range"]),
            _continuous(f"InsideTemp_{t}", c["inside_range"]),
            _discrete(f"ThermometerOK_{t}", STATUS),
            _discrete(f"Reading_{t}", ("low", "medium", "high")),
            _discrete(f"Heater_{t}", ("off", "on")),
        ]
    intercept, weight, variance = c["outside_drift"]
    cpds.append({"child": "OutsideTemp_0", "kind": CPD_UNIFORM})
    cpds.append(
        {
            "child": "OutsideTemp_1",
            "parents": ["OutsideTemp_0"],
            "kind": CPD_CLG,
            "params": {"": _linear(intercept, [weight], variance)},
        }
    )
    intercept, weight, variance = c["inside_initial"]
    cpds.append(
        {
            "child": "InsideTemp_0",
            "parents": ["OutsideTemp_0"],
            "kind": CPD_CLG,
            "params": {"": _linear(intercept, [weight], variance)},
        }
    )
    cpds.append(
        {
            "child": "InsideTemp_1",
            "parents": ["Heater_0", "OutsideTemp_1", "InsideTemp_0"],
            "kind": CPD_CLG,
            "params": {
                state: {
                    "intercept": offset,
                    "weights": list(c["inside_weights"]),
                    "variance": c["inside_variance"],
                }
                for state, offset in c["inside_heater_offset"].items()
            },
        }
    )
    working = {
        "regions": [
            {"alpha": list(alpha), "p": list(p)}
            for alpha, p in zip(c["reading_alphas"], c["reading_regions"])
        ]
    }
    broken = {"regions": [{"alpha": [0.0, 0.0], "p": [1 / 3, 1 / 3, 1 / 3]}]}
    for t in range(2):
        cpds.append(_prior(f"ThermometerOK_{t}", c["thermometer_ok"]))
        cpds.append(
            {
                "child": f"Reading_{t}",
                "parents": [f"ThermometerOK_{t}", f"InsideTemp_{t}"],
                "kind": CPD_SOFTMAX,
                "params": {"ok": working, "broken": broken},
            }
        )
        cpds.append(
            {
                "child": f"Heater_{t}",
                "parents": [f"Reading_{t}"],
                "kind": CPD_TABLE,
                "params": {
                    "rows": {
                        reading: [1.0 - on, on]
                        for reading, on in c["heater_on"].items()
                    }
                },
            }
        )
    return network_from_dict(
        {"name": NETWORK_THERMOSTAT, "variables": variables, "cpds": cpds}
    )


def _lane_change_row(previous: str, left: str, right: str) -> list[float]:
    c = TRAFFIC
    row = np.array(c["lane_change_persistence"][previous], dtype=float)
    suppression = c["blocked_suppression"]
    for side, clearance in ((0, left), (2, right)):
        if clearance == "blocked":
            row[1] += row[side] * suppression
            row[side] *= 1.0 - suppression
    return list(row / row.sum())


def build_traffic_dbn(slices: int = 3) -> HybridNetwork:
    """Highway-driving DBN with failing velocity sensors.

    Each slice holds a lane-change intent, two clearance variables with noisy
    sensors, lateral and forward velocities with sensed readings, and a sensor
    status that switches the Xdot reading to one uniform over its range.
    """
    if slices < 1:
        raise ContractError(f"need at least one slice, got {slices}")
    c = TRAFFIC
    variables = []
    cpds: list[dict[str, Any]] = []
    sensed_clear, blocked_clear = c["clearance_sensor"]
    for t in range(slices):
        variables += [
            _discrete(f"LeftClr_{t}", CLEARANCE),
            _discrete(f"RightClr_{t}", CLEARANCE),
            _discrete(f"LaneChange_{t}", LANES),
            _continuous(f"Xdot_{t}", c["xdot_range"]),
            _discrete(f"SensorOK_{t}", STATUS),
            _continuous(f"XdotSensed_{t}", c["xdot_range"]),
            _continuous(f"Ydot_{t}", c["ydot_range"]),
            _continuous(f"YdotSensed_{t}", c["ydot_range"]),
            _discrete(f"LeftClrSensed_{t}", CLEARANCE),
            _discrete(f"RightClrSensed_{t}", CLEARANCE),
        ]
        cpds.append(_prior(f"LeftClr_{t}", c["left_clear"]))
        cpds.append(_prior(f"RightClr_{t}", c["right_clear"]))
        for side in ("Left", "Right"):
            cpds.append(
                {
                    "child": f"{side}ClrSensed_{t}",
                    "parents": [f"{side}Clr_{t}"],
                    "kind": CPD_TABLE,
                    "params": {
                        "rows": {
                            "clear": [sensed_clear, 1.0 - sensed_clear],
                            "blocked": [blocked_clear, 1.0 - blocked_clear],
                        }
                    },
                }
            )
        if t == 0:
            cpds.append(
                {
                    "child": "LaneChange_0",
                    "parents": ["LeftClr_0", "RightClr_0"],
                    "kind": CPD_TABLE,
                    "params": {
                        "rows": {
                            f"{left},{right}": list(row)
                            for (left, right), row in c["lane_change_initial"].items()
                        }
                    },
                }
            )
            cpds.append(
                {
                    "child": "Xdot_0",
                    "parents": ["LaneChange_0"],
                    "kind": CPD_CLG,
                    "params": {
                        lane: {
                            "intercept": offset,
                            "variance": c["xdot_initial_variance"],
                        }
                        for lane, offset in c["xdot_offset"].items()
                    },
                }
            )
        else:
            cpds.append(
                {
                    "child": f"LaneChange_{t}",
                    "parents": [
                        f"LaneChange_{t - 1}",
                        f"LeftClr_{t}",
                        f"RightClr_{t}",
                    ],
                    "kind": CPD_TABLE,
                    "params": {
                        "rows": {
                            ",".join(key): _lane_change_row(*key)
                            for key in itertools.product(LANES, CLEARANCE, CLEARANCE)
                        }
                    },
                }
            )
            cpds.append(
                {
                    "child": f"Xdot_{t}",
                    "parents": [f"LaneChange_{t}", f"Xdot_{t - 1}"],
                    "kind": CPD_CLG,
                    "params": {
                        lane: {
                            "intercept": offset,
                            "weights": [c["xdot_persistence"]],
                            "variance": c["xdot_variance"],
                        }
                        for lane, offset in c["xdot_offset"].items()
                    },
                }
            )
        cpds.append(_prior(f"SensorOK_{t}", c["sensor_ok"]))
        cpds.append(
            {
                "child": f"XdotSensed_{t}",
                "parents": [f"SensorOK_{t}", f"Xdot_{t}"],
                "kind": CPD_CLG,
                "params": {
                    "ok": _linear(0.0, [1.0], c["xdot_sensor_variance"]),
                    "broken": {"weights": [0.0], "uniform": True},
                },
            }
        )
        cpds.append(
            {
                "child": f"Ydot_{t}",
                "parents": [f"LaneChange_{t}"],
                "kind": CPD_CLG,
                "params": {
                    lane: {"intercept": offset, "variance": c["ydot_variance"]}
                    for lane, offset in c["ydot_offset"].items()
                },
            }
        )
        cpds.append(
            {
                "child": f"YdotSensed_{t}",
                "parents": [f"Ydot_{t}"],
                "kind": CPD_CLG,
                "params": {"": _linear(0.0, [1.0], c["ydot_sensor_variance"])},
            }
        )
    return network_from_dict(
        {"name": NETWORK_TRAFFIC, "variables": variables, "cpds": cpds}
    )


@dataclass(frozen=True)
class Scenario:
    """Named evidence (by variable name) and the variable it queries."""

    name: str
    evidence: Mapping[str, Any]
    query: str

    def resolve(self, net: HybridNetwork) -> Evidence:
        """Evidence keyed by variable id."""
        by_id = {net.variable(name).id: value for name, value in self.evidence.items()}
        return check_evidence(net, by_id)


_FULL_TRAFFIC = {
    **{f"XdotSensed_{t}": value for t, value in enumerate((2.0, 3.5, 4.5))},
    **{f"YdotSensed_{t}": value for t, value in enumerate((0.5, 1.2, 1.4))},
    **{f"LeftClrSensed_{t}": "clear" for t in range(3)},
    **{
        f"RightClrSensed_{t}": value
        for t, value in enumerate(("clear", "clear", "blocked"))
    },
}

SCENARIOS: dict[str, dict[str, Scenario]] = {
    NETWORK_THERMOSTAT: {
        "easy": Scenario(
            "easy", {"Reading_0": "medium", "Reading_1": "medium"}, "OutsideTemp_0"
        ),
        "conflicting": Scenario(
            "conflicting",
            {"Reading_0": "high", "Reading_1": "low", "OutsideTemp_1": 30.0},
            "OutsideTemp_0",
        ),
    },
    NETWORK_TRAFFIC: {
        "easy": Scenario("easy", {"Xdot_0": 1.0, "XdotSensed_2": 2.0}, "XdotSensed_1"),
        "conflicting": Scenario(
            "conflicting", {"Xdot_0": -10.0, "XdotSensed_2": 10.0}, "XdotSensed_1"
        ),
        "single": Scenario("single", {"XdotSensed_2": 4.5}, "Xdot_1"),
        "full": Scenario("full", _FULL_TRAFFIC, "Xdot_1"),
    },
}

BUILDERS = {
    NETWORK_THERMOSTAT: build_thermostat_network,
    NETWORK_TRAFFIC: build_traffic_dbn,
}


def benchmark(name: str) -> HybridNetwork:
    """Build a bundled network by name."""
    if name not in BUILDERS:
        raise ConfigError(
            f"unknown network {name!r}; expected one of {sorted(BUILDERS)}"
        )
    return BUILDERS[name]()


def scenario(network: str, name: str) -> Scenario:
    """Look up a named scenario of a bundled network."""
    try:
        return SCENARIOS[network][name]
    except KeyError as err:
        raise ConfigError(f"unknown scenario {network}/{name}") from err
