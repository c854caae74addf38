"""Network builders shared by the tests."""
from __future__ import annotations

import itertools
from typing import Any

import numpy as np

from hybridprop.network import HybridNetwork
from hybridprop.network_io import network_from_dict

BINARY = ["0", "1"]


def discrete_variable(name: str, states: list[str] | None = None) -> dict[str, Any]:
    """A `.hbn` variable entry."""
    return {"name": name, "kind": "discrete", "values": states or BINARY}


def continuous_variable(name: str, low: float, high: float) -> dict[str, Any]:
    """A `.hbn` variable entry with a range."""
    return {"name": name, "kind": "continuous", "range": [low, high]}


def table_cpd(
    child: str, parents: list[str], rows: dict[str, list[float]]
) -> dict[str, Any]:
    """A `.hbn` table CPD entry."""
    params = {"rows": rows}
    return {"child": child, "parents": parents, "kind": "table", "params": params}


def chain_dict() -> dict[str, Any]:
    """A -> B -> C over binary variables."""
    return {
        "name": "chain",
        "variables": [discrete_variable(name) for name in "ABC"],
        "cpds": [
            table_cpd("A", [], {"": [0.6, 0.4]}),
            table_cpd("B", ["A"], {"0": [0.9, 0.1], "1": [0.2, 0.8]}),
            table_cpd("C", ["B"], {"0": [0.7, 0.3], "1": [0.1, 0.9]}),
        ],
    }


def hybrid_dict() -> dict[str, Any]:
    """D -> X -> S with a CLG X and a softmax S, plus a uniform root U -> Y."""
    return {
        "name": "hybrid",
        "variables": [
            discrete_variable("D"),
            continuous_variable("X", -10.0, 10.0),
            discrete_variable("S", ["low", "high"]),
            continuous_variable("U", 0.0, 4.0),
            continuous_variable("Y", -10.0, 10.0),
        ],
        "cpds": [
            table_cpd("D", [], {"": [0.3, 0.7]}),
            {
                "child": "X",
                "parents": ["D"],
                "kind": "clg",
                "params": {
                    "0": {"intercept": -2.0, "variance": 1.0},
                    "1": {"intercept": 2.0, "variance": 0.5},
                },
            },
            {
                "child": "S",
                "parents": ["X"],
                "kind": "softmax",
                "params": {
                    "": {
                        "regions": [
                            {"alpha": [0.0, -2.0], "p": [0.95, 0.05]},
                            {"alpha": [0.0, 2.0], "p": [0.05, 0.95]},
                        ]
                    }
                },
            },
            {"child": "U", "kind": "uniform"},
            {
                "child": "Y",
                "parents": ["U"],
                "kind": "clg",
                "params": {"": {"intercept": 0.0, "weights": [1.0], "variance": 1.0}},
            },
        ],
    }


def random_discrete_network(
    rng: np.random.Generator, size: int, max_parents: int = 2
) -> HybridNetwork:
    """Random DAG over binary variables with Dirichlet CPTs."""
    names = [f"V{index}" for index in range(size)]
    cpds = []
    for index, name in enumerate(names):
        count = int(rng.integers(0, min(index, max_parents) + 1))
        parents = sorted(rng.choice(index, size=count, replace=False).tolist())
        rows = {
            ",".join(key): rng.dirichlet([1.0, 1.0]).tolist()
            for key in itertools.product(BINARY, repeat=len(parents))
        }
        cpds.append(table_cpd(name, [names[p] for p in parents], rows))
    return network_from_dict(
        {
            "name": "random",
            "variables": [discrete_variable(name) for name in names],
            "cpds": cpds,
        }
    )


