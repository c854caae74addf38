"""Reading and writing `.hbn` network files and `.evid` evidence files."""
from __future__ import annotations

from collections.abc import Sequence
import itertools
import json
import logging
from pathlib import Path
from typing import Any

import numpy as np
import voluptuous as vol

from .const import (
    CPD_CLG,
    CPD_KINDS,
    CPD_SOFTMAX,
    CPD_TABLE,
    CPD_UNIFORM,
    KIND_CONTINUOUS,
    KIND_DISCRETE,
)
from .exceptions import NetworkSyntaxError, NetworkValidationError
from .network import (
    ClgBody,
    Cpd,
    CpdBody,
    Evidence,
    HybridNetwork,
    SoftmaxBlock,
    SoftmaxBody,
    TableBody,
    UniformBody,
    Variable,
    check_evidence,
    validate_network,
)

_LOGGER = logging.getLogger(__name__)

NUMBER = vol.All(vol.Any(int, float), vol.Coerce(float))

VARIABLE_SCHEMA = vol.Schema(
    {
        vol.Required("name"): vol.All(str, vol.Length(min=1)),
        vol.Required("kind"): vol.In([KIND_DISCRETE, KIND_CONTINUOUS]),
        vol.Optional("values"): vol.All([str], vol.Length(min=1)),
        vol.Optional("range"): vol.All([NUMBER], vol.Length(min=2, max=2)),
    }
)

CPD_SCHEMA = vol.Schema(
    {
        vol.Required("child"): str,
        vol.Optional("parents", default=list): [str],
        vol.Required("kind"): vol.In(CPD_KINDS),
        vol.Optional("params", default=dict): dict,
    }
)

NETWORK_SCHEMA = vol.Schema(
    {
        vol.Optional("name"): str,
        vol.Required("variables"): [VARIABLE_SCHEMA],
        vol.Required("cpds"): [CPD_SCHEMA],
    }
)

PARAMS_SCHEMAS: dict[str, vol.Schema] = {
    CPD_TABLE: vol.Schema({vol.Required("rows"): {str: [NUMBER]}}),
    CPD_CLG: vol.Schema(
        {
            str: {
                vol.Optional("intercept"): NUMBER,
                vol.Optional("weights", default=list): [NUMBER],
                vol.Optional("variance"): NUMBER,
                vol.Optional("uniform", default=False): bool,
            }
        }
    ),
    CPD_SOFTMAX: vol.Schema(
        {
            str: {
                vol.Required("regions"): vol.All(
                    [{vol.Required("alpha"): [NUMBER], vol.Required("p"): [NUMBER]}],
                    vol.Length(min=1),
                )
            }
        }
    ),
    CPD_UNIFORM: vol.Schema({}),
}


def _location(prefix: Sequence[Any], path: Sequence[Any]) -> str:
    text = ""
    for item in (*prefix, *path):
        text += f"[{item}]" if isinstance(item, int) else f".{item}"
    return text.lstrip(".") or "<root>"


def _validated(schema: vol.Schema, data: Any, prefix: Sequence[Any] = ()) -> Any:
    try:
        return schema(data)
    except vol.Invalid as err:
        raise NetworkSyntaxError(_location(prefix, err.path), err.msg) from err


def assignment_key(parents: Sequence[Variable], values: Sequence[int]) -> str:
    """File key for one joint assignment of the given discrete parents."""
    return ",".join(parent.states[value] for parent, value in zip(parents, values))


def _assignments(parents: Sequence[Variable]) -> list[tuple[int, ...]]:
    return list(itertools.product(*(range(int(p.cardinality or 0)) for p in parents)))


def _keyed_blocks(
    params: dict[str, Any], parents: Sequence[Variable], where: list[Any]
) -> list[Any]:
    expected = {
        assignment_key(parents, values): values for values in _assignments(parents)
    }
    unknown = sorted(set(params) - set(expected))
    if unknown:
        raise NetworkSyntaxError(
            _location(where, [unknown[0]]), "unknown parent assignment"
        )
    blocks = []
    for key in expected:
        if key not in params:
            raise NetworkSyntaxError(
                _location(where, []), f"missing parent assignment {key!r}"
            )
        blocks.append(params[key])
    return blocks


def _build_body(
    kind: str,
    params: dict[str, Any],
    child: Variable,
    parents: tuple[Variable, ...],
    where: list[Any],
) -> CpdBody:
    params = _validated(PARAMS_SCHEMAS[kind], params, where)
    discrete = [parent for parent in parents if parent.is_discrete]
    if kind == CPD_TABLE:
        if not all(p.is_discrete for p in (child, *parents)):
            raise NetworkSyntaxError(
                _location(where, []), "table CPDs need discrete variables"
            )
        rows = _keyed_blocks(params["rows"], parents, [*where, "rows"])
        width = int(child.cardinality or 0)
        if any(len(row) != width for row in rows):
            raise NetworkSyntaxError(
                _location(where, ["rows"]), f"expected {width} probabilities per row"
            )
        return TableBody(np.array(rows, dtype=float).reshape(len(rows), width))
    if kind == CPD_CLG:
        blocks = _keyed_blocks(params, discrete, where)
        weights = [block["weights"] for block in blocks]
        widths = {len(row) for row in weights}
        if len(widths) > 1:
            raise NetworkSyntaxError(
                _location(where, []), "weights differ in length between blocks"
            )
        width = widths.pop() if widths else 0
        flat = [block["uniform"] for block in blocks]
        keys = [assignment_key(discrete, values) for values in _assignments(discrete)]
        for key, block in zip(keys, blocks):
            missing = [name for name in ("intercept", "variance") if name not in block]
            if missing and not block["uniform"]:
                raise NetworkSyntaxError(
                    _location(where, [key, missing[0]]), "required key not provided"
                )
        return ClgBody(
            intercepts=np.array(
                [block.get("intercept", 0.0) for block in blocks], dtype=float
            ),
            weights=np.array(weights, dtype=float).reshape(len(blocks), width),
            variances=np.array(
                [block.get("variance", 1.0) for block in blocks], dtype=float
            ),
            flat=np.array(flat, dtype=bool),
        )
    if kind == CPD_SOFTMAX:
        body = []
        for index, block in enumerate(_keyed_blocks(params, discrete, where)):
            regions = block["regions"]
            alpha_widths = {len(region["alpha"]) for region in regions}
            p_widths = {len(region["p"]) for region in regions}
            if len(alpha_widths) > 1 or len(p_widths) > 1:
                raise NetworkSyntaxError(
                    _location(where, [index, "regions"]), "ragged regions"
                )
            body.append(
                SoftmaxBlock(
                    alphas=np.array([r["alpha"] for r in regions], dtype=float),
                    probabilities=np.array([r["p"] for r in regions], dtype=float),
                )
            )
        return SoftmaxBody(tuple(body))
    return UniformBody()


def network_from_dict(data: Any) -> HybridNetwork:
    """Build and validate a network from its decoded JSON structure."""
    data = _validated(NETWORK_SCHEMA, data)
    variables: list[Variable] = []
    for index, item in enumerate(data["variables"]):
        if item["kind"] == KIND_DISCRETE:
            if "values" not in item:
                raise NetworkSyntaxError(
                    f"variables[{index}].values", "required for discrete variables"
                )
            variables.append(Variable.discrete(index, item["name"], item["values"]))
        else:
            if "range" not in item:
                raise NetworkSyntaxError(
                    f"variables[{index}].range", "required for continuous variables"
                )
            variables.append(Variable.continuous(index, item["name"], *item["range"]))
    by_name = {variable.name: variable for variable in variables}

    def lookup(name: str, where: list[Any]) -> Variable:
        if name not in by_name:
            raise NetworkSyntaxError(_location(where, []), f"unknown variable {name!r}")
        return by_name[name]

    cpds = []
    for index, item in enumerate(data["cpds"]):
        child = lookup(item["child"], ["cpds", index, "child"])
        parents = tuple(
            lookup(name, ["cpds", index, "parents", position])
            for position, name in enumerate(item["parents"])
        )
        where = ["cpds", index, "params"]
        body = _build_body(item["kind"], item["params"], child, parents, where)
        cpds.append(Cpd(child, parents, body))

    name = data.get("name", "network")
    net = HybridNetwork(tuple(variables), tuple(cpds), name=name)
    report = validate_network(net)
    if not report.ok:
        raise NetworkValidationError(report)
    return net


def parse_network(text: str) -> HybridNetwork:
    """Parse `.hbn` text into a validated network."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        where = f"line {err.lineno} column {err.colno}"
        raise NetworkSyntaxError(where, err.msg) from err
    return network_from_dict(data)


def _body_params(cpd: Cpd) -> dict[str, Any]:
    body = cpd.body
    discrete = [cpd.parents[i] for i in cpd.discrete_positions]
    if isinstance(body, TableBody):
        return {
            "rows": {
                assignment_key(cpd.parents, values): body.probabilities[row].tolist()
                for row, values in enumerate(_assignments(cpd.parents))
            }
        }
    if isinstance(body, ClgBody):
        return {
            assignment_key(discrete, values): (
                {"weights": body.weights[row].tolist(), "uniform": True}
                if body.flat_blocks[row]
                else {
                    "intercept": float(body.intercepts[row]),
                    "weights": body.weights[row].tolist(),
                    "variance": float(body.variances[row]),
                }
            )
            for row, values in enumerate(_assignments(discrete))
        }
    if isinstance(body, SoftmaxBody):
        return {
            assignment_key(discrete, values): {
                "regions": [
                    {"alpha": alpha.tolist(), "p": probabilities.tolist()}
                    for alpha, probabilities in zip(block.alphas, block.probabilities)
                ]
            }
            for block, values in zip(body.blocks, _assignments(discrete))
        }
    return {}


def network_to_dict(net: HybridNetwork) -> dict[str, Any]:
    """Return the JSON structure of a network."""
    variables: list[dict[str, Any]] = []
    for variable in net.variables:
        item: dict[str, Any] = {"name": variable.name, "kind": variable.kind}
        if variable.is_discrete:
            item["values"] = list(variable.states)
        else:
            item["range"] = [variable.lower, variable.upper]
        variables.append(item)
    cpds = [
        {
            "child": cpd.child.name,
            "parents": [parent.name for parent in cpd.parents],
            "kind": cpd.kind,
            "params": _body_params(cpd),
        }
        for cpd in sorted(net.cpds, key=lambda item: item.child.id)
    ]
    return {"name": net.name, "variables": variables, "cpds": cpds}


def serialize_network(net: HybridNetwork) -> str:
    """Render a network as `.hbn` text."""
    return json.dumps(network_to_dict(net), indent=2) + "\n"


EVIDENCE_SCHEMA = vol.Schema({str: vol.Any(str, NUMBER)})


def parse_evidence(text: str, net: HybridNetwork) -> Evidence:
    """Parse `.evid` text (a JSON map of variable name to value)."""
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as err:
        where = f"line {err.lineno} column {err.colno}"
        raise NetworkSyntaxError(where, err.msg) from err
    data = _validated(EVIDENCE_SCHEMA, data)
    evidence: Evidence = {}
    for name, value in data.items():
        if name not in {variable.name for variable in net.variables}:
            raise NetworkSyntaxError(name, "unknown variable")
        variable = net.variable(name)
        evidence[variable.id] = value
    return check_evidence(net, evidence)


def serialize_evidence(evidence: Evidence, net: HybridNetwork) -> str:
    """Render evidence as `.evid` text, discrete values by label."""
    data: dict[str, Any] = {}
    for var_id, value in sorted(evidence.items()):
        variable = net.variable(var_id)
        if variable.is_discrete:
            data[variable.name] = variable.states[int(value)]
        else:
            data[variable.name] = float(value)
    return json.dumps(data, indent=2) + "\n"


def load_network(path: str | Path) -> HybridNetwork:
    """Read and parse a network file."""
    _LOGGER.debug("Loading network from %s", path)
    return parse_network(Path(path).read_text(encoding="utf-8"))


def load_evidence(path: str | Path | None, net: HybridNetwork) -> Evidence:
    """Read an evidence file; no path means no evidence."""
    if path is None:
        return {}
    return parse_evidence(Path(path).read_text(encoding="utf-8"), net)
