"""Tests for the repository's pylint plugins."""
from __future__ import annotations

from importlib.machinery import SourceFileLoader
from importlib.util import module_from_spec, spec_from_loader
from pathlib import Path
import sys
from types import ModuleType

import astroid
import pytest
from pylint.testutils.unittest_linter import UnittestLinter

PLUGINS = Path(__file__).parent.parent.joinpath("pylint", "plugins")


def _load(name: str) -> ModuleType:
    loader = SourceFileLoader(name, str(PLUGINS.joinpath(f"{name}.py")))
    spec = spec_from_loader(loader.name, loader)
    assert spec is not None
    module = module_from_spec(spec)
    sys.modules[spec.name] = module
    loader.exec_module(module)
    return module


@pytest.fixture(name="linter")
def linter_fixture() -> UnittestLinter:
    """Linter that records messages instead of printing them."""
    return UnittestLinter()


@pytest.mark.parametrize(
    ("code", "expected"),
    [
        ('_LOGGER.info("Loaded %s", name)', []),
        ('_LOGGER.debug("loaded %s", name)', []),
        ('_LOGGER.info("loaded %s", name)', ["hbn-logger-capital"]),
        ('_LOGGER.warning("Loaded %s.", name)', ["hbn-logger-period"]),
        ('_LOGGER.info(f"Loaded {name}")', ["hbn-logger-eager-format"]),
        ('_LOGGER.info("Loaded {}".format(name))', ["hbn-logger-eager-format"]),
        ('other.info("loaded.")', []),
    ],
)
def test_logger_messages(
    linter: UnittestLinter, code: str, expected: list[str]
) -> None:
    """Logger calls are checked for style; other receivers are ignored."""
    module = _load("hbn_logger")
    checker = module.HbnLoggerFormatChecker(linter)
    checker.visit_call(astroid.extract_node(code))
    assert [message.msg_id for message in linter.release_messages()] == expected


@pytest.mark.parametrize(
    ("code", "expected"),
    [
        (
            'def __init__(self, clique: int) -> None:\n    """Record it."""',
            [],
        ),
        (
            'def __init__(self, clique: int):\n    """Record it."""',
            ["hbn-constructor-return"],
        ),
        ('def __init__(self, clique):\n    """Record it."""', []),
        ("def __post_init__(self) -> None:\n    pass", ["hbn-constructor-docstring"]),
        ("def build(self):\n    pass", []),
    ],
)
def test_constructor_definitions(
    linter: UnittestLinter, code: str, expected: list[str]
) -> None:
    """Typed constructors declare None and every constructor has a docstring."""
    module = _load("hbn_constructor")
    checker = module.HbnConstructorFormatChecker(linter)
    indented = "\n".join(f"    {line}" for line in code.splitlines())
    node = astroid.extract_node(f"class Config:\n{indented}\n")
    checker.visit_functiondef(node.body[0])
    assert [message.msg_id for message in linter.release_messages()] == expected
