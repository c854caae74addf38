"""Plugin for constructor and dataclass hook definitions."""
from __future__ import annotations

from astroid import Const, FunctionDef
from pylint.checkers import BaseChecker
from pylint.lint import PyLinter

CONSTRUCTORS = ("__init__", "__post_init__")


class HbnConstructorFormatChecker(BaseChecker):  # type: ignore[misc]
    """Checker for __init__ and __post_init__ definitions."""

    name = "hbn_constructor"
    priority = -1
    msgs = {
        "W7416": (
            '%s should have explicit return type "None"',
            "hbn-constructor-return",
            "Used when a constructor has all arguments typed "
            "but doesn't have return type declared",
        ),
        "W7417": (
            "%s should say what it checks in a docstring",
            "hbn-constructor-docstring",
            "Constructors that validate or record state carry a one-line docstring",
        ),
    }
    options = ()

    def visit_functiondef(self, node: FunctionDef) -> None:
        """Called when a FunctionDef node is visited."""
        if not node.is_method() or node.name not in CONSTRUCTORS:
            return

        if node.doc_node is None:
            self.add_message("hbn-constructor-docstring", node=node, args=node.name)

        # The first argument is "self".
        args = node.args
        annotations = (
            args.posonlyargs_annotations
            + args.annotations
            + args.kwonlyargs_annotations
        )[1:]
        if args.vararg is not None:
            annotations.append(args.varargannotation)
        if args.kwarg is not None:
            annotations.append(args.kwargannotation)
        if None in annotations:
            return

        if not isinstance(node.returns, Const) or node.returns.value is not None:
            self.add_message("hbn-constructor-return", node=node, args=node.name)


def register(linter: PyLinter) -> None:
    """Register the checker."""
    linter.register_checker(HbnConstructorFormatChecker(linter))
