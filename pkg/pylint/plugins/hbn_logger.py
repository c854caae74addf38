"""Plugin for logger invocations."""
from __future__ import annotations

import astroid
from pylint.checkers import BaseChecker
from pylint.lint import PyLinter

LOGGER_NAMES = ("LOGGER", "_LOGGER")
LOG_LEVEL_ALLOWED_LOWER_START = ("debug",)


class HbnLoggerFormatChecker(BaseChecker):  # type: ignore[misc]
    """Checker for logger invocations."""

    name = "hbn_logger"
    priority = -1
    msgs = {
        "W7411": (
            "Logger messages must not end with a period",
            "hbn-logger-period",
            "Periods are not permitted at the end of logger messages",
        ),
        "W7412": (
            "Logger messages must start with a capital letter or downgrade to debug",
            "hbn-logger-capital",
            "Messages above debug level start with a capital letter",
        ),
        "W7413": (
            "Logger messages must use lazy %-style arguments",
            "hbn-logger-eager-format",
            "Used when the message is an f-string or a str.format call",
        ),
    }
    options = ()

    def visit_call(self, node: astroid.Call) -> None:
        """Called when a Call node is visited."""
        if not isinstance(node.func, astroid.Attribute) or not isinstance(
            node.func.expr, astroid.Name
        ):
            return

        if node.func.expr.name not in LOGGER_NAMES or not node.args:
            return

        first_arg = node.args[0]

        if isinstance(first_arg, astroid.JoinedStr) or (
            isinstance(first_arg, astroid.Call)
            and isinstance(first_arg.func, astroid.Attribute)
            and first_arg.func.attrname == "format"
        ):
            self.add_message("hbn-logger-eager-format", node=node)
            return

        if not isinstance(first_arg, astroid.Const) or not first_arg.value:
            return

        log_message = first_arg.value

        if log_message[-1] == ".":
            self.add_message("hbn-logger-period", node=node)

        if (
            node.func.attrname not in LOG_LEVEL_ALLOWED_LOWER_START
            and log_message[0].upper() != log_message[0]
        ):
            self.add_message("hbn-logger-capital", node=node)


def register(linter: PyLinter) -> None:
    """Register the checker."""
    linter.register_checker(HbnLoggerFormatChecker(linter))
