"""
Call composition and template rendering.

Step two of code generation joins the matched function and the extracted
arguments into a CallPlan, then drops its one-line rendering into the
five-state FSM template at the single call site.
"""

import logging
import re
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Any, Dict, Optional, Union

from jinja2 import Environment, StrictUndefined, TemplateError as JinjaTemplateError

from app.core.errors import (
    ArgumentRangeError,
    ArgumentTypeError,
    CompositionError,
    TemplateError,
)
from app.schemas.codegen import ArgumentSet, CallPlan, CodeTemplate, RenderedProgram
from app.schemas.corpus import ApiFunction, ApiParameter, ValueType

logger = logging.getLogger(__name__)

TEMPLATES_DIR = Path(__file__).resolve().parent.parent.parent / "templates"
DEFAULT_TEMPLATE = TEMPLATES_DIR / "five_state_fsm.txt"

PLACEHOLDER = re.compile(r"\{\{\s*CALL_SITE\s*\}\}")

_env = Environment(undefined=StrictUndefined, keep_trailing_newline=True, autoescape=False)


def to_python_value(parameter: ApiParameter, value: str) -> Any:
    """Convert a canonical value string into the native value passed to the device."""
    value_type = parameter.value_type
    try:
        if value_type == ValueType.INTEGER:
            number = Decimal(value)
            if number != number.to_integral_value():
                raise ArgumentTypeError(f"{parameter.name}={value} is not an integer")
            return int(number)
        if value_type == ValueType.DECIMAL:
            return float(Decimal(value))
    except InvalidOperation as e:
        raise ArgumentTypeError(
            f"{parameter.name}={value} does not parse as {value_type.value}"
        ) from e
    if value_type == ValueType.BOOLEAN:
        if value not in ("true", "false"):
            raise ArgumentTypeError(f"{parameter.name}={value} is not a boolean")
        return value == "true"
    return value


def _render_value(parameter: ApiParameter, value: str) -> str:
    if parameter.value_type == ValueType.STRING:
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return value


def compose_call(function: ApiFunction, args: ArgumentSet) -> CallPlan:
    """
    Validate arguments against the function signature and render the call line.

    Raises:
        CompositionError: Argument count or names differ from the parameter list
        ArgumentTypeError: A value does not parse under its declared type
        ArgumentRangeError: A numeric value lies outside its declared range
    """
    if len(args.bindings) != function.arity:
        raise CompositionError(
            f"{function.name} takes {function.arity} argument(s), got {len(args.bindings)}"
        )
    for param, (name, value) in zip(function.parameters, args.bindings):
        if name != param.name:
            raise CompositionError(
                f"{function.name}: expected argument {param.name}, got {name}"
            )
        native = to_python_value(param, value)
        if param.range is not None and not param.range[0] <= native <= param.range[1]:
            raise ArgumentRangeError(param.name, value, param.range)

    rendered = ", ".join(
        _render_value(param, value)
        for param, (_, value) in zip(function.parameters, args.bindings)
    )
    return CallPlan(function=function, args=args, rendered_call=f"{function.name}({rendered})")


def plan_arguments(plan: CallPlan) -> Dict[str, Any]:
    return {
        param.name: to_python_value(param, value)
        for param, (_, value) in zip(plan.function.parameters, plan.args.bindings)
    }


def load_template(path: Optional[Union[str, Path]] = None) -> CodeTemplate:
    path = Path(path) if path else DEFAULT_TEMPLATE
    template = CodeTemplate(template_text=path.read_text(encoding="utf-8"), name=path.name)
    check_template(template)
    return template


def check_template(template: CodeTemplate) -> None:
    count = len(PLACEHOLDER.findall(template.template_text))
    if count != 1:
        raise TemplateError(
            f"template {template.name} has {count} CALL_SITE placeholders, expected exactly 1"
        )


def render_program(template: CodeTemplate, plan: CallPlan) -> RenderedProgram:
    """Replace the single call-site placeholder with the plan's rendered call."""
    check_template(template)
    try:
        text = _env.from_string(template.template_text).render(CALL_SITE=plan.rendered_call)
    except JinjaTemplateError as e:
        raise TemplateError(f"template {template.name} failed to render: {e}") from e

    if text.count(plan.rendered_call) != 1:
        raise TemplateError(
            f"rendered program holds {text.count(plan.rendered_call)} copies of {plan.rendered_call}"
        )
    return RenderedProgram(text=text, call_plan=plan)
