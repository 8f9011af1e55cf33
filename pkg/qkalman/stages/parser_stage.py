import cmath
import json
import math
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np
from parsimonious.exceptions import ParseError
from parsimonious.grammar import Grammar
from parsimonious.nodes import NodeVisitor

from qkalman.errors import DimensionError, SpecValidationError
from qkalman.models.spec_file import MATRIX_FIELDS, TOP_LEVEL_FIELDS, SystemSpecFile, expected_shape, spec_checksum
from qkalman.models.system_context import SystemContext
from qkalman.stages.base_stage import BaseStage
from qkalman.system_model import REPRESENTATIONS
from qkalman.utils.config import resolve_tolerance

# PEG grammar for scalar matrix entries such as "sqrt(kappa)/2" or "-0.5i".
# Unary minus binds looser than "^", so -2^2 is -4.
EXPRESSION_GRAMMAR = r"""
    expr        = ws sum ws
    sum         = product (ws addop ws product)*
    product     = unary (ws mulop ws unary)*
    unary       = signed / power
    signed      = sign ws unary
    power       = atom (ws "^" ws unary)?
    atom        = call / number / name / group
    call        = func ws "(" ws sum ws ")"
    group       = "(" ws sum ws ")"

    number      = ~r"(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?[ij]?"
    func        = ~r"[A-Za-z_][A-Za-z_0-9]*"
    name        = ~r"[A-Za-z_][A-Za-z_0-9]*"
    addop       = "+" / "-"
    mulop       = "*" / "/"
    sign        = "+" / "-"
    ws          = ~r"\s*"
"""

FUNCTIONS = {
    "sqrt": cmath.sqrt,
    "exp": cmath.exp,
    "cos": cmath.cos,
    "sin": cmath.sin,
    "conj": lambda z: z.conjugate(),
}

CONSTANTS = {"pi": complex(math.pi), "i": 1j, "j": 1j}


class ExpressionVisitor(NodeVisitor):
    """
    Evaluate a parsed matrix-entry expression to a complex number.
    """

    unwrapped_exceptions = (SpecValidationError,)

    def __init__(self, parameters: Mapping[str, complex], field_path: str):
        self.parameters = parameters
        self.field_path = field_path

    def visit_expr(self, node, visited_children):
        _, value, _ = visited_children
        return value

    def visit_sum(self, node, visited_children):
        value, rest = visited_children
        for _, op, _, operand in rest:
            value = value + operand if op == "+" else value - operand
        return value

    def visit_product(self, node, visited_children):
        value, rest = visited_children
        for _, op, _, operand in rest:
            if op == "*":
                value = value * operand
            elif operand == 0:
                raise SpecValidationError("division by zero", field_path=self.field_path, expected="nonzero divisor", found=node.text)
            else:
                value = value / operand
        return value

    def visit_unary(self, node, visited_children):
        return visited_children[0]

    def visit_signed(self, node, visited_children):
        sign, _, value = visited_children
        return -value if sign == "-" else value

    def _arithmetic_error(self, node, error: Exception) -> SpecValidationError:
        return SpecValidationError(
            f"arithmetic error: {error}", field_path=self.field_path, expected="finite value", found=node.text
        )

    def visit_power(self, node, visited_children):
        base, exponent = visited_children
        if not exponent:
            return base
        _, _, _, power = exponent[0]
        if base == 0 and power.real <= 0:
            raise SpecValidationError("zero raised to a non-positive power", field_path=self.field_path, found=node.text)
        try:
            if power.imag == 0 and power.real == int(power.real):
                return base ** int(power.real)
            return base ** power
        except (OverflowError, ZeroDivisionError, ValueError) as e:
            raise self._arithmetic_error(node, e)

    def visit_atom(self, node, visited_children):
        return visited_children[0]

    def visit_call(self, node, visited_children):
        func, _, _, _, argument, _, _ = visited_children
        if func not in FUNCTIONS:
            raise SpecValidationError(f"unknown function '{func}'", field_path=self.field_path, expected=sorted(FUNCTIONS), found=func)
        try:
            return complex(FUNCTIONS[func](argument))
        except (OverflowError, ZeroDivisionError, ValueError) as e:
            raise self._arithmetic_error(node, e)

    def visit_group(self, node, visited_children):
        return visited_children[2]

    def visit_number(self, node, visited_children):
        text = node.text
        if text[-1] in "ij":
            return complex(0.0, float(text[:-1]))
        return complex(float(text))

    def visit_func(self, node, visited_children):
        return node.text

    def visit_name(self, node, visited_children):
        if node.text in self.parameters:
            return complex(self.parameters[node.text])
        if node.text in CONSTANTS:
            return CONSTANTS[node.text]
        raise SpecValidationError(
            f"unknown name '{node.text}'", field_path=self.field_path, expected=sorted(set(self.parameters) | set(CONSTANTS)), found=node.text
        )

    def visit_addop(self, node, visited_children):
        return node.text

    visit_mulop = visit_addop
    visit_sign = visit_addop

    def generic_visit(self, node, visited_children):
        """Default visitor for unhandled nodes."""
        return visited_children


_GRAMMAR = Grammar(EXPRESSION_GRAMMAR)


def evaluate_expression(text: str, parameters: Optional[Mapping[str, complex]] = None, field_path: str = "expression") -> complex:
    """
    Evaluate one matrix-entry expression.

    Raises:
        SpecValidationError: on a parse failure, an unknown name or function, or a non-finite result
    """
    try:
        tree = _GRAMMAR.parse(text)
    except ParseError as e:
        raise SpecValidationError("malformed expression", field_path=field_path, expected="expression", found=f"{text!r} (column {e.column()})")
    value = ExpressionVisitor(parameters or {}, field_path).visit(tree)
    if not cmath.isfinite(value):
        raise SpecValidationError("expression is not finite", field_path=field_path, expected="finite value", found=text)
    return value


def _scalar(value: Any, parameters: Mapping[str, complex], path: str) -> complex:
    if isinstance(value, bool) or value is None:
        raise SpecValidationError("entry must be numeric", field_path=path, expected="number or expression", found=value)
    if isinstance(value, (int, float)):
        if not math.isfinite(value):
            raise SpecValidationError("entry is not finite", field_path=path, expected="finite number", found=value)
        return complex(value)
    if isinstance(value, str):
        return evaluate_expression(value, parameters, path)
    raise SpecValidationError("entry must be numeric", field_path=path, expected="number or expression", found=value)


def _entry(value: Any, parameters: Mapping[str, complex], path: str) -> complex:
    """A number, an expression string, or an [re, im] pair whose parts are either."""
    if isinstance(value, list):
        if len(value) != 2:
            raise SpecValidationError("complex entry must be an [re, im] pair", field_path=path, expected="[re, im]", found=value)
        re_part = _scalar(value[0], parameters, f"{path}[0]")
        im_part = _scalar(value[1], parameters, f"{path}[1]")
        return re_part + 1j * im_part
    return _scalar(value, parameters, path)


def _matrix(rows: Any, shape, parameters: Mapping[str, complex], path: str, real: bool) -> np.ndarray:
    if not isinstance(rows, list):
        raise SpecValidationError("matrix must be a list of rows", field_path=path, expected="list of rows", found=type(rows).__name__)
    if not rows:
        if shape[0] != 0 and shape[1] != 0:
            raise DimensionError(f"{path} is empty", field_path=path, expected=f"{shape[0]} x {shape[1]}", found="0 x 0")
        return np.zeros(shape, dtype=complex)
    if len(rows) != shape[0] or any(not isinstance(row, list) or len(row) != shape[1] for row in rows):
        cols = len(rows[0]) if isinstance(rows[0], list) else "?"
        raise DimensionError(f"{path} has the wrong shape", field_path=path, expected=f"{shape[0]} x {shape[1]}", found=f"{len(rows)} x {cols}")
    X = np.zeros(shape, dtype=complex)
    for i, row in enumerate(rows):
        for j, value in enumerate(row):
            entry_path = f"{path}[{i}][{j}]"
            X[i, j] = _entry(value, parameters, entry_path)
            if real and X[i, j].imag != 0:
                raise SpecValidationError("real representation requires real entries", field_path=entry_path, expected="real number", found=value)
    return X


def _dimension(doc: Mapping, key: str, minimum: int) -> int:
    value = doc.get(key)
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise SpecValidationError(f"'{key}' must be an integer >= {minimum}", field_path=key, expected=f"integer >= {minimum}", found=value)
    return value


def _parameters(raw: Any) -> Dict[str, complex]:
    """Parameters are evaluated in order and may refer to earlier ones."""
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise SpecValidationError("parameters must be a mapping", field_path="parameters", expected="mapping", found=type(raw).__name__)
    values: Dict[str, complex] = {}
    for name, value in raw.items():
        if name in CONSTANTS or name in FUNCTIONS:
            raise SpecValidationError("parameter shadows a built-in name", field_path=f"parameters.{name}", found=name)
        values[name] = _entry(value, values, f"parameters.{name}")
    return values


def parse_spec(data: Union[bytes, str]) -> SystemSpecFile:
    """
    Parse and validate a JSON spec document.

    Args:
        data: UTF-8 JSON bytes or an already decoded string

    Returns:
        SystemSpecFile with every matrix evaluated

    Raises:
        SpecValidationError: with the path of the offending field
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise SpecValidationError("spec is not valid UTF-8", field_path="$", found=str(e))
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise SpecValidationError("spec is not valid JSON", field_path="$", expected="JSON object", found=f"line {e.lineno} column {e.colno}: {e.msg}")
    if not isinstance(doc, dict):
        raise SpecValidationError("spec must be a JSON object", field_path="$", expected="object", found=type(doc).__name__)

    representation = doc.get("representation")
    if representation not in REPRESENTATIONS:
        raise SpecValidationError("unknown representation", field_path="representation", expected=list(REPRESENTATIONS), found=representation)
    fields = MATRIX_FIELDS[representation]
    unknown = sorted(set(doc) - set(TOP_LEVEL_FIELDS) - set(fields))
    if unknown:
        raise SpecValidationError("unknown field", field_path=unknown[0], expected=sorted(set(TOP_LEVEL_FIELDS) | set(fields)), found=unknown)

    n = _dimension(doc, "n", 1)
    m = _dimension(doc, "m", 0)
    parameters = _parameters(doc.get("parameters"))
    real = representation == "real"

    matrices = {}
    for key, (dims, optional) in fields.items():
        if key not in doc:
            if not optional:
                raise SpecValidationError(f"missing matrix '{key}'", field_path=key, expected=f"{dims[0]} x {dims[1]} matrix", found=None)
            continue
        matrices[key] = _matrix(doc[key], expected_shape(dims, n, m), parameters, key, real)

    tolerances = doc.get("tolerances") or {}
    if not isinstance(tolerances, dict):
        raise SpecValidationError("tolerances must be a mapping", field_path="tolerances", expected="mapping", found=type(tolerances).__name__)
    for key, value in tolerances.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SpecValidationError("tolerance must be a number", field_path=f"tolerances.{key}", expected="number", found=value)

    for key in ("name", "description"):
        if doc.get(key) is not None and not isinstance(doc[key], str):
            raise SpecValidationError(f"'{key}' must be a string", field_path=key, expected="string", found=doc[key])

    return SystemSpecFile(
        representation=representation,
        n=n,
        m=m,
        name=doc.get("name"),
        description=doc.get("description"),
        tolerances={k: float(v) for k, v in tolerances.items()},
        matrices=matrices,
    )


class ParserStage(BaseStage):
    """
    The Parser Stage turns the raw spec text into a validated SystemSpecFile
    and resolves the tolerance policy for the rest of the pipeline.
    """

    def __init__(self):
        super().__init__(stage_id="Parser Stage")

    def run(self, context: SystemContext) -> SystemContext:
        self.log_trace(context, "Starting spec parsing", {"spec_length": len(context.raw_spec), "spec_path": context.spec_path})

        spec = parse_spec(context.raw_spec)
        context.spec = spec
        context.checksum = spec_checksum(spec)
        context.tolerance = resolve_tolerance(spec.tolerances, context.cli_overrides, context.config_path)

        self.log_trace(context, "Parsing completed", {
            "representation": spec.representation,
            "n": spec.n,
            "m": spec.m,
            "matrices": sorted(spec.matrices),
            "tolerance": context.tolerance.model_dump(),
        })
        return context
