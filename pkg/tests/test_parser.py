#!/usr/bin/env python3
"""
Test harness for the spec parser using Parsimonious.
"""

import json
import unittest

import numpy as np
from numpy.testing import assert_allclose

from qkalman.errors import DimensionError, SpecValidationError
from qkalman.models.spec_file import emit_spec, spec_checksum
from qkalman.models.system_context import SystemContext
from qkalman.stages.parser_stage import ParserStage, evaluate_expression, parse_spec
from tests.helpers import CORPUS_DIR

EXAMPLE2 = {
    "name": "example2",
    "representation": "complex",
    "n": 2,
    "m": 1,
    "Omega_minus": [[0, 1], [1, 0]],
    "Omega_plus": [[0, 1], [1, 0]],
    "Cminus": [[1, 0]],
    "Cplus": [[0, 0]],
}


def document(**changes) -> str:
    doc = dict(EXAMPLE2)
    for key, value in changes.items():
        if value is None:
            doc.pop(key, None)
        else:
            doc[key] = value
    return json.dumps(doc)


class TestExpressions(unittest.TestCase):

    def test_arithmetic(self):
        """Precedence, unary minus and the power operator."""
        self.assertEqual(evaluate_expression("1 + 2*3"), 7)
        self.assertEqual(evaluate_expression("(1 + 2)*3"), 9)
        self.assertEqual(evaluate_expression("-2^2"), -4)
        self.assertEqual(evaluate_expression("2^-1"), 0.5)
        self.assertAlmostEqual(evaluate_expression("1e-3"), 0.001)

    def test_complex_literals_and_constants(self):
        self.assertEqual(evaluate_expression("0.5i"), 0.5j)
        self.assertEqual(evaluate_expression("1 - 2j"), 1 - 2j)
        self.assertEqual(evaluate_expression("i*i"), -1)
        self.assertAlmostEqual(evaluate_expression("exp(i*pi)"), -1)

    def test_functions_and_parameters(self):
        params = {"kappa": 0.25, "g": 2}
        self.assertAlmostEqual(evaluate_expression("sqrt(kappa)", params), 0.5)
        self.assertAlmostEqual(evaluate_expression("g/2 + conj(1+i)", params), 2 - 1j)
        self.assertAlmostEqual(evaluate_expression("cos(0) + sin(0)"), 1)

    def test_unknown_name_reports_field(self):
        with self.assertRaises(SpecValidationError) as ctx:
            evaluate_expression("omega + 1", field_path="Omega_minus[0][0]")
        self.assertEqual(ctx.exception.field_path, "Omega_minus[0][0]")
        self.assertEqual(ctx.exception.found, "omega")

    def test_rejections(self):
        """Unknown functions, division by zero and malformed text are validation errors."""
        for text in ("tan(1)", "1/0", "2 +", "sqrt(", "0^-1"):
            with self.assertRaises(SpecValidationError):
                evaluate_expression(text)

    def test_overflow_is_a_validation_error(self):
        """Results too large to represent are rejected with the entry's path."""
        for text in ("exp(1000)", "10^400", "2^1e400", "1e300*1e300", "(1e308 + 1e308) - 1e308"):
            with self.subTest(text=text):
                with self.assertRaises(SpecValidationError) as ctx:
                    evaluate_expression(text, field_path="Omega_minus[0][1]")
                self.assertEqual(ctx.exception.field_path, "Omega_minus[0][1]")
                self.assertEqual(ctx.exception.exit_code, 1)
        with self.assertRaises(SpecValidationError) as ctx:
            parse_spec(document(Cminus=[["exp(1000)", 0]]))
        self.assertEqual(ctx.exception.field_path, "Cminus[0][0]")


class TestParseSpec(unittest.TestCase):

    def test_example2(self):
        spec = parse_spec(document())
        self.assertEqual((spec.representation, spec.n, spec.m), ("complex", 2, 1))
        assert_allclose(spec.matrix("Omega_minus"), [[0, 1], [1, 0]])
        assert_allclose(spec.matrix("Cplus"), np.zeros((1, 2)))

    def test_bytes_input(self):
        self.assertEqual(parse_spec(document().encode("utf-8")).n, 2)

    def test_omitted_optional_blocks_are_zero(self):
        spec = parse_spec(document(Omega_plus=None, Cplus=None))
        self.assertEqual(spec.matrix("Omega_plus").shape, (2, 2))
        self.assertFalse(np.any(spec.matrix("Omega_plus")))

    def test_wrong_shape_names_the_field(self):
        """Cminus with three columns for n = 2."""
        with self.assertRaises(DimensionError) as ctx:
            parse_spec(document(Cminus=[[1, 0, 0]]))
        self.assertEqual(ctx.exception.field_path, "Cminus")
        self.assertEqual(ctx.exception.expected, "1 x 2")
        self.assertEqual(ctx.exception.exit_code, 1)

    def test_missing_and_unknown_fields(self):
        with self.assertRaises(SpecValidationError) as ctx:
            parse_spec(document(Omega_minus=None))
        self.assertEqual(ctx.exception.field_path, "Omega_minus")
        with self.assertRaises(SpecValidationError) as ctx:
            parse_spec(document(H=[[1]]))
        self.assertEqual(ctx.exception.field_path, "H")

    def test_bad_header(self):
        for changes in ({"representation": "quaternion"}, {"n": 0}, {"m": -1}, {"n": True}):
            with self.assertRaises(SpecValidationError):
                parse_spec(document(**changes))

    def test_invalid_json(self):
        with self.assertRaises(SpecValidationError) as ctx:
            parse_spec("{not json")
        self.assertEqual(ctx.exception.field_path, "$")

    def test_complex_pairs_and_expressions(self):
        spec = parse_spec(document(
            parameters={"g": 0.5, "h": "2*g"},
            Omega_minus=[[0, ["h", "g"]], [["h", "-g"], 0]],
        ))
        assert_allclose(spec.matrix("Omega_minus"), [[0, 1 + 0.5j], [1 - 0.5j, 0]])

    def test_unknown_parameter_reports_entry_path(self):
        with self.assertRaises(SpecValidationError) as ctx:
            parse_spec(document(Cminus=[["sqrt(kappa)", 0]]))
        self.assertEqual(ctx.exception.field_path, "Cminus[0][0]")

    def test_real_representation_rejects_complex_entries(self):
        doc = {"representation": "real", "n": 1, "m": 1, "H": [[1, "i"], ["i", 1]], "C": [[1, 0], [0, 1]]}
        with self.assertRaises(SpecValidationError) as ctx:
            parse_spec(json.dumps(doc))
        self.assertEqual(ctx.exception.field_path, "H[0][1]")

    def test_tolerances_must_be_numbers(self):
        with self.assertRaises(SpecValidationError):
            parse_spec(document(tolerances={"zero_tol": "small"}))
        self.assertEqual(parse_spec(document(tolerances={"zero_tol": 1e-8})).tolerances, {"zero_tol": 1e-8})


class TestEmitSpec(unittest.TestCase):

    def test_corpus_specs_survive_parse_emit_parse(self):
        """Every bundled spec re-parses from its canonical form to identical matrices."""
        for path in sorted(CORPUS_DIR.glob("*.json")):
            with self.subTest(spec=path.name):
                first = parse_spec(path.read_bytes())
                second = parse_spec(emit_spec(first))
                self.assertEqual(first.representation, second.representation)
                self.assertEqual(sorted(first.matrices), sorted(second.matrices))
                for key, value in first.matrices.items():
                    assert_allclose(second.matrices[key], value, rtol=0, atol=0)
                self.assertEqual(spec_checksum(first), spec_checksum(second))

    def test_negative_zero_is_emitted_as_zero(self):
        """An entry with a -0.0 imaginary part keeps the same checksum after a round trip."""
        first = parse_spec(document(Cminus=[["conj(1)",  0]]))
        self.assertEqual(np.copysign(1.0, first.matrices["Cminus"][0, 0].imag), -1.0)
        emitted = emit_spec(first)
        doc = json.loads(emitted)
        self.assertEqual(np.copysign(1.0, doc["Cminus"][0][0][1]), 1.0)
        self.assertNotIn(b"-0.0", emitted)
        self.assertEqual(spec_checksum(parse_spec(emitted)), spec_checksum(first))

    def test_emitted_form_has_no_expressions(self):
        spec = parse_spec((CORPUS_DIR / "case1_red_detuned.json").read_bytes())
        doc = json.loads(emit_spec(spec))
        self.assertNotIn("parameters", doc)
        self.assertAlmostEqual(doc["Cminus"][0][2][0], np.sqrt(0.2))


class TestParserStage(unittest.TestCase):

    def test_stage_populates_context(self):
        context = SystemContext(raw_spec=document(tolerances={"rank_tol": 1e-9}))
        context = ParserStage().run(context)
        self.assertEqual(context.spec.n, 2)
        self.assertEqual(context.tolerance.rank_tol, 1e-9)
        self.assertEqual(len(context.checksum), 64)
        self.assertEqual(context.trace_log[-1]["operation"], "Parsing completed")


if __name__ == "__main__":
    unittest.main()
