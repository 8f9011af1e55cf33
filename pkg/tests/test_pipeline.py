#!/usr/bin/env python3
"""
Tests for the stage pipeline, tolerance resolution, the report and the CLI.
"""

import io
import json
import os
import tempfile
import unittest
import warnings
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path
from unittest import mock

from numpy.testing import assert_allclose

from qkalman.cli import main
from qkalman.errors import SpecIOError, SpecValidationError, ToleranceError
from qkalman.models.report import DecompositionReport, decode_matrix
from qkalman.models.system_context import OutputFormat
from qkalman.pipeline_controller import PipelineController
from qkalman.utils.config import env_overrides, load_config_file, resolve_tolerance
from tests.helpers import CORPUS_DIR

EXAMPLE2_PATH = CORPUS_DIR / "example2_complex.json"
EXAMPLE1_PATH = CORPUS_DIR / "example1_passive.json"


def run_cli(*argv):
    """Run the CLI, returning (exit code, stdout, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        try:
            main(list(argv))
        except SystemExit as e:
            return e.code, out.getvalue(), err.getvalue()
    return 0, out.getvalue(), err.getvalue()


class TestPipelineController(unittest.TestCase):

    def setUp(self):
        self.example2 = EXAMPLE2_PATH.read_text()

    def test_full_run(self):
        context = PipelineController(quiet=True).run_pipeline(self.example2, str(EXAMPLE2_PATH))
        self.assertEqual(context.result.dims(), {"n1": 1, "n2": 0, "n3": 1, "na": 0, "nb": 1})
        self.assertEqual([r.representation for r in context.realizability], ["complex", "real"])
        self.assertEqual(len(context.bae_reports), 2)
        response = context.responses[0]
        self.assertEqual(response["format"], "json")
        self.assertEqual(json.loads(response["content"])["dims"]["n3"], 1)
        stage_ids = {entry["stage_id"] for entry in context.trace_log}
        self.assertIn("Analysis Stage", stage_ids)

    def test_residual_checks_are_traced(self):
        """Stages trace their residuals next to the tolerance knob they are held to."""
        context = PipelineController(quiet=True).run_pipeline(self.example2)
        entries = {entry["operation"]: entry for entry in context.trace_log}
        orthogonality = entries["Subspace orthogonality"]
        self.assertEqual(orthogonality["stage_id"], "Subspace Stage")
        self.assertEqual(orthogonality["details"]["zero_tol"], 1e-9)
        self.assertTrue(orthogonality["details"]["within_tolerance"])
        canonical = entries["Canonical form residuals"]["details"]
        self.assertIn("markov_h_identity", canonical["residuals"])
        self.assertLessEqual(canonical["worst_residual"], 1e-9)
        json.dumps([orthogonality, entries["Canonical form residuals"]])

    def test_check_only(self):
        """Check mode stops after the model and reports only realizability."""
        controller = PipelineController(check_only=True, quiet=True)
        self.assertEqual([s.stage_id for s in controller.stages], ["Parser Stage", "Model Stage", "Report Stage"])
        context = controller.run_pipeline(self.example2)
        self.assertIsNone(context.result)
        self.assertTrue(context.report.passed)
        self.assertEqual(context.report.dims, {})

    def test_passive_spec_cross_checks_both_paths(self):
        context = PipelineController(quiet=True).run_pipeline(EXAMPLE1_PATH.read_text())
        self.assertTrue(context.cross_check["agree"])
        self.assertEqual(context.result.source, "passive")
        self.assertIsNotNone(context.passive_dfs)
        self.assertEqual([r.representation for r in context.realizability], ["passive", "complex", "real"])

    def test_symmetrized_input_is_reported(self):
        doc = json.loads(self.example2)
        doc["Omega_minus"] = [[0, 1 + 1e-8], [1, 0]]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            context = PipelineController(check_only=True, quiet=True).run_pipeline(json.dumps(doc))
        self.assertIn("SYMMETRIZED", [f.rule_id for f in context.findings])
        self.assertTrue(context.report.passed)

    def test_failing_stage_is_tagged(self):
        doc = json.loads(self.example2)
        doc["Cminus"] = [[1, 0, 0]]
        controller = PipelineController(quiet=True)
        with self.assertRaises(SpecValidationError) as ctx:
            controller.run_pipeline(json.dumps(doc))
        self.assertEqual(ctx.exception.stage, "Parser Stage")
        self.assertEqual(controller.last_context.trace_log[-1]["operation"], "Stage failed")

    def test_progress_lines_go_to_stderr(self):
        err = io.StringIO()
        with redirect_stderr(err):
            PipelineController(check_only=True).run_pipeline(self.example2)
        self.assertIn("Running Model Stage...", err.getvalue())
        self.assertIn("Analysis pipeline completed.", err.getvalue())


class TestTolerances(unittest.TestCase):

    def test_defaults(self):
        tol = resolve_tolerance(environ={}, config_path=None)
        self.assertEqual(tol.rank_tol, 1e-10)

    def test_precedence(self):
        """config < spec < environment < CLI."""
        with tempfile.TemporaryDirectory() as tmp:
            config = Path(tmp) / "config.yaml"
            config.write_text("tolerances:\n  zero_tol: 1.0e-7\n  rank_tol: 1.0e-7\n  eig_tol: 1.0e-7\n")
            tol = resolve_tolerance(
                spec_tolerances={"rank_tol": 1e-8, "eig_tol": 1e-8},
                cli_overrides={"eig_tol": 1e-6, "zero_tol": None},
                config_path=str(config),
                environ={"QKALMAN_TOL_RANK": "1e-9", "QKALMAN_TOL_EIG": "1e-9"},
            )
        self.assertEqual(tol.zero_tol, 1e-7)
        self.assertEqual(tol.rank_tol, 1e-9)
        self.assertEqual(tol.eig_tol, 1e-6)

    def test_environment_parsing(self):
        self.assertEqual(env_overrides({"QKALMAN_TOL_ZERO": "1e-6", "QKALMAN_TOL_EIG": " "}), {"zero_tol": 1e-6})
        with self.assertRaises(SpecValidationError):
            env_overrides({"QKALMAN_TOL_RANK": "tiny"})

    def test_bad_values_and_knobs(self):
        with self.assertRaises(SpecValidationError):
            resolve_tolerance({"zero_tol": -1.0}, environ={})
        with self.assertRaises(SpecValidationError):
            resolve_tolerance({"tiny_tol": 1.0}, environ={})

    def test_config_file_errors(self):
        with self.assertRaises(SpecIOError):
            load_config_file("/nonexistent/qkalman/config.yaml")
        with tempfile.TemporaryDirectory() as tmp:
            config = Path(tmp) / "config.yaml"
            config.write_text("- just\n- a list\n")
            with self.assertRaises(SpecValidationError):
                load_config_file(str(config))

    def test_environment_reaches_the_report(self):
        with mock.patch.dict(os.environ, {"QKALMAN_TOL_EIG": "1e-6"}):
            context = PipelineController(quiet=True).run_pipeline(EXAMPLE2_PATH.read_text())
        self.assertEqual(context.report.tolerances["eig_tol"], 1e-6)


class TestReport(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.context = PipelineController(quiet=True).run_pipeline(EXAMPLE2_PATH.read_text())

    def test_json_round_trip(self):
        """The JSON report validates back into the model and its matrices decode to the computed ones."""
        content = self.context.responses[0]["content"]
        report = DecompositionReport.model_validate(json.loads(content))
        self.assertEqual(report.model_dump(mode="json"), json.loads(content))
        self.assertEqual(report.dims, self.context.report.dims)
        assert_allclose(decode_matrix(report.transformations["T"]), self.context.result.T)
        assert_allclose(decode_matrix(report.rearranged["A"]), self.context.result.real_form.rearranged_A)

    def test_text_rendering(self):
        context = PipelineController(output_format=OutputFormat.TEXT, quiet=True).run_pipeline(EXAMPLE2_PATH.read_text())
        text = context.responses[0]["content"]
        self.assertIn("• co modes (n1): 1", text)
        self.assertIn("• h-sector (n3): 1 (n_a=0, n_b=1)", text)
        self.assertIn("• q_h1 = - 1.0000 p2", text)
        self.assertIn("• p_h1 = 1.0000 q2", text)
        self.assertIn("• QND variables: p_h1", text)
        self.assertIn("• p_in->q_out: BAE", text)


class TestCLI(unittest.TestCase):

    def test_decompose_prints_json(self):
        code, out, _ = run_cli("--quiet", "decompose", str(EXAMPLE2_PATH))
        self.assertEqual(code, 0)
        self.assertEqual(json.loads(out)["dims"]["n1"], 1)

    def test_check(self):
        code, out, _ = run_cli("--quiet", "check", str(EXAMPLE1_PATH))
        self.assertEqual(code, 0)
        self.assertTrue(json.loads(out)["passed"])

    def test_out_file_and_trace(self):
        with tempfile.TemporaryDirectory() as tmp:
            target = Path(tmp) / "report.txt"
            code, out, err = run_cli("--quiet", "--trace", "decompose", str(EXAMPLE2_PATH), "--format", "text", "--out", str(target))
            self.assertEqual(code, 0)
            self.assertEqual(out, "")
            self.assertIn("Kalman Decomposition Report", target.read_text())
        self.assertIn("Report saved to:", err)
        trace_lines = [line for line in err.splitlines() if line.startswith("{")]
        self.assertTrue(trace_lines)
        self.assertEqual(json.loads(trace_lines[0])["stage_id"], "Parser Stage")

    def test_missing_spec_exits_3(self):
        code, _, err = run_cli("--quiet", "decompose", "/nonexistent/spec.json")
        self.assertEqual(code, 3)
        self.assertIn("Error:", err)

    def test_invalid_spec_exits_1(self):
        with tempfile.TemporaryDirectory() as tmp:
            spec = Path(tmp) / "bad.json"
            doc = json.loads(EXAMPLE2_PATH.read_text())
            doc["Cminus"] = [[1, 0, 0]]
            spec.write_text(json.dumps(doc))
            code, _, err = run_cli("--quiet", "decompose", str(spec))
        self.assertEqual(code, 1)
        self.assertIn("Cminus", err)

    def test_structural_failure_exits_2(self):
        failure = ToleranceError("zero pattern violated", residuals={"zero_B_cbar_obar": 1e-3})
        with mock.patch("qkalman.stages.decomposition_stage.decompose", side_effect=failure):
            code, _, err = run_cli("--quiet", "decompose", str(EXAMPLE2_PATH))
        self.assertEqual(code, 2)
        self.assertIn("zero pattern violated", err)

    def test_invalid_tolerance_flag_exits_1(self):
        code, _, _ = run_cli("--quiet", "decompose", str(EXAMPLE2_PATH), "--tol-rank", "-1")
        self.assertEqual(code, 1)

    def test_unknown_corpus_entry_exits_1(self):
        code, _, err = run_cli("corpus", "run", "--only", "no_such_system")
        self.assertEqual(code, 1)
        self.assertIn("no_such_system", err)


if __name__ == "__main__":
    unittest.main()
