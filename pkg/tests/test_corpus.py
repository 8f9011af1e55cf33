#!/usr/bin/env python3
"""
Acceptance tests on the bundled corpus, plus the brute-force dimension oracle.
"""

import io
import unittest
from contextlib import redirect_stderr, redirect_stdout

import numpy as np
from numpy.testing import assert_allclose

from qkalman.errors import SpecIOError, SpecValidationError
from qkalman.pipeline_controller import PipelineController
from qkalman.subspaces import image, kalman_subspaces, same_subspace
from qkalman.utils.corpus import corpus_run, load_manifest, lookup, matches, run_entry
from tests.helpers import CORPUS_DIR, oracle_dims, planted_system, random_split


def decomposed(spec_name: str):
    return PipelineController(quiet=True).run_pipeline((CORPUS_DIR / spec_name).read_text())


class TestCorpusEntries(unittest.TestCase):

    def test_every_entry_matches_its_goldens(self):
        entries = load_manifest()
        self.assertEqual(len(entries), 7)
        for entry in entries:
            with self.subTest(entry=entry.name):
                outcome = run_entry(entry)
                self.assertTrue(outcome.passed, "\n".join(outcome.failures))
                self.assertEqual(outcome.exit_code, 0)

    def test_h_sector_split_pinned_only_when_unique(self):
        """Entries with n3 > 1 leave na/nb free; the report still splits n3 exactly."""
        for entry in load_manifest():
            with self.subTest(entry=entry.name):
                if entry.dims.get("n3", 0) > 1:
                    self.assertNotIn("na", entry.dims)
                    self.assertNotIn("nb", entry.dims)
                dims = decomposed(entry.spec).report.dims
                self.assertEqual(dims["na"] + dims["nb"], dims["n3"])

    def test_corpus_run_output(self):
        out, err = io.StringIO(), io.StringIO()
        with redirect_stdout(out), redirect_stderr(err):
            outcomes = corpus_run(only="example2_complex")
        self.assertEqual([o.name for o in outcomes], ["example2_complex"])
        self.assertEqual(out.getvalue().splitlines()[0], "PASS example2_complex")
        self.assertIn("1/1 corpus systems passed.", err.getvalue())

    def test_unknown_entry_and_missing_manifest(self):
        with self.assertRaises(SpecValidationError):
            corpus_run(only="no_such_system", verbose=False)
        with self.assertRaises(SpecIOError):
            load_manifest("/nonexistent/manifest.yaml")

    def test_lookup_and_matches(self):
        document = {"bae": [{"verdict": True}], "A": {"data": [[1.0, 2.0]]}}
        self.assertTrue(lookup(document, "bae.0.verdict"))
        self.assertEqual(lookup(document, "A.data.0.1"), 2.0)
        self.assertTrue(matches([1.0, 2.0 + 1e-12], [1, 2], 1e-9))
        self.assertFalse(matches([1.0], [1.0, 2.0], 1e-9))
        self.assertTrue(matches(True, True, 1e-9))
        self.assertTrue(matches(["p_h1"], ["p_h1"], 1e-9))


class TestTwoOscillatorSystem(unittest.TestCase):
    """Two oscillators at ±Ω coupled through one cavity; the checks hold for any admissible basis choice."""

    OMEGA, G = 1.0, 0.5

    @classmethod
    def setUpClass(cls):
        cls.context = decomposed("two_oscillator_bae.json")
        cls.result = cls.context.result

    def test_qnd_span(self):
        """p_h spans {(p2 - p1)/√2, (q1 + q2)/√2} in the coordinates (q1, q2, q3, p1, p2, p3)."""
        found = image(np.column_stack([self.result.variables["p_h1"], self.result.variables["p_h2"]]))
        expected = image(np.column_stack([
            np.array([0, 0, 0, -1, 1, 0]) / np.sqrt(2),
            np.array([1, 1, 0, 0, 0, 0]) / np.sqrt(2),
        ]))
        self.assertTrue(same_subspace(found, expected, 1e-9))

    def test_qnd_dynamics_rotate_at_omega(self):
        """The p_h block is skew with off-diagonal magnitude Ω and receives no input."""
        A_h22 = self.result.real_form.blocks["A_h22"]
        assert_allclose(A_h22, -A_h22.T, atol=1e-9)
        self.assertAlmostEqual(abs(A_h22[0, 1]), self.OMEGA, places=9)
        n3 = self.result.n3
        self.assertLessEqual(np.abs(self.result.real_form.rearranged_B[-n3:]).max(), 1e-9)

    def test_q_h_coupling_strength(self):
        """The q_h ← x_co block has rank one with singular value 2√2 g."""
        singular = np.linalg.svd(self.result.real_form.blocks["A12"], compute_uv=False)
        self.assertAlmostEqual(singular[0], 2 * np.sqrt(2) * self.G, places=9)
        self.assertLessEqual(singular[1], 1e-9)

    def test_bae_verdicts(self):
        self.assertTrue(all(report.verdict for report in self.context.bae_reports))


class TestMarkovCriterion(unittest.TestCase):

    def test_markov_verdict_agrees_with_sampling(self):
        """On every corpus system the Markov-parameter verdict matches the sampled transfer function."""
        for entry in load_manifest():
            with self.subTest(entry=entry.name):
                context = decomposed(entry.spec)
                for report in context.bae_reports:
                    self.assertTrue(report.samples_agree, report.direction)


class TestDimensionOracle(unittest.TestCase):

    def test_against_full_krylov_ranks(self):
        """SVD-based subspace dimensions match a gap-based rank count of the full Krylov matrices."""
        rng = np.random.default_rng(2027)
        for _ in range(50):
            split = random_split(rng, max_n=3)
            system = planted_system(rng, *split)
            spaces = kalman_subspaces(system)
            self.assertEqual((spaces.n1, spaces.n2, spaces.n3), oracle_dims(system))
            self.assertEqual((spaces.n1, spaces.n2, spaces.n3), split[:3])


if __name__ == "__main__":
    unittest.main()
