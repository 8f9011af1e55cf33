#!/usr/bin/env python3
"""
Tests for mode classification, the BAE check, the special-case flags and the passive DFS report.
"""

import unittest

import numpy as np

from qkalman.analysis import bae_check, classify_modes, passive_dfs_report, special_case_flags
from qkalman.decomposition import decompose, decompose_passive
from qkalman.system_model import build_general, build_passive
from tests.helpers import planted_system

EXAMPLE2 = dict(omega_minus=[[0, 1], [1, 0]], omega_plus=[[0, 1], [1, 0]], c_minus=[[1, 0]], c_plus=[[0, 0]])


class TestClassification(unittest.TestCase):

    def test_example2_modes(self):
        """Mode a2 is a QMFS: p_h1 is a QND variable conjugate to q_h1."""
        modes = classify_modes(decompose(build_general(**EXAMPLE2)))
        self.assertEqual(modes.qnd_variables, ["p_h1"])
        self.assertEqual(modes.qmfs, ["p_h1"])
        self.assertEqual(modes.conjugate_pairing, {"q_h1": "p_h1"})
        self.assertEqual(modes.co_modes, [("q_co1", "p_co1")])
        self.assertEqual(modes.df_modes, [])
        self.assertLessEqual(modes.residuals["qmfs_dynamics"], 1e-12)

    def test_df_modes_are_decoupled(self):
        rng = np.random.default_rng(51)
        for _ in range(10):
            result = decompose(planted_system(rng, 1, 2, 1, 1))
            modes = classify_modes(result)
            self.assertEqual(modes.df_modes, [("q_df1", "p_df1"), ("q_df2", "p_df2")])
            self.assertTrue(modes.df_decoupled)
            self.assertEqual(len(modes.qnd_variables), 1)


class TestBAE(unittest.TestCase):

    def test_example2_evades_back_action(self):
        result = decompose(build_general(**EXAMPLE2))
        for direction in ("p_in->q_out", "q_in->p_out"):
            report = bae_check(result, direction)
            self.assertTrue(report.verdict)
            self.assertIsNone(report.first_nonzero_order)
            self.assertTrue(report.samples_agree)
            self.assertEqual(len(report.markov_residuals), 2)

    def test_generic_co_system_has_back_action(self):
        """A random fully coherent system mixes quadratures; the sampled Ξ agrees."""
        rng = np.random.default_rng(52)
        result = decompose(planted_system(rng, 2, 0, 0, 1))
        report = bae_check(result, "p_in->q_out")
        self.assertFalse(report.verdict)
        self.assertIsNotNone(report.first_nonzero_order)
        self.assertTrue(report.samples_agree)

    def test_no_co_subsystem(self):
        """n1 = 0 gives a vacuous true verdict."""
        result = decompose(build_general(np.diag([1.0, 2.0]), np.zeros((2, 2)), np.zeros((1, 2)), np.zeros((1, 2))))
        report = bae_check(result)
        self.assertTrue(report.verdict)
        self.assertEqual(report.markov_residuals, [])

    def test_unknown_direction(self):
        result = decompose(build_general(**EXAMPLE2))
        with self.assertRaises(ValueError):
            bae_check(result, "q_in->q_out")


class TestSpecialCases(unittest.TestCase):

    def test_uncoupled_system(self):
        """With C = 0 both hypotheses hold trivially."""
        system = build_general(np.diag([1.0, 2.0]), np.zeros((2, 2)), np.zeros((1, 2)), np.zeros((1, 2)))
        flags = special_case_flags(system, decompose(system))
        self.assertTrue(flags.omega_invariant)
        self.assertTrue(flags.output_orthogonal)
        self.assertEqual(flags.output_overlap, 0.0)

    def test_example2(self):
        """Ω annihilates Ker(O_s) and the field never touches a2, so both simplifications apply."""
        system = build_general(**EXAMPLE2)
        flags = special_case_flags(system, decompose(system))
        self.assertTrue(flags.omega_invariant)
        self.assertTrue(flags.output_orthogonal)
        self.assertLessEqual(flags.bh_ch_residual, 1e-12)
        self.assertLessEqual(flags.omega_invariance_residual, 1e-12)

    def test_conclusions_hold_whenever_hypotheses_do(self):
        rng = np.random.default_rng(53)
        for _ in range(30):
            system = planted_system(rng, 1, int(rng.integers(0, 2)), int(rng.integers(1, 3)), 1)
            flags = special_case_flags(system, decompose(system))
            if flags.omega_invariant:
                self.assertLessEqual(flags.a13_a31_residual, 1e-9)
            else:
                self.assertIsNone(flags.a13_a31_residual)
            if flags.output_orthogonal:
                self.assertLessEqual(flags.bh_ch_residual, 1e-9)


class TestPassiveDFSReport(unittest.TestCase):

    def test_example1(self):
        report = passive_dfs_report(decompose_passive(build_passive(np.eye(2), [[1, 1]])))
        self.assertFalse(report.hurwitz)
        self.assertEqual(report.dfs_dim, 1)
        self.assertTrue(report.hurwitz_consistent)
        self.assertEqual(len(report.clusters), 1)
        self.assertAlmostEqual(report.clusters[0]["eigenvalue"], -1j)
        self.assertEqual(report.clusters[0]["geometric"], 1)

    def test_general_result_has_no_report(self):
        self.assertIsNone(passive_dfs_report(decompose(build_general(**EXAMPLE2))))


if __name__ == "__main__":
    unittest.main()
