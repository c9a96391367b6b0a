# This file is part of ocrsmech.
#
# See the COPYRIGHT file at the top-level directory of this distribution
# for details of code ownership.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.
"""Test feasibility constraints and two-level processes.
"""

import unittest

import numpy as np

import lsst.utils.tests

import ocrsmech
from ocrsmech.constraints import constraintFromDict


class ConstraintTestCase(lsst.utils.tests.TestCase):
    """Test the constraint variants and their polytopes."""

    def test_single_copy(self):
        constraint = ocrsmech.SingleCopyPerItem(3, 2)

        self.assertEqual(constraint.shape, (3, 2))
        self.assertTrue(ocrsmech.isFeasibleSet(constraint, [(0, 0), (1, 1)]))
        self.assertFalse(ocrsmech.isFeasibleSet(constraint, [(0, 0), (2, 0)]))
        self.assertTrue(ocrsmech.isFeasibleSet(constraint, []))

    def test_k_uniform(self):
        constraint = ocrsmech.KUniformPerAgent(3, [1, 2])

        self.assertTrue(ocrsmech.isFeasibleSet(constraint, [(0, 2), (1, 0), (1, 1)]))
        self.assertFalse(ocrsmech.isFeasibleSet(constraint, [(0, 0), (0, 1)]))
        self.assertFalse(ocrsmech.isFeasibleSet(constraint, [(1, 0), (1, 1), (1, 2)]))

    def test_knapsack(self):
        weights = [[0.6, 0.3], [0.5, 0.4]]
        constraint = ocrsmech.Knapsack(weights, 1.0)

        np.testing.assert_array_equal(constraint.heavy, [[True, False], [False, False]])
        self.assertTrue(ocrsmech.isFeasibleSet(constraint, [(0, 0), (0, 1)]))
        self.assertFalse(ocrsmech.isFeasibleSet(constraint, [(0, 0), (1, 0)]))
        # exactly at capacity
        self.assertTrue(ocrsmech.isFeasibleSet(constraint, [(0, 0), (1, 1)]))
        self.assertTrue(ocrsmech.isFeasibleSet(constraint, [(1, 0), (1, 1)]))

        with self.assertRaises(ValueError):
            ocrsmech.Knapsack([[1.5]], 1.0)
        with self.assertRaises(ValueError):
            ocrsmech.Knapsack([[0.5]], 0.0)

    def test_multichoice_knapsack(self):
        constraint = ocrsmech.MultiChoiceKnapsack([[0.2, 0.2], [0.3, 0.3]], 1.0)

        self.assertTrue(ocrsmech.isFeasibleSet(constraint, [(0, 0), (1, 1)]))
        self.assertFalse(ocrsmech.isFeasibleSet(constraint, [(0, 0), (0, 1)]))

    def test_explicit_slice(self):
        rows = [ocrsmech.SliceConstraint("explicit", 3, maximalSets=[[0, 1], [2]])]
        columns = [ocrsmech.SliceConstraint("uniform", 1, k=1) for _ in range(3)]
        constraint = ocrsmech.VerticalHorizontal(rows, columns)

        self.assertFalse(constraint.hasLinearDescription)
        self.assertTrue(ocrsmech.isFeasibleSet(constraint, [(0, 0), (0, 1)]))
        self.assertTrue(ocrsmech.isFeasibleSet(constraint, [(0, 2)]))
        self.assertFalse(ocrsmech.isFeasibleSet(constraint, [(0, 1), (0, 2)]))

        process = ocrsmech.TwoLevelProcess([[1.0]], [[[0.5, 0.5, 0.5]]])
        with self.assertRaises(ocrsmech.UnsupportedConstraintError):
            ocrsmech.checkProcessFeasibility(process, constraint)

    def test_selection_out_of_range(self):
        constraint = ocrsmech.SingleCopyPerItem(2, 2)

        with self.assertRaises(ocrsmech.DimensionMismatchError):
            ocrsmech.isFeasibleSet(constraint, [(2, 0)])
        with self.assertRaises(ocrsmech.DimensionMismatchError):
            ocrsmech.isFeasibleSet(constraint, np.zeros((3, 2), dtype=bool))

    def test_batch_matches_single(self):
        constraint = ocrsmech.Knapsack([[0.4, 0.3], [0.5, 0.2]], 1.0)
        rng = np.random.default_rng(12345)
        selected = rng.random((200, 2, 2)) < 0.5

        batch = constraint.isFeasibleBatch(selected)
        single = [constraint.isFeasible(s) for s in selected]
        np.testing.assert_array_equal(batch, single)

    def test_dict_round_trip(self):
        constraints = [ocrsmech.SingleCopyPerItem(2, 3),
                       ocrsmech.KUniformPerAgent(2, [1, 2]),
                       ocrsmech.Knapsack([[0.1, 0.9]], 1.0),
                       ocrsmech.MultiChoiceKnapsack([[0.1, 0.9]], 1.0),
                       ocrsmech.VerticalHorizontal(
                           [ocrsmech.SliceConstraint("uniform", 2, k=1)],
                           [ocrsmech.SliceConstraint("explicit", 1, maximalSets=[[0]]) for _ in range(2)])]
        for constraint in constraints:
            self.assertEqual(constraintFromDict(constraint.toDict()), constraint)

        with self.assertRaises(ocrsmech.UnsupportedConstraintError):
            constraintFromDict({"variant": "Matroid", "params": {}})


class ProcessFeasibilityTestCase(lsst.utils.tests.TestCase):
    """Test checkProcessFeasibility against hand-computed slacks."""

    def test_single_copy_slack(self):
        process = ocrsmech.TwoLevelProcess([[0.5, 0.5], [1.0]],
                                           [[[0.2, 0.4], [0.6, 0.0]], [[0.5, 0.9]]])
        constraint = ocrsmech.SingleCopyPerItem(2, 2)

        result = ocrsmech.checkProcessFeasibility(process, constraint)
        self.assertFloatsAlmostEqual(process.marginalWeights, np.array([[0.4, 0.2], [0.5, 0.9]]),
                                     atol=1e-15)
        # column 1 has weight 0.2 + 0.9
        self.assertFalse(result.feasible)
        self.assertFloatsAlmostEqual(result.maxViolation, 0.1, atol=1e-12)

    def test_knapsack_rows(self):
        constraint = ocrsmech.Knapsack([[0.5, 0.5]], 1.0)
        inside = ocrsmech.TwoLevelProcess([[1.0]], [[[1.0, 1.0]]])
        mixed = ocrsmech.TwoLevelProcess([[0.5, 0.5]], [[[1.0, 1.0], [0.0, 0.1]]])

        self.assertTrue(ocrsmech.checkProcessFeasibility(inside, constraint).feasible)
        self.assertTrue(ocrsmech.checkProcessFeasibility(mixed, constraint).feasible)
        heavy = ocrsmech.Knapsack([[0.8, 0.5]], 1.0)
        self.assertFalse(ocrsmech.checkProcessFeasibility(inside, heavy).feasible)

    def test_shape_mismatch(self):
        process = ocrsmech.TwoLevelProcess([[1.0]], [[[0.5, 0.5]]])

        with self.assertRaises(ocrsmech.DimensionMismatchError):
            ocrsmech.checkProcessFeasibility(process, ocrsmech.SingleCopyPerItem(2, 2))


class TwoLevelProcessTestCase(lsst.utils.tests.TestCase):
    """Test sampling of two-level processes."""

    def test_bad_inputs(self):
        with self.assertRaises(ValueError):
            ocrsmech.TwoLevelProcess([[0.5, 0.6]], [[[0.1], [0.2]]])
        with self.assertRaises(ocrsmech.DimensionMismatchError):
            ocrsmech.TwoLevelProcess([[1.0]], [[[0.1], [0.2]]])
        with self.assertRaises(ValueError):
            ocrsmech.TwoLevelProcess([[1.0]], [[[1.5]]])

    def test_activation_rates(self):
        process = ocrsmech.TwoLevelProcess([[0.3, 0.7], [1.0]],
                                           [[[0.9, 0.1], [0.2, 0.6]], [[0.5, 0.25]]])
        b = 0.8
        nRuns = 200000
        active, rowTypes = ocrsmech.sampleActiveSets(process, b, np.random.default_rng(2021), nRuns)

        self.assertEqual(active.shape, (nRuns, 2, 2))
        self.assertTrue(np.all(rowTypes[:, 1] == 0))
        expected = b*process.marginalWeights
        sigma = np.sqrt(expected*(1.0 - expected)/nRuns)
        self.assertTrue(np.all(np.abs(active.mean(axis=0) - expected) <= 4.0*sigma))
        self.assertFloatsAlmostEqual((rowTypes[:, 0] == 0).mean(), 0.3, atol=4.0*np.sqrt(0.21/nRuns))

    def test_single_sample(self):
        process = ocrsmech.TwoLevelProcess([[1.0]], [[[1.0, 0.0]]])
        activeSet = ocrsmech.sampleActiveSet(process, 1.0, np.random.default_rng(1))

        self.assertEqual(activeSet.cells(), [(0, 0)])
        with self.assertRaises(ValueError):
            ocrsmech.sampleActiveSet(process, 1.5, np.random.default_rng(1))


class TestMemory(lsst.utils.tests.MemoryTestCase):
    pass


def setup_module(module):
    lsst.utils.tests.init()


if __name__ == "__main__":
    lsst.utils.tests.init()
    unittest.main()
