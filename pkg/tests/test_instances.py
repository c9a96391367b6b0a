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
"""Test instance types, their JSON form and the random generators.
"""

import copy
import os
import tempfile
import unittest

import numpy as np

import lsst.pex.config as pexConfig
import lsst.utils.tests

import ocrsmech


class InstanceTestCase(lsst.utils.tests.TestCase):
    """Test AuctionInstance, ProcurementInstance and their files."""

    def setUp(self):
        self.spaces = [ocrsmech.AgentTypeSpace([[1.0, 0.5], [0.2, 0.8]], [0.25, 0.75]),
                       ocrsmech.AgentTypeSpace([[0.3, 0.3]], [1.0])]

    def test_type_space_checks(self):
        with self.assertRaises(ValueError):
            ocrsmech.AgentTypeSpace([[1.0], [2.0]], [0.5, 0.6])
        with self.assertRaises(ValueError):
            ocrsmech.AgentTypeSpace([[1.0], [1.0]], [0.5, 0.5])
        with self.assertRaises(ValueError):
            ocrsmech.AgentTypeSpace([[-1.0]], [1.0])
        with self.assertRaises(ocrsmech.DimensionMismatchError):
            ocrsmech.AgentTypeSpace([[1.0], [2.0]], [1.0])

    def test_auction_instance(self):
        instance = ocrsmech.AuctionInstance(self.spaces, ocrsmech.SingleCopyPerItem(2, 2))

        self.assertEqual(instance.shape, (2, 2))
        self.assertEqual(instance.nTypes, [2, 1])
        reports = instance.sampleReports(np.random.default_rng(5), 1000)
        self.assertEqual(reports.shape, (1000, 2))
        self.assertTrue(np.all(reports[:, 1] == 0))

        with self.assertRaises(ocrsmech.DimensionMismatchError):
            ocrsmech.AuctionInstance(self.spaces, ocrsmech.SingleCopyPerItem(3, 2))

    def test_procurement_instance(self):
        instance = ocrsmech.ProcurementInstance([[1.0, 2.0], [0.5, 0.5]], self.spaces, 1.5)

        self.assertEqual(instance.shape, (2, 2))
        with self.assertRaises(ValueError):
            ocrsmech.ProcurementInstance([[1.0, 2.0], [0.5, 0.5]], self.spaces, -1.0)
        with self.assertRaises(ocrsmech.DimensionMismatchError):
            ocrsmech.ProcurementInstance([[1.0, 2.0]], self.spaces, 1.0)

    def test_json_files(self):
        auction = ocrsmech.AuctionInstance(self.spaces, ocrsmech.Knapsack([[0.3, 0.6], [0.2, 0.9]], 1.0))
        procurement = ocrsmech.ProcurementInstance([[1.0, 2.0], [0.5, 0.5]], self.spaces, 1.5)

        with tempfile.TemporaryDirectory() as tempDir:
            for name, instance in (("auction", auction), ("procurement", procurement)):
                path = os.path.join(tempDir, "%s.json" % (name))
                ocrsmech.writeInstance(instance, path)
                loaded = ocrsmech.readInstance(path)
                self.assertEqual(ocrsmech.instanceToDict(loaded), ocrsmech.instanceToDict(instance))

        data = ocrsmech.instanceToDict(auction)
        data["n"] = 3
        with self.assertRaises(ocrsmech.DimensionMismatchError):
            ocrsmech.instanceFromDict(data)

    def test_bundle_expansion(self):
        spaces = [ocrsmech.AgentTypeSpace([[1.0, 2.0]], [1.0])]
        instance = ocrsmech.AuctionInstance(spaces, ocrsmech.Knapsack([[0.4, 0.5]], 1.0))

        expanded, bundles = ocrsmech.expandToBundles(instance)
        self.assertEqual(bundles, [(0, ), (1, ), (0, 1)])
        self.assertIsInstance(expanded.constraint, ocrsmech.MultiChoiceKnapsack)
        self.assertFloatsAlmostEqual(expanded.typeSpaces[0].support[0], np.array([1.0, 2.0, 3.0]))
        self.assertFloatsAlmostEqual(expanded.constraint.weights[0], np.array([0.4, 0.5, 0.9]))

        # the pair overflows the knapsack and is dropped
        tight = ocrsmech.AuctionInstance(spaces, ocrsmech.Knapsack([[0.6, 0.5]], 1.0))
        _, bundles = ocrsmech.expandToBundles(tight)
        self.assertEqual(bundles, [(0, ), (1, )])

        with self.assertRaises(ocrsmech.UnsupportedConstraintError):
            ocrsmech.expandToBundles(ocrsmech.AuctionInstance(spaces, ocrsmech.SingleCopyPerItem(1, 2)))


class GeneratorTestCase(lsst.utils.tests.TestCase):
    """Test the random instance families."""

    def test_every_family(self):
        for family in ocrsmech.INSTANCE_FAMILIES:
            config = ocrsmech.InstanceGeneratorConfig()
            config.family = family
            config.nItems = 2
            instance = ocrsmech.generateInstance(config, np.random.default_rng(7))
            if family == "procurement":
                self.assertIsInstance(instance, ocrsmech.ProcurementInstance)
                self.assertEqual(instance.shape, (3, 2))
            elif family == "bundleKnapsack":
                self.assertIsInstance(instance.constraint, ocrsmech.MultiChoiceKnapsack)
                self.assertLessEqual(instance.m, 3)
            else:
                self.assertEqual(instance.shape, (3, 2))
                self.assertEqual(instance.nTypes, [2, 2, 2])

    def test_seed_determines_instance(self):
        config = ocrsmech.GenerateInstanceConfig()
        config.seed = 11
        config.generator.family = "vh"
        first = ocrsmech.GenerateInstanceTask(config=config).run().instance
        second = ocrsmech.GenerateInstanceTask(config=config).run().instance

        self.assertEqual(ocrsmech.instanceToDict(first), ocrsmech.instanceToDict(second))

    def test_config_validation(self):
        config = ocrsmech.InstanceGeneratorConfig()
        config.validate()

        self._test_misconfig(config, "valueMin", 2.0)
        self._test_misconfig(config, "valueMax", 0.0)
        self._test_misconfig(config, "weightMin", 0.9)
        config2 = copy.copy(config)
        config2.update(family="bundleKnapsack", nItems=ocrsmech.MAX_BUNDLE_ITEMS + 1)
        with self.assertRaises(pexConfig.FieldValidationError):
            config2.validate()

    def _test_misconfig(self, config, field, value):
        config2 = copy.copy(config)
        config2.update(**{field: value})
        with self.assertRaises(pexConfig.FieldValidationError):
            config2.validate()


class TestMemory(lsst.utils.tests.MemoryTestCase):
    pass


def setup_module(module):
    lsst.utils.tests.init()


if __name__ == "__main__":
    lsst.utils.tests.init()
    unittest.main()
