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
"""Test the acceptance experiments and the instance generation task.
"""

import os
import unittest

import lsst.pex.config as pexConfig
import lsst.utils.tests

import ocrsmech

ROOT = os.path.abspath(os.path.dirname(__file__))


class VerifyEndToEndTestCase(lsst.utils.tests.TestCase):
    """Test verifyEndToEnd on instances with a known optimum."""

    def test_posted_price(self):
        space = ocrsmech.AgentTypeSpace([[1.0], [2.0]], [0.5, 0.5])
        instance = ocrsmech.AuctionInstance([space], ocrsmech.SingleCopyPerItem(1, 1))
        rule = ocrsmech.SolveInterimLpTask().run(instance).rule
        config = ocrsmech.MechanismConfig()
        config.epsilon = 0.0

        report = ocrsmech.verifyEndToEnd(instance, rule, config, 20000, 4, chunkSize=5000)

        self.assertTrue(report.passed)
        self.assertIsNone(report.oracleSkipped)
        self.assertFloatsAlmostEqual(report.oracleRevenue, 1.0, atol=1e-9)
        self.assertFloatsAlmostEqual(report.lpObjective, 1.0, atol=1e-9)
        # the LP is tight here, so revenue over the optimum estimates b*c
        self.assertLessEqual(abs(report.achievedRatio - report.guaranteeRatio), 5.0*report.sigma + 1e-12)

    def test_oracle_disabled(self):
        space = ocrsmech.AgentTypeSpace([[1.0], [2.0]], [0.5, 0.5])
        instance = ocrsmech.AuctionInstance([space], ocrsmech.SingleCopyPerItem(1, 1))
        rule = ocrsmech.SolveInterimLpTask().run(instance).rule

        report = ocrsmech.verifyEndToEnd(instance, rule, ocrsmech.MechanismConfig(), 2000, 4,
                                         doOracle=False)
        self.assertEqual(report.oracleSkipped, "disabled")
        self.assertIsNone(report.oracleRevenue)


class VerifyTaskTestCase(lsst.utils.tests.TestCase):
    """Test VerifyTask on a short run of the cheaper experiments."""

    def _config(self):
        config = ocrsmech.VerifyConfig()
        config.experiments = ["lpOracle", "bernoulliDivision", "endToEnd"]
        config.nInstances = 1
        config.oracleInstances = 1
        config.trials = 4000
        config.chunkSize = 2000
        config.seed = 21
        config.bernoulli.trials = 2000
        return config

    def test_run(self):
        result = ocrsmech.VerifyTask(config=self._config()).run()

        self.assertTrue(result.passed)
        experiments = [record["experiment"] for record in result.records]
        self.assertEqual(sorted(set(experiments)), ["bernoulliDivision", "endToEnd", "lpOracle"])
        # records keep the experiment order
        self.assertEqual(experiments[0], "lpOracle")
        self.assertEqual(experiments[-1], "endToEnd")
        for record in result.records:
            self.assertEqual(tuple(record), ocrsmech.RECORD_FIELDS)

    def test_same_seed_same_records(self):
        config = self._config()
        config.experiments = ["lpOracle"]

        first = ocrsmech.VerifyTask(config=config).run().records
        second = ocrsmech.VerifyTask(config=config).run().records
        self.assertEqual(first, second)

    def test_config_validation(self):
        ocrsmech.VerifyConfig().validate()

        config = ocrsmech.VerifyConfig()
        config.experiments = ["noSuchExperiment"]
        with self.assertRaises(pexConfig.FieldValidationError):
            config.validate()

        config = ocrsmech.VerifyConfig()
        config.procurement.generator.family = "knapsack"
        with self.assertRaises(pexConfig.FieldValidationError):
            config.validate()

        config = ocrsmech.VerifyConfig()
        config.endToEnd.generator.family = "procurement"
        with self.assertRaises(pexConfig.FieldValidationError):
            config.validate()

    def test_acceptance_overrides(self):
        config = ocrsmech.VerifyConfig()
        config.load(os.path.join(ROOT, os.pardir, "config", "verifyAcceptance.py"))
        config.validate()

        self.assertEqual(list(config.experiments), list(ocrsmech.VerifyConfig().experiments))
        self.assertEqual(config.nInstances, 20)
        self.assertEqual(config.oracleInstances, 50)
        self.assertEqual((config.gridAgents, config.gridItems, config.gridTypes), (5, 5, 3))
        self.assertEqual(config.trials, 200000)
        self.assertEqual(config.bernoulli.trials, 1000000)
        self.assertEqual(list(zip(config.bernoulli.p0List, config.bernoulli.p1List)),
                         [(0.1, 0.6), (0.25, 0.5), (0.4, 0.9)])


class GenerateInstanceTaskTestCase(lsst.utils.tests.TestCase):
    """Test GenerateInstanceTask."""

    def test_run(self):
        config = ocrsmech.GenerateInstanceConfig()
        config.seed = 17
        config.generator.family = "procurement"
        config.generator.nAgents = 3
        config.generator.nItems = 1

        first = ocrsmech.GenerateInstanceTask(config=config).run().instance
        second = ocrsmech.GenerateInstanceTask(config=config).run().instance
        self.assertEqual(first.kind, "procurement")
        self.assertEqual(first.shape, (3, 1))
        self.assertEqual(ocrsmech.instanceToDict(first), ocrsmech.instanceToDict(second))


class TestMemory(lsst.utils.tests.MemoryTestCase):
    pass


def setup_module(module):
    lsst.utils.tests.init()


if __name__ == "__main__":
    lsst.utils.tests.init()
    unittest.main()
