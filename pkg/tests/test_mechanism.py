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
"""Test the auction and procurement mechanisms.
"""

import unittest

import numpy as np

import lsst.pex.config as pexConfig
import lsst.pipe.base as pipeBase
import lsst.utils.tests

import ocrsmech


def _solvedInstance(family, seed, **kwargs):
    generator = ocrsmech.InstanceGeneratorConfig()
    generator.update(family=family, **kwargs)
    instance = ocrsmech.generateInstance(generator, np.random.default_rng(seed))
    return instance, ocrsmech.SolveInterimLpTask().run(instance).rule


def _mechanismConfig(**kwargs):
    config = ocrsmech.MechanismConfig()
    config.update(**kwargs)
    return config


class KeepCoinTestCase(lsst.utils.tests.TestCase):
    """Test keepCoin in its three modes."""

    def setUp(self):
        self.rng = np.random.default_rng(77)

    def test_known_probability(self):
        coin = ocrsmech.keepCoin(None, 0.5, 0.1, "knownProbability", self.rng, pstarValue=0.8)
        self.assertFloatsAlmostEqual(coin.bias, 0.5, atol=1e-15)

        with self.assertRaises(ocrsmech.KeepCoinPreconditionError):
            ocrsmech.keepCoin(None, 0.5, 0.1, "knownProbability", self.rng, pstarValue=0.4)

    def test_estimated(self):
        coin = ocrsmech.keepCoin(None, 0.5, 0.1, "estimated", self.rng, pstarValue=0.3)
        self.assertEqual(coin.bias, 1.0)

    def test_exact(self):
        pstar = ocrsmech.constantCoin(0.5, self.rng)
        coin = ocrsmech.keepCoin(pstar, 0.5, 0.1, "exactBernoulli", self.rng)

        self.assertFloatsAlmostEqual(coin.bias, 0.8, atol=1e-15)
        bias = coin.sampleMany(4000).mean()
        self.assertLess(abs(bias - 0.8), 5.0*np.sqrt(0.16/4000))

    def test_bad_arguments(self):
        pstar = ocrsmech.constantCoin(0.5, self.rng)
        with self.assertRaises(ValueError):
            ocrsmech.keepCoin(pstar, 0.1, 0.1, "knownProbability", self.rng)
        with self.assertRaises(ValueError):
            ocrsmech.keepCoin(pstar, 0.5, 0.0, "exactBernoulli", self.rng)
        with self.assertRaises(ValueError):
            ocrsmech.keepCoin(None, 0.5, 0.1, "estimated", self.rng)
        with self.assertRaises(ValueError):
            ocrsmech.keepCoin(pstar, 0.5, 0.1, "guess", self.rng)


class MechanismTestCase(lsst.utils.tests.TestCase):
    """Test Mechanism runs, their identities and traces."""

    def setUp(self):
        self.instance, self.rule = _solvedInstance("knapsack", 12, nAgents=2, nItems=2, nTypes=2)

    def test_identities(self):
        mechanism = ocrsmech.Mechanism(_mechanismConfig(epsilon=0.01), self.instance, self.rule, seed=1)
        mechanism.prepare()

        for sequential in (True, False):
            totals = ocrsmech.sumChunkResults(ocrsmech.runChunks(
                lambda index, nLanes, rng: ocrsmech.mechanismCounts(mechanism, nLanes, rng,
                                                                    sequential=sequential),
                5, 40000, 10000))
            summary = ocrsmech.summarizeMechanism(totals, mechanism)
            self.assertEqual(summary.infeasible, 0)
            self.assertTrue(summary.revenueIdentity)
            self.assertTrue(summary.allocationIdentity)
            self.assertTrue(summary.passed)
            self.assertFloatsAlmostEqual(summary.keepTarget, 0.09, atol=1e-15)

    def test_pstar_coin(self):
        mechanism = ocrsmech.Mechanism(ocrsmech.MechanismConfig(), self.instance, self.rule).prepare()
        pi = np.asarray(self.rule.pi[0])
        report, item = np.unravel_index(np.argmax(pi), pi.shape)

        coin = ocrsmech.pstarCoin(mechanism, 0, int(item), int(report), np.random.default_rng(6))
        bias = coin.bias
        draws = coin.sampleMany(4000)

        # an exact scheme selects an active element with probability c
        self.assertFloatsAlmostEqual(bias, mechanism.c, atol=1e-12)
        self.assertEqual(coin.tosses, 4000)
        self.assertLessEqual(abs(draws.mean() - bias), 5.0*np.sqrt(bias*(1.0 - bias)/4000) + 1e-12)

    def test_payments_up_front(self):
        mechanism = ocrsmech.Mechanism(ocrsmech.MechanismConfig(), self.instance, self.rule)
        reports = np.array([[0, 1], [1, 0]])
        outcome = mechanism.runTocrs(reports, np.random.default_rng(3))

        expected = [[mechanism.b*mechanism.keepTarget*self.rule.q[i][r] for i, r in enumerate(row)]
                    for row in reports]
        self.assertFloatsAlmostEqual(outcome.payments, np.array(expected), atol=1e-15)

    def test_prefix_of_report_stream(self):
        mechanism = ocrsmech.Mechanism(ocrsmech.MechanismConfig(), self.instance, self.rule).prepare()
        reports = self.instance.sampleReports(np.random.default_rng(8), 500)

        full = ocrsmech.runTocrsMechanism(mechanism, reports, np.random.default_rng(21))
        short = ocrsmech.runTocrsMechanism(mechanism, reports[:, :1], np.random.default_rng(21))
        self.assertTrue(full.trace.prefix(1).sameAs(short.trace.prefix(1)))

        events = full.trace.events(0)
        self.assertEqual([e["event"] for e in events[:2]], ["report", "payment"])
        self.assertEqual(events[-1]["event"], "load")

    def test_bad_reports(self):
        mechanism = ocrsmech.Mechanism(ocrsmech.MechanismConfig(), self.instance, self.rule)
        rng = np.random.default_rng(0)

        with self.assertRaises(ValueError):
            mechanism.runTocrs([[0, 2]], rng)
        with self.assertRaises(ocrsmech.DimensionMismatchError):
            mechanism.runTocrs([[0, 1, 0]], rng)
        with self.assertRaises(ocrsmech.DimensionMismatchError):
            ocrsmech.runTcrsMechanism(mechanism, [[0]], rng)

    def test_epsilon_above_c(self):
        with self.assertRaises(pexConfig.FieldValidationError):
            ocrsmech.Mechanism(_mechanismConfig(epsilon=0.2), self.instance, self.rule)

    def test_config_validation(self):
        config = _mechanismConfig(keepMode="exactBernoulli", epsilon=0.0)
        with self.assertRaises(pexConfig.FieldValidationError):
            config.validate()

        config = ocrsmech.MechanismConfig()
        config.scheme.mode = "estimated"
        with self.assertRaises(pexConfig.FieldValidationError):
            config.validate()
        config.keepMode = "estimated"
        config.validate()

    def test_estimated_keep_mode(self):
        config = _mechanismConfig(keepMode="estimated", pstarEstimateSamples=2000)
        mechanism = ocrsmech.Mechanism(config, self.instance, self.rule, seed=4).prepare()

        # estimates sit near the exact p* of the oracle scheme
        for i in range(2):
            table = mechanism.keepProbabilities(i)
            self.assertFloatsAlmostEqual(table, np.full(table.shape, mechanism.keepTarget/mechanism.c),
                                         atol=0.15)
        outcome = mechanism.runTocrs(self.instance.sampleReports(np.random.default_rng(2), 2000),
                                     np.random.default_rng(6))
        self.assertTrue(outcome.feasible.all())


class ExactKeepTestCase(lsst.utils.tests.TestCase):
    """Test keep flips from the division factory."""

    def test_exact_bernoulli(self):
        instance, rule = _solvedInstance("singleCopy", 30, nAgents=2, nItems=1, nTypes=2)
        config = _mechanismConfig(keepMode="exactBernoulli", epsilon=0.1, pstarBatch=64)
        mechanism = ocrsmech.Mechanism(config, instance, rule, seed=2).prepare()

        outcome = mechanism.runTocrs(instance.sampleReports(np.random.default_rng(1), 3000),
                                     np.random.default_rng(9))
        selected = outcome.trace.selected
        kept = outcome.trace.keep[selected]
        self.assertGreater(outcome.pstarTosses, 0)
        self.assertTrue(outcome.feasible.all())
        # keep rate is (c - epsilon)/p* with p* = c = 1/2
        rate = kept.mean()
        self.assertLess(abs(rate - 0.8), 5.0*np.sqrt(0.16/kept.size))


class BicAuditTestCase(lsst.utils.tests.TestCase):
    """Test the empirical incentive audit."""

    def test_audit(self):
        instance, rule = _solvedInstance("singleCopy", 41, nAgents=2, nItems=1, nTypes=2)
        mechanism = ocrsmech.Mechanism(ocrsmech.MechanismConfig(), instance, rule).prepare()

        audit = ocrsmech.bicAudit(mechanism, 5000, np.random.default_rng(11), nSigma=5.0)
        self.assertEqual(len(audit.records), 8)
        self.assertEqual(audit.violations, [])
        self.assertEqual(audit.identityFailures, [])


class RunMechanismTaskTestCase(lsst.utils.tests.TestCase):
    """Test RunMechanismTask."""

    def test_task(self):
        instance, _ = _solvedInstance("vh", 5, nAgents=2, nItems=2, nTypes=2)
        config = ocrsmech.RunMechanismConfig()
        config.update(trials=20000, chunkSize=5000, seed=3)

        result = ocrsmech.RunMechanismTask(config=config).run(instance)
        self.assertTrue(result.passed)
        self.assertIsNone(result.audit)
        self.assertEqual(result.summary.nTrials, 20000)
        self.assertEqual(len(result.summary.traces), 1)

    def test_thread_count_invariance(self):
        instance, rule = _solvedInstance("singleCopy", 6, nAgents=2, nItems=2, nTypes=2)
        summaries = []
        for nCore in (1, 3):
            config = ocrsmech.RunMechanismConfig()
            config.update(trials=6000, chunkSize=1000, seed=3, nCore=nCore)
            summaries.append(ocrsmech.RunMechanismTask(config=config).run(instance, rule).summary)

        self.assertEqual(summaries[0].meanRevenue, summaries[1].meanRevenue)
        np.testing.assert_array_equal(summaries[0].allocationRates, summaries[1].allocationRates)


class ProcurementTestCase(lsst.utils.tests.TestCase):
    """Test the procurement mechanism."""

    def setUp(self):
        self.instance, self.rule = _solvedInstance("procurement", 19, nAgents=3, nItems=1, nTypes=2)

    def _config(self, **kwargs):
        config = _mechanismConfig(**kwargs)
        config.scheme.scheme = "stochasticKnapsack"
        return config

    def test_budget_and_value(self):
        mechanism = ocrsmech.ProcurementMechanism(self._config(), self.instance, self.rule).prepare()
        totals = ocrsmech.sumChunkResults(ocrsmech.runChunks(
            lambda index, nLanes, rng: ocrsmech.procurementCounts(mechanism, nLanes, rng), 2, 30000, 10000))
        summary = ocrsmech.summarizeProcurement(totals, mechanism)

        self.assertEqual(summary.overBudget, 0)
        self.assertTrue(summary.passed)
        self.assertGreaterEqual(summary.declaredC, 1.0/6.0)
        expected = mechanism.keepTarget*np.array([space.probs @ pi for space, pi in
                                                  zip(self.instance.costSpaces, self.rule.pi)])
        self.assertFloatsAlmostEqual(summary.procurementRates, expected,
                                     atol=5.0*np.sqrt(0.25/30000))

    def test_runs_are_budget_feasible(self):
        mechanism = ocrsmech.ProcurementMechanism(self._config(), self.instance, self.rule)
        reports = self.instance.sampleReports(np.random.default_rng(1), 5000)
        outcome = ocrsmech.runProcurement(mechanism, reports, np.random.default_rng(2))

        self.assertTrue(outcome.withinBudget.all())
        self.assertTrue(np.all(outcome.paid <= outcome.selected))
        with self.assertRaises(ValueError):
            mechanism.run([[5, 0, 0]], np.random.default_rng(0))

    def test_exact_bernoulli(self):
        config = self._config(keepMode="exactBernoulli", epsilon=0.05, pstarBatch=64)
        mechanism = ocrsmech.ProcurementMechanism(config, self.instance, self.rule, seed=3)
        outcome = mechanism.run(self.instance.sampleReports(np.random.default_rng(4), 1000),
                                np.random.default_rng(5))

        self.assertTrue(outcome.withinBudget.all())
        if outcome.selected.any():
            self.assertGreater(outcome.pstarTosses, 0)

    def test_seller_audit(self):
        mechanism = ocrsmech.ProcurementMechanism(self._config(), self.instance, self.rule).prepare()
        audit = ocrsmech.sellerBicAudit(mechanism, 4000, np.random.default_rng(13), nSigma=5.0)

        self.assertEqual(len(audit.records), 12)
        self.assertEqual(audit.violations, [])
        self.assertEqual(audit.identityFailures, [])

    def test_task(self):
        config = ocrsmech.RunProcurementConfig()
        config.update(trials=10000, chunkSize=5000, seed=8)
        result = ocrsmech.RunProcurementTask(config=config).run(self.instance)
        self.assertEqual(result.summary.overBudget, 0)

        auction, _ = _solvedInstance("knapsack", 1, nAgents=2, nItems=2)
        with self.assertRaises(pipeBase.TaskError):
            ocrsmech.RunProcurementTask(config=config).run(auction)

        config.mechanism.scheme.scheme = "knapsack"
        with self.assertRaises(pexConfig.FieldValidationError):
            config.validate()


class TestMemory(lsst.utils.tests.MemoryTestCase):
    pass


def setup_module(module):
    lsst.utils.tests.init()


if __name__ == "__main__":
    lsst.utils.tests.init()
    unittest.main()
