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
"""Test the Bernoulli factories, their benchmark task and the event estimators.
"""

import copy
import unittest

import numpy as np

import lsst.pex.config as pexConfig
import lsst.utils.tests

import ocrsmech


class FactoryTestCase(lsst.utils.tests.TestCase):
    """Test coin biases and toss accounting."""

    def setUp(self):
        self.rng = np.random.default_rng(20240611)

    def _checkBias(self, coin, target, nSamples, nSigma=5.0):
        bias = coin.sampleMany(nSamples).mean()
        sigma = np.sqrt(target*(1.0 - target)/nSamples)
        self.assertLessEqual(abs(bias - target), nSigma*sigma + 1e-12,
                             msg="bias %g, target %g" % (bias, target))

    def test_constant_and_negate(self):
        coin = ocrsmech.constantCoin(0.3, self.rng)
        negated = ocrsmech.negate(coin)

        self.assertFloatsAlmostEqual(negated.bias, 0.7, atol=1e-15)
        self._checkBias(negated, 0.7, 20000)
        self.assertEqual(negated.tosses, 20000)
        self.assertEqual(coin.samples, 20000)

        with self.assertRaises(ValueError):
            ocrsmech.constantCoin(1.2, self.rng)

    def test_scale_and_average(self):
        coin0 = ocrsmech.constantCoin(0.6, self.rng)
        coin1 = ocrsmech.constantCoin(0.2, self.rng)

        self._checkBias(ocrsmech.scale(coin0, 0.5), 0.3, 20000)
        self._checkBias(ocrsmech.average(coin0, coin1), 0.4, 20000)
        with self.assertRaises(ValueError):
            ocrsmech.scale(coin0, 1.5)

    def test_shared_leaf_counted_once(self):
        coin = ocrsmech.constantCoin(0.5, self.rng)
        averaged = ocrsmech.average(coin, coin)
        averaged.sampleMany(100)

        self.assertEqual(averaged.tosses, 100)

    def test_double(self):
        coin = ocrsmech.double(ocrsmech.constantCoin(0.2, self.rng), 0.3)

        self.assertFloatsAlmostEqual(coin.bias, 0.4, atol=1e-15)
        self._checkBias(coin, 0.4, 10000)
        self.assertLessEqual(coin.tosses/10000, ocrsmech.doublingTossBound(0.3))
        with self.assertRaises(ValueError):
            ocrsmech.double(ocrsmech.constantCoin(0.2, self.rng), 0.0)

    def test_double_near_half(self):
        coin = ocrsmech.double(ocrsmech.constantCoin(0.45, self.rng), 0.05)

        self.assertFloatsAlmostEqual(coin.bias, 0.9, atol=1e-15)
        self._checkBias(coin, 0.9, 4000)
        tossesPerSample = coin.tosses/4000
        self.assertLessEqual(tossesPerSample, ocrsmech.doublingTossBound(0.05))
        # far fewer than the bound in practice
        self.assertLess(tossesPerSample, 100.0)

    def test_add_and_subtract(self):
        coin0 = ocrsmech.constantCoin(0.2, self.rng)
        coin1 = ocrsmech.constantCoin(0.5, self.rng)

        self._checkBias(ocrsmech.add(coin0, coin1, 0.3), 0.7, 5000)
        self._checkBias(ocrsmech.subtract(coin0, coin1, 0.3), 0.3, 5000)
        with self.assertRaises(ValueError):
            ocrsmech.add(coin0, coin1, 0.0)

    def test_divide(self):
        coin0 = ocrsmech.constantCoin(0.2, self.rng)
        coin1 = ocrsmech.constantCoin(0.5, self.rng)
        divided = ocrsmech.divide(coin0, coin1, 0.3)

        self.assertFloatsAlmostEqual(divided.bias, 0.4, atol=1e-15)
        self._checkBias(divided, 0.4, 4000)
        self.assertEqual(len(divided.roundCounts), 4000)
        # rounds are geometric with parameter p1/2
        self.assertFloatsAlmostEqual(np.mean(divided.roundCounts), 4.0, rtol=0.1)
        self.assertLessEqual(divided.tosses/4000, ocrsmech.divisionTossBound(0.5, 0.3))

        with self.assertRaises(ValueError):
            ocrsmech.divide(coin0, coin1, -0.1)

    def test_round_law(self):
        law = ocrsmech.divisionRoundLaw(0.2, 0.5, 50)

        self.assertFloatsAlmostEqual(law[0], 0.1, atol=1e-15)
        # summed over all rounds this is p0/p1
        self.assertFloatsAlmostEqual(law.sum(), 0.4, atol=1e-5)

    def test_sampler_coin(self):
        draws = iter([1, 0, 1, 1])
        coin = ocrsmech.samplerCoin(lambda: next(draws), self.rng)

        np.testing.assert_array_equal(coin.sampleMany(4), [1, 0, 1, 1])
        self.assertEqual(coin.tosses, 4)
        self.assertIsNone(coin.bias)


class BenchTestCase(lsst.utils.tests.TestCase):
    """Test BernoulliBenchTask on a short run."""

    def test_bench(self):
        config = ocrsmech.BernoulliBenchConfig()
        config.factories = ["negate", "average", "divide"]
        config.p0List = [0.25, 0.6]
        config.p1List = [0.5, 0.3]
        config.trials = 4000
        config.chunkSize = 1000
        config.seed = 8

        result = ocrsmech.BernoulliBenchTask(config=config).run()
        names = [(record["factory"], record["p0"]) for record in result.records]
        # divide needs p1 > p0, so its second case is skipped
        self.assertEqual(names, [("negate", 0.25), ("negate", 0.6), ("average", 0.25), ("average", 0.6),
                                 ("divide", 0.25)])
        for record in result.records:
            self.assertEqual(record["samples"], 4000)
        self.assertIn("publishedTossBound", result.records[-1])

    def test_factory_case(self):
        self.assertIsNone(ocrsmech.factoryCase("double", 0.5, 0.0))
        case = ocrsmech.factoryCase("divide", 0.1, 0.6)
        self.assertFloatsAlmostEqual(case.target, 1.0/6.0, atol=1e-15)
        self.assertFloatsAlmostEqual(case.delta, 0.5, atol=1e-15)
        with self.assertRaises(ValueError):
            ocrsmech.factoryCase("multiply", 0.1, 0.2)

    def test_round_law_check(self):
        q = 0.25
        expected = q*(1.0 - q)**np.arange(10)
        expected[-1] = (1.0 - q)**9
        counts = np.round(expected*1e6)

        self.assertTrue(ocrsmech.roundLawCheck(counts, 0.5).passed)
        self.assertFalse(ocrsmech.roundLawCheck(counts[::-1], 0.5).passed)

    def test_config_validation(self):
        config = ocrsmech.BernoulliBenchConfig()
        config.validate()

        for field, value in (("factories", ["multiply"]), ("p0List", [0.1, 0.2]),
                             ("p1List", [1.5, 0.5, 0.5])):
            config2 = copy.copy(config)
            config2.update(**{field: value})
            with self.assertRaises(pexConfig.FieldValidationError):
                config2.validate()


class EstimatorTestCase(lsst.utils.tests.TestCase):
    """Test EventEstimator and estimateEventProbability."""

    def test_estimator(self):
        estimator = ocrsmech.EventEstimator(("light", 0, 0, 0), 4)
        estimator.update([True, False, True])

        self.assertFalse(estimator.complete)
        estimator.update([False])
        self.assertTrue(estimator.complete)
        self.assertFloatsAlmostEqual(estimator.estimate, 0.5, atol=1e-15)
        self.assertFloatsAlmostEqual(estimator.upperSurrogate(0.1), 0.6, atol=1e-15)

        with self.assertRaises(ValueError):
            ocrsmech.EventEstimator("x", 0)
        with self.assertRaises(RuntimeError):
            ocrsmech.EventEstimator("x", 1).estimate

    def test_estimate_event(self):
        seen = {}

        def _simulator(conditioning, nLanes, rng):
            seen.update(conditioning)
            return rng.random(nLanes) < 0.3

        result = ocrsmech.estimateEventProbability(_simulator, {"rowType": 1}, 0.05, 0.01, 2, 2,
                                                   np.random.default_rng(3))
        self.assertEqual(seen, {"rowType": 1})
        self.assertEqual(result.nSamples, ocrsmech.computeEstimationSampleCount(0.05, 0.01, 2, 2))
        # Hoeffding at these settings allows an error of epsilon
        self.assertLess(abs(result.estimate - 0.3), 0.05)
        self.assertFloatsAlmostEqual(result.upper, result.estimate + 0.05, atol=1e-15)


class TestMemory(lsst.utils.tests.MemoryTestCase):
    pass


def setup_module(module):
    lsst.utils.tests.init()


if __name__ == "__main__":
    lsst.utils.tests.init()
    unittest.main()
