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
"""Test the online schemes and the selectability harness.
"""

import copy
import itertools
import unittest

import numpy as np

import lsst.pex.config as pexConfig
import lsst.utils.tests

import ocrsmech


def _knapsackProcess():
    return ocrsmech.TwoLevelProcess([[0.5, 0.5], [1.0]],
                                    [[[0.5, 0.5], [0.2, 0.8]], [[0.5, 0.5]]])


def _schemeConfig(**kwargs):
    config = ocrsmech.SchemeConfig()
    config.update(**kwargs)
    config.validate()
    return config


class _ScriptedDraws:
    """Generator stand-in handing out preset uniform draws in call order."""
    def __init__(self, draws):
        self.draws = list(draws)

    def random(self, size=None):
        return self.draws.pop(0)


class SelectabilityTestBase(lsst.utils.tests.TestCase):
    """Shared checks of measured conditional selection rates."""
    trials = 40000

    def checkExact(self, scheme, constraint=None, seed=1):
        """Rates of an exact scheme equal its declared c."""
        report = ocrsmech.verifySelectability(scheme, self.trials, seed, constraint=constraint,
                                              chunkSize=8000, minActiveSamples=1000)
        self.assertTrue(report.passed)
        self.assertEqual(report.violations, 0)
        self.assertEqual(report.nTrials, self.trials)
        checked = report.activeCounts >= 1000
        self.assertTrue(checked.any())
        ok = ocrsmech.passesEquality(report.rates[checked], report.declaredC, report.activeCounts[checked],
                                     nSigma=5.0)
        self.assertTrue(np.all(ok), msg="rates %s, c %g" % (report.rates, report.declaredC))
        return report


class KnapsackSchemeTestCase(SelectabilityTestBase):
    """Test the knapsack and multiple-choice knapsack schemes."""

    def test_exact_constants(self):
        self.assertFloatsAlmostEqual(ocrsmech.KnapsackTocrs.exactC(1.0), 0.1, atol=1e-15)
        self.assertFloatsAlmostEqual(ocrsmech.KnapsackTocrs.exactC(0.5), 1.0/6.0, atol=1e-15)
        self.assertFloatsAlmostEqual(ocrsmech.MultiChoiceKnapsackTocrs.exactC(1.0), 1.0/9.0, atol=1e-15)

    def test_knapsack_oracle(self):
        constraint = ocrsmech.Knapsack([[0.6, 0.3], [0.2, 0.4]], 1.0)
        for b in (1.0, 0.5):
            scheme = ocrsmech.knapsackTocrs(constraint, _knapsackProcess(), b)
            self.assertEqual(scheme.declaredC, ocrsmech.KnapsackTocrs.exactC(b))
            self.assertEqual(scheme.heavyBranchProbability, 0.5)
            self.assertEqual(scheme.selectionProbability(0, 0, 1), scheme.declaredC)
            report = self.checkExact(scheme, constraint=constraint, seed=int(10*b))
            self.assertFloatsAlmostEqual(report.heavyFraction, 0.5, atol=0.02)

    def test_multichoice_oracle(self):
        constraint = ocrsmech.MultiChoiceKnapsack([[0.3, 0.6], [0.5, 0.2]], 1.0)
        process = ocrsmech.TwoLevelProcess([[0.5, 0.5], [1.0]],
                                           [[[0.5, 0.3], [0.2, 0.6]], [[0.4, 0.4]]])
        scheme = ocrsmech.multiChoiceKnapsackTocrs(constraint, process, 1.0)

        self.assertFloatsAlmostEqual(scheme.heavyBranchProbability, 5.0/9.0, atol=1e-15)
        self.checkExact(scheme, constraint=constraint)

    def test_estimated_mode(self):
        constraint = ocrsmech.Knapsack([[0.6, 0.3], [0.2, 0.4]], 1.0)
        scheme = ocrsmech.knapsackTocrs(constraint, _knapsackProcess(), 1.0, mode="estimated",
                                        epsilon=0.05, delta=0.01, rng=np.random.default_rng(4))

        self.assertLess(scheme.declaredC, ocrsmech.KnapsackTocrs.exactC(1.0))
        self.assertIsNone(scheme.selectionProbability(0, 0, 0))
        report = ocrsmech.verifySelectability(scheme, 20000, 3, constraint=constraint, chunkSize=5000)
        self.assertTrue(report.passed)
        with self.assertRaises(ValueError):
            ocrsmech.knapsackTocrs(constraint, _knapsackProcess(), 1.0, mode="estimated")

    def test_infeasible_process(self):
        constraint = ocrsmech.Knapsack([[0.9, 0.9], [0.9, 0.9]], 1.0)

        with self.assertRaises(ocrsmech.ProcessInfeasibleError):
            ocrsmech.knapsackTocrs(constraint, _knapsackProcess(), 1.0)
        with self.assertRaises(ocrsmech.TooLargeError):
            ocrsmech.knapsackTocrs(ocrsmech.Knapsack([[0.1, 0.2], [0.3, 0.4]], 1.0), _knapsackProcess(), 1.0,
                                   maxOracleStates=1)

    def test_spawn_keeps_tables(self):
        constraint = ocrsmech.Knapsack([[0.6, 0.3], [0.2, 0.4]], 1.0)
        scheme = ocrsmech.knapsackTocrs(constraint, _knapsackProcess(), 1.0)
        twin = scheme.spawn()
        twin.reset(10, np.random.default_rng(0))

        self.assertIsNone(scheme.selected)
        self.assertIs(twin.lightProb, scheme.lightProb)


class StochasticKnapsackTestCase(SelectabilityTestBase):
    """Test the random-weight knapsack scheme."""

    def test_gamma_rule(self):
        scheme = ocrsmech.deterministicKnapsackOcrs([0.3, 0.5, 0.4], [0.5, 0.6, 0.5], 1.0)

        # k* = 0.5
        self.assertFloatsAlmostEqual(scheme.declaredC, 1.0/3.0, atol=1e-15)
        self.assertTrue(scheme.useGamma)
        self.checkExact(scheme)

    def test_heavy_fallback(self):
        instance = ocrsmech.StochasticKnapsackInstance([[0.0, 0.9], [0.1, 0.3], [0.0, 0.2, 0.6]],
                                                       [[0.6, 0.4], [0.5, 0.5], [0.3, 0.4, 0.3]], 1.0)
        scheme = ocrsmech.stochasticKnapsackOcrs(instance)

        self.assertFalse(scheme.useGamma)
        self.assertFloatsAlmostEqual(scheme.declaredC, 1.0/6.0, atol=1e-15)
        report = self.checkExact(scheme)
        self.assertFloatsAlmostEqual(report.heavyFraction, 0.5, atol=0.02)

    def test_zero_weight_not_active(self):
        scheme = ocrsmech.deterministicKnapsackOcrs([0.9]*6, [0.185]*6, 1.0)
        counts = ocrsmech.selectabilityCounts(scheme, 5000, np.random.default_rng(4))

        self.assertTrue(np.all(counts["activeByType"][:, 0, 0] == 0))
        self.assertEqual(counts["zeroWeightArrivals"] + counts["activeByType"].sum(), 5000*6)

        report = ocrsmech.verifySelectability(scheme, 60000, 8, chunkSize=15000)
        self.assertTrue(report.passed)
        self.assertTrue(np.all(np.isnan(report.typeRates[:, 0, 0])))

    def test_weak_heavy_rule_fails(self):
        scheme = ocrsmech.deterministicKnapsackOcrs([0.9]*6, [0.185]*6, 1.0)
        for i in range(6):
            scheme.selectProb[i][1] *= 0.6

        report = ocrsmech.verifySelectability(scheme, 60000, 8, chunkSize=15000)
        self.assertFalse(report.passed)
        self.assertLess(report.minRate, 0.12)
        self.assertGreater(report.typeFailures, 0)

    def test_type_shortfall_fails(self):
        # the element average clears c while one weight falls short
        totals = {"lanes": 100000,
                  "activeByType": np.array([[[90000], [10000]]]),
                  "selectedByType": np.array([[[15750], [1000]]]),
                  "selectedInactive": 0,
                  "heavyLanes": 0,
                  "violations": 0}
        report = ocrsmech.summarizeSelectability(totals, 1.0/6.0)

        self.assertFloatsAlmostEqual(report.rates[0, 0], 0.1675, atol=1e-12)
        self.assertTrue(report.records[0]["passed"])
        self.assertEqual(report.typeFailures, 1)
        self.assertFloatsAlmostEqual(report.minTypeRate, 0.1, atol=1e-12)
        self.assertFalse(report.passed)

    def _enumerateRuns(self, scheme):
        """Every branch, weight profile and coin outcome, with its probability."""
        instance = scheme.instance
        n = instance.nElements
        branchDraws = [0.0] if scheme.useGamma else [0.0, 0.75]
        lanes = list(itertools.product(branchDraws,
                                       itertools.product(*[range(s.size) for s in instance.supports]),
                                       itertools.product((True, False), repeat=n)))
        branch = np.array([lane[0] for lane in lanes])
        index = np.array([lane[1] for lane in lanes])
        heads = np.array([lane[2] for lane in lanes])
        weights = np.stack([instance.supports[i][index[:, i]] for i in range(n)], axis=1)

        mass = np.full(len(lanes), 1.0 if scheme.useGamma else 0.5)
        for i in range(n):
            p = scheme.selectProb[i][index[:, i]]
            mass *= instance.probs[i][index[:, i]]*np.where(heads[:, i], p, 1.0 - p)
        draws = [] if scheme.useGamma else [branch]
        draws += [np.where(heads[:, i], 0.0, 1.0) for i in range(n)]
        selected = scheme.spawn().run(weights, _ScriptedDraws(draws))
        return weights, index, heads, branch, mass, selected

    def test_enumerated_runs(self):
        schemes = [ocrsmech.deterministicKnapsackOcrs([0.5, 0.5, 0.375, 0.25], [0.5, 0.6, 0.4, 0.5], 1.0),
                   ocrsmech.deterministicKnapsackOcrs([0.875, 0.5, 0.5, 0.5], [0.3, 0.4, 0.4, 0.4], 1.0),
                   ocrsmech.deterministicKnapsackOcrs([0.875, 0.25, 0.9375], [0.3, 0.5, 0.3], 1.0)]
        self.assertEqual([scheme.useGamma for scheme in schemes], [True, False, False])

        for scheme in schemes:
            instance = scheme.instance
            weights, index, heads, branch, mass, selected = self._enumerateRuns(scheme)
            self.assertFloatsAlmostEqual(mass.sum(), 1.0, atol=1e-12)

            # every weight, zero included, is selected with probability exactly c
            for i in range(instance.nElements):
                for s in range(instance.supports[i].size):
                    lane = index[:, i] == s
                    rate = (mass*selected[:, i])[lane].sum()/mass[lane].sum()
                    self.assertFloatsAlmostEqual(rate, scheme.declaredC, atol=1e-12)

            load = (selected*weights).sum(axis=1)
            self.assertTrue(np.all(load <= instance.capacity))

            # light elements are taken whenever they fit and their coin lands,
            # a heavy one only as the first selection of the heavy branch
            for lane in range(len(mass)):
                total = 0.0
                taken = False
                for i in range(instance.nElements):
                    weight = weights[lane, i]
                    if scheme.useGamma or weight <= scheme.half:
                        eligible = ((scheme.useGamma or branch[lane] > 0.5)
                                    and total <= instance.capacity - weight)
                    else:
                        eligible = branch[lane] < 0.5 and not taken
                    expected = bool(eligible and heads[lane, i])
                    self.assertEqual(bool(selected[lane, i]), expected)
                    if expected:
                        total += weight
                        taken = True

    def test_instance_checks(self):
        with self.assertRaises(ValueError):
            ocrsmech.StochasticKnapsackInstance([[0.0, 1.5]], [[0.5, 0.5]], 1.0)
        with self.assertRaises(ValueError):
            ocrsmech.StochasticKnapsackInstance([[0.0, 0.5]], [[0.5, 0.6]], 1.0)
        with self.assertRaises(ocrsmech.DimensionMismatchError):
            ocrsmech.StochasticKnapsackInstance([[0.0, 0.5]], [[1.0]], 1.0)

        heavy = ocrsmech.StochasticKnapsackInstance([[0.8], [0.8]], [[1.0], [1.0]], 1.0)
        self.assertFalse(heavy.isAdmissible())
        with self.assertRaises(ocrsmech.ProcessInfeasibleError):
            ocrsmech.stochasticKnapsackOcrs(heavy)

    def test_offer_checks_support(self):
        scheme = ocrsmech.deterministicKnapsackOcrs([0.3, 0.5], [0.5, 0.5], 1.0)
        scheme.reset(4, np.random.default_rng(2))

        with self.assertRaises(ValueError):
            scheme.offer(0, np.full(4, 0.25))
        with self.assertRaises(ocrsmech.DimensionMismatchError):
            scheme.offer(0, np.zeros(3))


class VhSchemeTestCase(SelectabilityTestBase):
    """Test slice schemes and their composition."""

    def test_single_copy_columns(self):
        constraint = ocrsmech.SingleCopyPerItem(2, 2)
        process = ocrsmech.TwoLevelProcess([[0.5, 0.5], [1.0]],
                                           [[[0.8, 0.2], [0.2, 0.6]], [[0.4, 0.5]]])
        scheme = ocrsmech.vhSchemeFromConstraint(constraint, process, 1.0)

        self.assertFloatsAlmostEqual(scheme.declaredC, 0.5, atol=1e-15)
        self.assertIsInstance(scheme.rowSchemes[0], ocrsmech.AlwaysSelectSlice)
        self.checkExact(scheme, constraint=constraint)

    def test_k_uniform_rows(self):
        constraint = ocrsmech.KUniformPerAgent(3, [1, 2])
        process = ocrsmech.TwoLevelProcess([[0.3, 0.7], [1.0]],
                                           [[[0.5, 0.3, 0.2], [0.1, 0.1, 0.8]], [[0.9, 0.6, 0.5]]])
        scheme = ocrsmech.vhSchemeFromConstraint(constraint, process, 1.0)

        self.assertGreaterEqual(scheme.declaredC, 0.5)
        self.assertIsInstance(scheme.columnSchemes[0], ocrsmech.AlwaysSelectSlice)
        report = ocrsmech.verifySelectability(scheme, self.trials, 2, constraint=constraint, chunkSize=8000)
        self.assertTrue(report.passed)
        # every row is kept at its own calibrated constant
        for i, row in enumerate(scheme.rowSchemes):
            ok = ocrsmech.passesEquality(report.rates[i], row.c, report.activeCounts[i], nSigma=5.0)
            self.assertTrue(np.all(ok), msg="row %d rates %s, c %g" % (i, report.rates[i], row.c))

    def test_single_copy_column_constant(self):
        column = ocrsmech.singleCopyColumnOcrs(0.5, [0.5, 0.3, 0.2])

        self.assertFloatsAlmostEqual(column.c, 2.0/3.0, atol=1e-15)
        self.assertFloatsAlmostEqual(column.availability, np.array([1.0, 5.0/6.0, 11.0/15.0]), atol=1e-12)
        with self.assertRaises(ocrsmech.ProcessInfeasibleError):
            ocrsmech.singleCopyColumnOcrs(1.0, [0.7, 0.7])

    def test_calibration_bounds(self):
        row = ocrsmech.kUniformRowOcrs(1.0, 1, [1.0], [[0.5, 0.5]])
        loose = ocrsmech.kUniformRowOcrs(1.0, 2, [1.0], [[0.5, 0.5]])

        self.assertGreaterEqual(row.c, 0.5)
        self.assertLess(row.c, 1.0)
        self.assertEqual(loose.c, 1.0)
        with self.assertRaises(ocrsmech.ProcessInfeasibleError):
            ocrsmech.kUniformRowOcrs(1.0, 1, [1.0], [[0.8, 0.5]])

    def test_compose_checks(self):
        process = ocrsmech.TwoLevelProcess([[1.0]], [[[0.5, 0.5]]])
        rows = [ocrsmech.AlwaysSelectSlice(1.0, 2)]
        columns = [ocrsmech.AlwaysSelectSlice(1.0, 1), ocrsmech.AlwaysSelectSlice(0.5, 1)]

        with self.assertRaises(ValueError):
            ocrsmech.vhCompose(rows, columns, process)
        with self.assertRaises(ocrsmech.DimensionMismatchError):
            ocrsmech.vhCompose(rows, columns[:1], process)

    def test_explicit_slice_rejected(self):
        constraint = ocrsmech.VerticalHorizontal([ocrsmech.SliceConstraint("explicit", 2, maximalSets=[[0]])],
                                                 [ocrsmech.SliceConstraint("uniform", 1, k=1)]*2)
        process = ocrsmech.TwoLevelProcess([[1.0]], [[[0.5, 0.5]]])

        with self.assertRaises(ocrsmech.UnsupportedConstraintError):
            ocrsmech.vhSchemeFromConstraint(constraint, process, 1.0)


class SchemeFactoryTestCase(lsst.utils.tests.TestCase):
    """Test makeScheme and SchemeConfig."""

    def test_auto(self):
        process = _knapsackProcess()
        knapsack = ocrsmech.Knapsack([[0.6, 0.3], [0.2, 0.4]], 1.0)

        scheme = ocrsmech.makeScheme(_schemeConfig(), knapsack, process)
        self.assertIsInstance(scheme, ocrsmech.KnapsackTocrs)
        scheme = ocrsmech.makeScheme(_schemeConfig(), ocrsmech.SingleCopyPerItem(2, 2),
                                     ocrsmech.TwoLevelProcess([[1.0], [1.0]], [[[0.5, 0.5]], [[0.5, 0.5]]]))
        self.assertIsInstance(scheme, ocrsmech.VhComposedScheme)

    def test_mismatches(self):
        process = _knapsackProcess()
        knapsack = ocrsmech.Knapsack([[0.6, 0.3], [0.2, 0.4]], 1.0)

        with self.assertRaises(ocrsmech.UnsupportedConstraintError):
            ocrsmech.makeScheme(_schemeConfig(scheme="alwaysSelect"), knapsack, process)
        with self.assertRaises(ocrsmech.UnsupportedConstraintError):
            ocrsmech.makeScheme(_schemeConfig(scheme="vh"), knapsack, process)
        with self.assertRaises(ocrsmech.UnsupportedConstraintError):
            ocrsmech.makeScheme(_schemeConfig(scheme="stochasticKnapsack"), knapsack, process)
        with self.assertRaises(ocrsmech.DimensionMismatchError):
            ocrsmech.makeScheme(_schemeConfig(), ocrsmech.Knapsack([[0.5]], 1.0), process)

    def test_always_select(self):
        constraint = ocrsmech.KUniformPerAgent(2, [2])
        process = ocrsmech.TwoLevelProcess([[1.0]], [[[0.5, 0.5]]])
        scheme = ocrsmech.makeScheme(_schemeConfig(scheme="alwaysSelect"), constraint, process)

        active = np.array([[[True, False]], [[True, True]]])
        selected = scheme.run(active, np.zeros((2, 1), dtype=np.int64), np.random.default_rng(0))
        np.testing.assert_array_equal(selected, active)

    def test_config_validation(self):
        config = ocrsmech.SchemeConfig()
        for field, value in (("b", 0.0), ("b", 1.5), ("epsilon", 0.0), ("delta", 1.0), ("scheme", "matroid")):
            config2 = copy.copy(config)
            with self.assertRaises(pexConfig.FieldValidationError):
                config2.update(**{field: value})
                config2.validate()


class RunSchemeTaskTestCase(lsst.utils.tests.TestCase):
    """Test RunSchemeTask end to end on small instances."""

    def _run(self, family, seed):
        generator = ocrsmech.InstanceGeneratorConfig()
        generator.update(family=family, nAgents=2, nItems=2, nTypes=2)
        instance = ocrsmech.generateInstance(generator, np.random.default_rng(seed))
        config = ocrsmech.RunSchemeConfig()
        config.update(trials=20000, chunkSize=5000, seed=seed, minActiveSamples=500)
        return ocrsmech.RunSchemeTask(config=config).run(instance)

    def test_knapsack_instance(self):
        result = self._run("knapsack", 3)

        self.assertTrue(result.passed)
        self.assertEqual(result.report.declaredC, ocrsmech.KnapsackTocrs.exactC(1.0))
        self.assertEqual(len(result.report.records), 4)

    def test_procurement_instance(self):
        result = self._run("procurement", 4)

        self.assertIsInstance(result.scheme, ocrsmech.StochasticKnapsackOcrs)
        self.assertEqual(result.report.nTrials, 20000)

    def test_same_seed_same_report(self):
        first = self._run("singleCopy", 9)
        second = self._run("singleCopy", 9)

        np.testing.assert_array_equal(first.report.activeCounts, second.report.activeCounts)
        np.testing.assert_array_equal(first.report.rates, second.report.rates)


class TestMemory(lsst.utils.tests.MemoryTestCase):
    pass


def setup_module(module):
    lsst.utils.tests.init()


if __name__ == "__main__":
    lsst.utils.tests.init()
    unittest.main()
