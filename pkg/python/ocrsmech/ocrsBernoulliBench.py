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
"""Empirical bias and toss counts of the Bernoulli factories.

Each case feeds two constant coins of bias ``p0`` and ``p1`` to one factory
and compares the output frequency with the target function, and the mean
number of leaf tosses with the analytic bound.  For division the number of
rounds per sample is also compared, bin by bin, with its geometric law.
"""

import numpy as np

import lsst.pex.config as pexConfig
import lsst.pipe.base as pipeBase
from lsst.utils.timer import timeMethod

from .bernoulli import (PUBLISHED_DIVISION_CONSTANT, add, average, constantCoin, divide,
                        divisionTossBound, double, doublingTossBound, negate, scale, subtract)
from .ocrsTaskBase import OcrsBaseTask, OcrsTaskConfigBase
from .utilities import SIGMA_MARGIN, binomialSigma, deriveSeed, passesEquality

__all__ = ["FACTORIES", "BernoulliBenchConfig", "BernoulliBenchTask", "factoryCase", "roundLawCheck"]

FACTORIES = {
    "negate": "1 - p0",
    "scale": "p0*p1 (p1 as a known factor)",
    "average": "(p0 + p1)/2",
    "double": "2*p0, gap 1/2 - p0",
    "add": "p0 + p1, gap 1 - p0 - p1",
    "subtract": "p1 - p0, gap p1 - p0",
    "divide": "p0/p1, gap p1 - p0",
}

# rounds beyond this land in the last bin of the round law check
MAX_ROUND_BINS = 60


def factoryCase(name, p0, p1):
    """Target bias, gap and toss bound of one (factory, p0, p1) case.

    Returns
    -------
    case : `lsst.pipe.base.Struct` or `None`
        ``target``, ``delta`` and ``tossBound``; `None` when the factory's
        precondition fails for these biases.
    """
    if name == "negate":
        return pipeBase.Struct(target=1.0 - p0, delta=None, tossBound=1.0)
    if name == "scale":
        return pipeBase.Struct(target=p0*p1, delta=None, tossBound=2.0)
    if name == "average":
        return pipeBase.Struct(target=0.5*(p0 + p1), delta=None, tossBound=1.0)
    if name == "double":
        delta = 0.5 - p0
        if not delta > 0.0:
            return None
        return pipeBase.Struct(target=2.0*p0, delta=delta, tossBound=doublingTossBound(delta))
    if name == "add":
        delta = 1.0 - p0 - p1
        if not delta > 0.0:
            return None
        return pipeBase.Struct(target=p0 + p1, delta=delta, tossBound=doublingTossBound(delta/2.))
    if name in ("subtract", "divide"):
        delta = p1 - p0
        if not delta > 0.0:
            return None
        if name == "subtract":
            return pipeBase.Struct(target=delta, delta=delta, tossBound=doublingTossBound(delta/2.))
        return pipeBase.Struct(target=p0/p1, delta=delta, tossBound=divisionTossBound(p1, delta))
    raise ValueError("Unknown factory %r" % (name, ))


def _makeCoin(name, p0, p1, delta, rng):
    coin0 = constantCoin(p0, rng)
    if name == "negate":
        return negate(coin0)
    if name == "scale":
        return scale(coin0, p1)
    coin1 = constantCoin(p1, rng)
    if name == "average":
        return average(coin0, coin1)
    if name == "double":
        return double(coin0, delta)
    if name == "add":
        return add(coin0, coin1, delta)
    if name == "subtract":
        return subtract(coin0, coin1, delta)
    return divide(coin0, coin1, delta)


def roundLawCheck(roundCounts, p1, nSigma=SIGMA_MARGIN):
    """Compare division round counts with the geometric law of parameter ``p1/2``.

    Parameters
    ----------
    roundCounts : `numpy.ndarray`
        Histogram of rounds, bin ``k`` holding samples that took ``k + 1``
        rounds; the last bin collects the tail.
    p1 : `float`

    Returns
    -------
    result : `lsst.pipe.base.Struct`
        ``observed`` and ``expected`` frequencies and ``passed``.
    """
    roundCounts = np.asarray(roundCounts, dtype=np.float64)
    nSamples = roundCounts.sum()
    q = p1/2.
    expected = q*(1.0 - q)**np.arange(roundCounts.size)
    expected[-1] = (1.0 - q)**(roundCounts.size - 1)
    observed = roundCounts/max(nSamples, 1.0)
    ok = passesEquality(observed, expected, nSamples, nSigma=nSigma)
    return pipeBase.Struct(observed=observed, expected=expected, passed=bool(np.all(ok)))


class BernoulliBenchConfig(OcrsTaskConfigBase):
    """Config for BernoulliBenchTask"""
    factories = pexConfig.ListField(
        doc="Factories to benchmark; choose from %s" % (", ".join(FACTORIES)),
        dtype=str,
        default=["divide"],
    )
    p0List = pexConfig.ListField(
        doc="First coin biases, one per case",
        dtype=float,
        default=[0.1, 0.25, 0.4],
    )
    p1List = pexConfig.ListField(
        doc="Second coin biases, one per case",
        dtype=float,
        default=[0.6, 0.5, 0.9],
    )
    nSigma = pexConfig.RangeField(
        doc="Binomial sigma margin of the bias and round-law checks",
        dtype=float,
        default=SIGMA_MARGIN,
        min=0.0,
    )

    def setDefaults(self):
        super().setDefaults()
        self.trials = 100000
        self.chunkSize = 10000

    def validate(self):
        super().validate()

        if len(self.p0List) != len(self.p1List):
            msg = "p0List and p1List must have the same length"
            raise pexConfig.FieldValidationError(BernoulliBenchConfig.p1List, self, msg)
        for name in self.factories:
            if name not in FACTORIES:
                msg = "Unknown factory %r" % (name, )
                raise pexConfig.FieldValidationError(BernoulliBenchConfig.factories, self, msg)
        for p in list(self.p0List) + list(self.p1List):
            if not 0.0 <= p <= 1.0:
                msg = "coin biases must lie in [0, 1], got %r" % (p, )
                raise pexConfig.FieldValidationError(BernoulliBenchConfig.p0List, self, msg)


class BernoulliBenchTask(OcrsBaseTask):
    """Sample every configured factory on every (p0, p1) case."""
    ConfigClass = BernoulliBenchConfig
    _DefaultName = "bernoulliBench"

    @timeMethod
    def run(self):
        """Run the benchmark.

        Returns
        -------
        result : `lsst.pipe.base.Struct`
            ``records`` (one `dict` per case) and ``passed``.
        """
        records = []
        for caseIndex, (name, (p0, p1)) in enumerate((name, pair) for name in self.config.factories
                                                     for pair in zip(self.config.p0List, self.config.p1List)):
            case = factoryCase(name, p0, p1)
            if case is None:
                self.log.warning("Skipping %s with p0=%g, p1=%g: precondition fails", name, p0, p1)
                continue
            records.append(self._runCase(caseIndex, name, p0, p1, case))
        passed = all(record["passed"] for record in records)
        self.log.info("Benchmarked %d cases: %s", len(records), "pass" if passed else "FAIL")
        return pipeBase.Struct(records=records, passed=passed)

    def _runCase(self, caseIndex, name, p0, p1, case):
        def _chunk(index, nLanes, rng):
            coin = _makeCoin(name, p0, p1, case.delta, rng)
            ones = int(coin.sampleMany(nLanes).sum())
            counts = {"ones": ones, "tosses": coin.tosses, "samples": nLanes}
            if name == "divide":
                rounds = np.minimum(np.asarray(coin.roundCounts), MAX_ROUND_BINS) - 1
                counts["rounds"] = np.bincount(rounds, minlength=MAX_ROUND_BINS)
            return counts

        totals = self.runTrials(_chunk, seed=deriveSeed(self.config.seed, caseIndex))
        nSamples = totals["samples"]
        bias = totals["ones"]/nSamples
        meanTosses = totals["tosses"]/nSamples
        biasOk = bool(passesEquality(bias, case.target, nSamples, nSigma=self.config.nSigma))
        record = {"factory": name, "p0": p0, "p1": p1, "delta": case.delta, "target": case.target,
                  "samples": int(nSamples), "bias": bias,
                  "sigma": float(binomialSigma(case.target, nSamples)),
                  "meanTosses": meanTosses, "tossBound": case.tossBound,
                  "biasPassed": biasOk, "tossesPassed": bool(meanTosses <= case.tossBound)}
        if name == "divide":
            record["publishedTossBound"] = PUBLISHED_DIVISION_CONSTANT*(1.0 + 1.0/case.delta)/p1
            record["roundLawPassed"] = roundLawCheck(totals["rounds"], p1, nSigma=self.config.nSigma).passed
        record["passed"] = (record["biasPassed"] and record["tossesPassed"]
                            and record.get("roundLawPassed", True))
        self.log.info("%s(p0=%g, p1=%g): bias %.6g (target %.6g), %.3g tosses/sample (bound %.3g)",
                      name, p0, p1, bias, case.target, meanTosses, case.tossBound)
        return record
