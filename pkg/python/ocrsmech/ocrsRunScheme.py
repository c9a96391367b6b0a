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
"""Measure the selectability of an online scheme by simulation.

For every element the conditional rate ``Pr[selected | active]`` is estimated
from fresh active sets; the scheme passes when no element with enough active
samples, and no (element, type) pair with enough samples, falls more than
``nSigma`` binomial sigmas below the declared ``c`` and no run violates the
constraint.
"""

import numpy as np

import lsst.pex.config as pexConfig
import lsst.pipe.base as pipeBase
from lsst.utils.timer import timeMethod

from .instances import ProcurementInstance
from .mechanism import ESTIMATION_STREAM
from .ocrsSolveLp import SolveInterimLpTask
from .ocrsTaskBase import OcrsBaseTask, OcrsTaskConfigBase
from .schemeFactory import SchemeConfig, makeProcurementScheme, makeScheme
from .schemes import BRANCH_HEAVY
from .stochasticKnapsack import StochasticKnapsackOcrs
from .utilities import SIGMA_MARGIN, binomialSigma, makeRng, passesLowerBound, runChunks, sumChunkResults

__all__ = ["MIN_ACTIVE_SAMPLES", "RunSchemeConfig", "RunSchemeTask", "verifySelectability",
           "selectabilityCounts", "summarizeSelectability"]

MIN_ACTIVE_SAMPLES = 2000

CAPACITY_SLACK = 1e-9


def _gridCounts(scheme, nLanes, rng, constraint):
    twin = scheme.spawn()
    active, rowTypes, selected = twin.sampleAndRun(nLanes, rng)
    n, m = twin.shape
    maxTypes = max(twin.process.nTypes)
    activeByType = np.zeros((n, maxTypes, m), dtype=np.int64)
    selectedByType = np.zeros((n, maxTypes, m), dtype=np.int64)
    for i in range(n):
        np.add.at(activeByType[i], rowTypes[:, i], active[:, i, :])
        np.add.at(selectedByType[i], rowTypes[:, i], selected[:, i, :] & active[:, i, :])
    counts = {"lanes": nLanes,
              "activeByType": activeByType,
              "selectedByType": selectedByType,
              "selectedInactive": int((selected & ~active).sum()),
              "heavyLanes": int((twin.branch == BRANCH_HEAVY).sum()),
              "violations": 0}
    if constraint is not None:
        counts["violations"] = int((~constraint.isFeasibleBatch(selected)).sum())
    return counts


def _stochasticCounts(scheme, nLanes, rng):
    twin = scheme.spawn()
    instance = twin.instance
    weights = instance.sample(rng, nLanes)
    selected = twin.run(weights, rng)
    maxSupport = max(s.size for s in instance.supports)
    activeByType = np.zeros((instance.nElements, maxSupport, 1), dtype=np.int64)
    selectedByType = np.zeros((instance.nElements, maxSupport, 1), dtype=np.int64)
    for i in range(instance.nElements):
        # a weight-0 arrival stands for an inactive element
        present = weights[:, i] > 0.0
        index = twin.supportIndex(i, weights[present, i])
        np.add.at(activeByType[i, :, 0], index, 1)
        np.add.at(selectedByType[i, :, 0], index, selected[present, i])
    load = (selected*weights).sum(axis=1)
    return {"lanes": nLanes,
            "activeByType": activeByType,
            "selectedByType": selectedByType,
            "selectedInactive": 0,
            "zeroWeightArrivals": int((weights == 0.0).sum()),
            "heavyLanes": int((twin.branch == BRANCH_HEAVY).sum()),
            "violations": int((load > instance.capacity + CAPACITY_SLACK).sum())}


def selectabilityCounts(scheme, nLanes, rng, constraint=None):
    """Activation and selection counts of one chunk of runs.

    Parameters
    ----------
    scheme : `ocrsmech.schemes.OnlineScheme` or
             `ocrsmech.stochasticKnapsack.StochasticKnapsackOcrs`
    nLanes : `int`
    rng : `numpy.random.Generator`
    constraint : `ocrsmech.constraints.FeasibilityConstraint`, optional
        Checked against every selected set.

    Returns
    -------
    counts : `dict`
        ``activeByType`` and ``selectedByType`` are indexed by
        ``(element row, row type, item)``; a stochastic knapsack uses its
        elements as rows, the support index as the type and a single item.
    """
    if isinstance(scheme, StochasticKnapsackOcrs):
        return _stochasticCounts(scheme, nLanes, rng)
    return _gridCounts(scheme, nLanes, rng, constraint)


def verifySelectability(scheme, trials, seed, constraint=None, chunkSize=4096, nCore=1,
                        minActiveSamples=MIN_ACTIVE_SAMPLES, nSigma=SIGMA_MARGIN):
    """Estimate conditional selection rates and check them against ``c``.

    Parameters
    ----------
    scheme : `ocrsmech.schemes.OnlineScheme` or
             `ocrsmech.stochasticKnapsack.StochasticKnapsackOcrs`
        Scheme with a ``declaredC``.
    trials : `int`
        Number of runs.
    seed : `int`
        Master seed of the trial chunks.
    constraint : `ocrsmech.constraints.FeasibilityConstraint`, optional
    chunkSize, nCore : `int`, optional
        Chunking of the runs.
    minActiveSamples : `int`, optional
        Elements with fewer active samples are reported but never fail.
    nSigma : `float`, optional
        One-sided binomial margin.

    Returns
    -------
    report : `lsst.pipe.base.Struct`
        ``rates`` and ``activeCounts`` (per element), ``typeRates`` (per
        element and type, NaN where never active), ``minRate`` (over checked
        elements), ``minTypeRate``, ``typeFailures`` (checked element types below
        ``c``), ``declaredC``, ``violations``,
        ``heavyFraction``, ``clampCount``, ``records`` (one `dict` per
        element) and ``passed``.
    """
    def _chunk(index, nLanes, rng):
        return selectabilityCounts(scheme, nLanes, rng, constraint=constraint)

    totals = sumChunkResults(runChunks(_chunk, seed, trials, chunkSize, nCore=nCore))
    return summarizeSelectability(totals, scheme.declaredC, scheme.clampCount,
                                  minActiveSamples=minActiveSamples, nSigma=nSigma)


def summarizeSelectability(totals, declaredC, clampCount=0, minActiveSamples=MIN_ACTIVE_SAMPLES,
                           nSigma=SIGMA_MARGIN):
    """Turn summed chunk counts into a selectability report."""
    activeByType = totals["activeByType"]
    selectedByType = totals["selectedByType"]
    activeCounts = activeByType.sum(axis=1)
    selectedCounts = selectedByType.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rates = np.where(activeCounts > 0, selectedCounts/np.maximum(activeCounts, 1), np.nan)
        typeRates = np.where(activeByType > 0, selectedByType/np.maximum(activeByType, 1), np.nan)

    checked = activeCounts >= minActiveSamples
    ok = passesLowerBound(np.nan_to_num(rates), declaredC, activeCounts, nSigma=nSigma)
    failing = checked & ~ok
    typeChecked = activeByType >= minActiveSamples
    typeOk = passesLowerBound(np.nan_to_num(typeRates), declaredC, activeByType, nSigma=nSigma)
    typeFailures = int((typeChecked & ~typeOk).sum())
    minRate = float(rates[checked].min()) if checked.any() else float("nan")
    minTypeRate = float(typeRates[typeChecked].min()) if typeChecked.any() else float("nan")

    records = []
    sigma = binomialSigma(declaredC, activeCounts)
    for (i, j), count in np.ndenumerate(activeCounts):
        records.append({"agent": int(i), "item": int(j), "active": int(count),
                        "selected": int(selectedCounts[i, j]), "rate": float(rates[i, j]),
                        "sigma": float(sigma[i, j]), "checked": bool(checked[i, j]),
                        "passed": not bool(failing[i, j])})

    violations = int(totals["violations"]) + int(totals["selectedInactive"])
    passed = (not failing.any()) and typeFailures == 0 and violations == 0
    return pipeBase.Struct(rates=rates,
                           activeCounts=activeCounts,
                           typeRates=typeRates,
                           minRate=minRate,
                           minTypeRate=minTypeRate,
                           typeFailures=typeFailures,
                           declaredC=float(declaredC),
                           violations=violations,
                           heavyFraction=totals["heavyLanes"]/totals["lanes"],
                           clampCount=int(clampCount),
                           nTrials=int(totals["lanes"]),
                           records=records,
                           passed=bool(passed))


class RunSchemeConfig(OcrsTaskConfigBase):
    """Config for RunSchemeTask"""
    scheme = pexConfig.ConfigField(
        dtype=SchemeConfig,
        doc="Scheme under test",
    )
    solveLp = pexConfig.ConfigurableField(
        target=SolveInterimLpTask,
        doc="Task solving the interim relaxation when no interim rule file is given",
    )
    minActiveSamples = pexConfig.RangeField(
        doc="Active samples an element needs before its rate is checked",
        dtype=int,
        default=MIN_ACTIVE_SAMPLES,
        min=1,
    )
    nSigma = pexConfig.RangeField(
        doc="Binomial sigma margin of the lower-bound check",
        dtype=float,
        default=SIGMA_MARGIN,
        min=0.0,
    )


class RunSchemeTask(OcrsBaseTask):
    """Check the selectability of the scheme induced by an interim rule.

    The process under test is the one induced by the interim allocation of
    the instance; for a procurement instance the scheme is the stochastic
    knapsack over the interim payments.
    """
    ConfigClass = RunSchemeConfig
    _DefaultName = "runScheme"

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self.makeSubtask("solveLp")

    @timeMethod
    def run(self, instance=None, rule=None):
        """Build the scheme and measure its selection rates.

        Parameters
        ----------
        instance : optional
            Defaults to ``config.instanceFile``.
        rule : `ocrsmech.interimLp.InterimRule`, optional
            Defaults to ``config.interimFile`` or a fresh LP solve.

        Returns
        -------
        result : `lsst.pipe.base.Struct`
            ``scheme``, ``report`` (see `verifySelectability`) and
            ``passed``.
        """
        instance = self.loadInstance(instance)
        rule = self.loadInterimRule(instance, rule)
        if rule is None:
            rule = self.solveLp.run(instance).rule

        estimationRng = makeRng(self.config.seed, ESTIMATION_STREAM)
        if isinstance(instance, ProcurementInstance):
            scheme = makeProcurementScheme(self.config.scheme, instance, rule, rng=estimationRng)
            constraint = None
        else:
            constraint = instance.constraint
            scheme = makeScheme(self.config.scheme, constraint, rule.process(instance), rng=estimationRng)
        self.log.info("Running %s scheme (declared c = %.6g) for %d trials", scheme.name, scheme.declaredC,
                      self.config.trials)

        report = verifySelectability(scheme, self.config.trials, self.config.seed, constraint=constraint,
                                     chunkSize=self.config.chunkSize, nCore=self.config.nCore,
                                     minActiveSamples=self.config.minActiveSamples,
                                     nSigma=self.config.nSigma)
        if report.clampCount:
            self.log.warning("%d probabilities were clamped while building the scheme", report.clampCount)
        self.log.info("Minimum conditional rate %.6g against c = %.6g: %s", report.minRate, report.declaredC,
                      "pass" if report.passed else "FAIL")
        return pipeBase.Struct(scheme=scheme, report=report, passed=report.passed)
