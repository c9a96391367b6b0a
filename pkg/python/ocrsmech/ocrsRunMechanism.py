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
"""Simulate the auction mechanism induced by an interim rule."""

import numpy as np

import lsst.pex.config as pexConfig
import lsst.pipe.base as pipeBase
from lsst.utils.timer import timeMethod

from .mechanism import Mechanism, MechanismConfig, bicAudit
from .ocrsSolveLp import SolveInterimLpTask
from .ocrsTaskBase import OcrsBaseTask, OcrsTaskConfigBase
from .utilities import SIGMA_MARGIN, binomialSigma, makeRng

__all__ = ["AUDIT_STREAM", "RunMechanismConfig", "RunMechanismTask", "mechanismCounts",
           "summarizeMechanism"]

# sub-stream of the BIC audit under the task seed
AUDIT_STREAM = 3


def mechanismCounts(mechanism, nLanes, rng, sequential=True, keepTrace=False):
    """Revenue, allocation and query counters of one chunk of runs.

    Parameters
    ----------
    mechanism : `ocrsmech.mechanism.Mechanism`
        Prepared mechanism; a private copy runs the chunk.
    nLanes : `int`
    rng : `numpy.random.Generator`
    sequential : `bool`, optional
        Run the online mechanism rather than the batch one.
    keepTrace : `bool`, optional
        Attach the event log of the first lane.
    """
    twin = mechanism.spawn()
    reports = twin.instance.sampleReports(rng, nLanes)
    if sequential:
        outcome = twin.runTocrs(reports, rng)
    else:
        outcome = twin.runTcrs(reports, rng)
    revenue = outcome.revenue
    return {"lanes": nLanes,
            "revenue": float(revenue.sum()),
            "revenueSquared": float((revenue**2).sum()),
            "allocation": outcome.allocation.sum(axis=0).astype(np.int64),
            "infeasible": int((~outcome.feasible).sum()),
            "keepFlips": outcome.keepFlips,
            "pstarTosses": outcome.pstarTosses,
            "keepTosses": int(outcome.trace.keepTosses.sum()),
            "traces": [outcome.trace.events(0)] if keepTrace and nLanes else []}


def summarizeMechanism(totals, mechanism, nSigma=SIGMA_MARGIN):
    """Compare summed counters with the interim rule's predictions.

    The expected revenue is ``b(c - epsilon)`` times the rule's revenue and
    the allocation rate of (i, j) is ``b(c - epsilon) E_t[pi_{i,j}(t)]``.
    """
    nRuns = totals["lanes"]
    scale = mechanism.b*mechanism.keepTarget
    meanRevenue = totals["revenue"]/nRuns
    variance = max(totals["revenueSquared"]/nRuns - meanRevenue**2, 0.0)
    revenueSigma = np.sqrt(variance/nRuns)
    expectedRevenue = scale*mechanism.rule.expectedRevenue(mechanism.instance)
    revenueOk = abs(meanRevenue - expectedRevenue) <= nSigma*revenueSigma + 1e-9

    expectedRates = scale*np.array([space.probs @ pi for space, pi in
                                    zip(mechanism.instance.typeSpaces, mechanism.rule.pi)])
    rates = totals["allocation"]/nRuns
    rateSigma = binomialSigma(expectedRates, nRuns)
    allocationOk = np.abs(rates - expectedRates) <= nSigma*rateSigma + 1e-9

    flips = totals["keepFlips"]
    # estimated p* only approximates the identities
    exact = mechanism.keepMode != "estimated"
    passed = totals["infeasible"] == 0 and (not exact or (revenueOk and allocationOk.all()))
    return pipeBase.Struct(nTrials=int(nRuns),
                           declaredC=float(mechanism.c),
                           keepTarget=float(mechanism.keepTarget),
                           meanRevenue=float(meanRevenue),
                           revenueSigma=float(revenueSigma),
                           expectedRevenue=float(expectedRevenue),
                           lpObjective=float(mechanism.rule.objective),
                           allocationRates=rates,
                           expectedAllocationRates=expectedRates,
                           infeasible=int(totals["infeasible"]),
                           keepFlips=int(flips),
                           pstarTossesPerFlip=totals["pstarTosses"]/flips if flips else 0.0,
                           keepTossesPerFlip=totals["keepTosses"]/flips if flips else 0.0,
                           keepClampCount=int(mechanism.keepClampCount),
                           revenueIdentity=bool(revenueOk),
                           allocationIdentity=bool(allocationOk.all()),
                           traces=totals.get("traces", []),
                           passed=bool(passed))


class RunMechanismConfig(OcrsTaskConfigBase):
    """Config for RunMechanismTask"""
    mechanism = pexConfig.ConfigField(
        dtype=MechanismConfig,
        doc="Scheme and keep-flip settings",
    )
    solveLp = pexConfig.ConfigurableField(
        target=SolveInterimLpTask,
        doc="Task solving LP1 when no interim rule file is given",
    )
    sequential = pexConfig.Field(
        doc="Read reports one agent at a time (online scheme) instead of all at once",
        dtype=bool,
        default=True,
    )
    doBicAudit = pexConfig.Field(
        doc="Audit truthful against misreported utilities",
        dtype=bool,
        default=False,
    )
    auditRuns = pexConfig.RangeField(
        doc="Runs per (agent, report) pair in the BIC audit",
        dtype=int,
        default=20000,
        min=2,
    )
    nSigma = pexConfig.RangeField(
        doc="Sigma margin of the identity and audit checks",
        dtype=float,
        default=SIGMA_MARGIN,
        min=0.0,
    )

    def setDefaults(self):
        super().setDefaults()
        self.trials = 20000


class RunMechanismTask(OcrsBaseTask):
    """Run the truthful mechanism of an interim rule and check its revenue.
    """
    ConfigClass = RunMechanismConfig
    _DefaultName = "runMechanism"

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self.makeSubtask("solveLp")

    @timeMethod
    def run(self, instance=None, rule=None):
        """Simulate the mechanism.

        Parameters
        ----------
        instance : `ocrsmech.instances.AuctionInstance`, optional
        rule : `ocrsmech.interimLp.InterimRule`, optional

        Returns
        -------
        result : `lsst.pipe.base.Struct`
            ``mechanism``, ``summary`` (see `summarizeMechanism`),
            ``audit`` (`None` unless ``doBicAudit``) and ``passed``.
        """
        instance = self.loadInstance(instance)
        rule = self.loadInterimRule(instance, rule)
        if rule is None:
            rule = self.solveLp.run(instance).rule

        mechanism = Mechanism(self.config.mechanism, instance, rule, seed=self.config.seed).prepare()
        self.log.info("Mechanism with %s scheme: c = %.6g, keep target %.6g, %s keep flips",
                      mechanism.scheme.name, mechanism.c, mechanism.keepTarget, mechanism.keepMode)
        if mechanism.keepClampCount:
            self.log.warning("%d keep probabilities were clamped to 1", mechanism.keepClampCount)

        def _chunk(index, nLanes, rng):
            return mechanismCounts(mechanism, nLanes, rng, sequential=self.config.sequential,
                                   keepTrace=(index == 0))

        summary = summarizeMechanism(self.runTrials(_chunk), mechanism, nSigma=self.config.nSigma)
        self.log.info("Mean revenue %.6g (expected %.6g +/- %.3g), %d infeasible runs",
                      summary.meanRevenue, summary.expectedRevenue, summary.revenueSigma, summary.infeasible)

        audit = None
        passed = summary.passed
        if self.config.doBicAudit:
            audit = bicAudit(mechanism, self.config.auditRuns, makeRng(self.config.seed, AUDIT_STREAM),
                             sequential=self.config.sequential, nSigma=self.config.nSigma)
            passed = passed and not audit.violations and not audit.identityFailures
        return pipeBase.Struct(mechanism=mechanism, summary=summary, audit=audit, passed=bool(passed))
