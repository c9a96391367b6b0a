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
"""Simulate the budget-feasible procurement auction of an LP2 rule."""

import numpy as np

import lsst.pex.config as pexConfig
import lsst.pipe.base as pipeBase
from lsst.utils.timer import timeMethod

from .mechanism import MechanismConfig
from .ocrsRunMechanism import AUDIT_STREAM
from .ocrsSolveLp import SolveInterimLpTask
from .ocrsTaskBase import OcrsBaseTask, OcrsTaskConfigBase
from .procurement import ProcurementMechanism, runProcurement, sellerBicAudit
from .utilities import SIGMA_MARGIN, makeRng

__all__ = ["RunProcurementConfig", "RunProcurementTask", "procurementCounts", "summarizeProcurement"]


def procurementCounts(mechanism, nLanes, rng):
    """Budget, payment and value counters of one chunk of auctions."""
    twin = mechanism.spawn()
    reports = twin.instance.sampleReports(rng, nLanes)
    outcome = runProcurement(twin, reports, rng)
    return {"lanes": nLanes,
            "overBudget": int((~outcome.withinBudget).sum()),
            "payment": float(outcome.totalPayment.sum()),
            "value": float(outcome.buyerValue.sum()),
            "valueSquared": float((outcome.buyerValue**2).sum()),
            "procured": outcome.procured.sum(axis=0).astype(np.int64),
            "paid": int(outcome.paid.sum()),
            "selected": int(outcome.selected.sum()),
            "pstarTosses": int(outcome.pstarTosses)}


def summarizeProcurement(totals, mechanism, nSigma=SIGMA_MARGIN):
    """Check the budget and compare the buyer's value with ``(c - epsilon)`` LP2."""
    nRuns = totals["lanes"]
    meanValue = totals["value"]/nRuns
    variance = max(totals["valueSquared"]/nRuns - meanValue**2, 0.0)
    valueSigma = np.sqrt(variance/nRuns)
    lpObjective = float(mechanism.rule.objective)
    target = mechanism.keepTarget*lpObjective
    ratio = meanValue/lpObjective if lpObjective > 0.0 else float("nan")
    valueOk = meanValue >= target - nSigma*valueSigma - 1e-9
    return pipeBase.Struct(nTrials=int(nRuns),
                           declaredC=float(mechanism.c),
                           keepTarget=float(mechanism.keepTarget),
                           budget=float(mechanism.instance.budget),
                           overBudget=int(totals["overBudget"]),
                           meanPayment=totals["payment"]/nRuns,
                           meanValue=float(meanValue),
                           valueSigma=float(valueSigma),
                           lpObjective=lpObjective,
                           valueRatio=float(ratio),
                           procurementRates=totals["procured"]/nRuns,
                           selected=int(totals["selected"]),
                           paid=int(totals["paid"]),
                           pstarTosses=int(totals["pstarTosses"]),
                           passed=bool(totals["overBudget"] == 0 and valueOk))


class RunProcurementConfig(OcrsTaskConfigBase):
    """Config for RunProcurementTask"""
    mechanism = pexConfig.ConfigField(
        dtype=MechanismConfig,
        doc="Stochastic-knapsack scheme and keep-flip settings",
    )
    solveLp = pexConfig.ConfigurableField(
        target=SolveInterimLpTask,
        doc="Task solving LP2 when no interim rule file is given",
    )
    doBicAudit = pexConfig.Field(
        doc="Audit truthful against misreported seller utilities",
        dtype=bool,
        default=False,
    )
    auditRuns = pexConfig.RangeField(
        doc="Runs per (seller, report) pair in the BIC audit",
        dtype=int,
        default=20000,
        min=2,
    )
    nSigma = pexConfig.RangeField(
        doc="Sigma margin of the value and audit checks",
        dtype=float,
        default=SIGMA_MARGIN,
        min=0.0,
    )

    def setDefaults(self):
        super().setDefaults()
        self.mechanism.scheme.scheme = "stochasticKnapsack"

    def validate(self):
        super().validate()

        if self.mechanism.scheme.scheme not in ("auto", "stochasticKnapsack"):
            msg = "procurement runs the stochasticKnapsack scheme"
            raise pexConfig.FieldValidationError(RunProcurementConfig.mechanism, self, msg)


class RunProcurementTask(OcrsBaseTask):
    """Run the sequential procurement auction and check budget and value."""
    ConfigClass = RunProcurementConfig
    _DefaultName = "runProcurement"

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self.makeSubtask("solveLp")

    @timeMethod
    def run(self, instance=None, rule=None):
        """Simulate the procurement auction.

        Parameters
        ----------
        instance : `ocrsmech.instances.ProcurementInstance`, optional
        rule : `ocrsmech.interimLp.ProcurementInterimRule`, optional

        Returns
        -------
        result : `lsst.pipe.base.Struct`
            ``mechanism``, ``summary`` (see `summarizeProcurement`),
            ``audit`` and ``passed``.
        """
        instance = self.loadInstance(instance)
        if instance.kind != "procurement":
            raise pipeBase.TaskError("runProcurement needs a procurement instance, got %s" % (instance.kind))
        rule = self.loadInterimRule(instance, rule)
        if rule is None:
            rule = self.solveLp.run(instance).rule

        mechanism = ProcurementMechanism(self.config.mechanism, instance, rule, seed=self.config.seed)
        mechanism.prepare()
        self.log.info("Procurement with c = %.6g over budget %.6g", mechanism.c, instance.budget)

        def _chunk(index, nLanes, rng):
            return procurementCounts(mechanism, nLanes, rng)

        summary = summarizeProcurement(self.runTrials(_chunk), mechanism, nSigma=self.config.nSigma)
        if summary.overBudget:
            self.log.warning("%d auctions paid more than the budget", summary.overBudget)
        self.log.info("Buyer value %.6g = %.4g x LP2 objective %.6g", summary.meanValue, summary.valueRatio,
                      summary.lpObjective)

        audit = None
        passed = summary.passed
        if self.config.doBicAudit:
            audit = sellerBicAudit(mechanism, self.config.auditRuns, makeRng(self.config.seed, AUDIT_STREAM),
                                   nSigma=self.config.nSigma)
            passed = passed and not audit.violations and not audit.identityFailures
        return pipeBase.Struct(mechanism=mechanism, summary=summary, audit=audit, passed=bool(passed))
