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
"""Sequential budget-feasible procurement auctions.

Sellers are approached in index order.  The stochastic-knapsack scheme is
offered seller ``i`` with weight ``q_i(r_i)``, the interim payment of its
report; a selected seller is paid ``q_i(r_i)`` with probability
``(c - epsilon)/p*_i(r_i)``.  Each service is procured independently with
probability ``(c - epsilon) pi_{i,j}(r_i)``.  Payments only ever go to
sellers packed in the knapsack, so they never exceed the budget.
"""

import copy

import numpy as np

import lsst.pex.config as pexConfig
import lsst.pipe.base as pipeBase
from lsst.utils.logging import getLogger

from .bernoulli import samplerCoin
from .errors import DimensionMismatchError, KeepCoinPreconditionError
from .mechanism import ESTIMATION_STREAM, KEEP_TOLERANCE, PSTAR_STREAM, MechanismConfig, keepCoin
from .schemeFactory import makeProcurementScheme
from .utilities import SIGMA_MARGIN, makeRng

__all__ = ["BUDGET_TOLERANCE", "ProcurementOutcome", "ProcurementMechanism", "runProcurement",
           "sellerBicAudit"]

BUDGET_TOLERANCE = 1e-9

_log = getLogger("ocrsmech.procurement")


class ProcurementOutcome:
    """Payments, procured services and buyer value of a batch of runs."""
    def __init__(self, reports, selected, paid, payments, procured, values, budget):
        self.reports = reports
        self.selected = selected
        self.paid = paid
        self.payments = payments
        self.procured = procured
        self.buyerValue = (procured*values[np.newaxis]).sum(axis=(1, 2))
        self.totalPayment = payments.sum(axis=1)
        self.withinBudget = self.totalPayment <= budget + BUDGET_TOLERANCE
        self.pstarTosses = 0

    @property
    def nRuns(self):
        return self.reports.shape[0]


class ProcurementMechanism:
    """A procurement interim rule bound to a stochastic-knapsack scheme.

    Parameters
    ----------
    config : `ocrsmech.mechanism.MechanismConfig`
        Its ``scheme`` must select ``stochasticKnapsack`` (or ``auto``).
    instance : `ocrsmech.instances.ProcurementInstance`
    rule : `ocrsmech.interimLp.ProcurementInterimRule`
    seed : `int`, optional
    scheme : `ocrsmech.stochasticKnapsack.StochasticKnapsackOcrs`, optional
    """
    def __init__(self, config, instance, rule, seed=0, scheme=None):
        config.validate()
        rule.checkShape(instance)
        self.config = config
        self.instance = instance
        self.rule = rule
        self.seed = int(seed)
        if scheme is None:
            scheme = makeProcurementScheme(config.scheme, instance, rule,
                                           rng=makeRng(self.seed, ESTIMATION_STREAM))
        self.scheme = scheme
        self.c = scheme.declaredC
        self.epsilon = config.epsilon
        self.keepMode = config.keepMode
        if not self.c - self.epsilon > 0.0:
            msg = "epsilon %.6g must stay below the declared c %.6g" % (self.epsilon, self.c)
            raise pexConfig.FieldValidationError(MechanismConfig.epsilon, config, msg)
        self.keepTarget = self.c - self.epsilon
        self.weights = [np.clip(q, 0.0, instance.budget) for q in rule.q]
        self.keepClampCount = 0
        self._keepTables = {}

    def prepare(self):
        if self.keepMode != "exactBernoulli":
            for i in range(self.instance.n):
                self.keepProbabilities(i)
        return self

    def spawn(self):
        twin = copy.copy(self)
        twin.scheme = self.scheme.spawn()
        return twin

    def pstar(self, i, report):
        """Known or estimated probability that seller ``i`` is packed given ``report``."""
        weight = self.weights[i][report]
        if self.keepMode == "knownProbability":
            value = self.scheme.selectionProbability(i, weight)
            if value is None:
                raise ValueError("scheme has no closed-form selection probability")
            if value < self.c - KEEP_TOLERANCE:
                raise KeepCoinPreconditionError("p*(%d, %d) = %.12g is below c = %.12g" %
                                            (i, report, value, self.c))
            return value
        rng = makeRng(self.seed, PSTAR_STREAM, i, report)
        return float(np.mean(self.scheme.simulateSelection(i, weight, self.config.pstarEstimateSamples, rng)))

    def keepProbabilities(self, i):
        if i not in self._keepTables:
            table = np.zeros(self.instance.nTypes[i])
            for r in range(table.size):
                value = self.pstar(i, r)
                ratio = self.keepTarget/value if value > 0.0 else np.inf
                if ratio > 1.0 + KEEP_TOLERANCE:
                    self.keepClampCount += 1
                table[r] = min(1.0, ratio)
            self._keepTables[i] = table
        return self._keepTables[i]

    def pstarCoin(self, i, report, rng):
        """Coin whose tosses replay the scheme with seller ``i`` at weight ``q_i(report)``."""
        weight = self.weights[i][report]
        batch = self.config.pstarBatch
        state = {"values": np.zeros(0, dtype=bool), "position": 0}

        def _replay():
            if state["position"] >= state["values"].size:
                state["values"] = self.scheme.simulateSelection(i, weight, batch, rng)
                state["position"] = 0
            value = state["values"][state["position"]]
            state["position"] += 1
            return int(value)

        return samplerCoin(_replay, rng, bias=self.scheme.selectionProbability(i, weight))

    def run(self, reports, rng):
        """Sequential runs over the first ``nSeen`` sellers' reports.

        Parameters
        ----------
        reports : array-like, (nRuns, nSeen)
        rng : `numpy.random.Generator`

        Returns
        -------
        outcome : `ProcurementOutcome`
        """
        reports = np.array(reports, dtype=np.int64, ndmin=2)
        nRuns, nSeen = reports.shape
        n, m = self.instance.shape
        if nSeen > n:
            raise DimensionMismatchError("%d reports for %d sellers" % (nSeen, n))
        for i in range(nSeen):
            if np.any(reports[:, i] < 0) or np.any(reports[:, i] >= self.instance.nTypes[i]):
                raise ValueError("report of seller %d outside its %d types" % (i, self.instance.nTypes[i]))
        selected = np.zeros((nRuns, n), dtype=bool)
        paid = np.zeros((nRuns, n), dtype=bool)
        payments = np.zeros((nRuns, n))
        procured = np.zeros((nRuns, n, m), dtype=bool)
        pstarTosses = 0

        self.scheme.reset(nRuns, rng)
        for i in range(nSeen):
            r = reports[:, i]
            weights = self.weights[i][r]
            selected[:, i] = self.scheme.offer(i, weights)
            if self.keepMode == "exactBernoulli":
                coins = {}
                keep = np.zeros(nRuns, dtype=bool)
                for lane in np.nonzero(selected[:, i])[0]:
                    report = int(r[lane])
                    if report not in coins:
                        coins[report] = self.pstarCoin(i, report, rng)
                    before = coins[report].tosses
                    flip = keepCoin(coins[report], self.c, self.epsilon, self.keepMode, rng)
                    keep[lane] = bool(flip.sample())
                    pstarTosses += coins[report].tosses - before
            else:
                keep = rng.random(nRuns) < self.keepProbabilities(i)[r]
            paid[:, i] = selected[:, i] & keep
            payments[:, i] = np.where(paid[:, i], weights, 0.0)
            procured[:, i] = rng.random((nRuns, m)) < self.keepTarget*self.rule.pi[i][r]

        outcome = ProcurementOutcome(reports, selected, paid, payments, procured, self.instance.values,
                                     self.instance.budget)
        outcome.pstarTosses = pstarTosses
        return outcome


def runProcurement(mechanism, reportStream, rng):
    """Run the sequential procurement auction.

    Parameters
    ----------
    mechanism : `ProcurementMechanism`
    reportStream : array-like, (nRuns, nSeen)
        Reported cost indices of the first ``nSeen`` sellers.
    rng : `numpy.random.Generator`

    Returns
    -------
    outcome : `ProcurementOutcome`
    """
    return mechanism.run(reportStream, rng)


def sellerBicAudit(mechanism, nRuns, rng, nSigma=SIGMA_MARGIN):
    """Empirical seller utilities of every (seller, true cost, report).

    The analytic utility of a seller with cost vector ``t`` reporting ``s``
    is ``(c - epsilon)(q(s) - t . pi(s))``.

    Returns
    -------
    result : `lsst.pipe.base.Struct`
        ``records``, ``violations`` and ``identityFailures`` as in
        `ocrsmech.mechanism.bicAudit`.
    """
    instance, rule = mechanism.instance, mechanism.rule
    records = []
    table = {}
    for i, space in enumerate(instance.costSpaces):
        for s in range(space.nTypes):
            reports = instance.sampleReports(rng, nRuns)
            reports[:, i] = s
            outcome = mechanism.run(reports, rng)
            procured = outcome.procured[:, i, :].astype(np.float64)
            payment = outcome.payments[:, i]
            for t in range(space.nTypes):
                utility = payment - procured @ space.support[t]
                sigma = utility.std(ddof=1)/np.sqrt(nRuns) if nRuns > 1 else 0.0
                analytic = mechanism.keepTarget*(rule.q[i][s] - space.support[t] @ rule.pi[i][s])
                record = {"agent": i, "trueType": t, "report": s, "empirical": float(utility.mean()),
                          "sigma": float(sigma), "analytic": float(analytic)}
                record["identityHolds"] = bool(abs(record["empirical"] - analytic) <= nSigma*sigma + 1e-12)
                records.append(record)
                table[(i, t, s)] = record

    violations = []
    for (i, t, s), record in table.items():
        if s == t:
            continue
        truth = table[(i, t, t)]
        margin = nSigma*np.hypot(truth["sigma"], record["sigma"]) + 1e-12
        if record["empirical"] > truth["empirical"] + margin:
            violations.append(record)
    identityFailures = [r for r in records if not r["identityHolds"]]
    _log.info("seller BIC audit: %d records, %d violations", len(records), len(violations))
    return pipeBase.Struct(records=records, violations=violations, identityFailures=identityFailures)
