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
"""Mechanisms built from an interim rule and an online scheme.

Every agent is charged ``b(c - epsilon) q_i(r_i)`` up front.  Cell (i, j) is
then active with probability ``b pi_{i,j}(r_i)``, offered to the scheme, and
a selected cell is allocated with probability ``(c - epsilon)/p*`` where
``p*`` is the scheme's conditional selection probability.  The allocation
rate of every (agent, report, item) is therefore exactly
``b(c - epsilon) pi_{i,j}(r_i)`` and the mechanism inherits the incentive
properties of the interim rule.

The keep flip comes in three flavours: a closed-form ``p*`` from the scheme,
an exact Bernoulli factory fed by replays of the scheme, or a Monte Carlo
estimate of ``p*``.
"""

import copy

import numpy as np

import lsst.pex.config as pexConfig
import lsst.pipe.base as pipeBase
from lsst.utils.logging import getLogger

from .bernoulli import constantCoin, divide, samplerCoin
from .errors import DimensionMismatchError, KeepCoinPreconditionError
from .runTrace import RunTrace
from .schemeFactory import SchemeConfig, makeScheme
from .utilities import SIGMA_MARGIN, makeRng

__all__ = ["KEEP_TOLERANCE", "MechanismConfig", "MechanismOutcome", "Mechanism", "pstarCoin", "keepCoin",
           "runTcrsMechanism", "runTocrsMechanism", "bicAudit"]

# p* may fall short of the declared c by this much from round-off
KEEP_TOLERANCE = 1e-12

# sub-stream keys under the mechanism seed
ESTIMATION_STREAM = 1
PSTAR_STREAM = 2

_log = getLogger("ocrsmech.mechanism")


class MechanismConfig(pexConfig.Config):
    """Config for turning an interim rule into a mechanism"""
    scheme = pexConfig.ConfigField(
        doc="Online scheme rounding the interim rule",
        dtype=SchemeConfig,
    )
    epsilon = pexConfig.RangeField(
        doc="Slack subtracted from the declared c; the keep target is c - epsilon",
        dtype=float,
        default=0.01,
        min=0.0,
        max=1.0,
        inclusiveMin=True,
        inclusiveMax=False,
    )
    keepMode = pexConfig.ChoiceField(
        doc="How the keep flip with bias (c - epsilon)/p* is produced",
        dtype=str,
        default="knownProbability",
        allowed={
            "knownProbability": "p* from the scheme's closed form (oracle schemes only)",
            "exactBernoulli": "Division Bernoulli factory fed by scheme replays (epsilon > 0)",
            "estimated": "p* estimated from pstarEstimateSamples scheme replays",
        },
    )
    pstarEstimateSamples = pexConfig.RangeField(
        doc="Scheme replays per (agent, item, report) in estimated keep mode",
        dtype=int,
        default=4000,
        min=1,
    )
    pstarBatch = pexConfig.RangeField(
        doc="Scheme replays simulated at once to feed a p* coin",
        dtype=int,
        default=256,
        min=1,
    )

    def validate(self):
        super().validate()

        if self.keepMode == "exactBernoulli" and not self.epsilon > 0.0:
            msg = "exactBernoulli keep mode needs epsilon > 0"
            raise pexConfig.FieldValidationError(MechanismConfig.epsilon, self, msg)
        if self.keepMode == "knownProbability" and self.scheme.mode != "oracle":
            msg = "knownProbability keep mode needs an oracle-mode scheme"
            raise pexConfig.FieldValidationError(MechanismConfig.keepMode, self, msg)


class _ReplayBuffer:
    """Bit source replaying the scheme with (i, j) forced active, in batches."""
    def __init__(self, scheme, i, j, report, rng, batch):
        self.scheme = scheme
        self.key = (i, j, report)
        self.rng = rng
        self.batch = batch
        self.values = np.zeros(0, dtype=bool)
        self.position = 0
        self.replays = 0

    def __call__(self):
        if self.position >= self.values.size:
            self.values = self.scheme.simulateSelection(*self.key, self.batch, self.rng)
            self.position = 0
            self.replays += self.batch
        value = self.values[self.position]
        self.position += 1
        return int(value)


def keepCoin(pstar, c, epsilon, mode, rng, pstarValue=None):
    """Coin with bias ``(c - epsilon)/p*``.

    Parameters
    ----------
    pstar : `ocrsmech.bernoulli.Coin` or `None`
        Coin of bias ``p*``; required in ``exactBernoulli`` mode.
    c : `float`
        Declared selection probability of the scheme.
    epsilon : `float`
        Slack; the division factory uses it as the gap ``p* - (c - epsilon)``.
    mode : `str`
        ``"exactBernoulli"``, ``"knownProbability"`` or ``"estimated"``.
    rng : `numpy.random.Generator`
    pstarValue : `float`, optional
        Known or estimated ``p*``; defaults to ``pstar.bias``.

    Returns
    -------
    coin : `ocrsmech.bernoulli.Coin`

    Raises
    ------
    ValueError
        If ``c - epsilon`` is not positive or exact mode gets
        ``epsilon <= 0``.
    KeepCoinPreconditionError
        If a known ``p*`` falls below ``c``.
    """
    target = c - epsilon
    if not target > 0.0:
        raise ValueError("keep target c - epsilon = %.6g must be positive" % (target))
    if mode == "exactBernoulli":
        if not epsilon > 0.0:
            raise ValueError("exact keep flips need epsilon > 0, got %r" % (epsilon, ))
        return divide(constantCoin(target, rng), pstar, epsilon)
    value = pstarValue
    if value is None and pstar is not None:
        value = pstar.bias
    if value is None:
        raise ValueError("%s keep mode needs a value for p*" % (mode))
    if mode == "knownProbability":
        if value < c - KEEP_TOLERANCE:
            raise KeepCoinPreconditionError("p* = %.12g is below the declared c = %.12g" % (value, c))
        return constantCoin(min(1.0, target/value), rng)
    if mode == "estimated":
        return constantCoin(min(1.0, target/value) if value > 0.0 else 1.0, rng)
    raise ValueError("unknown keep mode %r" % (mode, ))


class MechanismOutcome:
    """Allocation, payments and trace of a batch of runs.

    Parameters
    ----------
    trace : `ocrsmech.runTrace.RunTrace`
    constraint : `ocrsmech.constraints.FeasibilityConstraint`
    """
    def __init__(self, trace, constraint):
        self.trace = trace
        self.allocation = trace.allocation
        self.payments = trace.payments
        self.feasible = constraint.isFeasibleBatch(trace.allocation)
        if hasattr(constraint, "weights"):
            trace.load = (trace.allocation*constraint.weights[np.newaxis]).sum(axis=(1, 2))

    @property
    def nRuns(self):
        return self.trace.nRuns

    @property
    def revenue(self):
        """Total payment of each run."""
        return self.payments.sum(axis=1)

    @property
    def pstarTosses(self):
        """Scheme replays consumed by keep flips, over all runs."""
        return int(self.trace.pstarTosses.sum())

    @property
    def keepFlips(self):
        return int(self.trace.selected.sum())


class Mechanism:
    """An interim rule bound to a scheme.

    Parameters
    ----------
    config : `MechanismConfig`
    instance : `ocrsmech.instances.AuctionInstance`
    rule : `ocrsmech.interimLp.InterimRule`
        Feasible-in-expectation BIC-IR rule for ``instance``.
    seed : `int`, optional
        Seed of the scheme's estimation replays and of the ``p*`` estimates.
    scheme : `ocrsmech.schemes.OnlineScheme`, optional
        Prebuilt scheme; built from ``config.scheme`` when omitted.

    Raises
    ------
    lsst.pex.config.FieldValidationError
        If ``c - epsilon`` is not positive.
    """
    def __init__(self, config, instance, rule, seed=0, scheme=None):
        config.validate()
        rule.checkShape(instance)
        self.config = config
        self.instance = instance
        self.rule = rule
        self.seed = int(seed)
        self.process = rule.process(instance)
        if scheme is None:
            scheme = makeScheme(config.scheme, instance.constraint, self.process,
                                rng=makeRng(self.seed, ESTIMATION_STREAM))
        self.scheme = scheme
        self.shape = instance.shape
        self.b = scheme.b
        self.c = scheme.declaredC
        self.epsilon = config.epsilon
        self.keepMode = config.keepMode
        if not self.c - self.epsilon > 0.0:
            msg = "epsilon %.6g must stay below the declared c %.6g" % (self.epsilon, self.c)
            raise pexConfig.FieldValidationError(MechanismConfig.epsilon, config, msg)
        self.keepTarget = self.c - self.epsilon
        self.paymentTable = [self.b*self.keepTarget*q for q in rule.q]
        self.keepClampCount = 0
        self._keepTables = {}
        self._pstarEstimates = {}

    def prepare(self):
        """Fill the keep tables of every agent ahead of concurrent runs."""
        if self.keepMode != "exactBernoulli":
            for i in range(self.shape[0]):
                self.keepProbabilities(i)
        return self

    def spawn(self):
        """Copy with its own scheme run state, sharing all tables."""
        twin = copy.copy(self)
        twin.scheme = self.scheme.spawn()
        return twin

    def knownPstar(self, i, j, report):
        p = self.scheme.selectionProbability(i, j, report)
        if p is None:
            raise ValueError("scheme %s has no closed-form selection probability" % (self.scheme.name))
        return p

    def estimatedPstar(self, i, j, report):
        """Monte Carlo ``p*`` from a stream keyed on (i, j, report)."""
        key = (i, j, int(report))
        if key not in self._pstarEstimates:
            rng = makeRng(self.seed, PSTAR_STREAM, *key)
            replays = self.scheme.simulateSelection(i, j, int(report), self.config.pstarEstimateSamples, rng)
            self._pstarEstimates[key] = float(np.mean(replays))
        return self._pstarEstimates[key]

    def keepProbabilities(self, i):
        """``(nTypes_i, nItems)`` keep probabilities of agent ``i``."""
        if i not in self._keepTables:
            nTypes = self.instance.nTypes[i]
            table = np.zeros((nTypes, self.shape[1]))
            for r in range(nTypes):
                for j in range(self.shape[1]):
                    if self.keepMode == "knownProbability":
                        value = self.knownPstar(i, j, r)
                        if value < self.c - KEEP_TOLERANCE:
                            raise KeepCoinPreconditionError("p*(%d, %d, %d) = %.12g is below c = %.12g" %
                                                            (i, j, r, value, self.c))
                    else:
                        value = self.estimatedPstar(i, j, r)
                    ratio = self.keepTarget/value if value > 0.0 else np.inf
                    if ratio > 1.0 + KEEP_TOLERANCE:
                        self.keepClampCount += 1
                    table[r, j] = min(1.0, ratio)
            self._keepTables[i] = table
        return self._keepTables[i]

    def pstarCoin(self, i, j, report, rng):
        """Coin whose tosses are scheme replays with (i, j) forced active.

        The replays draw the other agents' types from their distributions,
        fix agent ``i``'s row type to ``report`` and return whether the
        scheme selected (i, j).  Each toss is one replay.
        """
        buffer = _ReplayBuffer(self.scheme, i, j, int(report), rng, self.config.pstarBatch)
        return samplerCoin(buffer, rng, bias=self.scheme.selectionProbability(i, j, int(report)))

    def _newTrace(self, reports):
        reports = np.array(reports, dtype=np.int64, ndmin=2)
        nRuns, nSeen = reports.shape
        if nSeen > self.shape[0]:
            raise DimensionMismatchError("%d reports for %d agents" % (nSeen, self.shape[0]))
        for i in range(nSeen):
            if np.any(reports[:, i] < 0) or np.any(reports[:, i] >= self.instance.nTypes[i]):
                raise ValueError("report of agent %d outside its %d types" % (i, self.instance.nTypes[i]))
        trace = RunTrace(nRuns, self.shape, nSeen)
        trace.reports[:, :nSeen] = reports
        for i in range(nSeen):
            trace.payments[:, i] = self.paymentTable[i][reports[:, i]]
        return trace

    def _flipKeeps(self, i, trace, rng, coins):
        reports = trace.reports[:, i]
        selected = trace.selected[:, i]
        if self.keepMode == "exactBernoulli":
            keep = np.zeros_like(selected)
            for lane, j in zip(*np.nonzero(selected)):
                key = (j, int(reports[lane]))
                if key not in coins:
                    coins[key] = self.pstarCoin(i, j, reports[lane], rng)
                pstar = coins[key]
                before = pstar.tosses
                flip = keepCoin(pstar, self.c, self.epsilon, self.keepMode, rng)
                keep[lane, j] = bool(flip.sample())
                trace.pstarTosses[lane, i, j] = pstar.tosses - before
                trace.keepTosses[lane, i, j] = flip.tosses - pstar.tosses
        else:
            keep = rng.random(selected.shape) < self.keepProbabilities(i)[reports]
        trace.keep[:, i] = keep & selected
        trace.allocation[:, i] = keep & selected

    def runTocrs(self, reports, rng):
        """Sequential runs; agent ``i`` is settled before report ``i+1`` is read.

        Parameters
        ----------
        reports : array-like, (nRuns, nSeen)
            Reports of the first ``nSeen`` agents in each lane.
        rng : `numpy.random.Generator`

        Returns
        -------
        outcome : `MechanismOutcome`
        """
        trace = self._newTrace(reports)
        self.scheme.reset(trace.nRuns, rng)
        trace.branch[:] = self.scheme.branch
        coins = {}
        for i in range(trace.nSeen):
            rowTypes = trace.reports[:, i]
            trace.active[:, i] = self.process.sampleRowActivation(i, rowTypes, self.b, rng)
            coins.clear()
            for j in range(self.shape[1]):
                trace.selected[:, i, j] = self.scheme.offer(i, j, rowTypes, trace.active[:, i, j])
            self._flipKeeps(i, trace, rng, coins)
        return MechanismOutcome(trace, self.instance.constraint)

    def runTcrs(self, reports, rng):
        """Runs that draw the whole active set before querying the scheme."""
        trace = self._newTrace(reports)
        if trace.nSeen != self.shape[0]:
            raise DimensionMismatchError("the non-sequential mechanism needs all %d reports" %
                                         (self.shape[0]))
        for i in range(self.shape[0]):
            trace.active[:, i] = self.process.sampleRowActivation(i, trace.reports[:, i], self.b, rng)
        trace.selected[:] = self.scheme.run(trace.active, trace.reports, rng)
        trace.branch[:] = self.scheme.branch
        for i in range(self.shape[0]):
            self._flipKeeps(i, trace, rng, {})
        return MechanismOutcome(trace, self.instance.constraint)


def pstarCoin(mechanism, i, j, report, rng):
    """Coin with bias ``p*_{i,j}(report)``; one toss is one scheme replay."""
    return mechanism.pstarCoin(i, j, report, rng)


def runTcrsMechanism(mechanism, reports, rng):
    """Non-sequential mechanism: sample all activations, query the scheme once.

    Parameters
    ----------
    mechanism : `Mechanism`
    reports : array-like, (nRuns, nAgents) or (nAgents,)
        One type index per agent and lane.
    rng : `numpy.random.Generator`

    Returns
    -------
    outcome : `MechanismOutcome`
    """
    return mechanism.runTcrs(reports, rng)


def runTocrsMechanism(mechanism, reportStream, rng):
    """Sequential mechanism over a (possibly truncated) report stream.

    Returns
    -------
    outcome : `MechanismOutcome`
        Outcomes of the agents whose reports were read.
    """
    return mechanism.runTocrs(reportStream, rng)


def bicAudit(mechanism, nRuns, rng, sequential=True, nSigma=SIGMA_MARGIN):
    """Empirical interim utilities of every (agent, true type, report).

    Agent ``i`` reports ``s`` while the others report truthfully; the same
    runs give the utility of every true type ``t`` since the mechanism only
    sees the report.

    Returns
    -------
    result : `lsst.pipe.base.Struct`
        ``records`` (`list` [`dict`]) with empirical and analytic utilities,
        ``violations`` (misreports beating truth by more than ``nSigma``)
        and ``identityFailures`` (records off the analytic utility by more
        than ``nSigma``).
    """
    instance, rule = mechanism.instance, mechanism.rule
    run = mechanism.runTocrs if sequential else mechanism.runTcrs
    scale = mechanism.b*mechanism.keepTarget
    records = []
    table = {}
    for i, space in enumerate(instance.typeSpaces):
        for s in range(space.nTypes):
            reports = instance.sampleReports(rng, nRuns)
            reports[:, i] = s
            outcome = run(reports, rng)
            allocation = outcome.allocation[:, i, :].astype(np.float64)
            payment = outcome.payments[:, i]
            for t in range(space.nTypes):
                utility = allocation @ space.support[t] - payment
                sigma = utility.std(ddof=1)/np.sqrt(nRuns) if nRuns > 1 else 0.0
                analytic = scale*(space.support[t] @ rule.pi[i][s] - rule.q[i][s])
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
    _log.info("BIC audit: %d records, %d violations, %d identity failures", len(records), len(violations),
              len(identityFailures))
    return pipeBase.Struct(records=records, violations=violations, identityFailures=identityFailures)
