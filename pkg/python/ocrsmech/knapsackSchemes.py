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
"""Two-level schemes for knapsack and multiple-choice knapsack.

Cells heavier than half the capacity are heavy, the rest light.  Each run
flips once between a heavy branch, which keeps at most one heavy cell, and a
light branch, which keeps light cells while the load stays below half the
capacity.  Every active cell is kept with a probability normalized by the
chance that its branch is still open when it arrives, so the conditional
selection probability is the same constant for every cell.

In oracle mode the chance of a light branch being open is computed exactly
by a dynamic program over the reachable loads.  The loads are accumulated in
the same order and with the same float additions the runs use, so the
program and the runs agree on every comparison with half the capacity.
"""

from collections import defaultdict

import numpy as np

from lsst.utils.logging import getLogger

from .constraints import checkProcessFeasibility
from .errors import DimensionMismatchError, ProbabilityRangeError, ProcessInfeasibleError, TooLargeError
from .estimation import estimateEventProbability
from .schemes import BRANCH_HEAVY, BRANCH_LIGHT, CLAMP_SLACK, OnlineScheme, clampProbabilities

__all__ = ["MAX_ORACLE_STATES", "KnapsackTocrs", "MultiChoiceKnapsackTocrs", "knapsackTocrs",
           "multiChoiceKnapsackTocrs"]

MAX_ORACLE_STATES = 10**6

_log = getLogger("ocrsmech.knapsackSchemes")


class KnapsackTocrs(OnlineScheme):
    """Scheme for a knapsack constraint and a two-level process.

    Parameters
    ----------
    constraint : `ocrsmech.constraints.Knapsack`
    process : `ocrsmech.twoLevelProcess.TwoLevelProcess`
        Process whose row vectors and marginal weights lie in the knapsack
        polytopes.
    b : `float`
        Activation scale in [0, 1].
    mode : `str`, optional
        ``"oracle"`` or ``"estimated"``.
    epsilon, delta : `float`, optional
        Estimation accuracy, estimated mode only.
    rng : `numpy.random.Generator`, optional
        Stream of the estimation replays.
    maxOracleStates : `int`, optional
        Cap on distinct loads in the oracle program.

    Raises
    ------
    ProcessInfeasibleError
        If the process lies outside the polytopes by more than 1e-9.
    TooLargeError
        If the oracle program exceeds ``maxOracleStates`` loads.
    """
    name = "knapsack"
    unitDemand = False
    # light normalizer 1/((1 + lightScale*b) Pr[open])
    lightScale = 4.0
    estimationLoss = 10.0

    def __init__(self, constraint, process, b, mode="oracle", epsilon=0.1, delta=0.01, rng=None,
                 maxOracleStates=MAX_ORACLE_STATES):
        if process.shape != constraint.shape:
            raise DimensionMismatchError("process shape %s != constraint shape %s" %
                                         (process.shape, constraint.shape))
        check = checkProcessFeasibility(process, constraint)
        if not check.feasible:
            raise ProcessInfeasibleError("process violates %s by %.3g" %
                                         (constraint.variant, check.maxViolation))
        exact = self.exactC(b)
        declared = exact if mode == "oracle" else exact*(1.0 - delta)/(1.0 + self.estimationLoss*epsilon)
        super().__init__(b, process, declared, mode=mode)
        self.constraint = constraint
        self.weights = constraint.weights
        self.half = constraint.capacity/2.
        self.heavy = constraint.heavy
        self.epsilon = float(epsilon)
        self.delta = float(delta)
        self.maxOracleStates = int(maxOracleStates)
        self.estimates = {}

        self.heavyProb = self._heavyProbabilities()
        if mode == "oracle":
            self.lightOpen, self.lightProb = self._lightOracle()
        else:
            if rng is None:
                raise ValueError("estimated mode needs an estimation rng")
            self.lightOpen, self.lightProb = self._lightEstimated(rng)
        _log.debug("%s scheme ready: c=%.6g, %d clamped probabilities", self.name, self.declaredC,
                   self.clampCount)

    @classmethod
    def exactC(cls, b):
        return 1.0/(2.0 + 8.0*b)

    @property
    def heavyBranchProbability(self):
        return 0.5

    def _normalize(self, openProb, scale, strict):
        """Selection probability ``1/(scale*openProb)``."""
        if strict and openProb < 1.0/scale - CLAMP_SLACK:
            raise ProbabilityRangeError("branch open with probability %.12g < %.12g" % (openProb, 1.0/scale))
        if openProb <= 0.0:
            self.clampCount += 1
            return 1.0
        return float(clampProbabilities(self, 1.0/(scale*openProb), strict=False))

    def _heavyProbabilities(self):
        scale = 1.0 + 4.0*self.b
        weights = self.process.marginalWeights
        earlier = 0.0
        tables = []
        for i in range(self.shape[0]):
            heavyRow = np.where(self.heavy[i], self.process.activation[i], 0.0)
            before = np.cumsum(heavyRow, axis=1) - heavyRow
            openProb = 1.0 - (self.b/scale)*(earlier + before)
            table = np.zeros_like(openProb)
            for d, j in zip(*np.nonzero(np.broadcast_to(self.heavy[i], openProb.shape))):
                table[d, j] = self._normalize(openProb[d, j], scale, strict=True)
            tables.append(table)
            earlier += float((weights[i]*self.heavy[i]).sum())
        return tables

    def _checkStates(self, states):
        if len(states) > self.maxOracleStates:
            raise TooLargeError("oracle program reached %d loads (cap %d)" %
                                (len(states), self.maxOracleStates))

    def _lightOracle(self):
        scale = 1.0 + self.lightScale*self.b
        dist = {0.0: 1.0}
        openTables, probTables = [], []
        for i in range(self.shape[0]):
            activation = self.process.activation[i]
            rowProbs = self.process.rowProbs[i]
            openTable = np.zeros(activation.shape)
            probTable = np.zeros(activation.shape)
            following = defaultdict(float)
            for d in range(activation.shape[0]):
                states = dict(dist)
                for j in range(self.shape[1]):
                    if self.heavy[i, j]:
                        continue
                    openTable[d, j] = sum(states.values())
                    probTable[d, j] = self._normalize(openTable[d, j], scale, strict=True)
                    move = self.b*activation[d, j]*probTable[d, j]
                    if move <= 0.0 or self.weights[i, j] == 0.0:
                        continue
                    updated = defaultdict(float)
                    for load, mass in states.items():
                        updated[load] += mass*(1.0 - move)
                        grown = load + self.weights[i, j]
                        if grown < self.half:
                            updated[grown] += mass*move
                    self._checkStates(updated)
                    states = updated
                for load, mass in states.items():
                    following[load] += rowProbs[d]*mass
            dist = dict(following)
            self._checkStates(dist)
            openTables.append(openTable)
            probTables.append(probTable)
        return openTables, probTables

    def _simulateLightOpen(self, conditioning, nLanes, rng):
        """Replay the light branch up to a cell; True where it is still open."""
        i, d, j = conditioning["row"], conditioning["rowType"], conditioning["item"]
        load = np.zeros(nLanes)
        rowTypes = self.process.sampleRowTypes(rng, nLanes, rows=range(i))
        rowTypes[:, i] = d
        for row in range(i + 1):
            types = rowTypes[:, row]
            active = self.process.sampleRowActivation(row, types, self.b, rng)
            taken = np.zeros(nLanes, dtype=bool)
            for item in range(self.shape[1] if row < i else j):
                if self.heavy[row, item]:
                    continue
                eligible = load < self.half
                if self.unitDemand:
                    eligible &= ~taken
                coin = rng.random(nLanes) < self.lightProb[row][types, item]
                selected = active[:, item] & eligible & coin
                load[selected] += self.weights[row, item]
                taken |= selected
        return load < self.half

    def _lightEstimated(self, rng):
        scale = 1.0 + self.lightScale*self.b
        self.lightProb = [np.zeros(a.shape) for a in self.process.activation]
        openTables = [np.zeros(a.shape) for a in self.process.activation]
        for i in range(self.shape[0]):
            for d in range(self.process.nTypes[i]):
                for j in range(self.shape[1]):
                    if self.heavy[i, j]:
                        continue
                    conditioning = {"row": i, "rowType": d, "item": j}
                    result = estimateEventProbability(self._simulateLightOpen, conditioning, self.epsilon,
                                                      self.delta, self.shape[0], self.shape[1], rng,
                                                      target=("light", i, j, d))
                    self.estimates[("light", i, j, d)] = result
                    openTables[i][d, j] = result.estimate
                    self.lightProb[i][d, j] = self._normalize(result.upper, scale, strict=False)
        return openTables, self.lightProb

    def _resetLanes(self):
        self.branch[:] = np.where(self.rng.random(self.nRuns) < self.heavyBranchProbability,
                                  BRANCH_HEAVY, BRANCH_LIGHT)
        self.load = np.zeros(self.nRuns)
        self.anySelected = np.zeros(self.nRuns, dtype=bool)
        self.rowTaken = np.zeros((self.nRuns, self.shape[0]), dtype=bool)

    def _decide(self, i, j, rowTypes, active):
        coin = self.rng.random(self.nRuns)
        if self.heavy[i, j]:
            eligible = (self.branch == BRANCH_HEAVY) & ~self.anySelected
            prob = self.heavyProb[i][rowTypes, j]
        else:
            eligible = (self.branch == BRANCH_LIGHT) & (self.load < self.half)
            if self.unitDemand:
                eligible &= ~self.rowTaken[:, i]
            prob = self.lightProb[i][rowTypes, j]
        selected = active & eligible & (coin < prob)
        self.load[selected] += self.weights[i, j]
        self.anySelected |= selected
        self.rowTaken[:, i] |= selected
        return selected

    def selectionProbability(self, i, j, rowType):
        return self.declaredC if self.mode == "oracle" else None


class MultiChoiceKnapsackTocrs(KnapsackTocrs):
    """Scheme for a knapsack where each agent gets at most one cell.

    The light branch also requires that no earlier cell of the row was kept.
    Given the load before row ``i`` is below half the capacity, the chance
    that cell ``j`` still finds its row empty falls by exactly
    ``b x_{i,j'}(d)/(1+3b)`` per earlier light cell ``j'``, so only the
    per-row probability of an open knapsack needs the program or an
    estimate.
    """
    name = "multiChoiceKnapsack"
    unitDemand = True
    lightScale = 3.0
    estimationLoss = 8.0

    @classmethod
    def exactC(cls, b):
        return 1.0/(2.0 + 7.0*b)

    @property
    def heavyBranchProbability(self):
        return (1.0 + 4.0*self.b)/(2.0 + 7.0*self.b)

    def _rowProbabilities(self, i, rowOpen, strict):
        """Light probabilities of row ``i`` from the chance its start is open."""
        scale = 1.0 + self.lightScale*self.b
        activation = self.process.activation[i]
        openTable = np.zeros(activation.shape)
        probTable = np.zeros(activation.shape)
        surrogate = rowOpen + (0.0 if strict else self.epsilon)
        for d in range(activation.shape[0]):
            earlier = 0.0
            for j in range(self.shape[1]):
                if self.heavy[i, j]:
                    continue
                openTable[d, j] = rowOpen - (self.b/scale)*earlier
                probTable[d, j] = self._normalize(surrogate - (self.b/scale)*earlier, scale, strict=strict)
                earlier += activation[d, j]
        return openTable, probTable

    def _lightOracle(self):
        dist = {0.0: 1.0}
        openTables, probTables = [], []
        for i in range(self.shape[0]):
            activation = self.process.activation[i]
            rowProbs = self.process.rowProbs[i]
            rowOpen = sum(dist.values())
            openTable, probTable = self._rowProbabilities(i, rowOpen, strict=True)
            # probability, given an open start, of keeping each light cell
            keep = np.zeros(activation.shape)
            for d in range(activation.shape[0]):
                free = 1.0
                for j in range(self.shape[1]):
                    if self.heavy[i, j] or rowOpen <= 0.0:
                        continue
                    keep[d, j] = free*self.b*activation[d, j]*probTable[d, j]
                    free -= keep[d, j]
            keepMarginal = rowProbs @ keep
            following = defaultdict(float)
            for load, mass in dist.items():
                following[load] += mass*(1.0 - keepMarginal.sum())
                for j in np.nonzero(keepMarginal > 0.0)[0]:
                    grown = load + self.weights[i, j]
                    if grown < self.half:
                        following[grown] += mass*keepMarginal[j]
            dist = dict(following)
            self._checkStates(dist)
            openTables.append(openTable)
            probTables.append(probTable)
        return openTables, probTables

    def _lightEstimated(self, rng):
        self.lightProb = [np.zeros(a.shape) for a in self.process.activation]
        openTables = []
        for i in range(self.shape[0]):
            conditioning = {"row": i, "rowType": 0, "item": 0}
            result = estimateEventProbability(self._simulateLightOpen, conditioning, self.epsilon,
                                              self.delta, self.shape[0], self.shape[1], rng,
                                              target=("rowOpen", i))
            self.estimates[("rowOpen", i)] = result
            openTable, self.lightProb[i] = self._rowProbabilities(i, result.estimate, strict=False)
            openTables.append(openTable)
        return openTables, self.lightProb


def knapsackTocrs(constraint, process, b, **kwargs):
    """Scheme for a knapsack constraint.

    Returns
    -------
    scheme : `KnapsackTocrs`
        Conditional selection probability ``1/(2+8b)`` in oracle mode.
    """
    return KnapsackTocrs(constraint, process, b, **kwargs)


def multiChoiceKnapsackTocrs(constraint, process, b, **kwargs):
    """Scheme for a multiple-choice knapsack constraint.

    Returns
    -------
    scheme : `MultiChoiceKnapsackTocrs`
        Conditional selection probability ``1/(2+7b)`` in oracle mode.
    """
    return MultiChoiceKnapsackTocrs(constraint, process, b, **kwargs)
