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
"""Online scheme for knapsacks whose item weights are random.

Element ``i`` reveals a weight drawn from its own finite distribution when it
arrives.  Let ``k*`` be the largest possible weight as a fraction of the
capacity.  When ``gamma = (1-k*)/(2-k*)`` is at least 1/6 every element is
kept with probability ``gamma/Pr[it fits]`` whenever it fits.  Otherwise a
fair coin picks between keeping at most one heavy element (weight above half
the capacity) and running the fitting rule with ``gamma = 1/3`` on the light
ones, for an overall guarantee of 1/6.
"""

import copy
from collections import defaultdict

import numpy as np

from lsst.utils.logging import getLogger

from .errors import DimensionMismatchError, ProbabilityRangeError, ProcessInfeasibleError, TooLargeError
from .estimation import estimateEventProbability
from .schemes import BRANCH_HEAVY, BRANCH_LIGHT, BRANCH_NONE, CLAMP_SLACK, clampProbabilities

__all__ = ["StochasticKnapsackInstance", "StochasticKnapsackOcrs", "stochasticKnapsackOcrs",
           "deterministicKnapsackOcrs"]

HEAVY_FALLBACK_C = 1.0/6.0

_log = getLogger("ocrsmech.stochasticKnapsack")


class StochasticKnapsackInstance:
    """Independent random weights against a fixed capacity.

    Parameters
    ----------
    supports : `list` [array-like]
        Possible weights of each element, in ``[0, capacity]``.
    probs : `list` [array-like]
        Matching probabilities, each summing to 1.
    capacity : `float`
        Knapsack size, positive.
    """
    def __init__(self, supports, probs, capacity):
        if len(supports) != len(probs) or len(supports) == 0:
            raise DimensionMismatchError("supports and probs need one entry per element")
        self.capacity = float(capacity)
        if not self.capacity > 0.0 or not np.isfinite(self.capacity):
            raise ValueError("capacity must be positive and finite, got %r" % (capacity, ))
        self.supports = []
        self.probs = []
        for index, (support, prob) in enumerate(zip(supports, probs)):
            support = np.asarray(support, dtype=np.float64)
            prob = np.asarray(prob, dtype=np.float64)
            if support.shape != prob.shape or support.ndim != 1 or support.size == 0:
                raise DimensionMismatchError("element %d: support and probs differ in shape" % (index))
            if np.any(support < 0.0) or np.any(support > self.capacity):
                raise ValueError("element %d: weights must lie in [0, capacity]" % (index))
            if np.any(prob < 0.0) or abs(prob.sum() - 1.0) > 1e-12:
                raise ValueError("element %d: probabilities must be non-negative and sum to 1" % (index))
            values, inverse = np.unique(support, return_inverse=True)
            merged = np.zeros(values.size)
            np.add.at(merged, inverse, prob)
            self.supports.append(values)
            self.probs.append(merged)

    @property
    def nElements(self):
        return len(self.supports)

    @property
    def meanWeights(self):
        return np.array([s @ p for s, p in zip(self.supports, self.probs)])

    @property
    def maxWeightFraction(self):
        """``k*``: the largest weight with positive probability over the capacity."""
        return max(float(s[p > 0.0].max()) for s, p in zip(self.supports, self.probs))/self.capacity

    def isAdmissible(self, tolerance=1e-9):
        """Whether the expected total weight fits the capacity."""
        return bool(self.meanWeights.sum() <= self.capacity*(1.0 + tolerance))

    def sample(self, rng, nRuns):
        """Weights of all elements, shape ``(nRuns, nElements)``."""
        weights = np.zeros((nRuns, self.nElements))
        for i, (support, prob) in enumerate(zip(self.supports, self.probs)):
            weights[:, i] = support[rng.choice(support.size, size=nRuns, p=prob)]
        return weights

    def toDict(self):
        return {"capacity": self.capacity,
                "supports": [s.tolist() for s in self.supports],
                "probs": [p.tolist() for p in self.probs]}

    @classmethod
    def fromDict(cls, data):
        return cls(data["supports"], data["probs"], data["capacity"])


class StochasticKnapsackOcrs:
    """Vectorized scheme for a `StochasticKnapsackInstance`.

    Parameters
    ----------
    instance : `StochasticKnapsackInstance`
    mode : `str`, optional
        ``"oracle"`` or ``"estimated"``.
    epsilon, delta : `float`, optional
        Estimation accuracy, estimated mode only.
    rng : `numpy.random.Generator`, optional
        Stream of the estimation replays.
    maxOracleStates : `int`, optional
        Cap on distinct loads in the fitting program.
    """
    name = "stochasticKnapsack"

    def __init__(self, instance, mode="oracle", epsilon=0.1, delta=0.01, rng=None, maxOracleStates=10**6):
        if not instance.isAdmissible():
            raise ProcessInfeasibleError("expected weights %.12g exceed the capacity %.12g" %
                                         (instance.meanWeights.sum(), instance.capacity))
        if mode not in ("oracle", "estimated"):
            raise ValueError("mode must be 'oracle' or 'estimated', got %r" % (mode, ))
        self.instance = instance
        self.capacity = instance.capacity
        self.half = instance.capacity/2.
        self.mode = mode
        self.epsilon = float(epsilon)
        self.delta = float(delta)
        self.maxOracleStates = int(maxOracleStates)
        self.clampCount = 0
        self.estimates = {}

        kStar = instance.maxWeightFraction
        gamma = (1.0 - kStar)/(2.0 - kStar)
        self.useGamma = gamma >= HEAVY_FALLBACK_C
        self.gamma = gamma if self.useGamma else 1.0/3.0
        self.exactC = gamma if self.useGamma else HEAVY_FALLBACK_C
        if mode == "oracle":
            self.declaredC = self.exactC
        else:
            self.declaredC = self.exactC*(1.0 - self.delta)/(1.0 + 2.0*self.epsilon/self.exactC)

        self.selectProb = [np.zeros(s.size) for s in instance.supports]
        if not self.useGamma:
            self._fillHeavy()
        if mode == "oracle":
            self.fitProb = self._fitOracle()
        else:
            if rng is None:
                raise ValueError("estimated mode needs an estimation rng")
            self.fitProb = self._fitEstimated(rng)
        _log.debug("stochastic knapsack scheme: k*=%.4g, %s rule, c=%.6g", kStar,
                   "gamma" if self.useGamma else "heavy/light", self.declaredC)

        self.nRuns = 0
        self.rng = None

    def _isLight(self, weight):
        return self.useGamma or weight <= self.half

    def _fillHeavy(self):
        before = 0.0
        for i, (support, prob) in enumerate(zip(self.instance.supports, self.instance.probs)):
            heavy = support > self.half
            openProb = 1.0 - before/3.0
            if openProb < 1.0/3.0 - CLAMP_SLACK:
                raise ProbabilityRangeError("heavy branch open with probability %.12g < 1/3" % (openProb))
            self.selectProb[i][heavy] = clampProbabilities(self, 1.0/(3.0*openProb), strict=True)
            before += float(prob[heavy].sum())

    def _normalize(self, fit, strict):
        if strict and fit < self.gamma - CLAMP_SLACK:
            raise ProbabilityRangeError("element fits with probability %.12g < %.12g" % (fit, self.gamma))
        if fit <= 0.0:
            self.clampCount += 1
            return 1.0
        return float(clampProbabilities(self, self.gamma/fit, strict=False))

    def _fitOracle(self):
        dist = {0.0: 1.0}
        fitTables = []
        for i, (support, prob) in enumerate(zip(self.instance.supports, self.instance.probs)):
            fitTable = np.zeros(support.size)
            following = defaultdict(float)
            for s, (weight, p) in enumerate(zip(support, prob)):
                if not self._isLight(weight):
                    for load, mass in dist.items():
                        following[load] += p*mass
                    continue
                fitTable[s] = sum(mass for load, mass in dist.items() if load <= self.capacity - weight)
                self.selectProb[i][s] = self._normalize(fitTable[s], strict=True)
                keep = self.selectProb[i][s]
                for load, mass in dist.items():
                    if weight > 0.0 and load <= self.capacity - weight:
                        following[load + weight] += p*mass*keep
                        following[load] += p*mass*(1.0 - keep)
                    else:
                        following[load] += p*mass
            dist = dict(following)
            if len(dist) > self.maxOracleStates:
                raise TooLargeError("fitting program reached %d loads (cap %d)" %
                                    (len(dist), self.maxOracleStates))
            fitTables.append(fitTable)
        return fitTables

    def _simulateFit(self, conditioning, nLanes, rng):
        """Replay the fitting rule over earlier elements; True where ``weight`` still fits."""
        i, weight = conditioning["element"], conditioning["weight"]
        load = np.zeros(nLanes)
        for e in range(i):
            support, prob = self.instance.supports[e], self.instance.probs[e]
            index = rng.choice(support.size, size=nLanes, p=prob)
            weights = support[index]
            eligible = load <= self.capacity - weights
            if not self.useGamma:
                eligible &= weights <= self.half
            coin = rng.random(nLanes) < self.selectProb[e][index]
            selected = eligible & coin
            load[selected] += weights[selected]
        return load <= self.capacity - weight

    def _fitEstimated(self, rng):
        fitTables = []
        for i, support in enumerate(self.instance.supports):
            fitTable = np.zeros(support.size)
            for s, weight in enumerate(support):
                if not self._isLight(weight):
                    continue
                conditioning = {"element": i, "weight": weight}
                result = estimateEventProbability(self._simulateFit, conditioning, self.epsilon, self.delta,
                                                  self.instance.nElements, 1, rng, target=("fit", i, s))
                self.estimates[("fit", i, s)] = result
                fitTable[s] = result.estimate
                self.selectProb[i][s] = self._normalize(result.upper, strict=False)
            fitTables.append(fitTable)
        return fitTables

    def spawn(self):
        return copy.copy(self)

    def reset(self, nRuns, rng):
        self.nRuns = int(nRuns)
        self.rng = rng
        self.load = np.zeros(self.nRuns)
        self.anySelected = np.zeros(self.nRuns, dtype=bool)
        if self.useGamma:
            self.branch = np.full(self.nRuns, BRANCH_NONE, dtype=np.int8)
        else:
            self.branch = np.where(rng.random(self.nRuns) < 0.5, BRANCH_HEAVY, BRANCH_LIGHT).astype(np.int8)
        self.selected = np.zeros((self.nRuns, self.instance.nElements), dtype=bool)

    def supportIndex(self, i, weights):
        """Positions of ``weights`` in the support of element ``i``."""
        support = self.instance.supports[i]
        weights = np.asarray(weights, dtype=np.float64)
        index = np.minimum(np.searchsorted(support, weights), support.size - 1)
        if np.any(support[index] != weights):
            raise ValueError("element %d offered a weight outside its support" % (i))
        return index

    def offer(self, i, weights):
        """Offer element ``i`` with realized ``weights`` (one per lane)."""
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (self.nRuns, ):
            raise DimensionMismatchError("offer expects %d lanes, got %s" % (self.nRuns, weights.shape))
        index = self.supportIndex(i, weights)
        coin = self.rng.random(self.nRuns) < self.selectProb[i][index]
        fits = self.load <= self.capacity - weights
        if self.useGamma:
            eligible = fits
        else:
            heavy = weights > self.half
            eligible = np.where(heavy, (self.branch == BRANCH_HEAVY) & ~self.anySelected,
                                (self.branch == BRANCH_LIGHT) & fits)
        selected = eligible & coin
        self.load[selected] += weights[selected]
        self.anySelected |= selected
        self.selected[:, i] = selected
        return selected

    def selectionProbability(self, i, weight):
        """Exact ``Pr[selected | weight]`` in oracle mode, else `None`."""
        return self.exactC if self.mode == "oracle" else None

    def run(self, weights, rng):
        """Run over ``(nRuns, nElements)`` realized weights."""
        self.reset(weights.shape[0], rng)
        for i in range(self.instance.nElements):
            self.offer(i, weights[:, i])
        return self.selected

    def simulateSelection(self, i, weight, nRuns, rng):
        """Replay up to element ``i`` with its weight fixed to ``weight``."""
        twin = self.spawn()
        twin.reset(nRuns, rng)
        for e in range(i):
            support, prob = self.instance.supports[e], self.instance.probs[e]
            twin.offer(e, support[rng.choice(support.size, size=nRuns, p=prob)])
        return twin.offer(i, np.full(nRuns, weight))


def stochasticKnapsackOcrs(instance, mode="oracle", epsilon=0.1, delta=0.01, rng=None, maxOracleStates=10**6):
    """Scheme for a stochastic knapsack.

    Parameters
    ----------
    instance : `StochasticKnapsackInstance`
        Instance with expected total weight at most the capacity.

    Returns
    -------
    scheme : `StochasticKnapsackOcrs`
        Guarantee ``(1-k*)/(2-k*)`` when that is at least 1/6, otherwise 1/6.
    """
    return StochasticKnapsackOcrs(instance, mode=mode, epsilon=epsilon, delta=delta, rng=rng,
                                  maxOracleStates=maxOracleStates)


def deterministicKnapsackOcrs(weights, activeProbs, capacity, **kwargs):
    """Scheme for a knapsack of fixed weights and independently active items.

    An inactive item is modelled as weight 0, which always fits and changes
    nothing.
    """
    weights = np.asarray(weights, dtype=np.float64)
    activeProbs = np.asarray(activeProbs, dtype=np.float64)
    if weights.shape != activeProbs.shape:
        raise DimensionMismatchError("weights and activeProbs differ in shape")
    instance = StochasticKnapsackInstance([[0.0, w] for w in weights],
                                          [[1.0 - p, p] for p in activeProbs], capacity)
    return stochasticKnapsackOcrs(instance, **kwargs)
