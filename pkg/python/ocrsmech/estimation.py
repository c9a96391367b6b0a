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
"""Monte Carlo estimates of scheme events.

Selection probabilities that depend on events such as "the knapsack is still
less than half full when this element arrives" are estimated by replaying the
scheme up to the element with the branch and the row type frozen.  Callers
use ``mean + epsilon`` as a one-sided upper surrogate of the event
probability.
"""

import numpy as np

import lsst.pipe.base as pipeBase

from .utilities import computeEstimationSampleCount

__all__ = ["EventEstimator", "estimateEventProbability"]


class EventEstimator:
    """Running estimate of one event probability.

    Parameters
    ----------
    target : `tuple`
        Identifier of the event, e.g. ``("light", i, j, d)``.
    nSamples : `int`
        Number of replays ``T``.
    conditioning : `dict`, optional
        Frozen conditioning data (row type, branch).
    """
    def __init__(self, target, nSamples, conditioning=None):
        if nSamples < 1:
            raise ValueError("an estimator needs at least one sample")
        self.target = target
        self.nSamples = int(nSamples)
        self.conditioning = dict(conditioning or {})
        self.successes = 0
        self.observed = 0

    @classmethod
    def fromAccuracy(cls, target, epsilon, delta, nAgents, nItems, conditioning=None):
        return cls(target, computeEstimationSampleCount(epsilon, delta, nAgents, nItems),
                   conditioning=conditioning)

    def update(self, indicators):
        indicators = np.asarray(indicators, dtype=bool)
        self.successes += int(indicators.sum())
        self.observed += int(indicators.size)

    @property
    def complete(self):
        return self.observed >= self.nSamples

    @property
    def estimate(self):
        if self.observed == 0:
            raise RuntimeError("estimator for %s has no samples" % (self.target, ))
        return self.successes/self.observed

    def upperSurrogate(self, epsilon):
        """``estimate + epsilon``, the value used in place of the probability."""
        return self.estimate + epsilon


def estimateEventProbability(simulator, conditioning, epsilon, delta, nAgents, nItems, rng,
                             target=None):
    """Estimate an event probability from ``T`` replays.

    Parameters
    ----------
    simulator : callable
        ``simulator(conditioning, nLanes, rng)`` returning a boolean array of
        event indicators, one per lane.
    conditioning : `dict`
        Frozen data passed through to the simulator.
    epsilon, delta : `float`
        Accuracy and failure probability, both in (0, 1).
    nAgents, nItems : `int`
        Grid dimensions entering ``T = ceil(log(2nm/delta)/(2 epsilon^2))``.
    rng : `numpy.random.Generator`
    target : `tuple`, optional
        Event identifier.

    Returns
    -------
    result : `lsst.pipe.base.Struct`
        ``estimate`` (`float`), ``nSamples`` (`int`), ``upper``
        (``estimate + epsilon``) and ``estimator`` (`EventEstimator`).
    """
    estimator = EventEstimator.fromAccuracy(target, epsilon, delta, nAgents, nItems,
                                            conditioning=conditioning)
    estimator.update(simulator(conditioning, estimator.nSamples, rng))
    return pipeBase.Struct(estimate=estimator.estimate,
                           nSamples=estimator.nSamples,
                           upper=estimator.upperSurrogate(epsilon),
                           estimator=estimator)
