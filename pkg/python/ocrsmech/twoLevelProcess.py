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
"""Two-level stochastic processes and their samplers.

Row ``i`` first draws a row type ``d_i`` from its own distribution; the cells
of that row then activate independently with probability ``b*x_{i,j}(d_i)``.
"""

import numpy as np

from .errors import DimensionMismatchError

__all__ = ["PROBABILITY_TOLERANCE", "TwoLevelProcess", "ActiveSet", "sampleActiveSet",
           "sampleActiveSets", "processFromInterim"]

PROBABILITY_TOLERANCE = 1e-12


def _checkProbabilities(probs, what):
    probs = np.array(probs, dtype=np.float64, ndmin=1)
    if probs.ndim != 1 or probs.size == 0:
        raise ValueError("%s must be a non-empty vector" % (what))
    if not np.all(np.isfinite(probs)) or np.any(probs < 0.0):
        raise ValueError("%s must be non-negative and finite" % (what))
    if abs(probs.sum() - 1.0) > PROBABILITY_TOLERANCE:
        raise ValueError("%s must sum to 1 (sum is %.17g)" % (what, probs.sum()))
    return probs


class TwoLevelProcess:
    """Row-type distributions plus per-type activation tables.

    Parameters
    ----------
    rowProbs : `list` [array-like]
        Per-row probabilities over that row's types.
    activation : `list` [array-like]
        Per-row arrays of shape ``(nTypes_i, nItems)`` holding
        ``x_{i,j}(d)`` in [0, 1].
    """
    def __init__(self, rowProbs, activation):
        if len(rowProbs) != len(activation) or len(rowProbs) == 0:
            raise DimensionMismatchError("rowProbs and activation need one entry per row")
        self.rowProbs = []
        self.activation = []
        nItems = None
        for i, (probs, table) in enumerate(zip(rowProbs, activation)):
            probs = _checkProbabilities(probs, "row %d probabilities" % (i))
            table = np.array(table, dtype=np.float64, ndmin=2)
            if table.shape[0] != probs.size:
                raise DimensionMismatchError("row %d has %d types but %d activation rows" %
                                             (i, probs.size, table.shape[0]))
            if nItems is None:
                nItems = table.shape[1]
            elif table.shape[1] != nItems:
                raise DimensionMismatchError("row %d has %d items, expected %d" % (i, table.shape[1], nItems))
            if not np.all(np.isfinite(table)) or np.any(table < 0.0) or np.any(table > 1.0):
                raise ValueError("activation of row %d must lie in [0, 1]" % (i))
            probs.setflags(write=False)
            table.setflags(write=False)
            self.rowProbs.append(probs)
            self.activation.append(table)

        weights = np.array([p @ x for p, x in zip(self.rowProbs, self.activation)])
        weights.setflags(write=False)
        self._marginalWeights = weights

    @property
    def nAgents(self):
        return len(self.rowProbs)

    @property
    def nItems(self):
        return self.activation[0].shape[1]

    @property
    def shape(self):
        return (self.nAgents, self.nItems)

    @property
    def nTypes(self):
        return [p.size for p in self.rowProbs]

    @property
    def marginalWeights(self):
        """Marginal weights ``w_{i,j} = sum_d Pr[d] x_{i,j}(d)``."""
        return self._marginalWeights

    def sampleRowTypes(self, rng, nRuns, rows=None):
        """Draw row types for ``nRuns`` lanes.

        Parameters
        ----------
        rng : `numpy.random.Generator`
        nRuns : `int`
        rows : iterable of `int`, optional
            Rows to draw; the others are left at -1.

        Returns
        -------
        rowTypes : `numpy.ndarray`, (nRuns, nAgents)
        """
        rowTypes = np.full((nRuns, self.nAgents), -1, dtype=np.int64)
        for i in (range(self.nAgents) if rows is None else rows):
            rowTypes[:, i] = rng.choice(self.rowProbs[i].size, size=nRuns, p=self.rowProbs[i])
        return rowTypes

    def sampleRowActivation(self, i, rowTypes, b, rng):
        """Activate the cells of row ``i`` given its row types.

        Parameters
        ----------
        i : `int`
            Row index.
        rowTypes : `numpy.ndarray`, (nRuns,)
            Row type of row ``i`` in each lane.
        b : `float`
            Activation scale in [0, 1].
        rng : `numpy.random.Generator`

        Returns
        -------
        active : `numpy.ndarray`, (nRuns, nItems)
        """
        probs = b*self.activation[i][rowTypes]
        return rng.random(probs.shape) < probs


class ActiveSet:
    """One realization of a two-level process.

    Parameters
    ----------
    active : `numpy.ndarray`, (nAgents, nItems)
        Activation indicators.
    rowTypes : `numpy.ndarray`, (nAgents,)
        Row types that generated them.
    """
    def __init__(self, active, rowTypes):
        self.active = np.asarray(active, dtype=bool)
        self.rowTypes = np.asarray(rowTypes, dtype=np.int64)

    def cells(self):
        """Active cells in arrival order."""
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.active))]


def sampleActiveSets(process, b, rng, nRuns):
    """Sample ``nRuns`` independent active sets at once.

    Returns
    -------
    active : `numpy.ndarray`, (nRuns, nAgents, nItems)
    rowTypes : `numpy.ndarray`, (nRuns, nAgents)
    """
    if not 0.0 <= b <= 1.0:
        raise ValueError("b must lie in [0, 1], got %r" % (b, ))
    rowTypes = process.sampleRowTypes(rng, nRuns)
    active = np.zeros((nRuns, ) + process.shape, dtype=bool)
    for i in range(process.nAgents):
        active[:, i, :] = process.sampleRowActivation(i, rowTypes[:, i], b, rng)
    return active, rowTypes


def sampleActiveSet(process, b, rng):
    """Sample one active set ``R(D, b*x)``.

    Parameters
    ----------
    process : `TwoLevelProcess`
    b : `float`
        Activation scale in [0, 1].
    rng : `numpy.random.Generator`

    Returns
    -------
    activeSet : `ActiveSet`
    """
    active, rowTypes = sampleActiveSets(process, b, rng, 1)
    return ActiveSet(active[0], rowTypes[0])


def processFromInterim(typeSpaces, pi):
    """Two-level process induced by an interim allocation rule.

    The row types are the agents' types and the activation of cell (i, j)
    under type ``t`` is ``pi_{i,j}(t)``.

    Parameters
    ----------
    typeSpaces : `list` [`ocrsmech.instances.AgentTypeSpace`]
    pi : `list` [`numpy.ndarray`]
        Per-agent ``(nTypes_i, nItems)`` allocation tables.
    """
    return TwoLevelProcess([space.probs for space in typeSpaces], [np.clip(p, 0.0, 1.0) for p in pi])
