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
"""Base classes of online contention resolution schemes.

Schemes are vectorized over lanes: ``reset(nRuns, rng)`` starts ``nRuns``
independent runs and every ``offer`` call decides one element in all lanes at
once.  Elements arrive agent by agent and item by item within an agent; row
types are revealed with each element so two-level processes can be handled.
"""

import copy

import numpy as np

from lsst.utils.logging import getLogger

from .errors import DimensionMismatchError, ProbabilityRangeError
from .twoLevelProcess import sampleActiveSets

__all__ = ["BRANCH_NONE", "BRANCH_HEAVY", "BRANCH_LIGHT", "CLAMP_SLACK", "clampProbabilities", "OnlineScheme",
           "AlwaysSelectScheme", "SliceScheme"]

BRANCH_NONE = 0
BRANCH_HEAVY = 1
BRANCH_LIGHT = 2

# normalizers may exceed 1 by this much from round-off before it is an error
CLAMP_SLACK = 1e-9

_log = getLogger("ocrsmech.schemes")


def clampProbabilities(owner, probs, strict):
    """Clamp selection probabilities into [0, 1], counting the clamps.

    Parameters
    ----------
    owner : object
        Object with a ``clampCount`` attribute.
    probs : `numpy.ndarray`
        Probabilities to clamp.
    strict : `bool`
        Raise `ProbabilityRangeError` when a value exceeds 1 by more than
        ``CLAMP_SLACK`` (exact modes) instead of clamping it silently.
    """
    probs = np.asarray(probs, dtype=np.float64)
    over = probs > 1.0
    if strict and np.any(probs > 1.0 + CLAMP_SLACK):
        raise ProbabilityRangeError("selection probability %.12g exceeds 1" % (probs.max()))
    nOver = int(over.sum())
    if nOver:
        owner.clampCount += nOver
        if not strict:
            _log.warning("%s: clamped %d selection probabilities to 1", type(owner).__name__, nOver)
    return np.minimum(probs, 1.0)


class OnlineScheme:
    """Stateful online selector over the ``(nAgents, nItems)`` grid.

    Parameters
    ----------
    b : `float`
        Activation scale the guarantee refers to.
    process : `ocrsmech.twoLevelProcess.TwoLevelProcess`
        Input distribution.
    declaredC : `float`
        Declared conditional selection probability.
    mode : `str`, optional
        ``"oracle"`` (exact probabilities) or ``"estimated"``.
    """
    name = None

    def __init__(self, b, process, declaredC, mode="oracle"):
        if not 0.0 <= b <= 1.0:
            raise ValueError("b must lie in [0, 1], got %r" % (b, ))
        if mode not in ("oracle", "estimated"):
            raise ValueError("mode must be 'oracle' or 'estimated', got %r" % (mode, ))
        self.b = float(b)
        self.process = process
        self.shape = process.shape
        self.declaredC = float(declaredC)
        self.mode = mode
        self.clampCount = 0
        self.nRuns = 0
        self.rng = None
        self.selected = None
        self.branch = None

    def spawn(self):
        """Copy sharing the precomputed tables but not the run state."""
        twin = copy.copy(self)
        twin.selected = None
        twin.branch = None
        return twin

    def reset(self, nRuns, rng):
        """Start ``nRuns`` fresh runs drawing from ``rng``."""
        self.nRuns = int(nRuns)
        self.rng = rng
        self.selected = np.zeros((self.nRuns, ) + self.shape, dtype=bool)
        self.branch = np.full(self.nRuns, BRANCH_NONE, dtype=np.int8)
        self._resetLanes()

    def _resetLanes(self):
        pass

    def offer(self, i, j, rowTypes, active):
        """Offer element (i, j) in every lane.

        Parameters
        ----------
        i, j : `int`
            Element; must follow the arrival order.
        rowTypes : `numpy.ndarray`, (nRuns,)
            Row type of agent ``i`` in each lane.
        active : `numpy.ndarray`, (nRuns,)
            Whether the element is active in each lane.

        Returns
        -------
        selected : `numpy.ndarray`, (nRuns,)
            Irrevocable selection decisions.
        """
        active = np.asarray(active, dtype=bool)
        if active.shape != (self.nRuns, ):
            raise DimensionMismatchError("offer expects %d lanes, got %s" % (self.nRuns, active.shape))
        selected = self._decide(i, j, np.asarray(rowTypes, dtype=np.int64), active) & active
        self.selected[:, i, j] = selected
        return selected

    def _decide(self, i, j, rowTypes, active):
        raise NotImplementedError

    def selectionProbability(self, i, j, rowType):
        """Exact ``Pr[selected | active]`` when known, else `None`."""
        return None

    def run(self, active, rowTypes, rng):
        """Run the scheme over whole active sets.

        Parameters
        ----------
        active : `numpy.ndarray`, (nRuns, nAgents, nItems)
        rowTypes : `numpy.ndarray`, (nRuns, nAgents)
        rng : `numpy.random.Generator`

        Returns
        -------
        selected : `numpy.ndarray`, (nRuns, nAgents, nItems)
        """
        self.reset(active.shape[0], rng)
        for i in range(self.shape[0]):
            for j in range(self.shape[1]):
                self.offer(i, j, rowTypes[:, i], active[:, i, j])
        return self.selected

    def sampleAndRun(self, nRuns, rng):
        """Sample active sets from the process and run the scheme on them."""
        active, rowTypes = sampleActiveSets(self.process, self.b, rng, nRuns)
        return active, rowTypes, self.run(active, rowTypes, rng)

    def simulateSelection(self, i, j, rowType, nRuns, rng):
        """Replay the scheme up to (i, j) with that element forced active.

        Rows before ``i`` draw their types from the process, row ``i`` has
        type ``rowType``; the run state of this scheme is left untouched.

        Returns
        -------
        selected : `numpy.ndarray`, (nRuns,)
            Whether (i, j) was selected in each replay.
        """
        twin = self.spawn()
        twin.reset(nRuns, rng)
        rowTypes = self.process.sampleRowTypes(rng, nRuns, rows=range(i))
        rowTypes[:, i] = rowType
        selected = None
        for row in range(i + 1):
            active = self.process.sampleRowActivation(row, rowTypes[:, row], self.b, rng)
            last = self.shape[1]
            if row == i:
                active[:, j] = True
                last = j + 1
            for item in range(last):
                selected = twin.offer(row, item, rowTypes[:, row], active[:, item])
        return selected


class AlwaysSelectScheme(OnlineScheme):
    """Select every active element (unconstrained grid)."""
    name = "alwaysSelect"

    def __init__(self, b, process):
        super().__init__(b, process, 1.0)

    def _decide(self, i, j, rowTypes, active):
        return active

    def selectionProbability(self, i, j, rowType):
        return 1.0


class SliceScheme:
    """Online selector for one row or one column of a VH constraint.

    Positions index the slice (items for a row, agents for a column).  The
    selection probability of an active element is exactly ``c`` in oracle
    mode.
    """
    kind = None

    def __init__(self, b, length, c, mode="oracle"):
        self.b = float(b)
        self.length = int(length)
        self.c = float(c)
        self.mode = mode
        self.clampCount = 0
        self.rng = None
        self.nRuns = 0

    def spawn(self):
        return copy.copy(self)

    def reset(self, nRuns, rng):
        self.nRuns = int(nRuns)
        self.rng = rng
        self._resetLanes()

    @property
    def guarantee(self):
        """Declared conditional selection probability of the slice."""
        return self.c

    def _resetLanes(self):
        pass

    def offer(self, position, rowTypes, active):
        raise NotImplementedError

    def selectionProbability(self, position, rowType):
        return self.c if self.mode == "oracle" else None
