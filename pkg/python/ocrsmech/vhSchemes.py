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
"""Schemes for vertical-horizontal constraints.

A VH constraint is the intersection of one slice constraint per row and one
per column.  Each slice runs its own scheme on the active elements of that
slice and an element is kept only if both its row and its column scheme keep
it.  Row types couple the elements of a row but never those of a column, so
the two decisions are independent given activity and the conditional
selection probability of (i, j) is ``c_row(i)*c_col(j)``.
"""

import numpy as np

from lsst.utils.logging import getLogger

from .errors import DimensionMismatchError, ProcessInfeasibleError, UnsupportedConstraintError
from .schemes import OnlineScheme, SliceScheme, clampProbabilities
from .constraints import FEASIBILITY_TOLERANCE, checkProcessFeasibility
from .utilities import computeEstimationSampleCount

__all__ = ["CALIBRATION_STEPS", "AlwaysSelectSlice", "SingleCopyColumnOcrs", "KUniformSliceOcrs",
           "VhComposedScheme", "singleCopyColumnOcrs", "kUniformRowOcrs", "vhCompose",
           "vhSchemeFromConstraint"]

CALIBRATION_STEPS = 60

_log = getLogger("ocrsmech.vhSchemes")


class AlwaysSelectSlice(SliceScheme):
    """Slice whose constraint never binds."""
    kind = "alwaysSelect"

    def __init__(self, b, length):
        super().__init__(b, length, 1.0)

    def offer(self, position, rowTypes, active):
        return np.asarray(active, dtype=bool)

    def selectionProbability(self, position, rowType):
        return 1.0


class SingleCopyColumnOcrs(SliceScheme):
    """At most one selection in a column with independent cells.

    With ``alpha_i = 1 - (b/(1+b)) sum_{i'<i} w_{i'}`` the probability that
    the column is still empty when cell ``i`` arrives, an active free cell is
    taken with probability ``(1/(1+b))/alpha_i``, which makes the conditional
    selection probability exactly ``1/(1+b)``.

    Parameters
    ----------
    b : `float`
    weights : array-like, (length,)
        Marginal weights of the column, summing to at most 1.
    """
    kind = "singleCopy"

    def __init__(self, b, weights):
        weights = np.asarray(weights, dtype=np.float64)
        super().__init__(b, weights.size, 1.0/(1.0 + b))
        if weights.sum() > 1.0 + FEASIBILITY_TOLERANCE:
            raise ProcessInfeasibleError("column weights sum to %.12g > 1" % (weights.sum()))
        self.weights = weights
        before = np.concatenate([[0.0], np.cumsum(weights)[:-1]])
        self.availability = 1.0 - (b/(1.0 + b))*before
        with np.errstate(divide="ignore"):
            probs = np.where(self.availability > 0.0, self.c/self.availability, 1.0)
        self.selectProb = clampProbabilities(self, probs, strict=True)

    def _resetLanes(self):
        self.taken = np.zeros(self.nRuns, dtype=bool)

    def offer(self, position, rowTypes, active):
        coin = self.rng.random(self.nRuns) < self.selectProb[position]
        selected = active & ~self.taken & coin
        self.taken |= selected
        return selected


class KUniformSliceOcrs(SliceScheme):
    """At most ``k`` selections in a slice whose cells share one type.

    The count distribution given the slice type is tracked exactly, so
    ``alpha_j(d) = Pr[count < k when j arrives | d]`` is known in oracle mode
    and an active cell is kept with probability ``c/alpha_j(d)``.  ``c`` is
    calibrated to the largest value in ``[1/(1+b), 1]`` keeping every
    ``alpha`` at or above it.

    Parameters
    ----------
    b : `float`
    k : `int`
        Slice rank.
    typeProbs : array-like, (nTypes,)
        Distribution of the slice type.
    activation : array-like, (nTypes, length)
        ``x_j(d)``; every row sums to at most ``k``.
    mode : `str`, optional
        ``"oracle"`` or ``"estimated"``.
    epsilon, delta : `float`, optional
        Estimation accuracy, estimated mode only.
    rng : `numpy.random.Generator`, optional
        Stream of the estimation replays.
    gridShape : `tuple` [`int`], optional
        Grid dimensions entering the replay count.
    """
    kind = "kUniform"

    def __init__(self, b, k, typeProbs, activation, mode="oracle", epsilon=0.1, delta=0.01, rng=None,
                 gridShape=None):
        activation = np.array(activation, dtype=np.float64, ndmin=2)
        super().__init__(b, activation.shape[1], 1.0, mode=mode)
        self.k = int(k)
        self.typeProbs = np.asarray(typeProbs, dtype=np.float64)
        self.activation = activation
        if np.any(activation.sum(axis=1) > self.k + FEASIBILITY_TOLERANCE):
            raise ProcessInfeasibleError("slice activation exceeds its rank %d" % (self.k))
        self.epsilon = float(epsilon)
        self.delta = float(delta)

        if self.k == 0:
            # nothing can be active; the guarantee holds vacuously
            self.availability = np.zeros_like(activation)
            self.selectProb = np.zeros_like(activation)
        elif mode == "oracle":
            self.c = self._calibrate()
            self.availability = self._availability(self.c)
            with np.errstate(divide="ignore", invalid="ignore"):
                probs = np.where(self.availability > 0.0, self.c/self.availability, 1.0)
            self.selectProb = clampProbabilities(self, probs, strict=True)
        else:
            if rng is None:
                raise ValueError("estimated mode needs an estimation rng")
            shape = gridShape if gridShape is not None else (1, self.length)
            self.nSamples = computeEstimationSampleCount(self.epsilon, self.delta, *shape)
            self.c = 1.0/(1.0 + b)
            self._estimate(rng)

    def _availability(self, c):
        """Exact ``alpha`` table for a target ``c``."""
        nTypes, length = self.activation.shape
        alpha = np.zeros((nTypes, length))
        for d in range(nTypes):
            counts = np.zeros(self.k + 1)
            counts[0] = 1.0
            for j in range(length):
                alpha[d, j] = counts[:self.k].sum()
                if alpha[d, j] <= 0.0:
                    continue
                moved = counts[:self.k]*min(1.0, self.b*self.activation[d, j]*c/alpha[d, j])
                counts[:self.k] -= moved
                counts[1:] += moved
        return alpha

    def _calibrate(self):
        """Largest ``c`` with every availability at or above ``c``."""
        def _feasible(c):
            return bool(np.all(self._availability(c) >= c - 1e-12))

        if _feasible(1.0):
            return 1.0
        lo, hi = 1.0/(1.0 + self.b), 1.0
        for _ in range(CALIBRATION_STEPS):
            mid = 0.5*(lo + hi)
            if _feasible(mid):
                lo = mid
            else:
                hi = mid
        return lo

    def _estimate(self, rng):
        nTypes, length = self.activation.shape
        self.availability = np.zeros((nTypes, length))
        self.selectProb = np.zeros((nTypes, length))
        for d in range(nTypes):
            for j in range(length):
                counts = np.zeros(self.nSamples, dtype=np.int64)
                for position in range(j):
                    active = rng.random(self.nSamples) < self.b*self.activation[d, position]
                    coin = rng.random(self.nSamples) < self.selectProb[d, position]
                    counts += active & (counts < self.k) & coin
                self.availability[d, j] = np.mean(counts < self.k)
                self.selectProb[d, j] = clampProbabilities(
                    self, self.c/(self.availability[d, j] + self.epsilon), strict=False)

    @property
    def guarantee(self):
        if self.mode == "estimated" and self.k > 0:
            return self.c*(1.0 - self.delta)/(1.0 + 2.0*self.epsilon/self.c)
        return self.c

    def _resetLanes(self):
        self.count = np.zeros(self.nRuns, dtype=np.int64)

    def offer(self, position, rowTypes, active):
        prob = self.selectProb[rowTypes, position]
        coin = self.rng.random(self.nRuns) < prob
        selected = active & (self.count < self.k) & coin
        self.count += selected
        return selected

    def selectionProbability(self, position, rowType):
        if self.k == 0:
            return 0.0
        return super().selectionProbability(position, rowType)


class VhComposedScheme(OnlineScheme):
    """Intersection of per-row and per-column slice schemes.

    Parameters
    ----------
    rowSchemes : `list` [`ocrsmech.schemes.SliceScheme`]
        One scheme per agent, positions are items.
    columnSchemes : `list` [`ocrsmech.schemes.SliceScheme`]
        One scheme per item, positions are agents; they see a single type.
    process : `ocrsmech.twoLevelProcess.TwoLevelProcess`
    """
    name = "vh"

    def __init__(self, rowSchemes, columnSchemes, process):
        rowC = min(s.guarantee for s in rowSchemes)
        columnC = min(s.guarantee for s in columnSchemes)
        mode = "estimated" if any(s.mode == "estimated" for s in rowSchemes + columnSchemes) else "oracle"
        super().__init__(rowSchemes[0].b, process, rowC*columnC, mode=mode)
        self.rowSchemes = list(rowSchemes)
        self.columnSchemes = list(columnSchemes)

    @property
    def clampCount(self):
        return sum(s.clampCount for s in self.rowSchemes + self.columnSchemes)

    @clampCount.setter
    def clampCount(self, value):
        pass

    def spawn(self):
        twin = super().spawn()
        twin.rowSchemes = [s.spawn() for s in self.rowSchemes]
        twin.columnSchemes = [s.spawn() for s in self.columnSchemes]
        return twin

    def _resetLanes(self):
        self._columnTypes = np.zeros(self.nRuns, dtype=np.int64)
        for scheme in self.rowSchemes + self.columnSchemes:
            scheme.reset(self.nRuns, self.rng)

    def _decide(self, i, j, rowTypes, active):
        rowKeep = self.rowSchemes[i].offer(j, rowTypes, active)
        columnKeep = self.columnSchemes[j].offer(i, self._columnTypes, active)
        return rowKeep & columnKeep

    def selectionProbability(self, i, j, rowType):
        rowP = self.rowSchemes[i].selectionProbability(j, rowType)
        columnP = self.columnSchemes[j].selectionProbability(i, 0)
        if rowP is None or columnP is None:
            return None
        return rowP*columnP


def singleCopyColumnOcrs(b, columnWeights):
    """Scheme keeping at most one cell of a column.

    Parameters
    ----------
    b : `float`
    columnWeights : array-like
        Marginal weights of the column cells in arrival order.

    Returns
    -------
    scheme : `SingleCopyColumnOcrs`
        Conditional selection probability exactly ``1/(1+b)``.
    """
    return SingleCopyColumnOcrs(b, columnWeights)


def kUniformRowOcrs(b, k, rowProbs, rowActivation, mode="oracle", epsilon=0.1, delta=0.01, rng=None,
                    gridShape=None):
    """Scheme keeping at most ``k`` cells of a row with a two-level input.

    Returns
    -------
    scheme : `KUniformSliceOcrs`
        Conditional selection probability ``c >= 1/(1+b)`` in oracle mode.
    """
    return KUniformSliceOcrs(b, k, rowProbs, rowActivation, mode=mode, epsilon=epsilon, delta=delta,
                             rng=rng, gridShape=gridShape)


def vhCompose(rowSchemes, columnSchemes, process):
    """Compose slice schemes into a grid scheme.

    Raises
    ------
    DimensionMismatchError
        If the scheme counts or slice lengths do not match the process.
    ValueError
        If the slice schemes use different activation scales.
    """
    if len(rowSchemes) != process.nAgents or len(columnSchemes) != process.nItems:
        raise DimensionMismatchError("need %d row and %d column schemes, got %d and %d" %
                                     (process.nAgents, process.nItems, len(rowSchemes), len(columnSchemes)))
    if any(s.length != process.nItems for s in rowSchemes) or \
            any(s.length != process.nAgents for s in columnSchemes):
        raise DimensionMismatchError("slice scheme lengths do not match the grid")
    scales = {s.b for s in rowSchemes + columnSchemes}
    if len(scales) != 1:
        raise ValueError("slice schemes disagree on b: %s" % (sorted(scales)))
    return VhComposedScheme(rowSchemes, columnSchemes, process)


def _sliceScheme(sliceConstraint, b, typeProbs, activation, mode, epsilon, delta, rng, gridShape, column):
    if sliceConstraint.kind != "uniform":
        raise UnsupportedConstraintError("no online scheme for explicit slices")
    if sliceConstraint.isTrivial:
        return AlwaysSelectSlice(b, sliceConstraint.length)
    if column and sliceConstraint.k == 1:
        return SingleCopyColumnOcrs(b, activation[0])
    return KUniformSliceOcrs(b, sliceConstraint.k, typeProbs, activation, mode=mode, epsilon=epsilon,
                             delta=delta, rng=rng, gridShape=gridShape)


def vhSchemeFromConstraint(constraint, process, b, mode="oracle", epsilon=0.1, delta=0.01, rng=None):
    """Build the composed scheme of a VH constraint and a feasible process.

    Parameters
    ----------
    constraint : `ocrsmech.constraints.VerticalHorizontal`
    process : `ocrsmech.twoLevelProcess.TwoLevelProcess`
    b : `float`
    mode : `str`, optional
    epsilon, delta : `float`, optional
    rng : `numpy.random.Generator`, optional
        Estimation stream, estimated mode only.

    Raises
    ------
    ProcessInfeasibleError
        If the process violates a row or column polytope.
    UnsupportedConstraintError
        If a slice is explicit.
    """
    check = checkProcessFeasibility(process, constraint)
    if not check.feasible:
        raise ProcessInfeasibleError("process violates %s by %.3g" % (constraint.variant, check.maxViolation))
    weights = process.marginalWeights
    rows = [_sliceScheme(s, b, process.rowProbs[i], process.activation[i], mode, epsilon, delta, rng,
                         process.shape, column=False)
            for i, s in enumerate(constraint.rowConstraints)]
    columns = [_sliceScheme(s, b, [1.0], weights[:, j][np.newaxis, :], mode, epsilon, delta, rng,
                            process.shape, column=True)
               for j, s in enumerate(constraint.columnConstraints)]
    scheme = vhCompose(rows, columns, process)
    _log.debug("VH scheme: row c %s, column c %s", [s.c for s in rows], [s.c for s in columns])
    return scheme
