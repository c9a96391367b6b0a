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
"""Feasibility constraints over the agent x item grid.

The variants form a closed set so that every one with a polytope can hand its
linear inequalities to the interim LP.  Selections are boolean arrays of shape
``(nAgents, nItems)``; the ``*Batch`` methods take a leading lane axis.
"""

import numpy as np

import lsst.pipe.base as pipeBase

from .errors import DimensionMismatchError, UnsupportedConstraintError

__all__ = ["FEASIBILITY_TOLERANCE", "FeasibilityConstraint", "SliceConstraint", "SingleCopyPerItem",
           "KUniformPerAgent", "Knapsack", "MultiChoiceKnapsack", "VerticalHorizontal",
           "constraintFromDict", "selectionToArray", "isFeasibleSet", "checkProcessFeasibility"]

FEASIBILITY_TOLERANCE = 1e-9


class FeasibilityConstraint:
    """Base class for downward-closed families of feasible sets.

    Parameters
    ----------
    nAgents : `int`
        Number of rows.
    nItems : `int`
        Number of columns.
    """
    variant = None
    hasLinearDescription = True

    def __init__(self, nAgents, nItems):
        if nAgents < 1 or nItems < 1:
            raise DimensionMismatchError("Constraint needs at least one agent and one item")
        self.nAgents = int(nAgents)
        self.nItems = int(nItems)

    @property
    def shape(self):
        return (self.nAgents, self.nItems)

    def isFeasibleBatch(self, selected):
        """Feasibility of each lane of a ``(nRuns, n, m)`` selection."""
        raise NotImplementedError

    def isFeasible(self, selected):
        return bool(self.isFeasibleBatch(np.asarray(selected, dtype=bool)[np.newaxis])[0])

    def rowInequalities(self, i):
        """Inequalities ``coeffs . x_i <= rhs`` describing the row polytope.

        Returns
        -------
        rows : `list` [`tuple`]
            ``(label, coeffs, rhs)`` with ``coeffs`` of shape ``(nItems,)``.
        """
        raise NotImplementedError

    def marginalInequalities(self):
        """Inequalities ``sum(coeffs * w) <= rhs`` describing the grid polytope.

        Returns
        -------
        rows : `list` [`tuple`]
            ``(label, coeffs, rhs)`` with ``coeffs`` of shape ``(nAgents, nItems)``.
        """
        raise NotImplementedError

    def toDict(self):
        return {"variant": self.variant, "params": self._params()}

    def _params(self):
        raise NotImplementedError

    def __eq__(self, other):
        return type(self) is type(other) and self.toDict() == other.toDict()


class SliceConstraint:
    """Constraint on a single row or column slice of a VH constraint.

    Parameters
    ----------
    kind : `str`
        ``"uniform"`` (at most ``k`` selections) or ``"explicit"`` (subsets
        of one of the listed maximal sets).
    length : `int`
        Number of positions in the slice.
    k : `int`, optional
        Rank of the uniform slice.
    maximalSets : `list` [`list` [`int`]], optional
        Maximal feasible sets of an explicit slice.
    """
    def __init__(self, kind, length, k=None, maximalSets=None):
        self.kind = kind
        self.length = int(length)
        if kind == "uniform":
            if k is None or int(k) < 0:
                raise ValueError("uniform slice needs a non-negative k")
            self.k = int(k)
            self.maximalSets = None
        elif kind == "explicit":
            if maximalSets is None:
                raise ValueError("explicit slice needs maximalSets")
            masks = np.zeros((len(maximalSets), self.length), dtype=bool)
            for index, members in enumerate(maximalSets):
                members = list(members)
                if any(p < 0 or p >= self.length for p in members):
                    raise DimensionMismatchError("explicit slice member outside [0, %d)" % (self.length))
                masks[index, members] = True
            self.k = None
            self.maximalSets = [sorted(int(p) for p in members) for members in maximalSets]
            self._masks = masks
        else:
            raise UnsupportedConstraintError("Unknown slice kind %r" % (kind, ))

    @property
    def isTrivial(self):
        return self.kind == "uniform" and self.k >= self.length

    def isFeasibleBatch(self, selected):
        """Feasibility of ``(nRuns, length)`` slice selections."""
        if self.kind == "uniform":
            return selected.sum(axis=1) <= self.k
        if self._masks.shape[0] == 0:
            return ~selected.any(axis=1)
        # a set is feasible iff it sits inside one of the maximal sets
        outside = selected[:, np.newaxis, :] & ~self._masks[np.newaxis, :, :]
        return (~outside.any(axis=2)).any(axis=1)

    def inequalities(self):
        if self.kind != "uniform":
            raise UnsupportedConstraintError("explicit slices have no registered linear description")
        if self.isTrivial:
            return []
        return [(np.ones(self.length), float(self.k))]

    def toDict(self):
        if self.kind == "uniform":
            return {"kind": "uniform", "k": self.k}
        return {"kind": "explicit", "maximalSets": self.maximalSets}

    @classmethod
    def fromDict(cls, data, length):
        return cls(data["kind"], length, k=data.get("k"), maximalSets=data.get("maximalSets"))


class VerticalHorizontal(FeasibilityConstraint):
    """Intersection of one constraint per row and one per column.

    Parameters
    ----------
    rowConstraints : `list` [`SliceConstraint`]
        One slice constraint of length ``nItems`` per agent.
    columnConstraints : `list` [`SliceConstraint`]
        One slice constraint of length ``nAgents`` per item.
    """
    variant = "VH"

    def __init__(self, rowConstraints, columnConstraints):
        super().__init__(len(rowConstraints), len(columnConstraints))
        for row in rowConstraints:
            if row.length != self.nItems:
                raise DimensionMismatchError("row slice length %d != nItems %d" % (row.length, self.nItems))
        for column in columnConstraints:
            if column.length != self.nAgents:
                raise DimensionMismatchError("column slice length %d != nAgents %d" %
                                             (column.length, self.nAgents))
        self.rowConstraints = list(rowConstraints)
        self.columnConstraints = list(columnConstraints)

    @property
    def hasLinearDescription(self):
        return all(s.kind == "uniform" for s in self.rowConstraints + self.columnConstraints)

    def isFeasibleBatch(self, selected):
        selected = np.asarray(selected, dtype=bool)
        ok = np.ones(selected.shape[0], dtype=bool)
        for i, row in enumerate(self.rowConstraints):
            ok &= row.isFeasibleBatch(selected[:, i, :])
        for j, column in enumerate(self.columnConstraints):
            ok &= column.isFeasibleBatch(selected[:, :, j])
        return ok

    def rowInequalities(self, i):
        return [("row%d" % (i), coeffs, rhs) for coeffs, rhs in self.rowConstraints[i].inequalities()]

    def marginalInequalities(self):
        rows = []
        for j, column in enumerate(self.columnConstraints):
            for coeffs, rhs in column.inequalities():
                full = np.zeros(self.shape)
                full[:, j] = coeffs
                rows.append(("column%d" % (j), full, rhs))
        # row slices only need checking here for explicit kinds
        for row in self.rowConstraints:
            row.inequalities()
        return rows

    def _params(self):
        return {"rows": [r.toDict() for r in self.rowConstraints],
                "columns": [c.toDict() for c in self.columnConstraints]}


class SingleCopyPerItem(VerticalHorizontal):
    """Each item goes to at most one agent."""
    variant = "SingleCopyPerItem"

    def __init__(self, nAgents, nItems):
        super().__init__([SliceConstraint("uniform", nItems, k=nItems) for _ in range(nAgents)],
                         [SliceConstraint("uniform", nAgents, k=1) for _ in range(nItems)])

    def _params(self):
        return {"nAgents": self.nAgents, "nItems": self.nItems}


class KUniformPerAgent(VerticalHorizontal):
    """Agent ``i`` receives at most ``k[i]`` items.

    Parameters
    ----------
    nItems : `int`
        Number of items.
    k : `list` [`int`]
        Per-agent caps.
    """
    variant = "KUniformPerAgent"

    def __init__(self, nItems, k):
        k = [int(v) for v in k]
        super().__init__([SliceConstraint("uniform", nItems, k=v) for v in k],
                         [SliceConstraint("uniform", len(k), k=len(k)) for _ in range(nItems)])
        self.k = k

    def _params(self):
        return {"nItems": self.nItems, "k": list(self.k)}


class Knapsack(FeasibilityConstraint):
    """Single knapsack with per-cell weights.

    Parameters
    ----------
    weights : array-like, (nAgents, nItems)
        Weight ``k_{i,j}`` in ``[0, capacity]``.
    capacity : `float`
        Knapsack size, positive.
    """
    variant = "Knapsack"

    def __init__(self, weights, capacity):
        weights = np.array(weights, dtype=np.float64, ndmin=2)
        super().__init__(*weights.shape)
        capacity = float(capacity)
        if not capacity > 0.0 or not np.isfinite(capacity):
            raise ValueError("capacity must be positive and finite, got %r" % (capacity, ))
        if not np.all(np.isfinite(weights)) or np.any(weights < 0.0) or np.any(weights > capacity):
            raise ValueError("weights must lie in [0, capacity]")
        weights.setflags(write=False)
        self.weights = weights
        self.capacity = capacity

    @property
    def heavy(self):
        """Mask of cells heavier than half the capacity."""
        return self.weights > self.capacity/2.

    def isFeasibleBatch(self, selected):
        selected = np.asarray(selected, dtype=bool)
        load = (selected*self.weights[np.newaxis]).sum(axis=(1, 2))
        return load <= self.capacity + FEASIBILITY_TOLERANCE

    def rowInequalities(self, i):
        return [("knapsackRow%d" % (i), self.weights[i].copy(), self.capacity)]

    def marginalInequalities(self):
        return [("knapsack", self.weights.copy(), self.capacity)]

    def _params(self):
        return {"weights": self.weights.tolist(), "capacity": self.capacity}


class MultiChoiceKnapsack(Knapsack):
    """Knapsack where each agent receives at most one cell."""
    variant = "MultiChoiceKnapsack"

    def isFeasibleBatch(self, selected):
        selected = np.asarray(selected, dtype=bool)
        return super().isFeasibleBatch(selected) & np.all(selected.sum(axis=2) <= 1, axis=1)

    def rowInequalities(self, i):
        return [("unitDemandRow%d" % (i), np.ones(self.nItems), 1.0)] + super().rowInequalities(i)

    def marginalInequalities(self):
        rows = super().marginalInequalities()
        for i in range(self.nAgents):
            coeffs = np.zeros(self.shape)
            coeffs[i, :] = 1.0
            rows.append(("unitDemand%d" % (i), coeffs, 1.0))
        return rows


def constraintFromDict(data):
    """Build a constraint from its ``{"variant", "params"}`` form."""
    variant = data["variant"]
    params = data.get("params", {})
    if variant == SingleCopyPerItem.variant:
        return SingleCopyPerItem(params["nAgents"], params["nItems"])
    if variant == KUniformPerAgent.variant:
        return KUniformPerAgent(params["nItems"], params["k"])
    if variant == Knapsack.variant:
        return Knapsack(params["weights"], params["capacity"])
    if variant == MultiChoiceKnapsack.variant:
        return MultiChoiceKnapsack(params["weights"], params["capacity"])
    if variant == VerticalHorizontal.variant:
        nAgents = len(params["rows"])
        nItems = len(params["columns"])
        return VerticalHorizontal([SliceConstraint.fromDict(r, nItems) for r in params["rows"]],
                                  [SliceConstraint.fromDict(c, nAgents) for c in params["columns"]])
    raise UnsupportedConstraintError("Unknown constraint variant %r" % (variant, ))


def selectionToArray(selected, shape):
    """Convert a selection to a boolean ``shape`` array.

    Parameters
    ----------
    selected : `numpy.ndarray` or iterable of `tuple`
        Boolean matrix or ``(i, j)`` pairs.
    shape : `tuple` [`int`]
        ``(nAgents, nItems)``.

    Raises
    ------
    DimensionMismatchError
        If an index or the matrix shape falls outside ``shape``.
    """
    if isinstance(selected, np.ndarray):
        if selected.shape != tuple(shape):
            raise DimensionMismatchError("selection shape %s != %s" % (selected.shape, tuple(shape)))
        return selected.astype(bool)
    array = np.zeros(shape, dtype=bool)
    for i, j in selected:
        if not (0 <= i < shape[0] and 0 <= j < shape[1]):
            raise DimensionMismatchError("cell (%d, %d) outside grid %s" % (i, j, tuple(shape)))
        array[i, j] = True
    return array


def isFeasibleSet(constraint, selected):
    """Whether a selection satisfies ``constraint``.

    Parameters
    ----------
    constraint : `FeasibilityConstraint`
    selected : `numpy.ndarray` or iterable of `tuple`

    Returns
    -------
    feasible : `bool`
    """
    return constraint.isFeasible(selectionToArray(selected, constraint.shape))


def checkProcessFeasibility(process, constraint, tolerance=FEASIBILITY_TOLERANCE):
    """Check a two-level process against the constraint's polytopes.

    Every row-type activation vector must lie in the row polytope and the
    marginal weight matrix in the grid polytope.

    Parameters
    ----------
    process : `ocrsmech.twoLevelProcess.TwoLevelProcess`
    constraint : `FeasibilityConstraint`
    tolerance : `float`, optional
        Absolute slack allowed on each inequality.

    Returns
    -------
    result : `lsst.pipe.base.Struct`
        ``feasible`` (`bool`), ``slacks`` (`list` of ``(label, slack)``),
        ``minSlack`` (`float`) and ``maxViolation`` (`float`, >= 0).

    Raises
    ------
    UnsupportedConstraintError
        If the constraint has no linear description.
    DimensionMismatchError
        If the shapes differ.
    """
    if process.shape != constraint.shape:
        raise DimensionMismatchError("process shape %s != constraint shape %s" %
                                     (process.shape, constraint.shape))
    if not constraint.hasLinearDescription:
        raise UnsupportedConstraintError("%s has no registered linear description" % (constraint.variant))

    slacks = []
    for i in range(constraint.nAgents):
        activation = process.activation[i]
        for label, coeffs, rhs in constraint.rowInequalities(i):
            lhs = activation @ coeffs
            for d, value in enumerate(lhs):
                slacks.append(("%s/type%d" % (label, d), float(rhs - value)))
    weights = process.marginalWeights
    for label, coeffs, rhs in constraint.marginalInequalities():
        slacks.append((label, float(rhs - np.sum(coeffs*weights))))

    values = np.array([s for _, s in slacks]) if slacks else np.zeros(1)
    minSlack = float(values.min())
    return pipeBase.Struct(feasible=bool(minSlack >= -tolerance),
                           slacks=slacks,
                           minSlack=minSlack,
                           maxViolation=max(0.0, -minSlack))
