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
"""Dense two-phase revised simplex for the interim LPs.

Models are small (at most a few thousand columns), so the basis is
refactorized from scratch at every pivot.  Pricing is Dantzig's rule with
ties going to the lowest column index; after ``blandAfterDegenerate``
consecutive degenerate pivots the solver switches to Bland's rule for the
rest of the phase.
"""

import numpy as np

import lsst.pex.config as pexConfig
import lsst.pipe.base as pipeBase
from lsst.utils.logging import getLogger

from .errors import IterationLimitError, LpInfeasibleError, LpUnboundedError, ValidationFailedError

__all__ = ["SimplexConfig", "LPModel", "solveLp", "RELATIONS"]

RELATIONS = ("<=", ">=", "==")

_log = getLogger("ocrsmech.simplex")


class SimplexConfig(pexConfig.Config):
    """Config for the revised simplex solver"""
    maxIterations = pexConfig.Field(
        doc="Maximum number of pivots per phase",
        dtype=int,
        default=50000,
    )
    blandAfterDegenerate = pexConfig.Field(
        doc="Consecutive degenerate pivots before switching to Bland's rule",
        dtype=int,
        default=50,
    )
    tolerance = pexConfig.RangeField(
        doc="Pivot, pricing and feasibility tolerance",
        dtype=float,
        default=1e-9,
        min=0.0,
        inclusiveMin=False,
    )
    phaseOneTolerance = pexConfig.RangeField(
        doc="Largest phase-one objective still treated as feasible",
        dtype=float,
        default=1e-7,
        min=0.0,
        inclusiveMin=False,
    )


class LPModel:
    """Maximization model with named columns and labelled rows.

    Parameters
    ----------
    name : `str`, optional
        Model name used in log messages.
    """
    def __init__(self, name="lp"):
        self.name = name
        self.names = []
        self.objective = []
        self.lower = []
        self.upper = []
        self.rows = []
        self.blocks = {}

    @property
    def nVariables(self):
        return len(self.names)

    @property
    def nConstraints(self):
        return len(self.rows)

    def addVariable(self, name, objective=0.0, lower=0.0, upper=None):
        """Add a column and return its index.

        ``lower=None`` makes the column free below; ``upper=None`` leaves it
        unbounded above.
        """
        lower = -np.inf if lower is None else float(lower)
        upper = np.inf if upper is None else float(upper)
        if lower > upper:
            raise ValueError("variable %s has lower bound above upper bound" % (name))
        self.names.append(name)
        self.objective.append(float(objective))
        self.lower.append(lower)
        self.upper.append(upper)
        return len(self.names) - 1

    def addConstraint(self, coeffs, relation, rhs, label=None):
        """Add the row ``coeffs . x (relation) rhs``.

        Parameters
        ----------
        coeffs : `dict` [`int`, `float`]
            Column index to coefficient; repeated columns are summed by the
            caller.
        relation : `str`
            One of ``"<="``, ``">="``, ``"=="``.
        rhs : `float`
            Finite right-hand side.
        label : `str`, optional
            Row label; families are identified by label prefix.
        """
        if relation not in RELATIONS:
            raise ValueError("relation must be one of %s, got %r" % (RELATIONS, relation))
        rhs = float(rhs)
        if not np.isfinite(rhs):
            raise ValueError("rhs of row %s must be finite" % (label))
        clean = {}
        for index, value in coeffs.items():
            if not 0 <= index < self.nVariables:
                raise IndexError("row %s references column %d of %d" % (label, index, self.nVariables))
            if value != 0.0:
                clean[int(index)] = float(value)
        self.rows.append((clean, relation, rhs, label or "row%d" % (len(self.rows))))
        return len(self.rows) - 1

    def countRows(self, prefix):
        return sum(1 for row in self.rows if row[3].startswith(prefix))

    def denseMatrix(self):
        """Constraint matrix, relations and right-hand sides as arrays."""
        matrix = np.zeros((self.nConstraints, self.nVariables))
        for r, (coeffs, _, _, _) in enumerate(self.rows):
            for index, value in coeffs.items():
                matrix[r, index] = value
        return matrix, [row[1] for row in self.rows], np.array([row[2] for row in self.rows])

    def residuals(self, x):
        """Per-row and per-bound violations of ``x`` (non-negative)."""
        x = np.asarray(x, dtype=np.float64)
        matrix, relations, rhs = self.denseMatrix()
        lhs = matrix @ x if self.nConstraints else np.zeros(0)
        violation = np.zeros(self.nConstraints)
        for r, relation in enumerate(relations):
            if relation == "<=":
                violation[r] = max(0.0, lhs[r] - rhs[r])
            elif relation == ">=":
                violation[r] = max(0.0, rhs[r] - lhs[r])
            else:
                violation[r] = abs(lhs[r] - rhs[r])
        bounds = np.maximum(np.maximum(np.array(self.lower) - x, x - np.array(self.upper)), 0.0)
        return violation, bounds


def _toStandardForm(model):
    """Rewrite ``model`` as ``min c.y, A y = b, y >= 0`` with ``x = T y + s``."""
    nVar = model.nVariables
    columns = []
    shift = np.zeros(nVar)
    boundRows = []
    for v in range(nVar):
        lower, upper = model.lower[v], model.upper[v]
        if np.isfinite(lower):
            shift[v] = lower
            columns.append((v, 1.0))
            if np.isfinite(upper):
                boundRows.append((len(columns) - 1, upper - lower))
        elif np.isfinite(upper):
            shift[v] = upper
            columns.append((v, -1.0))
        else:
            columns.append((v, 1.0))
            columns.append((v, -1.0))
    transform = np.zeros((nVar, len(columns)))
    for col, (v, sign) in enumerate(columns):
        transform[v, col] = sign

    matrix, relations, rhs = model.denseMatrix()
    rows = matrix @ transform if model.nConstraints else np.zeros((0, len(columns)))
    rhs = rhs - (matrix @ shift if model.nConstraints else 0.0)
    relations = list(relations)
    for col, bound in boundRows:
        extra = np.zeros((1, len(columns)))
        extra[0, col] = 1.0
        rows = np.vstack([rows, extra])
        rhs = np.append(rhs, bound)
        relations.append("<=")

    nRows = rows.shape[0]
    nSlack = sum(1 for rel in relations if rel != "==")
    A = np.zeros((nRows, len(columns) + nSlack))
    A[:, :len(columns)] = rows
    slackOf = np.full(nRows, -1)
    s = len(columns)
    for r, relation in enumerate(relations):
        if relation == "<=":
            A[r, s] = 1.0
        elif relation == ">=":
            A[r, s] = -1.0
        else:
            continue
        slackOf[r] = s
        s += 1
    b = rhs.copy()
    negative = b < 0.0
    A[negative] *= -1.0
    b[negative] *= -1.0

    c = np.zeros(A.shape[1])
    c[:len(columns)] = -(np.array(model.objective) @ transform)
    constant = float(np.array(model.objective) @ shift)
    return A, b, c, slackOf, transform, shift, constant


def _revisedSimplex(A, b, c, basis, config, phase):
    """Minimize ``c.y`` over ``A y = b, y >= 0`` from a feasible basis."""
    nRows = A.shape[0]
    tol = config.tolerance
    basis = list(basis)
    nDegenerate = 0
    useBland = False
    for iteration in range(config.maxIterations):
        B = A[:, basis]
        xB = np.linalg.solve(B, b)
        y = np.linalg.solve(B.T, c[basis])
        reduced = c - y @ A
        reduced[basis] = 0.0
        candidates = np.flatnonzero(reduced < -tol)
        if candidates.size == 0:
            return basis, xB, iteration
        if useBland:
            enter = candidates[0]
        else:
            # argmin returns the first minimum: lowest index wins ties
            enter = candidates[np.argmin(reduced[candidates])]
        direction = np.linalg.solve(B, A[:, enter])
        positive = direction > tol
        if not positive.any():
            raise LpUnboundedError("%s is unbounded (column %d)" % (phase, enter))
        ratios = np.full(nRows, np.inf)
        ratios[positive] = np.maximum(xB[positive], 0.0)/direction[positive]
        step = ratios.min()
        ties = np.flatnonzero(ratios <= step + tol)
        leave = ties[np.argmin(np.asarray(basis)[ties])]
        if step <= tol:
            nDegenerate += 1
            if nDegenerate >= config.blandAfterDegenerate and not useBland:
                _log.debug("%s: switching to Bland's rule after %d degenerate pivots", phase, nDegenerate)
                useBland = True
        else:
            nDegenerate = 0
        basis[leave] = enter
    raise IterationLimitError("%s exceeded %d iterations" % (phase, config.maxIterations))


def solveLp(model, config=None):
    """Solve a maximization `LPModel`.

    Parameters
    ----------
    model : `LPModel`
    config : `SimplexConfig`, optional

    Returns
    -------
    result : `lsst.pipe.base.Struct`
        ``x`` (`numpy.ndarray`), ``objective`` (`float`), ``iterations``
        (`int`) and ``maxResidual`` (`float`).

    Raises
    ------
    LpInfeasibleError
    LpUnboundedError
    IterationLimitError
    ValidationFailedError
        Raised if the solution violates a row or bound beyond tolerance.
    """
    if config is None:
        config = SimplexConfig()
    A, b, c, slackOf, transform, shift, constant = _toStandardForm(model)
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    nRows, nCols = A.shape

    basis = []
    artificial = []
    for r in range(nRows):
        if slackOf[r] >= 0 and A[r, slackOf[r]] > 0.0:
            basis.append(int(slackOf[r]))
        else:
            artificial.append(r)
            basis.append(nCols + len(artificial) - 1)

    iterations = 0
    if artificial:
        extra = np.zeros((nRows, len(artificial)))
        for k, r in enumerate(artificial):
            extra[r, k] = 1.0
        A1 = np.hstack([A, extra])
        c1 = np.zeros(A1.shape[1])
        c1[nCols:] = 1.0
        basis, xB, iterations = _revisedSimplex(A1, b, c1, basis, config, "%s phase 1" % (model.name))
        infeasibility = float(c1[basis] @ xB)
        if infeasibility > config.phaseOneTolerance*max(1.0, float(np.abs(b).max())):
            raise LpInfeasibleError("%s is infeasible (phase 1 objective %.3g)" % (model.name, infeasibility))

        # pivot remaining artificials out, dropping rows that are redundant
        keep = np.ones(nRows, dtype=bool)
        position = 0
        while position < len(basis):
            if basis[position] < nCols:
                position += 1
                continue
            rows = np.flatnonzero(keep)
            B = A1[np.ix_(rows, basis)]
            unit = np.zeros(len(rows))
            unit[position] = 1.0
            tableauRow = np.linalg.solve(B.T, unit) @ A[rows]
            tableauRow[[k for k in basis if k < nCols]] = 0.0
            pivots = np.flatnonzero(np.abs(tableauRow) > config.tolerance)
            if pivots.size:
                basis[position] = int(pivots[0])
                position += 1
            else:
                _log.debug("%s: dropping redundant row %d", model.name, rows[position])
                keep[rows[position]] = False
                del basis[position]
        A = A[keep]
        b = b[keep]

    if A.shape[0]:
        basis, xB, iterations2 = _revisedSimplex(A, b, c, basis, config, "%s phase 2" % (model.name))
        iterations += iterations2
        yValues = np.zeros(nCols)
        yValues[basis] = np.maximum(xB, 0.0)
    else:
        if np.any(c < -config.tolerance):
            raise LpUnboundedError("%s is unbounded" % (model.name))
        yValues = np.zeros(nCols)

    x = transform @ yValues[:transform.shape[1]] + shift
    objective = float(np.array(model.objective) @ x)
    rowViolation, boundViolation = model.residuals(x)
    maxResidual = float(max(rowViolation.max(initial=0.0), boundViolation.max(initial=0.0)))
    if maxResidual > config.tolerance*scale:
        if rowViolation.max(initial=0.0) >= boundViolation.max(initial=0.0):
            row = model.rows[int(np.argmax(rowViolation))][3]
        else:
            row = "bound of column %d" % (int(np.argmax(boundViolation)))
        raise ValidationFailedError("%s: solution violates %s by %.3g" % (model.name, row, maxResidual),
                                    row=row, residual=maxResidual)
    _log.debug("%s solved in %d pivots, objective %.12g (constant %.3g)", model.name, iterations,
               objective, constant)
    return pipeBase.Struct(x=x, objective=objective, iterations=iterations, maxResidual=maxResidual)
