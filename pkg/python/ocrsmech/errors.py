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
"""Exceptions raised by ocrsmech.

Input problems derive from `ValueError`; failures discovered while running a
solver, a scheme or a mechanism derive from `RuntimeError`.
"""

__all__ = ["DimensionMismatchError", "UnsupportedConstraintError", "ProcessInfeasibleError",
           "LpInfeasibleError", "LpUnboundedError", "IterationLimitError",
           "ValidationFailedError", "TooLargeError", "KeepCoinPreconditionError",
           "ProbabilityRangeError"]


class DimensionMismatchError(ValueError):
    """Shapes or indices that do not match the (n, m) grid."""
    pass


class UnsupportedConstraintError(ValueError):
    """Constraint variant without a registered linear description or scheme."""
    pass


class ProcessInfeasibleError(ValueError):
    """Two-level process outside the polytope a scheme requires."""
    pass


class LpInfeasibleError(RuntimeError):
    pass


class LpUnboundedError(RuntimeError):
    pass


class IterationLimitError(RuntimeError):
    pass


class ValidationFailedError(RuntimeError):
    """Solver output violates a row of the model beyond tolerance.

    Parameters
    ----------
    msg : `str`
        Description of the failure.
    row : `str`, optional
        Label of the violated row.
    residual : `float`, optional
        Size of the violation.
    """
    def __init__(self, msg, row=None, residual=None):
        super().__init__(msg)
        self.row = row
        self.residual = residual


class TooLargeError(RuntimeError):
    """Enumeration or exact oracle beyond its configured cap."""
    pass


class KeepCoinPreconditionError(RuntimeError):
    """Known selection probability below the declared selectability."""
    pass


class ProbabilityRangeError(RuntimeError):
    """An internal normalizer left [0, 1] where the construction forbids it."""
    pass
