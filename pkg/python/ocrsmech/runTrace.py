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
"""Per-lane record of mechanism runs."""

import numpy as np

from .schemes import BRANCH_HEAVY, BRANCH_LIGHT

__all__ = ["RunTrace"]

_BRANCH_NAMES = {BRANCH_HEAVY: "heavy", BRANCH_LIGHT: "light"}


class RunTrace:
    """Arrays recording every decision of ``nRuns`` mechanism runs.

    Parameters
    ----------
    nRuns : `int`
        Number of lanes.
    shape : `tuple` [`int`]
        ``(nAgents, nItems)``.
    nSeen : `int`, optional
        Agents whose reports were read; defaults to all of them.

    Notes
    -----
    For agent ``i`` and lane ``l`` the events are, in order: the report
    ``reports[l, i]``, the payment ``payments[l, i]``, then per item the
    activation, the scheme decision and the keep flip.  ``keep`` is only
    meaningful where ``selected`` is set.
    """
    def __init__(self, nRuns, shape, nSeen=None):
        self.nRuns = int(nRuns)
        self.shape = tuple(shape)
        self.nSeen = self.shape[0] if nSeen is None else int(nSeen)
        self.reports = np.full((self.nRuns, self.shape[0]), -1, dtype=np.int64)
        self.payments = np.zeros((self.nRuns, self.shape[0]))
        self.active = np.zeros((self.nRuns, ) + self.shape, dtype=bool)
        self.selected = np.zeros((self.nRuns, ) + self.shape, dtype=bool)
        self.keep = np.zeros((self.nRuns, ) + self.shape, dtype=bool)
        self.allocation = np.zeros((self.nRuns, ) + self.shape, dtype=bool)
        self.branch = np.zeros(self.nRuns, dtype=np.int8)
        self.pstarTosses = np.zeros((self.nRuns, ) + self.shape, dtype=np.int64)
        self.keepTosses = np.zeros((self.nRuns, ) + self.shape, dtype=np.int64)
        self.load = None

    def prefix(self, nAgents):
        """Trace restricted to the first ``nAgents`` agents."""
        other = RunTrace(self.nRuns, (nAgents, self.shape[1]), nSeen=min(nAgents, self.nSeen))
        for name in ("reports", "payments", "active", "selected", "keep", "allocation", "pstarTosses",
                     "keepTosses"):
            setattr(other, name, getattr(self, name)[:, :nAgents].copy())
        other.branch = self.branch.copy()
        return other

    def events(self, lane):
        """Ordered event log of one lane."""
        log = []
        for i in range(self.nSeen):
            log.append({"event": "report", "agent": i, "report": int(self.reports[lane, i])})
            log.append({"event": "payment", "agent": i, "amount": float(self.payments[lane, i])})
            for j in range(self.shape[1]):
                if not self.active[lane, i, j]:
                    continue
                entry = {"event": "offer", "agent": i, "item": j, "selected": bool(self.selected[lane, i, j])}
                if self.branch[lane] in _BRANCH_NAMES:
                    entry["branch"] = _BRANCH_NAMES[self.branch[lane]]
                if self.selected[lane, i, j]:
                    entry["kept"] = bool(self.keep[lane, i, j])
                    entry["pstarTosses"] = int(self.pstarTosses[lane, i, j])
                log.append(entry)
        if self.load is not None:
            log.append({"event": "load", "total": float(self.load[lane])})
        return log

    def sameAs(self, other):
        """Whether two traces record identical decisions."""
        names = ("reports", "payments", "active", "selected", "keep", "allocation", "branch")
        return all(np.array_equal(getattr(self, name), getattr(other, name)) for name in names)
