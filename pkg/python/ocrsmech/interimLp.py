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
"""Interim relaxations of the optimal auction and procurement mechanisms.

``buildLp1`` maximizes expected revenue over interim rules that are BIC, IR
and feasible in expectation.  ``buildLp2`` maximizes the buyer's expected
value over seller-side BIC/IR rules whose expected payments fit the budget.
"""

import json

import numpy as np

from lsst.utils.logging import getLogger

from .constraints import checkProcessFeasibility
from .errors import DimensionMismatchError, UnsupportedConstraintError, ValidationFailedError
from .simplex import LPModel
from .twoLevelProcess import processFromInterim

__all__ = ["CLAMP_TOLERANCE", "RULE_TOLERANCE", "EXTRACTION_TOLERANCE", "InterimRule",
           "ProcurementInterimRule", "buildLp1", "buildLp2", "interimFromLp1", "interimFromLp2",
           "interimRuleFromDict", "writeInterimRule", "readInterimRule"]

CLAMP_TOLERANCE = 1e-9
RULE_TOLERANCE = 1e-7
EXTRACTION_TOLERANCE = 1e-6

_log = getLogger("ocrsmech.interimLp")


def _worst(violations):
    """Largest ``(residual, label)`` pair, or ``(0.0, None)``."""
    if not violations:
        return 0.0, None
    return max(violations, key=lambda pair: pair[0])


class InterimRule:
    """Interim allocation and payment tables of an auction.

    Parameters
    ----------
    pi : `list` [`numpy.ndarray`]
        Per-agent ``(nTypes_i, nItems)`` allocation probabilities.
    q : `list` [`numpy.ndarray`]
        Per-agent ``(nTypes_i,)`` payments.
    objective : `float`
        Expected revenue of the rule.
    """
    kind = "auction"

    def __init__(self, pi, q, objective):
        self.pi = [np.array(p, dtype=np.float64, ndmin=2) for p in pi]
        self.q = [np.array(v, dtype=np.float64, ndmin=1) for v in q]
        if len(self.pi) != len(self.q):
            raise DimensionMismatchError("pi and q need one entry per agent")
        for i, (p, v) in enumerate(zip(self.pi, self.q)):
            if p.shape[0] != v.size:
                raise DimensionMismatchError("agent %d: %d pi rows but %d payments" % (i, p.shape[0], v.size))
            p.setflags(write=False)
            v.setflags(write=False)
        self.objective = float(objective)

    @property
    def nAgents(self):
        return len(self.pi)

    @property
    def nItems(self):
        return self.pi[0].shape[1]

    @property
    def nTypes(self):
        return [v.size for v in self.q]

    def checkShape(self, instance):
        if instance.shape != (self.nAgents, self.nItems) or instance.nTypes != self.nTypes:
            raise DimensionMismatchError("interim rule (n=%d, m=%d, types=%s) does not match instance "
                                         "(n=%d, m=%d, types=%s)" % (self.nAgents, self.nItems, self.nTypes,
                                                                     instance.n, instance.m, instance.nTypes))

    def process(self, instance):
        """Two-level process with row types = agent types, activation = pi."""
        self.checkShape(instance)
        return processFromInterim(instance.typeSpaces, self.pi)

    def expectedRevenue(self, instance):
        return float(sum(space.probs @ v for space, v in zip(instance.typeSpaces, self.q)))

    def violations(self, instance):
        """All violated rows as ``(residual, label)`` pairs."""
        self.checkShape(instance)
        found = []
        for i, (space, p, v) in enumerate(zip(instance.typeSpaces, self.pi, self.q)):
            low = -p.min()
            high = p.max() - 1.0
            if low > 0.0:
                found.append((float(low), "range/%d" % (i)))
            if high > 0.0:
                found.append((float(high), "range/%d" % (i)))
            # utility[t, s]: value-t agent reporting s
            utility = space.support @ p.T - v[np.newaxis, :]
            truthful = np.diag(utility)
            for t in range(space.nTypes):
                if -truthful[t] > 0.0:
                    found.append((float(-truthful[t]), "ir/%d/%d" % (i, t)))
                for s in range(space.nTypes):
                    gap = utility[t, s] - truthful[t]
                    if s != t and gap > 0.0:
                        found.append((float(gap), "bic/%d/%d/%d" % (i, t, s)))
        feasibility = checkProcessFeasibility(self.process(instance), instance.constraint, tolerance=0.0)
        for label, slack in feasibility.slacks:
            if slack < 0.0:
                found.append((-slack, "feasibility/%s" % (label)))
        return found

    def validate(self, instance, tolerance=RULE_TOLERANCE):
        """Raise `ValidationFailedError` if any row is violated beyond tolerance."""
        residual, label = _worst(self.violations(instance))
        if residual > tolerance:
            raise ValidationFailedError("interim rule violates %s by %.3g" % (label, residual),
                                        row=label, residual=residual)

    def toDict(self):
        return {"kind": self.kind, "n": self.nAgents, "m": self.nItems, "nTypes": self.nTypes,
                "objective": self.objective,
                "pi": [p.tolist() for p in self.pi], "q": [v.tolist() for v in self.q]}


class ProcurementInterimRule(InterimRule):
    """Interim procurement probabilities and payments to sellers.

    ``q`` holds payments to sellers and ``objective`` the buyer's expected
    value.
    """
    kind = "procurement"

    def process(self, instance):
        self.checkShape(instance)
        return processFromInterim(instance.costSpaces, self.pi)

    def expectedPayment(self, instance):
        return float(sum(space.probs @ v for space, v in zip(instance.costSpaces, self.q)))

    def expectedValue(self, instance):
        return float(sum(space.probs @ (p @ instance.values[i])
                         for i, (space, p) in enumerate(zip(instance.costSpaces, self.pi))))

    def violations(self, instance):
        self.checkShape(instance)
        found = []
        for i, (space, p, v) in enumerate(zip(instance.costSpaces, self.pi, self.q)):
            low = -p.min()
            high = p.max() - 1.0
            if low > 0.0:
                found.append((float(low), "range/%d" % (i)))
            if high > 0.0:
                found.append((float(high), "range/%d" % (i)))
            if -v.min() > 0.0:
                found.append((float(-v.min()), "payment/%d" % (i)))
            if v.max() - instance.budget > 0.0:
                found.append((float(v.max() - instance.budget), "cap/%d" % (i)))
            # utility[t, s]: cost-t seller reporting s
            utility = v[np.newaxis, :] - space.support @ p.T
            truthful = np.diag(utility)
            for t in range(space.nTypes):
                if -truthful[t] > 0.0:
                    found.append((float(-truthful[t]), "ir/%d/%d" % (i, t)))
                for s in range(space.nTypes):
                    gap = utility[t, s] - truthful[t]
                    if s != t and gap > 0.0:
                        found.append((float(gap), "bic/%d/%d/%d" % (i, t, s)))
        excess = self.expectedPayment(instance) - instance.budget
        if excess > 0.0:
            found.append((excess, "budget"))
        return found


def interimRuleFromDict(data, instance=None):
    """Rebuild an interim rule, optionally checking it against ``instance``."""
    cls = ProcurementInterimRule if data.get("kind") == ProcurementInterimRule.kind else InterimRule
    rule = cls(data["pi"], data["q"], data["objective"])
    if (data.get("n"), data.get("m")) != (rule.nAgents, rule.nItems):
        raise DimensionMismatchError("declared shape (%s, %s) != content shape (%d, %d)" %
                                     (data.get("n"), data.get("m"), rule.nAgents, rule.nItems))
    if instance is not None:
        rule.checkShape(instance)
    return rule


def writeInterimRule(rule, path):
    with open(path, "w") as f:
        json.dump(rule.toDict(), f, indent=2)


def readInterimRule(path, instance=None):
    with open(path) as f:
        return interimRuleFromDict(json.load(f), instance=instance)


def _addAllocationVariables(model, typeSpaces, nItems, valueWeights=None, firstAgent=0):
    piIndex = []
    for i, space in enumerate(typeSpaces, start=firstAgent):
        index = np.zeros((space.nTypes, nItems), dtype=np.int64)
        for t in range(space.nTypes):
            for j in range(nItems):
                objective = 0.0 if valueWeights is None else space.probs[t]*valueWeights[i, j]
                index[t, j] = model.addVariable("pi[%d][%d][%d]" % (i, t, j), objective=objective,
                                                lower=0.0, upper=1.0)
        piIndex.append(index)
    return piIndex


def buildLp1(instance):
    """Interim revenue relaxation of an auction.

    Parameters
    ----------
    instance : `ocrsmech.instances.AuctionInstance`

    Returns
    -------
    model : `ocrsmech.simplex.LPModel`
        Model with ``blocks["pi"]`` (per-agent ``(nTypes, m)`` column
        indices) and ``blocks["q"]`` (per-agent ``(nTypes,)``).  Row labels
        start with ``bic/``, ``ir/``, ``row/`` or ``marginal/``.

    Raises
    ------
    UnsupportedConstraintError
        If the constraint has no linear description.
    """
    constraint = instance.constraint
    if not constraint.hasLinearDescription:
        raise UnsupportedConstraintError("%s has no registered linear description" % (constraint.variant))

    model = LPModel("lp1")
    piIndex = []
    qIndex = []
    for i, space in enumerate(instance.typeSpaces):
        pi = _addAllocationVariables(model, [space], instance.m, firstAgent=i)[0]
        q = np.array([model.addVariable("q[%d][%d]" % (i, t), objective=space.probs[t], lower=None)
                      for t in range(space.nTypes)])
        piIndex.append(pi)
        qIndex.append(q)
    model.blocks = {"pi": piIndex, "q": qIndex}

    for i, space in enumerate(instance.typeSpaces):
        pi, q = piIndex[i], qIndex[i]
        values = space.support
        for t in range(space.nTypes):
            for s in range(space.nTypes):
                if s == t:
                    continue
                coeffs = {}
                for j in range(instance.m):
                    coeffs[pi[t, j]] = values[t, j]
                    coeffs[pi[s, j]] = -values[t, j]
                coeffs[q[t]] = -1.0
                coeffs[q[s]] = 1.0
                model.addConstraint(coeffs, ">=", 0.0, label="bic/%d/%d/%d" % (i, t, s))
        for t in range(space.nTypes):
            coeffs = {pi[t, j]: values[t, j] for j in range(instance.m)}
            coeffs[q[t]] = -1.0
            model.addConstraint(coeffs, ">=", 0.0, label="ir/%d/%d" % (i, t))
        for label, rowCoeffs, rhs in constraint.rowInequalities(i):
            for t in range(space.nTypes):
                coeffs = {pi[t, j]: rowCoeffs[j] for j in range(instance.m)}
                model.addConstraint(coeffs, "<=", rhs, label="row/%s/%d" % (label, t))

    for label, gridCoeffs, rhs in constraint.marginalInequalities():
        coeffs = {}
        for i, space in enumerate(instance.typeSpaces):
            for t in range(space.nTypes):
                for j in range(instance.m):
                    if gridCoeffs[i, j] != 0.0:
                        coeffs[piIndex[i][t, j]] = space.probs[t]*gridCoeffs[i, j]
        model.addConstraint(coeffs, "<=", rhs, label="marginal/%s" % (label))

    _log.debug("lp1: %d variables, %d rows", model.nVariables, model.nConstraints)
    return model


def buildLp2(instance):
    """Interim value relaxation of a budget-feasible procurement auction.

    Parameters
    ----------
    instance : `ocrsmech.instances.ProcurementInstance`

    Returns
    -------
    model : `ocrsmech.simplex.LPModel`
        Model with ``blocks["pi"]`` and ``blocks["q"]``; payments to sellers
        are bounded below by zero.  Row labels start with ``bic/``, ``ir/``,
        ``cap/`` or ``budget``.
    """
    model = LPModel("lp2")
    piIndex = _addAllocationVariables(model, instance.costSpaces, instance.m, valueWeights=instance.values)
    qIndex = [np.array([model.addVariable("q[%d][%d]" % (i, t), lower=0.0) for t in range(space.nTypes)])
              for i, space in enumerate(instance.costSpaces)]
    model.blocks = {"pi": piIndex, "q": qIndex}

    for i, space in enumerate(instance.costSpaces):
        pi, q = piIndex[i], qIndex[i]
        costs = space.support
        for t in range(space.nTypes):
            for s in range(space.nTypes):
                if s == t:
                    continue
                coeffs = {}
                for j in range(instance.m):
                    coeffs[pi[t, j]] = -costs[t, j]
                    coeffs[pi[s, j]] = costs[t, j]
                coeffs[q[t]] = 1.0
                coeffs[q[s]] = -1.0
                model.addConstraint(coeffs, ">=", 0.0, label="bic/%d/%d/%d" % (i, t, s))
        for t in range(space.nTypes):
            coeffs = {pi[t, j]: -costs[t, j] for j in range(instance.m)}
            coeffs[q[t]] = 1.0
            model.addConstraint(coeffs, ">=", 0.0, label="ir/%d/%d" % (i, t))
            model.addConstraint({q[t]: 1.0}, "<=", instance.budget, label="cap/%d/%d" % (i, t))

    budget = {}
    for i, space in enumerate(instance.costSpaces):
        for t in range(space.nTypes):
            budget[qIndex[i][t]] = space.probs[t]
    model.addConstraint(budget, "<=", instance.budget, label="budget")

    _log.debug("lp2: %d variables, %d rows", model.nVariables, model.nConstraints)
    return model


def _extractAllocation(model, x):
    pi = []
    for index in model.blocks["pi"]:
        values = x[index]
        low = -values.min()
        high = values.max() - 1.0
        if max(low, high) > CLAMP_TOLERANCE:
            raise ValidationFailedError("allocation leaves [0, 1] by %.3g" % (max(low, high)),
                                        row="range", residual=max(low, high))
        pi.append(np.clip(values, 0.0, 1.0))
    return pi


def interimFromLp1(instance, model, result, tolerance=EXTRACTION_TOLERANCE):
    """Extract and re-validate an `InterimRule` from a solved LP1.

    Parameters
    ----------
    instance : `ocrsmech.instances.AuctionInstance`
    model : `ocrsmech.simplex.LPModel`
        Model returned by `buildLp1`.
    result : `lsst.pipe.base.Struct`
        Output of `ocrsmech.simplex.solveLp`.
    tolerance : `float`, optional
        Largest residual accepted on any row.

    Raises
    ------
    ValidationFailedError
        With the violated row if a residual exceeds ``tolerance``.
    """
    x = np.asarray(result.x)
    pi = _extractAllocation(model, x)
    q = [x[index].copy() for index in model.blocks["q"]]
    rule = InterimRule(pi, q, result.objective)
    rule.validate(instance, tolerance=tolerance)
    return rule


def interimFromLp2(instance, model, result, tolerance=EXTRACTION_TOLERANCE):
    """Extract and re-validate a `ProcurementInterimRule` from a solved LP2."""
    x = np.asarray(result.x)
    pi = _extractAllocation(model, x)
    q = []
    for index in model.blocks["q"]:
        values = x[index]
        excess = max(-values.min(), values.max() - instance.budget)
        if excess > CLAMP_TOLERANCE:
            raise ValidationFailedError("payment leaves [0, B] by %.3g" % (excess), row="cap",
                                        residual=excess)
        q.append(np.clip(values, 0.0, instance.budget))
    rule = ProcurementInterimRule(pi, q, result.objective)
    rule.validate(instance, tolerance=tolerance)
    return rule
