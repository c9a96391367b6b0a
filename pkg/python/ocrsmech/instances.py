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
"""Auction and procurement instances and their JSON representation.

An auction instance file looks like::

    {"kind": "auction", "n": 2, "m": 1,
     "agents": [{"support": [[1.0], [2.0]], "probs": [0.5, 0.5]}, ...],
     "constraint": {"variant": "SingleCopyPerItem", "params": {...}}}

and a procurement instance file like::

    {"kind": "procurement", "n": 1, "m": 1, "values": [[5.0]],
     "sellers": [{"support": [[2.0]], "probs": [1.0]}], "budget": 1.0}

Floats are written with full ``repr`` precision.
"""

import itertools
import json

import numpy as np

from .constraints import MultiChoiceKnapsack, Knapsack, constraintFromDict
from .errors import DimensionMismatchError, TooLargeError, UnsupportedConstraintError
from .twoLevelProcess import PROBABILITY_TOLERANCE

__all__ = ["AgentTypeSpace", "AuctionInstance", "ProcurementInstance", "instanceToDict",
           "instanceFromDict", "writeInstance", "readInstance", "expandToBundles", "MAX_BUNDLE_ITEMS"]

MAX_BUNDLE_ITEMS = 10


class AgentTypeSpace:
    """Finite type distribution of a single agent.

    Parameters
    ----------
    support : array-like, (nTypes, nItems)
        Distinct non-negative valuation (or cost) vectors.
    probs : array-like, (nTypes,)
        Probabilities summing to one.
    """
    def __init__(self, support, probs):
        support = np.array(support, dtype=np.float64, ndmin=2)
        probs = np.array(probs, dtype=np.float64, ndmin=1)
        if support.ndim != 2 or support.shape[0] != probs.size or probs.size == 0:
            raise DimensionMismatchError("support has %d vectors but %d probabilities" %
                                         (support.shape[0], probs.size))
        if not np.all(np.isfinite(probs)) or np.any(probs < 0.0):
            raise ValueError("type probabilities must be non-negative")
        if abs(probs.sum() - 1.0) > PROBABILITY_TOLERANCE:
            raise ValueError("type probabilities must sum to 1 (sum is %.17g)" % (probs.sum()))
        if not np.all(np.isfinite(support)) or np.any(support < 0.0):
            raise ValueError("support entries must be non-negative and finite")
        if np.unique(support, axis=0).shape[0] != support.shape[0]:
            raise ValueError("support vectors must be distinct")
        support.setflags(write=False)
        probs.setflags(write=False)
        self.support = support
        self.probs = probs

    @property
    def nTypes(self):
        return self.probs.size

    @property
    def nItems(self):
        return self.support.shape[1]

    def sample(self, rng, size=None):
        """Draw type indices."""
        return rng.choice(self.nTypes, size=size, p=self.probs)

    def toDict(self):
        return {"support": self.support.tolist(), "probs": self.probs.tolist()}

    @classmethod
    def fromDict(cls, data):
        return cls(data["support"], data["probs"])


class AuctionInstance:
    """Agents with finite type spaces plus a feasibility constraint.

    Parameters
    ----------
    typeSpaces : `list` [`AgentTypeSpace`]
        One type space per agent, each with ``nItems`` columns.
    constraint : `ocrsmech.constraints.FeasibilityConstraint`
        Constraint on the ``(n, m)`` grid.
    """
    kind = "auction"

    def __init__(self, typeSpaces, constraint):
        if len(typeSpaces) == 0:
            raise DimensionMismatchError("an instance needs at least one agent")
        nItems = typeSpaces[0].nItems
        for i, space in enumerate(typeSpaces):
            if space.nItems != nItems:
                raise DimensionMismatchError("agent %d values %d items, expected %d" %
                                             (i, space.nItems, nItems))
        if constraint.shape != (len(typeSpaces), nItems):
            raise DimensionMismatchError("constraint shape %s != instance shape %s" %
                                         (constraint.shape, (len(typeSpaces), nItems)))
        self.typeSpaces = list(typeSpaces)
        self.constraint = constraint

    @property
    def n(self):
        return len(self.typeSpaces)

    @property
    def m(self):
        return self.typeSpaces[0].nItems

    @property
    def shape(self):
        return (self.n, self.m)

    @property
    def nTypes(self):
        return [space.nTypes for space in self.typeSpaces]

    def sampleReports(self, rng, nRuns):
        """Truthful type indices for ``nRuns`` lanes, shape ``(nRuns, n)``."""
        return np.stack([space.sample(rng, nRuns) for space in self.typeSpaces], axis=1)


class ProcurementInstance:
    """Buyer values, seller cost distributions and a budget.

    Parameters
    ----------
    values : array-like, (nSellers, nServices)
        Buyer value ``v_{i,j}`` for service ``j`` of seller ``i``.
    costSpaces : `list` [`AgentTypeSpace`]
        Per-seller distribution over cost vectors.
    budget : `float`
        Budget ``B``, non-negative.
    """
    kind = "procurement"

    def __init__(self, values, costSpaces, budget):
        values = np.array(values, dtype=np.float64, ndmin=2)
        if values.shape[0] != len(costSpaces):
            raise DimensionMismatchError("values has %d rows for %d sellers" %
                                         (values.shape[0], len(costSpaces)))
        for i, space in enumerate(costSpaces):
            if space.nItems != values.shape[1]:
                raise DimensionMismatchError("seller %d costs %d services, expected %d" %
                                             (i, space.nItems, values.shape[1]))
        if not np.all(np.isfinite(values)) or np.any(values < 0.0):
            raise ValueError("buyer values must be non-negative and finite")
        budget = float(budget)
        if not budget >= 0.0 or not np.isfinite(budget):
            raise ValueError("budget must be non-negative and finite, got %r" % (budget, ))
        values.setflags(write=False)
        self.values = values
        self.costSpaces = list(costSpaces)
        self.budget = budget

    @property
    def n(self):
        return len(self.costSpaces)

    @property
    def m(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return (self.n, self.m)

    @property
    def nTypes(self):
        return [space.nTypes for space in self.costSpaces]

    def sampleReports(self, rng, nRuns):
        return np.stack([space.sample(rng, nRuns) for space in self.costSpaces], axis=1)


def instanceToDict(instance):
    """JSON-ready dict for an auction or procurement instance."""
    if instance.kind == AuctionInstance.kind:
        return {"kind": instance.kind, "n": instance.n, "m": instance.m,
                "agents": [space.toDict() for space in instance.typeSpaces],
                "constraint": instance.constraint.toDict()}
    return {"kind": instance.kind, "n": instance.n, "m": instance.m,
            "values": instance.values.tolist(),
            "sellers": [space.toDict() for space in instance.costSpaces],
            "budget": instance.budget}


def instanceFromDict(data):
    """Inverse of `instanceToDict`, checking the declared dimensions."""
    kind = data.get("kind", AuctionInstance.kind)
    if kind == AuctionInstance.kind:
        instance = AuctionInstance([AgentTypeSpace.fromDict(a) for a in data["agents"]],
                                   constraintFromDict(data["constraint"]))
    elif kind == ProcurementInstance.kind:
        instance = ProcurementInstance(data["values"], [AgentTypeSpace.fromDict(s) for s in data["sellers"]],
                                       data["budget"])
    else:
        raise ValueError("Unknown instance kind %r" % (kind, ))
    if "n" in data and "m" in data and (data["n"], data["m"]) != instance.shape:
        raise DimensionMismatchError("declared shape (%d, %d) != content shape %s" %
                                     (data["n"], data["m"], instance.shape))
    return instance


def writeInstance(instance, path):
    with open(path, "w") as f:
        json.dump(instanceToDict(instance), f, indent=2)


def readInstance(path):
    with open(path) as f:
        return instanceFromDict(json.load(f))


def expandToBundles(instance, valuation=None):
    """Replace items by bundles so non-additive valuations fit a knapsack.

    Each agent gets one meta-item per non-empty bundle of physical items;
    the meta-item weighs the bundle's summed weight and the agent may receive
    at most one meta-item, so the expanded instance uses a
    `~ocrsmech.constraints.MultiChoiceKnapsack` constraint.

    Parameters
    ----------
    instance : `AuctionInstance`
        Instance with a `~ocrsmech.constraints.Knapsack` constraint.
    valuation : callable, optional
        ``valuation(agent, typeIndex, bundle)`` returning the value of the
        bundle (a `tuple` of item indices).  Defaults to the additive sum of
        the agent's item values.

    Returns
    -------
    expanded : `AuctionInstance`
        Instance whose items are the bundles.
    bundles : `list` [`tuple` [`int`]]
        Items of each meta-item, in meta-item order.
    """
    constraint = instance.constraint
    if not isinstance(constraint, Knapsack) or isinstance(constraint, MultiChoiceKnapsack):
        raise UnsupportedConstraintError("bundle expansion needs a plain Knapsack constraint")
    if instance.m > MAX_BUNDLE_ITEMS:
        raise TooLargeError("bundle expansion of %d items exceeds the cap of %d" %
                            (instance.m, MAX_BUNDLE_ITEMS))

    # bundles that overflow the knapsack for some agent can never be packed
    bundles = [bundle for size in range(1, instance.m + 1)
               for bundle in itertools.combinations(range(instance.m), size)
               if np.all(constraint.weights[:, list(bundle)].sum(axis=1) <= constraint.capacity)]
    weights = np.array([[constraint.weights[i, list(bundle)].sum() for bundle in bundles]
                        for i in range(instance.n)])

    typeSpaces = []
    for i, space in enumerate(instance.typeSpaces):
        support = np.zeros((space.nTypes, len(bundles)))
        for t in range(space.nTypes):
            for b, bundle in enumerate(bundles):
                if valuation is None:
                    support[t, b] = space.support[t, list(bundle)].sum()
                else:
                    support[t, b] = float(valuation(i, t, bundle))
        typeSpaces.append(AgentTypeSpace(support, space.probs))
    return AuctionInstance(typeSpaces, MultiChoiceKnapsack(weights, constraint.capacity)), bundles
