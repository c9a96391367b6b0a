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
"""Random auction and procurement instances.

The families below are a convention of this package rather than canonical
benchmarks.  Type probabilities are drawn from a flat Dirichlet, values and
costs uniformly from the configured ranges and knapsack weights uniformly as
a fraction of the capacity.  Every draw comes from one generator, in a fixed
order, so a seed fully determines the instance.
"""

import numpy as np

import lsst.pex.config as pexConfig
import lsst.pipe.base as pipeBase
from lsst.utils.timer import timeMethod

from .constraints import (Knapsack, KUniformPerAgent, MultiChoiceKnapsack, SingleCopyPerItem,
                          SliceConstraint, VerticalHorizontal)
from .instances import MAX_BUNDLE_ITEMS, AgentTypeSpace, AuctionInstance, ProcurementInstance, expandToBundles
from .ocrsTaskBase import OcrsBaseTask, OcrsTaskConfigBase
from .utilities import makeRng

__all__ = ["INSTANCE_FAMILIES", "InstanceGeneratorConfig", "GenerateInstanceConfig", "GenerateInstanceTask",
           "generateInstance", "synergyValuation"]

INSTANCE_FAMILIES = {
    "singleCopy": "Each item sold to at most one agent",
    "kUniform": "Each agent receives at most kPerAgent items",
    "vh": "Rows capped at kPerAgent and columns at kPerItem",
    "knapsack": "Single knapsack over all (agent, item) cells",
    "multiChoiceKnapsack": "Knapsack with at most one item per agent",
    "bundleKnapsack": "Knapsack over bundles of items with synergistic values",
    "procurement": "Budget-feasible procurement from sellers with private costs",
}


class InstanceGeneratorConfig(pexConfig.Config):
    """Parameters of a random instance family"""
    family = pexConfig.ChoiceField(
        doc="Instance family",
        dtype=str,
        default="knapsack",
        allowed=INSTANCE_FAMILIES,
    )
    nAgents = pexConfig.RangeField(
        doc="Number of agents (sellers for procurement)",
        dtype=int,
        default=3,
        min=1,
    )
    nItems = pexConfig.RangeField(
        doc="Number of items (services for procurement)",
        dtype=int,
        default=2,
        min=1,
    )
    nTypes = pexConfig.RangeField(
        doc="Number of types per agent",
        dtype=int,
        default=2,
        min=1,
    )
    valueMin = pexConfig.RangeField(
        doc="Smallest item value (buyer value for procurement)",
        dtype=float,
        default=0.0,
        min=0.0,
    )
    valueMax = pexConfig.RangeField(
        doc="Largest item value (buyer value for procurement)",
        dtype=float,
        default=1.0,
        min=0.0,
    )
    kPerAgent = pexConfig.RangeField(
        doc="Items per agent for the kUniform and vh families",
        dtype=int,
        default=1,
        min=0,
    )
    kPerItem = pexConfig.RangeField(
        doc="Agents per item for the vh family",
        dtype=int,
        default=1,
        min=0,
    )
    weightMin = pexConfig.RangeField(
        doc="Smallest knapsack weight, as a fraction of the capacity",
        dtype=float,
        default=0.05,
        min=0.0,
        max=1.0,
    )
    weightMax = pexConfig.RangeField(
        doc="Largest knapsack weight, as a fraction of the capacity",
        dtype=float,
        default=0.8,
        min=0.0,
        max=1.0,
    )
    capacity = pexConfig.RangeField(
        doc="Knapsack capacity",
        dtype=float,
        default=1.0,
        min=0.0,
        inclusiveMin=False,
    )
    bundleSynergy = pexConfig.RangeField(
        doc="Relative bonus per extra item in a bundle (bundleKnapsack family)",
        dtype=float,
        default=0.25,
        min=0.0,
    )
    budget = pexConfig.RangeField(
        doc="Procurement budget",
        dtype=float,
        default=1.0,
        min=0.0,
    )
    costMin = pexConfig.RangeField(
        doc="Smallest seller cost",
        dtype=float,
        default=0.1,
        min=0.0,
    )
    costMax = pexConfig.RangeField(
        doc="Largest seller cost",
        dtype=float,
        default=1.0,
        min=0.0,
    )

    def validate(self):
        super().validate()

        for low, high in (("valueMin", "valueMax"), ("weightMin", "weightMax"), ("costMin", "costMax")):
            lowValue, highValue = getattr(self, low), getattr(self, high)
            if lowValue > highValue:
                msg = "%s (%g) must not exceed %s (%g)" % (low, lowValue, high, highValue)
                raise pexConfig.FieldValidationError(getattr(InstanceGeneratorConfig, low), self, msg)
        ranges = {"procurement": ("costMin", "costMax")}
        low, high = ranges.get(self.family, ("valueMin", "valueMax"))
        if self.nTypes > 1 and getattr(self, low) == getattr(self, high):
            msg = "%d distinct types need %s < %s" % (self.nTypes, low, high)
            raise pexConfig.FieldValidationError(InstanceGeneratorConfig.nTypes, self, msg)
        if self.family == "bundleKnapsack" and self.nItems > MAX_BUNDLE_ITEMS:
            msg = "bundleKnapsack supports at most %d items" % (MAX_BUNDLE_ITEMS)
            raise pexConfig.FieldValidationError(InstanceGeneratorConfig.nItems, self, msg)


class GenerateInstanceConfig(OcrsTaskConfigBase):
    """Config for GenerateInstanceTask"""
    generator = pexConfig.ConfigField(
        dtype=InstanceGeneratorConfig,
        doc="Instance family and its parameters",
    )


def synergyValuation(typeSpaces, synergy):
    """Bundle valuation ``sum(values)*(1 + synergy*(size - 1))``.

    Parameters
    ----------
    typeSpaces : `list` [`ocrsmech.instances.AgentTypeSpace`]
        Per-item values of the physical items.
    synergy : `float`

    Returns
    -------
    valuation : callable
        ``valuation(agent, typeIndex, bundle)``.
    """
    def valuation(agent, typeIndex, bundle):
        total = typeSpaces[agent].support[typeIndex, list(bundle)].sum()
        return total*(1.0 + synergy*(len(bundle) - 1))

    return valuation


def _typeSpace(rng, nTypes, nItems, low, high):
    support = rng.uniform(low, high, size=(nTypes, nItems))
    probs = rng.dirichlet(np.ones(nTypes))
    return AgentTypeSpace(support, probs/probs.sum())


def generateInstance(config, rng):
    """Draw an instance of ``config.family``.

    Parameters
    ----------
    config : `InstanceGeneratorConfig`
    rng : `numpy.random.Generator`

    Returns
    -------
    instance : `ocrsmech.instances.AuctionInstance` or `ocrsmech.instances.ProcurementInstance`
    """
    config.validate()
    n, m = config.nAgents, config.nItems

    if config.family == "procurement":
        values = rng.uniform(config.valueMin, config.valueMax, size=(n, m))
        costSpaces = [_typeSpace(rng, config.nTypes, m, config.costMin, config.costMax) for _ in range(n)]
        return ProcurementInstance(values, costSpaces, config.budget)

    typeSpaces = [_typeSpace(rng, config.nTypes, m, config.valueMin, config.valueMax) for _ in range(n)]
    if config.family == "singleCopy":
        constraint = SingleCopyPerItem(n, m)
    elif config.family == "kUniform":
        constraint = KUniformPerAgent(m, [config.kPerAgent]*n)
    elif config.family == "vh":
        constraint = VerticalHorizontal([SliceConstraint("uniform", m, k=config.kPerAgent) for _ in range(n)],
                                        [SliceConstraint("uniform", n, k=config.kPerItem) for _ in range(m)])
    else:
        weights = config.capacity*rng.uniform(config.weightMin, config.weightMax, size=(n, m))
        weights = np.clip(weights, 0.0, config.capacity)
        if config.family == "multiChoiceKnapsack":
            constraint = MultiChoiceKnapsack(weights, config.capacity)
        else:
            constraint = Knapsack(weights, config.capacity)

    instance = AuctionInstance(typeSpaces, constraint)
    if config.family == "bundleKnapsack":
        instance, _ = expandToBundles(instance, valuation=synergyValuation(typeSpaces, config.bundleSynergy))
    return instance


class GenerateInstanceTask(OcrsBaseTask):
    """Generate a random instance from the configured family."""
    ConfigClass = GenerateInstanceConfig
    _DefaultName = "generateInstance"

    @timeMethod
    def run(self, rng=None):
        """Generate one instance.

        Parameters
        ----------
        rng : `numpy.random.Generator`, optional
            Defaults to a stream seeded with ``config.seed``.

        Returns
        -------
        result : `lsst.pipe.base.Struct`
            ``instance``.
        """
        if rng is None:
            rng = makeRng(self.config.seed)
        instance = generateInstance(self.config.generator, rng)
        self.log.info("Generated %s instance with %d agents and %d items",
                      self.config.generator.family, instance.n, instance.m)
        return pipeBase.Struct(instance=instance)
