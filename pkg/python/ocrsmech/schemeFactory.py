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
"""Configuration and construction of online schemes."""

import numpy as np

import lsst.pex.config as pexConfig
from lsst.utils.logging import getLogger

from .constraints import Knapsack, MultiChoiceKnapsack, VerticalHorizontal
from .errors import DimensionMismatchError, UnsupportedConstraintError
from .knapsackSchemes import MAX_ORACLE_STATES, KnapsackTocrs, MultiChoiceKnapsackTocrs
from .schemes import AlwaysSelectScheme
from .stochasticKnapsack import StochasticKnapsackInstance, StochasticKnapsackOcrs
from .vhSchemes import vhSchemeFromConstraint

__all__ = ["SchemeConfig", "schemeNameForConstraint", "makeScheme", "procurementKnapsackInstance",
           "makeProcurementScheme"]

_log = getLogger("ocrsmech.schemeFactory")


class SchemeConfig(pexConfig.Config):
    """Config for building an online contention resolution scheme"""
    scheme = pexConfig.ChoiceField(
        doc="Scheme to run",
        dtype=str,
        default="auto",
        allowed={
            "auto": "Pick the scheme matching the constraint variant",
            "alwaysSelect": "Select every active element (unconstrained grids only)",
            "vh": "Row and column slice schemes composed by intersection",
            "knapsack": "Heavy/light knapsack scheme",
            "multiChoiceKnapsack": "Heavy/light multiple-choice knapsack scheme",
            "stochasticKnapsack": "Random-weight knapsack scheme (procurement)",
        },
    )
    b = pexConfig.RangeField(
        doc="Activation scale b; elements are active with probability b*x",
        dtype=float,
        default=1.0,
        min=0.0,
        max=1.0,
        inclusiveMin=False,
        inclusiveMax=True,
    )
    mode = pexConfig.ChoiceField(
        doc="How branch-open probabilities are obtained",
        dtype=str,
        default="oracle",
        allowed={
            "oracle": "Exact dynamic programs",
            "estimated": "Monte Carlo replays with an epsilon upper surrogate",
        },
    )
    epsilon = pexConfig.RangeField(
        doc="Additive accuracy of estimated probabilities",
        dtype=float,
        default=0.1,
        min=0.0,
        max=1.0,
        inclusiveMin=False,
        inclusiveMax=False,
    )
    delta = pexConfig.RangeField(
        doc="Failure probability of the estimates",
        dtype=float,
        default=0.01,
        min=0.0,
        max=1.0,
        inclusiveMin=False,
        inclusiveMax=False,
    )
    maxOracleStates = pexConfig.RangeField(
        doc="Largest number of distinct loads an exact program may track",
        dtype=int,
        default=MAX_ORACLE_STATES,
        min=1,
    )


_SCHEME_BY_VARIANT = {
    VerticalHorizontal: "vh",
    MultiChoiceKnapsack: "multiChoiceKnapsack",
    Knapsack: "knapsack",
}


def schemeNameForConstraint(constraint):
    """Default scheme name for a constraint variant."""
    for cls, name in _SCHEME_BY_VARIANT.items():
        if isinstance(constraint, cls):
            return name
    raise UnsupportedConstraintError("no scheme for constraint variant %r" % (constraint.variant, ))


def makeScheme(config, constraint, process, rng=None):
    """Build a grid scheme for a constraint and a feasible process.

    Parameters
    ----------
    config : `SchemeConfig`
    constraint : `ocrsmech.constraints.FeasibilityConstraint`
    process : `ocrsmech.twoLevelProcess.TwoLevelProcess`
    rng : `numpy.random.Generator`, optional
        Estimation stream; required in estimated mode.

    Returns
    -------
    scheme : `ocrsmech.schemes.OnlineScheme`

    Raises
    ------
    UnsupportedConstraintError
        If the scheme does not fit the constraint.
    ProcessInfeasibleError
        If the process lies outside the constraint's polytopes.
    """
    if process.shape != constraint.shape:
        raise DimensionMismatchError("process shape %s != constraint shape %s" %
                                     (process.shape, constraint.shape))
    name = config.scheme
    if name == "auto":
        name = schemeNameForConstraint(constraint)
    kwargs = dict(mode=config.mode, epsilon=config.epsilon, delta=config.delta, rng=rng)

    if name == "alwaysSelect":
        if not (isinstance(constraint, VerticalHorizontal)
                and all(s.kind == "uniform" and s.isTrivial
                        for s in constraint.rowConstraints + constraint.columnConstraints)):
            raise UnsupportedConstraintError("alwaysSelect needs a constraint that never binds")
        scheme = AlwaysSelectScheme(config.b, process)
    elif name == "vh":
        if not isinstance(constraint, VerticalHorizontal):
            raise UnsupportedConstraintError("vh scheme needs a VH constraint, got %s" % (constraint.variant))
        scheme = vhSchemeFromConstraint(constraint, process, config.b, **kwargs)
    elif name == "multiChoiceKnapsack":
        if not isinstance(constraint, MultiChoiceKnapsack):
            raise UnsupportedConstraintError("multiChoiceKnapsack scheme needs a MultiChoiceKnapsack, "
                                             "got %s" % (constraint.variant))
        scheme = MultiChoiceKnapsackTocrs(constraint, process, config.b,
                                          maxOracleStates=config.maxOracleStates, **kwargs)
    elif name == "knapsack":
        if not isinstance(constraint, Knapsack) or isinstance(constraint, MultiChoiceKnapsack):
            raise UnsupportedConstraintError("knapsack scheme needs a Knapsack, got %s" %
                                             (constraint.variant))
        scheme = KnapsackTocrs(constraint, process, config.b, maxOracleStates=config.maxOracleStates,
                               **kwargs)
    else:
        raise UnsupportedConstraintError("scheme %r does not run on a grid constraint" % (name, ))
    _log.debug("built %s scheme, declared c %.6g", scheme.name, scheme.declaredC)
    return scheme


def procurementKnapsackInstance(instance, rule):
    """Stochastic knapsack of the payments ``q_i(c_i)`` against the budget.

    Parameters
    ----------
    instance : `ocrsmech.instances.ProcurementInstance`
    rule : `ocrsmech.interimLp.ProcurementInterimRule`
    """
    rule.checkShape(instance)
    return StochasticKnapsackInstance([np.clip(q, 0.0, instance.budget) for q in rule.q],
                                      [space.probs for space in instance.costSpaces], instance.budget)


def makeProcurementScheme(config, instance, rule, rng=None):
    """Stochastic-knapsack scheme over the sellers' interim payments.

    Returns
    -------
    scheme : `ocrsmech.stochasticKnapsack.StochasticKnapsackOcrs`
    """
    if config.scheme not in ("auto", "stochasticKnapsack"):
        raise UnsupportedConstraintError("procurement runs the stochasticKnapsack scheme, not %r" %
                                         (config.scheme, ))
    if instance.budget <= 0.0:
        raise UnsupportedConstraintError("procurement needs a positive budget")
    return StochasticKnapsackOcrs(procurementKnapsackInstance(instance, rule), mode=config.mode,
                                  epsilon=config.epsilon, delta=config.delta, rng=rng,
                                  maxOracleStates=config.maxOracleStates)
