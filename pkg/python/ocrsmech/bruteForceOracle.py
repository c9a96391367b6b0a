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
"""Exact optimal BIC-IR revenue of tiny auctions.

The ex-post LP has, for every type profile, a distribution over explicitly
enumerated feasible allocations.  Agents are risk neutral, so only interim
expected payments enter BIC and IR; they are carried as one free variable per
(agent, type).
"""

import itertools

import numpy as np

import lsst.pipe.base as pipeBase
from lsst.utils.logging import getLogger

from .errors import TooLargeError
from .simplex import LPModel, solveLp

__all__ = ["MAX_PROFILES", "MAX_FEASIBLE_SETS", "MAX_ORACLE_VARIABLES", "enumerateFeasibleSets",
           "buildOracleLp", "bruteForceOptimalRevenue"]

MAX_PROFILES = 64
MAX_FEASIBLE_SETS = 2**12
MAX_ORACLE_VARIABLES = 20000

_log = getLogger("ocrsmech.bruteForceOracle")


def enumerateFeasibleSets(constraint, maxSets=MAX_FEASIBLE_SETS):
    """All feasible sets of a constraint as boolean masks.

    Depth-first over cells in arrival order; a branch is cut as soon as it
    becomes infeasible, which is exact for downward-closed families.

    Returns
    -------
    masks : `numpy.ndarray`, (nSets, nAgents, nItems)

    Raises
    ------
    TooLargeError
        If more than ``maxSets`` sets exist.
    """
    shape = constraint.shape
    cells = list(itertools.product(range(shape[0]), range(shape[1])))
    found = []
    current = np.zeros(shape, dtype=bool)

    def _descend(position):
        if position == len(cells):
            found.append(current.copy())
            if len(found) > maxSets:
                raise TooLargeError("more than %d feasible sets" % (maxSets))
            return
        _descend(position + 1)
        current[cells[position]] = True
        if constraint.isFeasible(current):
            _descend(position + 1)
        current[cells[position]] = False

    _descend(0)
    return np.array(found)


def buildOracleLp(instance, maxProfiles=MAX_PROFILES, maxSets=MAX_FEASIBLE_SETS,
                  maxVariables=MAX_ORACLE_VARIABLES):
    """Ex-post revenue LP of a tiny instance.

    Returns
    -------
    model : `ocrsmech.simplex.LPModel`
        Model with ``blocks["lambda"]`` of shape ``(nProfiles, nSets)`` and
        ``blocks["q"]`` per agent.
    profiles : `list` [`tuple` [`int`]]
    masks : `numpy.ndarray`
    """
    nProfiles = int(np.prod(instance.nTypes))
    if nProfiles > maxProfiles:
        raise TooLargeError("%d type profiles exceed the cap of %d" % (nProfiles, maxProfiles))
    masks = enumerateFeasibleSets(instance.constraint, maxSets=maxSets)
    nVariables = nProfiles*len(masks) + sum(instance.nTypes)
    if nVariables > maxVariables:
        raise TooLargeError("%d oracle variables exceed the cap of %d" % (nVariables, maxVariables))

    profiles = list(itertools.product(*[range(n) for n in instance.nTypes]))
    probs = np.array([np.prod([instance.typeSpaces[i].probs[t] for i, t in enumerate(profile)])
                      for profile in profiles])

    model = LPModel("oracle")
    lam = np.zeros((nProfiles, len(masks)), dtype=np.int64)
    for p in range(nProfiles):
        for s in range(len(masks)):
            lam[p, s] = model.addVariable("lambda[%d][%d]" % (p, s))
    qIndex = [np.array([model.addVariable("Q[%d][%d]" % (i, t), objective=space.probs[t], lower=None)
                        for t in range(space.nTypes)])
              for i, space in enumerate(instance.typeSpaces)]
    model.blocks = {"lambda": lam, "q": qIndex}

    for p in range(nProfiles):
        model.addConstraint({lam[p, s]: 1.0 for s in range(len(masks))}, "==", 1.0, label="convex/%d" % (p))

    for i, space in enumerate(instance.typeSpaces):
        # value of each set to each type of agent i: (nTypes, nSets)
        setValue = space.support @ masks[:, i, :].T
        others = [np.prod([instance.typeSpaces[k].probs[t] for k, t in enumerate(profile) if k != i])
                  for profile in profiles]

        def _interimValue(valueType, reportType):
            coeffs = {}
            for p, profile in enumerate(profiles):
                if profile[i] != reportType:
                    continue
                for s in range(len(masks)):
                    value = others[p]*setValue[valueType, s]
                    if value != 0.0:
                        coeffs[lam[p, s]] = value
            return coeffs

        for t in range(space.nTypes):
            truthful = _interimValue(t, t)
            ir = dict(truthful)
            ir[qIndex[i][t]] = -1.0
            model.addConstraint(ir, ">=", 0.0, label="ir/%d/%d" % (i, t))
            for s in range(space.nTypes):
                if s == t:
                    continue
                coeffs = dict(truthful)
                for index, value in _interimValue(t, s).items():
                    coeffs[index] = coeffs.get(index, 0.0) - value
                coeffs[qIndex[i][t]] = -1.0
                coeffs[qIndex[i][s]] = 1.0
                model.addConstraint(coeffs, ">=", 0.0, label="bic/%d/%d/%d" % (i, t, s))

    _log.debug("oracle: %d profiles, %d feasible sets, %d variables", nProfiles, len(masks), model.nVariables)
    return model, profiles, masks, probs


def bruteForceOptimalRevenue(instance, simplexConfig=None, maxProfiles=MAX_PROFILES,
                             maxSets=MAX_FEASIBLE_SETS, maxVariables=MAX_ORACLE_VARIABLES):
    """Optimal expected revenue over all BIC-IR mechanisms.

    Parameters
    ----------
    instance : `ocrsmech.instances.AuctionInstance`
        Instance with at most ``maxProfiles`` type profiles and
        ``maxSets`` feasible sets.
    simplexConfig : `ocrsmech.simplex.SimplexConfig`, optional

    Returns
    -------
    result : `lsst.pipe.base.Struct`
        ``revenue`` (`float`), ``nProfiles``, ``nFeasibleSets`` and
        ``allocation`` (per-profile expected allocation matrices).

    Raises
    ------
    TooLargeError
        If an enumeration cap is exceeded.
    """
    model, profiles, masks, probs = buildOracleLp(instance, maxProfiles=maxProfiles, maxSets=maxSets,
                                                  maxVariables=maxVariables)
    result = solveLp(model, config=simplexConfig)
    lam = result.x[model.blocks["lambda"]]
    allocation = np.einsum("ps,sij->pij", lam, masks.astype(np.float64))
    return pipeBase.Struct(revenue=result.objective,
                           nProfiles=len(profiles),
                           nFeasibleSets=len(masks),
                           profileProbs=probs,
                           allocation=allocation)
