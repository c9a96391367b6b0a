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
"""Solve the interim relaxation of an auction or procurement instance."""

import lsst.pex.config as pexConfig
import lsst.pipe.base as pipeBase
from lsst.utils.timer import timeMethod

from .bruteForceOracle import MAX_PROFILES, bruteForceOptimalRevenue
from .errors import TooLargeError
from .instances import ProcurementInstance
from .interimLp import EXTRACTION_TOLERANCE, buildLp1, buildLp2, interimFromLp1, interimFromLp2
from .ocrsTaskBase import OcrsBaseTask, OcrsTaskConfigBase
from .simplex import SimplexConfig, solveLp

__all__ = ["SolveInterimLpConfig", "SolveInterimLpTask"]


class SolveInterimLpConfig(OcrsTaskConfigBase):
    """Config for SolveInterimLpTask"""
    simplex = pexConfig.ConfigField(
        dtype=SimplexConfig,
        doc="Revised simplex settings",
    )
    extractionTolerance = pexConfig.RangeField(
        doc="Largest residual accepted when re-validating the extracted interim rule",
        dtype=float,
        default=EXTRACTION_TOLERANCE,
        min=0.0,
        inclusiveMin=False,
    )
    doOracle = pexConfig.Field(
        doc="Also compute the brute-force optimal revenue (auctions only, tiny instances)",
        dtype=bool,
        default=False,
    )
    maxOracleProfiles = pexConfig.RangeField(
        doc="Largest number of type profiles the brute-force oracle enumerates",
        dtype=int,
        default=MAX_PROFILES,
        min=1,
    )


class SolveInterimLpTask(OcrsBaseTask):
    """Solve LP1 (auctions) or LP2 (procurement) and extract the interim rule.
    """
    ConfigClass = SolveInterimLpConfig
    _DefaultName = "solveInterimLp"

    @timeMethod
    def run(self, instance=None):
        """Solve the interim relaxation.

        Parameters
        ----------
        instance : `ocrsmech.instances.AuctionInstance` or
                   `ocrsmech.instances.ProcurementInstance`, optional
            Defaults to ``config.instanceFile``.

        Returns
        -------
        result : `lsst.pipe.base.Struct`
            ``instance``, ``rule`` (the validated interim rule),
            ``objective``, ``iterations``, ``maxResidual`` and ``oracle``
            (brute-force result or `None`).
        """
        instance = self.loadInstance(instance)
        procurement = isinstance(instance, ProcurementInstance)
        if procurement:
            model = buildLp2(instance)
        else:
            model = buildLp1(instance)
        self.log.info("Solving %s: %d variables, %d constraints", model.name, model.nVariables,
                      model.nConstraints)
        solution = solveLp(model, config=self.config.simplex)
        if procurement:
            rule = interimFromLp2(instance, model, solution, tolerance=self.config.extractionTolerance)
        else:
            rule = interimFromLp1(instance, model, solution, tolerance=self.config.extractionTolerance)
        self.log.info("%s objective %.12g after %d pivots", model.name, solution.objective,
                      solution.iterations)

        oracle = None
        if self.config.doOracle and not procurement:
            try:
                oracle = bruteForceOptimalRevenue(instance, simplexConfig=self.config.simplex,
                                                  maxProfiles=self.config.maxOracleProfiles)
                self.log.info("Brute-force optimal revenue %.12g over %d profiles", oracle.revenue,
                              oracle.nProfiles)
            except TooLargeError as e:
                self.log.warning("Skipping brute-force oracle: %s", e)

        return pipeBase.Struct(instance=instance,
                               rule=rule,
                               objective=solution.objective,
                               iterations=solution.iterations,
                               maxResidual=solution.maxResidual,
                               oracle=oracle)
