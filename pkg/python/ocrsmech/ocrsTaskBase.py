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
"""Base config and task shared by the ocrsmech command line tasks.

Each subcommand of ``ocrsmech.py`` is a `lsst.pipe.base.Task` whose config
derives from `OcrsTaskConfigBase`, so every one of them carries the seed, the
trial count and the chunking of Monte Carlo work.
"""

import abc

import lsst.pex.config as pexConfig
import lsst.pipe.base as pipeBase

from .instances import readInstance
from .interimLp import readInterimRule
from .utilities import runChunks, sumChunkResults

__all__ = ["OcrsTaskConfigBase", "OcrsBaseTask"]


class OcrsTaskConfigBase(pexConfig.Config):
    """Fields common to all ocrsmech tasks"""
    seed = pexConfig.RangeField(
        doc="Master seed; every random draw of a run is derived from it",
        dtype=int,
        default=0,
        min=0,
    )
    trials = pexConfig.RangeField(
        doc="Number of Monte Carlo trials",
        dtype=int,
        default=100000,
        min=1,
    )
    chunkSize = pexConfig.RangeField(
        doc="Trials simulated together in one vectorised chunk",
        dtype=int,
        default=4096,
        min=1,
    )
    nCore = pexConfig.RangeField(
        doc=("Number of worker threads for trial chunks "
             "(the OCRSMECH_NUM_WORKERS environment variable overrides this)"),
        dtype=int,
        default=1,
        min=1,
    )
    instanceFile = pexConfig.Field(
        doc="JSON instance file to read (used when no instance is passed to run)",
        dtype=str,
        default=None,
        optional=True,
    )
    interimFile = pexConfig.Field(
        doc="JSON interim rule file to read (solved from the instance when unset)",
        dtype=str,
        default=None,
        optional=True,
    )


class OcrsBaseTask(pipeBase.Task, abc.ABC):
    """Base class for ocrsmech tasks.

    Provides loading of instances and interim rules from the configured files
    and the chunked, seeded trial runner.
    """
    ConfigClass = OcrsTaskConfigBase

    def loadInstance(self, instance=None):
        """Return ``instance`` or read it from ``config.instanceFile``.

        Raises
        ------
        lsst.pipe.base.TaskError
            If neither is available.
        """
        if instance is not None:
            return instance
        if not self.config.instanceFile:
            raise pipeBase.TaskError("%s needs an instance (set instanceFile)" % (self.getName()))
        self.log.info("Reading instance from %s", self.config.instanceFile)
        return readInstance(self.config.instanceFile)

    def loadInterimRule(self, instance, rule=None):
        """Return ``rule``, read it from ``config.interimFile``, or `None`."""
        if rule is not None:
            return rule
        if self.config.interimFile:
            self.log.info("Reading interim rule from %s", self.config.interimFile)
            return readInterimRule(self.config.interimFile, instance=instance)
        return None

    def runTrials(self, func, trials=None, seed=None):
        """Run ``func(chunkIndex, nLanes, rng)`` over all trial chunks.

        Parameters
        ----------
        func : callable
            Per-chunk function returning a `dict` of counters.
        trials : `int`, optional
            Overrides ``config.trials``.
        seed : `int`, optional
            Overrides ``config.seed``.

        Returns
        -------
        totals : `dict`
            Counters summed over chunks.
        """
        trials = self.config.trials if trials is None else trials
        seed = self.config.seed if seed is None else seed
        results = runChunks(func, seed, trials, self.config.chunkSize, nCore=self.config.nCore)
        self.log.verbose("Simulated %d trials in %d chunks", trials, len(results))
        return sumChunkResults(results)
