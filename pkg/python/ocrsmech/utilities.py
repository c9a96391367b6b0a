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
"""Utility functions shared by ocrsmech tasks and schemes.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from lsst.utils.logging import getLogger

__all__ = ["NUM_WORKERS_ENV", "SIGMA_MARGIN", "TRIAL_STREAM", "makeRng", "deriveSeed", "resolveNumWorkers",
           "computeChunkSizes", "runChunks", "sumChunkResults", "binomialSigma", "passesLowerBound",
           "passesEquality", "computeEstimationSampleCount"]

NUM_WORKERS_ENV = "OCRSMECH_NUM_WORKERS"
SIGMA_MARGIN = 4.0
TRIAL_STREAM = 0

_log = getLogger("ocrsmech.utilities")


def makeRng(seed, *keys):
    """Make an independent random stream keyed on a master seed.

    Parameters
    ----------
    seed : `int`
        Master seed.
    *keys : `int`
        Further integers (chunk index, agent index, ...) mixed into the seed
        sequence.

    Returns
    -------
    rng : `numpy.random.Generator`
    """
    return np.random.default_rng([int(seed)] + [int(k) for k in keys])


def deriveSeed(seed, *keys):
    """Integer seed of an independent sub-run keyed on a master seed."""
    return int(np.random.SeedSequence([int(seed)] + [int(k) for k in keys]).generate_state(1)[0])


def resolveNumWorkers(nCore):
    """Number of worker threads, honoring the environment override.

    Parameters
    ----------
    nCore : `int`
        Configured worker count.

    Returns
    -------
    nWorkers : `int`
    """
    override = os.environ.get(NUM_WORKERS_ENV)
    if override:
        try:
            nWorkers = int(override)
        except ValueError:
            raise ValueError("%s must be an integer, got %r" % (NUM_WORKERS_ENV, override))
        if nWorkers < 1:
            raise ValueError("%s must be positive, got %d" % (NUM_WORKERS_ENV, nWorkers))
        return nWorkers
    return max(1, int(nCore))


def computeChunkSizes(trials, chunkSize):
    """Split a trial count into chunks of at most ``chunkSize`` lanes."""
    if trials < 0:
        raise ValueError("trials must be non-negative")
    if chunkSize < 1:
        raise ValueError("chunkSize must be positive")
    nFull, remainder = divmod(int(trials), int(chunkSize))
    sizes = [int(chunkSize)]*nFull
    if remainder:
        sizes.append(remainder)
    return sizes


def runChunks(func, seed, trials, chunkSize, nCore=1):
    """Run ``func`` over chunks of trials on a thread pool.

    Chunk ``k`` receives the stream ``makeRng(seed, TRIAL_STREAM, k)``, so the results
    depend on (seed, trials, chunkSize) and never on the worker count.

    Parameters
    ----------
    func : callable
        ``func(chunkIndex, nLanes, rng)`` returning a per-chunk result.
    seed : `int`
        Master seed.
    trials : `int`
        Total number of trials.
    chunkSize : `int`
        Lanes per chunk.
    nCore : `int`, optional
        Configured number of worker threads.

    Returns
    -------
    results : `list`
        Per-chunk results ordered by chunk index.
    """
    sizes = computeChunkSizes(trials, chunkSize)
    nWorkers = min(resolveNumWorkers(nCore), max(1, len(sizes)))

    def _runOne(index):
        return func(index, sizes[index], makeRng(seed, TRIAL_STREAM, index))

    _log.debug("Running %d trials in %d chunks on %d workers", trials, len(sizes), nWorkers)
    if nWorkers == 1:
        return [_runOne(index) for index in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=nWorkers) as executor:
        return list(executor.map(_runOne, range(len(sizes))))


def sumChunkResults(results):
    """Sum a list of per-chunk dicts field by field.

    Parameters
    ----------
    results : `list` [`dict`]
        Per-chunk counters; values are numbers or `numpy.ndarray`.

    Returns
    -------
    total : `dict`
    """
    total = {}
    for result in results:
        for key, value in result.items():
            if key in total:
                total[key] = total[key] + value
            else:
                total[key] = np.array(value, copy=True) if isinstance(value, np.ndarray) else value
    return total


def binomialSigma(p, nSamples):
    """Standard deviation of a binomial proportion.

    Parameters
    ----------
    p : `float` or `numpy.ndarray`
        Success probability.
    nSamples : `int` or `numpy.ndarray`
        Number of samples (zero samples give an infinite sigma).

    Returns
    -------
    sigma : `float` or `numpy.ndarray`
    """
    p = np.clip(np.asarray(p, dtype=np.float64), 0.0, 1.0)
    nSamples = np.asarray(nSamples, dtype=np.float64)
    with np.errstate(divide='ignore', invalid='ignore'):
        sigma = np.where(nSamples > 0, np.sqrt(p*(1.0 - p)/np.maximum(nSamples, 1.0)), np.inf)
    return sigma if sigma.ndim else float(sigma)


def passesLowerBound(rate, target, nSamples, nSigma=SIGMA_MARGIN):
    """One-sided check ``rate >= target - nSigma*sigma(target)``."""
    return np.asarray(rate) >= np.asarray(target) - nSigma*binomialSigma(target, nSamples)


def passesEquality(rate, target, nSamples, nSigma=SIGMA_MARGIN):
    """Two-sided check ``|rate - target| <= nSigma*sigma(target)``."""
    return np.abs(np.asarray(rate) - np.asarray(target)) <= nSigma*binomialSigma(target, nSamples)


def computeEstimationSampleCount(epsilon, delta, nAgents, nItems):
    """Hoeffding sample count for one-sided event estimation.

    Parameters
    ----------
    epsilon : `float`
        Additive accuracy, in (0, 1).
    delta : `float`
        Failure probability across all ``nAgents*nItems`` estimates, in (0, 1).
    nAgents, nItems : `int`
        Grid dimensions.

    Returns
    -------
    nSamples : `int`
        ``ceil(log(2*n*m/delta)/(2*epsilon**2))``.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must be in (0, 1), got %r" % (epsilon, ))
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1), got %r" % (delta, ))
    return int(math.ceil(math.log(2.0*nAgents*nItems/delta)/(2.0*epsilon**2.)))
